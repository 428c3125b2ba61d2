#include "runners.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hashing.hpp"
#include "json.hpp"
#include "pipeline.hpp"

namespace dcwp::runners {

namespace {

std::ofstream open_csv(const std::string& path) {
  if (auto parent = std::filesystem::path(path).parent_path(); !parent.empty())
    std::filesystem::create_directories(parent);
  std::ofstream out(path);
  require(out.good(), ErrorCode::io, "runner: cannot open " + path + " for writing");
  out.precision(12);
  return out;
}

}  // namespace

CheckSummary theory_bounds(const std::string& csv_path, const std::vector<double>& p_values,
                           const std::vector<double>& pi_values, std::size_t spurious_dims,
                           std::size_t mc_samples, double phi, std::uint64_t seed) {
  bool auto_phi = phi < 0.0;
  std::ofstream csv = open_csv(csv_path);
  csv << "p,phi,pi_inv,pi_sp,mc_loss,mc_se,train_bound,test_bound,mixture_bound,"
         "empirical_p_same,violation\n";

  std::size_t violations = 0;
  double max_collapse_gap = 0.0;
  double max_marginal_gap = 0.0;
  for (double p : p_values) {
    double row_phi = auto_phi ? data::debias_weight(p) : phi;
    theory::BoundsGridSpec spec;
    spec.p_values = {p};
    spec.pi_values = pi_values;
    spec.spurious_dims = spurious_dims;
    spec.mc_samples = mc_samples;
    spec.phi = row_phi;
    spec.seed = seed;
    std::vector<theory::BoundsGridRow> rows = theory::run_bounds_grid(spec);

    // empirical spurious marginal at this (p, phi)
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(p * 1e7) + 13));
    data::BinaryEnvSpec env{p, spurious_dims, row_phi};
    data::BiasedDataset ds =
        data::sample_binary_env(env, std::max<std::size_t>(mc_samples, 1) / spurious_dims + 1, rng);
    std::size_t same = 0, total = 0;
    for (std::size_t s = 0; s < ds.size(); ++s)
      for (std::size_t i = 1; i <= spurious_dims; ++i) {
        same += ds.inputs.at(s, i) == ds.inputs.at(s, 0) ? 1 : 0;
        ++total;
      }
    double p_same_hat = static_cast<double>(same) / static_cast<double>(total);
    if (auto_phi) max_marginal_gap = std::max(max_marginal_gap, std::fabs(p_same_hat - 0.5));

    for (const auto& row : rows) {
      csv << row.p << ',' << row.phi << ',' << row.pi_inv << ',' << row.pi_sp << ',' << row.mc
          << ',' << row.se << ',' << row.train_bound << ',' << row.test_bound << ','
          << row.mixture_bound << ',' << p_same_hat << ',' << (row.violation ? 1 : 0) << "\n";
      violations += row.violation ? 1 : 0;
      if (auto_phi) {
        double gap = std::fabs(row.mixture_bound - row.test_bound) /
                     std::max(1.0, std::fabs(row.test_bound));
        max_collapse_gap = std::max(max_collapse_gap, gap);
      }
    }
  }

  CheckSummary out;
  bool collapse_ok = !auto_phi || max_collapse_gap <= 1e-12;
  bool marginal_ok = !auto_phi || max_marginal_gap < 0.01;
  out.ok = violations == 0 && collapse_ok && marginal_ok;
  nlohmann::json j;
  j["violations"] = violations;
  j["max_collapse_gap"] = max_collapse_gap;
  j["max_marginal_gap"] = max_marginal_gap;
  j["rows"] = p_values.size() * pi_values.size() * pi_values.size();
  j["ok"] = out.ok;
  out.details_json = j.dump();
  return out;
}

CheckSummary theory_flow(const std::string& csv_path, double p, std::size_t spurious_dims,
                         double w_inv0, double w_sp0, double dt, double target_dev,
                         std::size_t sample_count) {
  theory::FlowState init;
  init.w_inv = w_inv0;
  init.w_sp.assign(spurious_dims, w_sp0);
  theory::FlowTrajectory traj =
      theory::gradient_flow_until(p, init, target_dev, dt, 1e9, sample_count);
  double wstar = theory::flow_fixed_point(p);

  std::ofstream csv = open_csv(csv_path);
  csv << "t,w_inv,w_sp_min,w_sp_max,alpha_min,w_inv_lower,w_inv_upper,w_sp_lower,alpha_lower\n";
  bool envelopes_ok = true, monotone_ok = true, alpha_ok = true;
  double prev_w_inv = -1.0;
  for (const theory::FlowState& s : traj.samples) {
    theory::Envelopes env = theory::analytic_envelopes(p, init, s.t);
    double sp_min = *std::min_element(s.w_sp.begin(), s.w_sp.end());
    double sp_max = *std::max_element(s.w_sp.begin(), s.w_sp.end());
    double alpha_min = sp_min / s.w_inv;
    csv << s.t << ',' << s.w_inv << ',' << sp_min << ',' << sp_max << ',' << alpha_min << ','
        << env.w_inv_lower << ',' << env.w_inv_upper << ',' << env.w_sp_lower << ','
        << env.alpha_lower << "\n";
    envelopes_ok = envelopes_ok && s.w_inv >= env.w_inv_lower - 1e-9 &&
                   s.w_inv <= env.w_inv_upper + 1e-9 && sp_min >= env.w_sp_lower - 1e-9 &&
                   alpha_min >= env.alpha_lower - 1e-9;
    monotone_ok = monotone_ok && s.w_inv > prev_w_inv;
    prev_w_inv = s.w_inv;
    alpha_ok = alpha_ok && alpha_min > 0.0;
  }
  double terminal_gap = 0.0;
  for (double v : traj.terminal.w_sp) terminal_gap = std::max(terminal_gap, std::fabs(v - wstar));
  bool terminal_ok = terminal_gap <= target_dev;

  CheckSummary out;
  out.ok = envelopes_ok && monotone_ok && alpha_ok && terminal_ok;
  nlohmann::json j;
  j["fixed_point"] = wstar;
  j["terminal_gap"] = terminal_gap;
  j["horizon"] = traj.terminal.t;
  j["envelopes_ok"] = envelopes_ok;
  j["monotone_ok"] = monotone_ok;
  j["alpha_positive_ok"] = alpha_ok;
  j["terminal_ok"] = terminal_ok;
  j["ok"] = out.ok;
  out.details_json = j.dump();
  return out;
}

CheckSummary theory_ratio(const std::string& csv_path, const std::vector<double>& p_grid,
                          std::size_t spurious_dims, const theory::LinearTrainOptions& opts,
                          std::size_t seeds, std::uint64_t seed) {
  std::vector<theory::WeightRatioPoint> pts =
      theory::weight_ratio_experiment(p_grid, spurious_dims, opts, seeds, seed);
  std::ofstream csv = open_csv(csv_path);
  csv << "p,mean_alpha,alpha_se,unbiased_test_accuracy\n";
  for (const auto& pt : pts)
    csv << pt.p << ',' << pt.mean_alpha << ',' << pt.se << ',' << pt.test_accuracy << "\n";

  std::size_t inversions = 0;
  double worst_inversion = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    double drop = pts[i].mean_alpha - pts[i + 1].mean_alpha;
    if (drop > 0.0) {
      ++inversions;
      worst_inversion = std::max(worst_inversion, drop);
    }
  }
  bool monotone_ok = inversions <= 1 && worst_inversion <= 0.05;
  bool top_ok = true;
  if (!pts.empty() && pts.back().p >= 0.95) top_ok = pts.back().mean_alpha >= 0.8;

  CheckSummary out;
  out.ok = monotone_ok && top_ok;
  nlohmann::json j;
  j["inversions"] = inversions;
  j["worst_inversion"] = worst_inversion;
  j["monotone_ok"] = monotone_ok;
  j["top_alpha_ok"] = top_ok;
  if (!pts.empty()) j["alpha_at_max_p"] = pts.back().mean_alpha;
  j["ok"] = out.ok;
  out.details_json = j.dump();
  return out;
}

CheckSummary theory_misalign(const std::string& csv_path, std::size_t spurious_dims, double p,
                             std::size_t q, std::size_t n_pairs, std::uint64_t seed) {
  Rng rng(seed);
  theory::MisalignmentResult res =
      theory::misalignment_experiment(spurious_dims, p, q, n_pairs, rng);
  double dd = static_cast<double>(spurious_dims);
  double cross_want = 1.0 / (dd + 1.0);
  double within_want = (1.0 + dd * (2.0 * p - 1.0) * (2.0 * p - 1.0)) / (dd + 1.0);

  std::ofstream csv = open_csv(csv_path);
  csv << "d,p,q,pairs,cross_mean,cross_se,cross_expected,within_mean,within_se,within_expected\n";
  csv << spurious_dims << ',' << p << ',' << q << ',' << n_pairs << ',' << res.cross_env_mean
      << ',' << res.cross_env_se << ',' << cross_want << ',' << res.within_biased_mean << ','
      << res.within_biased_se << ',' << within_want << "\n";

  bool cross_ok = std::fabs(res.cross_env_mean - cross_want) <= 3.0 * res.cross_env_se;
  bool within_ok = std::fabs(res.within_biased_mean - within_want) <= 3.0 * res.within_biased_se;
  CheckSummary out;
  out.ok = cross_ok && within_ok;
  nlohmann::json j;
  j["cross_mean"] = res.cross_env_mean;
  j["cross_expected"] = cross_want;
  j["within_mean"] = res.within_biased_mean;
  j["within_expected"] = within_want;
  j["cross_ok"] = cross_ok;
  j["within_ok"] = within_ok;
  j["ok"] = out.ok;
  out.details_json = j.dump();
  return out;
}

CheckSummary data_generate(const pipeline::ExperimentConfig& config, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  pipeline::TrainTestSplit split = pipeline::build_datasets(config);
  std::string train_path = out_dir + "/train.dcwpd";
  std::string test_path = out_dir + "/test.dcwpd";
  data::save_dataset(split.train, train_path);
  data::save_dataset(split.test, test_path);

  nlohmann::json manifest;
  manifest["seed"] = config.seed;
  manifest["config"] = config.to_kv().canonical();
  manifest["train"] = {{"path", "train.dcwpd"},
                       {"samples", split.train.size()},
                       {"aligned", split.train.aligned_count()},
                       {"conflicting", split.train.conflicting_count()},
                       {"sha256", sha256_file(train_path)}};
  manifest["test"] = {{"path", "test.dcwpd"},
                      {"samples", split.test.size()},
                      {"aligned", split.test.aligned_count()},
                      {"conflicting", split.test.conflicting_count()},
                      {"sha256", sha256_file(test_path)}};
  std::ofstream mf(out_dir + "/manifest.json");
  require(mf.good(), ErrorCode::io, "data_generate: cannot write manifest");
  mf << manifest.dump(2) << "\n";

  CheckSummary out;
  out.ok = true;
  out.details_json = manifest.dump();
  return out;
}

CheckSummary sparsity_sweep(const pipeline::ExperimentConfig& config,
                            const std::vector<double>& l1_values, const std::string& csv_path) {
  require(!l1_values.empty(), ErrorCode::invalid_argument, "sweep: no l1 values");
  std::ofstream csv = open_csv(csv_path);
  csv << "lambda_l1,pruning_ratio,unbiased_accuracy,conflicting_accuracy,aligned_accuracy\n";
  std::vector<double> ratios;
  nlohmann::json rows = nlohmann::json::array();
  for (double l1 : l1_values) {
    pipeline::ExperimentConfig c = config;
    c.lambda_l1_auto = false;
    c.weights.lambda_l1 = l1;
    c.out_dir.clear();  // sweeps do not write per-run artifacts
    pipeline::RunResult run = pipeline::run_experiment(c);
    ratios.push_back(run.report.pruning_ratio);
    csv << l1 << ',' << run.report.pruning_ratio << ',' << run.report.unbiased_accuracy << ','
        << (run.report.conflicting_accuracy ? std::to_string(*run.report.conflicting_accuracy)
                                            : "skip")
        << ','
        << (run.report.aligned_accuracy ? std::to_string(*run.report.aligned_accuracy) : "skip")
        << "\n";
    nlohmann::json r;
    r["lambda_l1"] = l1;
    r["pruning_ratio"] = run.report.pruning_ratio;
    r["unbiased_accuracy"] = run.report.unbiased_accuracy;
    rows.push_back(r);
  }
  std::size_t inversions = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i + 1 < ratios.size(); ++i) {
    double drop = ratios[i] - ratios[i + 1];
    if (drop > 0.0) {
      ++inversions;
      worst = std::max(worst, drop);
    }
  }
  CheckSummary out;
  out.ok = inversions <= 1 && worst <= 0.02;
  nlohmann::json j;
  j["rows"] = rows;
  j["ratio_inversions"] = inversions;
  j["worst_inversion"] = worst;
  j["ok"] = out.ok;
  out.details_json = j.dump();
  return out;
}

}  // namespace dcwp::runners
