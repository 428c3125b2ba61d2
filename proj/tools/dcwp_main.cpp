// Command-line front end; everything goes through the shared-library C API.

#include <cstdio>
#include <cstdlib>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dcwp/dcwp.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;

struct ConfigHandle {
  dcwp_config* ptr = dcwp_config_create();
  ~ConfigHandle() { dcwp_config_free(ptr); }
};

struct ReportHandle {
  dcwp_report* ptr = nullptr;
  ~ReportHandle() { dcwp_report_free(ptr); }
};

struct OwnedString {
  char* ptr = nullptr;
  ~OwnedString() { dcwp_string_free(ptr); }
};

[[noreturn]] void die(dcwp_status status) {
  std::fprintf(stderr, "error: %s\n", dcwp_last_error());
  bool usage = status == DCWP_ERR_INVALID_ARGUMENT || status == DCWP_ERR_FORMAT ||
               status == DCWP_ERR_DOMAIN;
  std::exit(usage ? kExitUsage : kExitCheckFailed);
}

void check(dcwp_status status) {
  if (status != DCWP_OK) die(status);
}

void set_kv(dcwp_config* cfg, const std::string& key, const std::string& value) {
  check(dcwp_config_set(cfg, key.c_str(), value.c_str()));
}

void apply_overrides(dcwp_config* cfg, const std::vector<std::string>& sets) {
  for (const std::string& item : sets) {
    std::size_t eq = item.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects key=value, got %s\n", item.c_str());
      std::exit(kExitUsage);
    }
    set_kv(cfg, item.substr(0, eq), item.substr(eq + 1));
  }
}

void apply_ablation(dcwp_config* cfg, const std::string& list) {
  std::stringstream ss(list);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (token.empty()) continue;
    if (token == "no-pruning") set_kv(cfg, "ablation.pruning", "off");
    else if (token == "no-align") set_kv(cfg, "ablation.align", "off");
    else if (token == "no-wce") set_kv(cfg, "ablation.wce", "off");
    else {
      std::fprintf(stderr, "error: unknown ablation token %s\n", token.c_str());
      std::exit(kExitUsage);
    }
  }
}

int finish_checked(int ok, const OwnedString& details) {
  if (details.ptr) std::printf("%s\n", details.ptr);
  if (!ok) {
    std::fprintf(stderr, "checks failed\n");
    return kExitCheckFailed;
  }
  return kExitOk;
}

std::string data_dir_default(const char* filename) {
  const char* dir = std::getenv("DCWP_DATA_DIR");
  if (!dir) return "";
  return std::string(dir) + "/" + filename;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Debiased contrastive weight pruning: experiments, data and theory checks"};
  app.require_subcommand(1);

  // ------------------------------------------------------------- theory
  CLI::App* theory = app.add_subcommand("theory", "numerical verification of the analysis");
  theory->require_subcommand(1);

  struct {
    std::string p = "0.6,0.75,0.9,0.99";
    std::string pi = "0,0.25,0.5,0.75,1";
    std::size_t dims = 15;
    std::size_t samples = 100000;
    std::string phi = "0";
    std::uint64_t seed = 20240901;
    std::string out = "bounds.csv";
  } bounds_args;
  CLI::App* bounds = theory->add_subcommand("bounds", "loss bounds vs Monte-Carlo estimates");
  bounds->add_option("--p", bounds_args.p, "comma-separated bias strengths");
  bounds->add_option("--pi", bounds_args.pi, "comma-separated keep-probability grid");
  bounds->add_option("--D", bounds_args.dims, "spurious dimensions");
  bounds->add_option("--samples", bounds_args.samples, "Monte-Carlo draws per cell");
  bounds->add_option("--phi", bounds_args.phi, "mixture weight, or 'auto' for 1 - 1/(2p)");
  bounds->add_option("--seed", bounds_args.seed);
  bounds->add_option("--out", bounds_args.out, "CSV output path");

  struct {
    double p = 0.75;
    std::size_t dims = 5;
    double w_inv0 = 0.1;
    double w_sp0 = 0.05;
    double dt = 1e-3;
    double tol = 1e-3;
    std::size_t samples = 100;
    std::string out = "flow.csv";
  } flow_args;
  CLI::App* flow = theory->add_subcommand("flow", "gradient-flow trajectory with envelopes");
  flow->add_option("--p", flow_args.p);
  flow->add_option("--D", flow_args.dims);
  flow->add_option("--w-inv0", flow_args.w_inv0);
  flow->add_option("--w-sp0", flow_args.w_sp0);
  flow->add_option("--dt", flow_args.dt);
  flow->add_option("--tol", flow_args.tol, "terminal fixed-point tolerance");
  flow->add_option("--samples", flow_args.samples, "trajectory sample count");
  flow->add_option("--out", flow_args.out);

  struct {
    std::string p = "0.6,0.7,0.8,0.9,0.99";
    std::size_t dims = 15;
    std::size_t epochs = 500;
    std::size_t batch = 1024;
    std::size_t train_n = 10240;
    double lr = 0.1;
    std::size_t seeds = 15;
    std::uint64_t seed = 77;
    std::string out = "ratio.csv";
  } ratio_args;
  CLI::App* ratio = theory->add_subcommand("ratio", "finite-time weight-ratio experiment");
  ratio->add_option("--p", ratio_args.p);
  ratio->add_option("--D", ratio_args.dims);
  ratio->add_option("--epochs", ratio_args.epochs);
  ratio->add_option("--batch", ratio_args.batch);
  ratio->add_option("--train-n", ratio_args.train_n);
  ratio->add_option("--lr", ratio_args.lr);
  ratio->add_option("--seeds", ratio_args.seeds);
  ratio->add_option("--seed", ratio_args.seed);
  ratio->add_option("--out", ratio_args.out);

  struct {
    std::size_t dims = 3;
    double p = 0.9;
    std::size_t q = 64;
    std::size_t pairs = 10000;
    std::uint64_t seed = 3;
    std::string out = "misalign.csv";
  } mis_args;
  CLI::App* misalign = theory->add_subcommand("misalign", "embedding misalignment experiment");
  misalign->add_option("--D", mis_args.dims);
  misalign->add_option("--p", mis_args.p);
  misalign->add_option("--Q", mis_args.q, "embedding dimension (>= D+1)");
  misalign->add_option("--pairs", mis_args.pairs);
  misalign->add_option("--seed", mis_args.seed);
  misalign->add_option("--out", mis_args.out);

  // --------------------------------------------------------------- data
  CLI::App* data_cmd = app.add_subcommand("data", "dataset generation and export");
  data_cmd->require_subcommand(1);

  struct {
    std::string images = data_dir_default("train-images-idx3-ubyte");
    std::string labels = data_dir_default("train-labels-idx1-ubyte");
    std::string test_images = data_dir_default("t10k-images-idx3-ubyte");
    std::string test_labels = data_dir_default("t10k-labels-idx1-ubyte");
    double ratio = 0.01;
    std::size_t limit = 55000;
    std::size_t test_limit = 10000;
    std::uint64_t seed = 1;
    std::string out = "cmnist_out";
  } cm_args;
  CLI::App* gen_cm = data_cmd->add_subcommand("gen-cmnist", "colored digits from IDX files");
  gen_cm->add_option("--images", cm_args.images, "training image IDX path");
  gen_cm->add_option("--labels", cm_args.labels, "training label IDX path");
  gen_cm->add_option("--test-images", cm_args.test_images);
  gen_cm->add_option("--test-labels", cm_args.test_labels);
  gen_cm->add_option("--ratio", cm_args.ratio, "bias-conflicting fraction");
  gen_cm->add_option("--limit", cm_args.limit, "training split size");
  gen_cm->add_option("--test-limit", cm_args.test_limit);
  gen_cm->add_option("--seed", cm_args.seed);
  gen_cm->add_option("--out", cm_args.out, "output directory");

  struct {
    double p = 0.9;
    double phi = 0.0;
    std::size_t dims = 15;
    std::size_t train_n = 8192;
    std::size_t test_n = 8192;
    std::uint64_t seed = 1;
    std::string out = "binary_out";
  } bin_args;
  CLI::App* gen_bin = data_cmd->add_subcommand("gen-binary", "binary spurious-feature environment");
  gen_bin->add_option("--p", bin_args.p, "bias strength in (0.5, 1]");
  gen_bin->add_option("--phi", bin_args.phi, "debiasing mixture weight");
  gen_bin->add_option("--D", bin_args.dims);
  gen_bin->add_option("--train-n", bin_args.train_n);
  gen_bin->add_option("--test-n", bin_args.test_n);
  gen_bin->add_option("--seed", bin_args.seed);
  gen_bin->add_option("--out", bin_args.out);

  struct {
    std::size_t classes = 4;
    std::size_t invariant_dims = 16;
    std::size_t spurious_dims = 64;
    double ratio = 0.01;
    double invariant_noise = 0.25;
    double spurious_noise = 0.02;
    std::size_t train_n = 8192;
    std::size_t test_n = 8192;
    std::uint64_t seed = 1;
    std::string out = "synth_out";
  } synth_args;
  CLI::App* gen_synth = data_cmd->add_subcommand("gen-synth", "multiclass coded environment");
  gen_synth->add_option("--classes", synth_args.classes);
  gen_synth->add_option("--invariant-dims", synth_args.invariant_dims);
  gen_synth->add_option("--spurious-dims", synth_args.spurious_dims);
  gen_synth->add_option("--ratio", synth_args.ratio);
  gen_synth->add_option("--invariant-noise", synth_args.invariant_noise);
  gen_synth->add_option("--spurious-noise", synth_args.spurious_noise);
  gen_synth->add_option("--train-n", synth_args.train_n);
  gen_synth->add_option("--test-n", synth_args.test_n);
  gen_synth->add_option("--seed", synth_args.seed);
  gen_synth->add_option("--out", synth_args.out);

  struct {
    std::string images = "digits-images-idx3-ubyte";
    std::string labels = "digits-labels-idx1-ubyte";
    std::size_t count = 60000;
    std::uint64_t seed = 7;
  } digit_args;
  CLI::App* synth_digits =
      data_cmd->add_subcommand("synth-digits", "deterministic digit-glyph IDX stand-in");
  synth_digits->add_option("--images", digit_args.images);
  synth_digits->add_option("--labels", digit_args.labels);
  synth_digits->add_option("--count", digit_args.count);
  synth_digits->add_option("--seed", digit_args.seed);

  // -------------------------------------------------------------- train
  struct {
    std::string config;
    std::string method;
    std::string ablation;
    std::string sweep;
    std::string out;
    std::uint64_t seed = 0;
    bool has_seed = false;
    std::vector<std::string> sets;
  } train_args;
  CLI::App* train = app.add_subcommand("train", "run a configured experiment");
  train->add_option("--config", train_args.config, "flat key-value config file");
  train->add_option("--method", train_args.method, "erm | mrm | dcwp");
  train->add_option("--ablation", train_args.ablation,
                    "comma list of no-pruning, no-align, no-wce");
  train->add_option("--sweep", train_args.sweep,
                    "l1=v1,v2,...: sparsity sweep instead of a single run");
  train->add_option("--out", train_args.out, "artifact directory");
  train->add_option("--seed", train_args.seed)->each([&](const std::string&) {
    train_args.has_seed = true;
  });
  train->add_option("--set", train_args.sets, "config override key=value")->take_all();

  // ------------------------------------------------------------- report
  struct {
    std::string run;
    std::string csv;
    std::string jsonl;
  } report_args;
  CLI::App* report = app.add_subcommand("report", "render a run's metrics report");
  report->add_option("--run", report_args.run, "run directory containing report.json")->required();
  report->add_option("--csv", report_args.csv, "also write CSV here");
  report->add_option("--jsonl", report_args.jsonl, "also append a JSON line here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (bounds->parsed()) {
    double phi = bounds_args.phi == "auto" ? -1.0 : std::atof(bounds_args.phi.c_str());
    int ok = 0;
    OwnedString details;
    check(dcwp_theory_bounds(bounds_args.out.c_str(), bounds_args.p.c_str(),
                             bounds_args.pi.c_str(), bounds_args.dims, bounds_args.samples, phi,
                             bounds_args.seed, &ok, &details.ptr));
    return finish_checked(ok, details);
  }
  if (flow->parsed()) {
    int ok = 0;
    OwnedString details;
    check(dcwp_theory_flow(flow_args.out.c_str(), flow_args.p, flow_args.dims, flow_args.w_inv0,
                           flow_args.w_sp0, flow_args.dt, flow_args.tol, flow_args.samples, &ok,
                           &details.ptr));
    return finish_checked(ok, details);
  }
  if (ratio->parsed()) {
    int ok = 0;
    OwnedString details;
    check(dcwp_theory_ratio(ratio_args.out.c_str(), ratio_args.p.c_str(), ratio_args.dims,
                            ratio_args.epochs, ratio_args.batch, ratio_args.train_n, ratio_args.lr,
                            ratio_args.seeds, ratio_args.seed, &ok, &details.ptr));
    return finish_checked(ok, details);
  }
  if (misalign->parsed()) {
    int ok = 0;
    OwnedString details;
    check(dcwp_theory_misalign(mis_args.out.c_str(), mis_args.dims, mis_args.p, mis_args.q,
                               mis_args.pairs, mis_args.seed, &ok, &details.ptr));
    return finish_checked(ok, details);
  }

  if (gen_cm->parsed()) {
    if (cm_args.images.empty()) {
      std::fprintf(stderr,
                   "error: no --images and DCWP_DATA_DIR is unset; provide IDX paths or run "
                   "`dcwp data synth-digits`\n");
      return kExitUsage;
    }
    ConfigHandle cfg;
    set_kv(cfg.ptr, "dataset.kind", "cmnist");
    set_kv(cfg.ptr, "dataset.images", cm_args.images);
    set_kv(cfg.ptr, "dataset.labels", cm_args.labels);
    set_kv(cfg.ptr, "dataset.test_images", cm_args.test_images);
    set_kv(cfg.ptr, "dataset.test_labels", cm_args.test_labels);
    set_kv(cfg.ptr, "dataset.rho", std::to_string(cm_args.ratio));
    set_kv(cfg.ptr, "dataset.limit", std::to_string(cm_args.limit));
    set_kv(cfg.ptr, "dataset.test_limit", std::to_string(cm_args.test_limit));
    set_kv(cfg.ptr, "seed", std::to_string(cm_args.seed));
    OwnedString counts;
    check(dcwp_data_generate(cfg.ptr, cm_args.out.c_str(), &counts.ptr));
    std::printf("%s\n", counts.ptr);
    return kExitOk;
  }
  if (gen_bin->parsed()) {
    ConfigHandle cfg;
    set_kv(cfg.ptr, "dataset.kind", "binary");
    set_kv(cfg.ptr, "dataset.p", std::to_string(bin_args.p));
    set_kv(cfg.ptr, "dataset.phi", std::to_string(bin_args.phi));
    set_kv(cfg.ptr, "dataset.spurious_dims", std::to_string(bin_args.dims));
    set_kv(cfg.ptr, "dataset.train_n", std::to_string(bin_args.train_n));
    set_kv(cfg.ptr, "dataset.test_n", std::to_string(bin_args.test_n));
    set_kv(cfg.ptr, "seed", std::to_string(bin_args.seed));
    OwnedString counts;
    check(dcwp_data_generate(cfg.ptr, bin_args.out.c_str(), &counts.ptr));
    std::printf("%s\n", counts.ptr);
    return kExitOk;
  }
  if (gen_synth->parsed()) {
    ConfigHandle cfg;
    set_kv(cfg.ptr, "dataset.kind", "synth");
    set_kv(cfg.ptr, "dataset.classes", std::to_string(synth_args.classes));
    set_kv(cfg.ptr, "dataset.invariant_dims", std::to_string(synth_args.invariant_dims));
    set_kv(cfg.ptr, "dataset.spurious_dims", std::to_string(synth_args.spurious_dims));
    set_kv(cfg.ptr, "dataset.rho", std::to_string(synth_args.ratio));
    set_kv(cfg.ptr, "dataset.invariant_noise", std::to_string(synth_args.invariant_noise));
    set_kv(cfg.ptr, "dataset.spurious_noise", std::to_string(synth_args.spurious_noise));
    set_kv(cfg.ptr, "dataset.train_n", std::to_string(synth_args.train_n));
    set_kv(cfg.ptr, "dataset.test_n", std::to_string(synth_args.test_n));
    set_kv(cfg.ptr, "seed", std::to_string(synth_args.seed));
    OwnedString counts;
    check(dcwp_data_generate(cfg.ptr, synth_args.out.c_str(), &counts.ptr));
    std::printf("%s\n", counts.ptr);
    return kExitOk;
  }
  if (synth_digits->parsed()) {
    check(dcwp_data_synth_digits(digit_args.images.c_str(), digit_args.labels.c_str(),
                                 digit_args.count, digit_args.seed));
    std::printf("wrote %zu glyphs to %s / %s\n", digit_args.count, digit_args.images.c_str(),
                digit_args.labels.c_str());
    return kExitOk;
  }

  if (train->parsed()) {
    ConfigHandle cfg;
    if (!train_args.config.empty())
      check(dcwp_config_load_file(cfg.ptr, train_args.config.c_str()));
    if (!train_args.method.empty()) set_kv(cfg.ptr, "method", train_args.method);
    if (train_args.has_seed) set_kv(cfg.ptr, "seed", std::to_string(train_args.seed));
    if (!train_args.out.empty()) set_kv(cfg.ptr, "out_dir", train_args.out);
    if (!train_args.ablation.empty()) apply_ablation(cfg.ptr, train_args.ablation);
    apply_overrides(cfg.ptr, train_args.sets);

    if (!train_args.sweep.empty()) {
      if (train_args.sweep.rfind("l1=", 0) != 0) {
        std::fprintf(stderr, "error: --sweep expects l1=v1,v2,...\n");
        return kExitUsage;
      }
      std::string values = train_args.sweep.substr(3);
      std::string csv = train_args.out.empty() ? "sweep.csv" : train_args.out + "/sweep.csv";
      int ok = 0;
      OwnedString details;
      check(dcwp_sparsity_sweep(cfg.ptr, values.c_str(), csv.c_str(), &ok, &details.ptr));
      return finish_checked(ok, details);
    }

    ReportHandle rep;
    check(dcwp_run_experiment(cfg.ptr, &rep.ptr));
    OwnedString table;
    check(dcwp_report_table(rep.ptr, &table.ptr));
    std::printf("%s", table.ptr);
    return kExitOk;
  }

  if (report->parsed()) {
    ReportHandle rep;
    std::string path = report_args.run + "/report.json";
    check(dcwp_report_load(path.c_str(), &rep.ptr));
    OwnedString table;
    check(dcwp_report_table(rep.ptr, &table.ptr));
    std::printf("%s", table.ptr);
    if (!report_args.csv.empty()) {
      OwnedString csv;
      check(dcwp_report_csv(rep.ptr, &csv.ptr));
      FILE* f = std::fopen(report_args.csv.c_str(), "w");
      if (!f) {
        std::fprintf(stderr, "error: cannot write %s\n", report_args.csv.c_str());
        return kExitCheckFailed;
      }
      std::fputs(csv.ptr, f);
      std::fclose(f);
    }
    if (!report_args.jsonl.empty()) {
      OwnedString line;
      check(dcwp_report_json(rep.ptr, 1, &line.ptr));
      FILE* f = std::fopen(report_args.jsonl.c_str(), "a");
      if (!f) {
        std::fprintf(stderr, "error: cannot write %s\n", report_args.jsonl.c_str());
        return kExitCheckFailed;
      }
      std::fputs(line.ptr, f);
      std::fclose(f);
    }
    return kExitOk;
  }

  return kExitUsage;
}
