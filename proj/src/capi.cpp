#include "dcwp/dcwp.h"

#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "config.hpp"
#include "pipeline.hpp"
#include "runners.hpp"

namespace {

thread_local std::string g_last_error = "";

dcwp_status status_from(const dcwp::Error& e) {
  g_last_error = e.what();
  switch (e.code()) {
    case dcwp::ErrorCode::invalid_argument: return DCWP_ERR_INVALID_ARGUMENT;
    case dcwp::ErrorCode::shape_mismatch: return DCWP_ERR_SHAPE_MISMATCH;
    case dcwp::ErrorCode::domain: return DCWP_ERR_DOMAIN;
    case dcwp::ErrorCode::io: return DCWP_ERR_IO;
    case dcwp::ErrorCode::format: return DCWP_ERR_FORMAT;
    case dcwp::ErrorCode::state: return DCWP_ERR_STATE;
    case dcwp::ErrorCode::numeric: return DCWP_ERR_NUMERIC;
  }
  return DCWP_ERR_UNKNOWN;
}

template <typename Fn>
dcwp_status guarded(Fn&& fn) {
  try {
    fn();
    return DCWP_OK;
  } catch (const dcwp::Error& e) {
    return status_from(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DCWP_ERR_UNKNOWN;
  } catch (...) {
    g_last_error = "unknown error";
    return DCWP_ERR_UNKNOWN;
  }
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

std::vector<double> parse_double_list(const char* csv, const char* what) {
  dcwp::require(csv != nullptr && *csv != '\0', dcwp::ErrorCode::invalid_argument,
                std::string(what) + ": empty list");
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (...) {
      dcwp::fail(dcwp::ErrorCode::format, std::string(what) + ": bad number " + item);
    }
  }
  return out;
}

void emit(const dcwp::runners::CheckSummary& summary, int* ok, char** details_json) {
  if (ok) *ok = summary.ok ? 1 : 0;
  if (details_json) *details_json = dup_string(summary.details_json);
}

}  // namespace

struct dcwp_config {
  dcwp::pipeline::KvConfig kv;
};

struct dcwp_report {
  dcwp::pipeline::MetricsReport report;
};

extern "C" {

const char* dcwp_last_error(void) { return g_last_error.c_str(); }

void dcwp_string_free(char* s) { delete[] s; }

dcwp_config* dcwp_config_create(void) { return new dcwp_config(); }

void dcwp_config_free(dcwp_config* cfg) { delete cfg; }

dcwp_status dcwp_config_load_file(dcwp_config* cfg, const char* path) {
  return guarded([&] {
    dcwp::require(cfg && path, dcwp::ErrorCode::invalid_argument, "null argument");
    dcwp::pipeline::KvConfig loaded = dcwp::pipeline::KvConfig::load(path);
    for (const auto& [k, v] : loaded.entries()) cfg->kv.set(k, v);
  });
}

dcwp_status dcwp_config_set(dcwp_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    dcwp::require(cfg && key && value, dcwp::ErrorCode::invalid_argument, "null argument");
    cfg->kv.set(key, value);
  });
}

dcwp_status dcwp_config_canonical(const dcwp_config* cfg, char** out) {
  return guarded([&] {
    dcwp::require(cfg && out, dcwp::ErrorCode::invalid_argument, "null argument");
    dcwp::pipeline::ExperimentConfig parsed = dcwp::pipeline::ExperimentConfig::from_kv(cfg->kv);
    *out = dup_string(parsed.to_kv().canonical());
  });
}

dcwp_status dcwp_run_experiment(const dcwp_config* cfg, dcwp_report** out) {
  return guarded([&] {
    dcwp::require(cfg && out, dcwp::ErrorCode::invalid_argument, "null argument");
    dcwp::pipeline::ExperimentConfig config = dcwp::pipeline::ExperimentConfig::from_kv(cfg->kv);
    dcwp::pipeline::RunResult run = dcwp::pipeline::run_experiment(config);
    *out = new dcwp_report{run.report};
  });
}

dcwp_status dcwp_report_load(const char* path, dcwp_report** out) {
  return guarded([&] {
    dcwp::require(path && out, dcwp::ErrorCode::invalid_argument, "null argument");
    std::ifstream in(path);
    dcwp::require(in.good(), dcwp::ErrorCode::io, std::string("cannot open ") + path);
    std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    *out = new dcwp_report{dcwp::pipeline::MetricsReport::from_json(text)};
  });
}

void dcwp_report_free(dcwp_report* report) { delete report; }

dcwp_status dcwp_report_metric(const dcwp_report* report, const char* name, double* out) {
  return guarded([&] {
    dcwp::require(report && name && out, dcwp::ErrorCode::invalid_argument, "null argument");
    const dcwp::pipeline::MetricsReport& r = report->report;
    std::string key = name;
    auto opt = [&](const std::optional<double>& v) {
      dcwp::require(v.has_value(), dcwp::ErrorCode::state, key + " was skipped for this run");
      return *v;
    };
    if (key == "unbiased_accuracy") *out = r.unbiased_accuracy;
    else if (key == "conflicting_accuracy") *out = opt(r.conflicting_accuracy);
    else if (key == "aligned_accuracy") *out = opt(r.aligned_accuracy);
    else if (key == "worst_group_accuracy") *out = opt(r.worst_group_accuracy);
    else if (key == "mining_precision") *out = opt(r.mining_precision);
    else if (key == "mining_recall") *out = opt(r.mining_recall);
    else if (key == "pruning_ratio") *out = r.pruning_ratio;
    else dcwp::fail(dcwp::ErrorCode::invalid_argument, "unknown metric " + key);
  });
}

dcwp_status dcwp_report_json(const dcwp_report* report, int compact, char** out) {
  return guarded([&] {
    dcwp::require(report && out, dcwp::ErrorCode::invalid_argument, "null argument");
    if (compact) {
      std::string pretty = report->report.canonical_json();
      *out = dup_string(nlohmann::json::parse(pretty).dump() + "\n");
    } else {
      *out = dup_string(report->report.canonical_json());
    }
  });
}

dcwp_status dcwp_report_csv(const dcwp_report* report, char** out) {
  return guarded([&] {
    dcwp::require(report && out, dcwp::ErrorCode::invalid_argument, "null argument");
    *out = dup_string(report->report.to_csv());
  });
}

dcwp_status dcwp_report_table(const dcwp_report* report, char** out) {
  return guarded([&] {
    dcwp::require(report && out, dcwp::ErrorCode::invalid_argument, "null argument");
    *out = dup_string(report->report.to_table());
  });
}

dcwp_status dcwp_data_generate(const dcwp_config* cfg, const char* out_dir, char** counts_json) {
  return guarded([&] {
    dcwp::require(cfg && out_dir, dcwp::ErrorCode::invalid_argument, "null argument");
    dcwp::pipeline::ExperimentConfig config = dcwp::pipeline::ExperimentConfig::from_kv(cfg->kv);
    dcwp::runners::CheckSummary summary = dcwp::runners::data_generate(config, out_dir);
    if (counts_json) *counts_json = dup_string(summary.details_json);
  });
}

dcwp_status dcwp_data_synth_digits(const char* images_path, const char* labels_path,
                                   uint64_t count, uint64_t seed) {
  return guarded([&] {
    dcwp::require(images_path && labels_path, dcwp::ErrorCode::invalid_argument, "null argument");
    dcwp::data::synthesize_digit_idx(images_path, labels_path, count, seed);
  });
}

dcwp_status dcwp_theory_bounds(const char* csv_path, const char* p_list, const char* pi_list,
                               size_t spurious_dims, size_t mc_samples, double phi, uint64_t seed,
                               int* ok, char** details_json) {
  return guarded([&] {
    dcwp::require(csv_path, dcwp::ErrorCode::invalid_argument, "null csv path");
    auto summary = dcwp::runners::theory_bounds(csv_path, parse_double_list(p_list, "p list"),
                                                parse_double_list(pi_list, "pi list"),
                                                spurious_dims, mc_samples, phi, seed);
    emit(summary, ok, details_json);
  });
}

dcwp_status dcwp_theory_flow(const char* csv_path, double p, size_t spurious_dims, double w_inv0,
                             double w_sp0, double dt, double target_dev, size_t sample_count,
                             int* ok, char** details_json) {
  return guarded([&] {
    dcwp::require(csv_path, dcwp::ErrorCode::invalid_argument, "null csv path");
    auto summary = dcwp::runners::theory_flow(csv_path, p, spurious_dims, w_inv0, w_sp0, dt,
                                              target_dev, sample_count);
    emit(summary, ok, details_json);
  });
}

dcwp_status dcwp_theory_ratio(const char* csv_path, const char* p_list, size_t spurious_dims,
                              size_t epochs, size_t batch, size_t train_n, double lr, size_t seeds,
                              uint64_t seed, int* ok, char** details_json) {
  return guarded([&] {
    dcwp::require(csv_path, dcwp::ErrorCode::invalid_argument, "null csv path");
    dcwp::theory::LinearTrainOptions opts;
    opts.epochs = epochs;
    opts.batch = batch;
    opts.train_n = train_n;
    opts.lr = lr;
    auto summary = dcwp::runners::theory_ratio(csv_path, parse_double_list(p_list, "p list"),
                                               spurious_dims, opts, seeds, seed);
    emit(summary, ok, details_json);
  });
}

dcwp_status dcwp_theory_misalign(const char* csv_path, size_t spurious_dims, double p, size_t q,
                                 size_t n_pairs, uint64_t seed, int* ok, char** details_json) {
  return guarded([&] {
    dcwp::require(csv_path, dcwp::ErrorCode::invalid_argument, "null csv path");
    auto summary =
        dcwp::runners::theory_misalign(csv_path, spurious_dims, p, q, n_pairs, seed);
    emit(summary, ok, details_json);
  });
}

dcwp_status dcwp_sparsity_sweep(const dcwp_config* cfg, const char* l1_list, const char* csv_path,
                                int* ok, char** details_json) {
  return guarded([&] {
    dcwp::require(cfg && csv_path, dcwp::ErrorCode::invalid_argument, "null argument");
    dcwp::pipeline::ExperimentConfig config = dcwp::pipeline::ExperimentConfig::from_kv(cfg->kv);
    auto summary = dcwp::runners::sparsity_sweep(config, parse_double_list(l1_list, "l1 list"),
                                                 csv_path);
    emit(summary, ok, details_json);
  });
}

}  // extern "C"
