#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "data.hpp"
#include "model.hpp"
#include "objectives.hpp"

namespace dcwp::pipeline {

/// Flat `key = value` configuration text: one pair per line, '#' comments,
/// later assignments win. No nesting; dotted key names are plain strings.
class KvConfig {
 public:
  static KvConfig parse(const std::string& text);
  static KvConfig load(const std::string& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  const std::string& raw(const std::string& key) const;  // error if missing

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::size_t> get_dims(const std::string& key,
                                    const std::vector<std::size_t>& fallback) const;

  /// Canonical text form: keys sorted, one per line. Parsing it round-trips.
  std::string canonical() const;
  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

enum class Method { erm, mrm, dcwp };
enum class MiningMode { gce, early_stopped_erm };
enum class SamplerMode { oversample, analytic };
enum class DatasetKind { synth, binary, cmnist, container };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::synth;
  std::size_t train_n = 8192;
  std::size_t test_n = 8192;
  data::SyntheticSpec synth;       // kind == synth
  data::BinaryEnvSpec binary;      // kind == binary
  double cmnist_rho = 0.01;        // kind == cmnist
  std::string images_path, labels_path, test_images_path, test_labels_path;
  std::size_t cmnist_limit = 55000;
  std::size_t cmnist_test_limit = 10000;
  std::string train_container, test_container;  // kind == container
};

/// Everything a run needs; defaults follow the reference recipe at
/// colored-digit scale (pruning-logit init 1.5, q = 0.7, lambda_up = 80,
/// lambda_align = 0.05, pruning-parameter steps 2000 at lr 0.01).
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string out_dir;  // empty: no artifacts written

  DatasetConfig dataset;
  std::vector<std::size_t> hidden = {100, 100, 100};

  Method method = Method::dcwp;
  MiningMode mining_mode = MiningMode::gce;
  SamplerMode sampler = SamplerMode::oversample;

  std::size_t batch = 128;
  std::size_t mining_iters = 2000;        // T1
  std::size_t mining_early_iters = 1000;  // budget for the early-stopped miner
  std::size_t pretrain_iters = 10000;
  std::size_t theta_iters = 2000;  // T2
  std::size_t finetune_iters = 1000;  // T3

  nn::OptKind optimizer = nn::OptKind::adam;
  double lr_pretrain = 0.01;
  double lr_mining = 0.001;  // bias-capturing model; gentler start keeps the
                             // generalized-CE loss from freezing on early
                             // confident mistakes
  double lr_theta = 0.01;
  double lr_finetune = 0.001;

  loss::LossWeights weights;           // lambda_up here drives mask training
  double lambda_up_finetune = 30.0;    // may differ from mask training
  double theta_init = 1.5;
  bool lambda_l1_auto = false;  // true: resolve to 0.1 / (# prunable weights)

  bool pruning = true;
  bool align = true;
  bool wce = true;
  bool reset_after_prune = false;

  void validate() const;

  static ExperimentConfig from_kv(const KvConfig& kv);
  KvConfig to_kv() const;
};

std::string method_name(Method m);
Method method_from_name(const std::string& name);

}  // namespace dcwp::pipeline
