#pragma once

#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "data.hpp"
#include "masking.hpp"
#include "model.hpp"
#include "objectives.hpp"

namespace dcwp::pipeline {

/// Mined bias-conflicting proxies: index sets partitioning the training set
/// plus precision/recall against ground-truth group flags (absent when a
/// denominator is empty).
struct MiningResult {
  std::vector<int> conflicting;
  std::vector<int> aligned;
  std::optional<double> precision;
  std::optional<double> recall;
};

struct StageStat {
  std::string stage;
  std::size_t iterations = 0;
  double seconds = 0.0;
};

struct MetricsReport {
  double unbiased_accuracy = 0.0;  // mean over nonempty (class, bias) cells
  std::optional<double> conflicting_accuracy;
  std::optional<double> aligned_accuracy;
  std::optional<double> worst_group_accuracy;
  std::optional<double> mining_precision;
  std::optional<double> mining_recall;
  double pruning_ratio = 0.0;
  std::vector<StageStat> stages;

  /// Deterministic JSON (sorted keys, shortest float round-trip). Wall-clock
  /// seconds live in timings_json() so reruns of the same seed are
  /// byte-identical here.
  std::string canonical_json() const;
  std::string timings_json() const;
  /// Single-row CSV with a header line.
  std::string to_csv() const;
  /// Plain-text table for terminals.
  std::string to_table() const;

  /// Parses a report previously produced by canonical_json().
  static MetricsReport from_json(const std::string& text);
};

struct TrainTestSplit {
  data::BiasedDataset train;
  data::BiasedDataset test;
};

/// Materializes the configured dataset pair (train biased, test balanced).
TrainTestSplit build_datasets(const ExperimentConfig& config);

/// Stage 1: trains a bias-capturing model (generalized CE, or early-stopped
/// plain CE) and takes its residual training errors as S_bc.
MiningResult mine_bias_conflicting(const data::BiasedDataset& train,
                                   const ExperimentConfig& config, Rng& rng);

/// Plain empirical-risk pretraining of the main network. When
/// `loss_history` is given it receives the per-iteration batch loss.
nn::MaskedMLP pretrain(const data::BiasedDataset& train, const ExperimentConfig& config, Rng& rng,
                       std::vector<double>* loss_history = nullptr);

/// Stage 2a: learns keep-logits over the frozen pretrained weights, one
/// sampled mask per step, group-weighted loss realized by the configured
/// sampler, plus the l1 logit penalty.
masking::PruningParams train_pruning_params(const nn::MaskedMLP& pretrained,
                                            const data::BiasedDataset& train,
                                            const MiningResult& mining,
                                            const ExperimentConfig& config, Rng& rng);

/// Stage 2b: binarizes the logits and finetunes surviving weights under the
/// fixed mask (optionally resetting them to their initialization first).
/// Erroring when every weight is pruned.
nn::MaskedMLP prune_and_finetune(const nn::MaskedMLP& pretrained,
                                 const masking::PruningParams& params,
                                 const data::BiasedDataset& train, const MiningResult& mining,
                                 const ExperimentConfig& config, Rng& rng,
                                 masking::BinaryMask* mask_out);

/// Finetunes without any mask (ablations that skip pruning).
nn::MaskedMLP finetune_dense(const nn::MaskedMLP& pretrained, const data::BiasedDataset& train,
                             const MiningResult& mining, const ExperimentConfig& config, Rng& rng);

/// Group-resolved evaluation on a test set carrying group flags.
MetricsReport evaluate(const nn::MaskedMLP& model, const masking::BinaryMask* mask,
                       const data::BiasedDataset& test);

/// One draw of the oversampling batch sampler used by mask training and
/// finetuning: same-class pair slots, each bias-conflicting with probability
/// lambda_up / (1 + lambda_up), uniform within the (group, class) cell.
loss::GroupedBatch draw_grouped_batch(const data::BiasedDataset& train,
                                      const MiningResult& mining, double lambda_up,
                                      std::size_t batch, Rng& rng);

struct RunResult {
  ExperimentConfig config;
  MetricsReport report;
  nn::MaskedMLP final_model;
  masking::BinaryMask mask;  // empty when no pruning took place
  std::string out_dir;       // empty when no artifacts were written
};

/// Executes the stage sequence implied by the method and ablation toggles,
/// writing the run manifest before any training and the report/checkpoint
/// artifacts afterwards (when out_dir is set).
RunResult run_experiment(const ExperimentConfig& config);

}  // namespace dcwp::pipeline
