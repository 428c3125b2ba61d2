#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "config.hpp"
#include "theory.hpp"

namespace dcwp::runners {

/// Outcome of a check-carrying run: machine-readable detail plus a verdict.
struct CheckSummary {
  bool ok = true;
  std::string details_json;  // one JSON object; keys depend on the runner
};

/// Bound-validity grid. Writes one CSV row per (p, pi_inv, pi_sp) with the
/// Monte-Carlo estimate, its SE, and the training/test/mixture bounds, plus
/// the empirical spurious marginal per p. phi < 0 means "auto": evaluate
/// each p at its debiasing weight 1 - 1/(2p). Checks: no bound violations;
/// under auto-phi additionally mixture == test bound to machine precision
/// and |P(Z=y|y) - 0.5| < 0.01.
CheckSummary theory_bounds(const std::string& csv_path, const std::vector<double>& p_values,
                           const std::vector<double>& pi_values, std::size_t spurious_dims,
                           std::size_t mc_samples, double phi, std::uint64_t seed);

/// Gradient-flow run for one (p, D): integrates until the spurious weights
/// sit within target_dev of the fixed point, samples log-spaced times, and
/// writes a CSV row per sample with the four envelopes. Checks: envelopes
/// hold everywhere, w_inv strictly increases, every alpha stays positive,
/// terminal |w_sp - w*| <= target_dev.
CheckSummary theory_flow(const std::string& csv_path, double p, std::size_t spurious_dims,
                         double w_inv0, double w_sp0, double dt, double target_dev,
                         std::size_t sample_count);

/// Finite-time weight-ratio experiment over a p grid; CSV row per p with
/// mean alpha, its SE and unbiased test accuracy. Checks: mean alpha
/// nondecreasing in p allowing one inversion of at most 0.05, and mean alpha
/// at the largest p >= 0.8 whenever that p >= 0.95.
CheckSummary theory_ratio(const std::string& csv_path, const std::vector<double>& p_grid,
                          std::size_t spurious_dims, const theory::LinearTrainOptions& opts,
                          std::size_t seeds, std::uint64_t seed);

/// Misalignment experiment; single CSV row with both empirical means, their
/// SEs and the closed-form values. Checks: both means within 3 SE.
CheckSummary theory_misalign(const std::string& csv_path, std::size_t spurious_dims, double p,
                             std::size_t q, std::size_t n_pairs, std::uint64_t seed);

/// Generates the configured dataset pair, writes the two containers plus a
/// generation manifest (group counts, container hashes, seed) under out_dir.
CheckSummary data_generate(const pipeline::ExperimentConfig& config, const std::string& out_dir);

/// Runs the configured experiment once per l1 multiplier and writes the
/// sparsity/accuracy frontier CSV. Checks: pruning ratio nondecreasing in
/// lambda across the sweep, allowing one inversion of at most 0.02.
CheckSummary sparsity_sweep(const pipeline::ExperimentConfig& config,
                            const std::vector<double>& l1_values, const std::string& csv_path);

}  // namespace dcwp::runners
