#pragma once

#include <cstdint>
#include <vector>

#include "data.hpp"
#include "rng.hpp"

namespace dcwp::theory {

/// Keep-probabilities for the masked linear classifier over the binary
/// environment: one for the invariant weight, one per spurious weight.
struct PruneProbabilities {
  double pi_inv = 1.0;
  std::vector<double> pi_sp;

  void validate() const;  // entries in [0,1]
};

/// Pretrained linear classifier weights (w_inv, w_sp).
struct LinearWeights {
  double w_inv = 1.0;
  std::vector<double> w_sp;

  /// Weight ratios alpha_i = w_sp,i / w_inv; error if w_inv == 0.
  std::vector<double> alphas() const;
};

struct McEstimate {
  double value = 0.0;
  double se = 0.0;
};

/// Monte-Carlo estimate of the masked sign-classifier error
/// 0.5 E[1 - y sgn(w^T (x .* m))], masks resampled per draw, sgn(0)
/// contributing 1/2 per sample.
McEstimate mc_loss(const PruneProbabilities& pi, const LinearWeights& w,
                   const data::BinaryEnvSpec& env, std::size_t n, Rng& rng);

/// Exhaustive expectation over the 2^D spurious patterns; when any
/// keep-probability is fractional the 2^(D+1) mask patterns are enumerated
/// too (allowed only for D <= 10). Oracle counterpart of mc_loss.
double exact_loss(const PruneProbabilities& pi, const LinearWeights& w,
                  const data::BinaryEnvSpec& env);

/// Hoeffding-style upper bounds, all of the form
/// 2 exp(-2 (pi_inv + c sum_i alpha_i pi_sp,i)^2 / (4 sum_i alpha_i^2 + 1)):
/// training has c = 2p-1, the test environment c = 0, and the mixture
/// environment c = 2p(1-phi)-1.
double training_bound(const PruneProbabilities& pi, const std::vector<double>& alphas, double p);
double test_bound(const PruneProbabilities& pi, const std::vector<double>& alphas);
double mixture_bound(const PruneProbabilities& pi, const std::vector<double>& alphas, double p,
                     double phi);

// ---------------------------------------------------------------------------
// Gradient-flow dynamics of the linear classifier under exponential loss

struct FlowState {
  double t = 0.0;
  double w_inv = 0.0;
  std::vector<double> w_sp;
};

struct FlowTrajectory {
  std::vector<FlowState> samples;  // at the requested times, ascending
  FlowState terminal;
};

/// Fixed point of every spurious coordinate, 0.5 log(p/(1-p)).
double flow_fixed_point(double p);

/// RK4 integration of
///   dw_inv/dt  = e^{-w_inv} prod_i (p e^{-w_sp,i} + (1-p) e^{w_sp,i})
///   dw_sp,j/dt = e^{-w_inv} (p e^{-w_sp,j} - (1-p) e^{w_sp,j})
///                prod_{i != j} (p e^{-w_sp,i} + (1-p) e^{w_sp,i})
/// from `init` to `horizon`, recording states at `sample_times`. Steps use
/// `dt` up to t = 1 and then grow proportionally to t (the dynamics slow
/// like 1/t, so a fixed relative step keeps accuracy and bounded cost).
/// A non-finite state raises an error naming the time it occurred.
FlowTrajectory gradient_flow(double p, const FlowState& init, double horizon, double dt,
                             const std::vector<double>& sample_times);

/// Integrates until max_i |w_sp,i - w*| <= target_dev (capped at max_horizon)
/// and returns the trajectory sampled at `sample_count` log-spaced times.
FlowTrajectory gradient_flow_until(double p, const FlowState& init, double target_dev, double dt,
                                   double max_horizon, std::size_t sample_count);

/// Closed-form trajectory bounds from the flow analysis evaluated at time t:
/// lower/upper envelopes for w_inv, a lower envelope for w_sp and the implied
/// lower envelope for alpha = w_sp / w_inv.
struct Envelopes {
  double w_inv_lower = 0.0;
  double w_inv_upper = 0.0;
  double w_sp_lower = 0.0;
  double alpha_lower = 0.0;
};

Envelopes analytic_envelopes(double p, const FlowState& init, double t);

// ---------------------------------------------------------------------------
// Finite-time pretraining experiments on sampled environments

struct LinearTrainOptions {
  std::size_t train_n = 10240;
  std::size_t epochs = 500;
  std::size_t batch = 1024;
  double lr = 0.1;  // plain gradient descent on the logistic loss
};

/// Trains w on binary cross entropy with labels mapped to {0,1}; weights
/// start at zero. Returns the trained weights.
LinearWeights train_linear_classifier(const data::BinaryEnvSpec& env,
                                      const LinearTrainOptions& opts, Rng& rng);

/// Sign-classifier accuracy of w on a freshly sampled environment.
double linear_accuracy(const LinearWeights& w, const data::BinaryEnvSpec& env, std::size_t n,
                       Rng& rng);

struct WeightRatioPoint {
  double p = 0.0;
  double mean_alpha = 0.0;     // mean over seeds of mean_i(w_sp,i) / w_inv
  double se = 0.0;             // standard error over seeds
  double test_accuracy = 0.0;  // unbiased accuracy at p = 0.5, mean over seeds
};

/// The finite-time weight-ratio experiment: for each p, trains `seeds`
/// classifiers on independently sampled environments and reports the mean
/// spurious-to-invariant weight ratio plus unbiased test accuracy.
std::vector<WeightRatioPoint> weight_ratio_experiment(const std::vector<double>& p_grid,
                                                      std::size_t spurious_dims,
                                                      const LinearTrainOptions& opts,
                                                      std::size_t seeds, std::uint64_t base_seed);

// ---------------------------------------------------------------------------
// Embedding misalignment under a semi-orthogonal encoder

/// Random W in R^{Q x d} with orthonormal columns (W^T W = I); Q >= d.
Tensor semi_orthogonal(std::size_t q, std::size_t d, Rng& rng);

struct MisalignmentResult {
  double cross_env_mean = 0.0;  // cos(biased, test) over same-class pairs
  double cross_env_se = 0.0;
  double within_biased_mean = 0.0;  // cos(biased, biased)
  double within_biased_se = 0.0;
};

/// Embeds same-class sample pairs from the biased and test environments with
/// a random semi-orthogonal encoder and reports empirical mean cosine
/// similarities. Q < D+1 is an error.
MisalignmentResult misalignment_experiment(std::size_t spurious_dims, double p, std::size_t q,
                                           std::size_t n_pairs, Rng& rng);

// ---------------------------------------------------------------------------
// Bound-validity grid

struct BoundsGridRow {
  double p = 0.0;
  double phi = 0.0;
  double pi_inv = 0.0;
  double pi_sp = 0.0;  // shared across spurious dims
  double mc = 0.0;
  double se = 0.0;
  double train_bound = 0.0;
  double test_bound = 0.0;
  double mixture_bound = 0.0;  // at phi
  bool violation = false;      // mc > train bound + 3 se
};

struct BoundsGridSpec {
  std::vector<double> p_values = {0.6, 0.75, 0.9, 0.99};
  std::vector<double> pi_values = {0.0, 0.25, 0.5, 0.75, 1.0};
  std::size_t spurious_dims = 15;
  std::size_t mc_samples = 100000;
  double phi = 0.0;  // 0 = plain biased environment; rows evaluate the mixture bound at this phi
  LinearTrainOptions pretrain;
  std::uint64_t seed = 20240901;
};

/// For each p: pretrains a linear model on the biased environment, then
/// sweeps the (pi_inv, pi_sp) grid, estimating the loss by Monte Carlo and
/// evaluating each bound with the pretrained weight ratios.
std::vector<BoundsGridRow> run_bounds_grid(const BoundsGridSpec& spec);

}  // namespace dcwp::theory
