#pragma once

#include <string>
#include <vector>

#include "rng.hpp"
#include "tape.hpp"
#include "tensor.hpp"

namespace dcwp::masking {

/// Per-weight keep logits, one tensor per prunable layer. Shapes mirror the
/// model's weight shapes exactly; biases are never masked. sigmoid(theta) is
/// the probability of preserving the corresponding weight.
struct PruningParams {
  std::vector<Tensor> layers;

  static PruningParams like(const std::vector<Tensor>& weight_shapes, double init_logit);
  std::size_t numel() const;
  void check_finite() const;
};

/// One stochastic mask draw. `hard` holds the {0,1} forward values, `relaxed`
/// the (0,1) values the gradient flows through; hard = 1 iff relaxed > 1/2.
struct MaskSample {
  std::vector<Tensor> hard;
  std::vector<Tensor> relaxed;
  double tau = 0.0;
};

/// Deterministic binarization of the keep logits, entrywise 1[theta > 0].
struct BinaryMask {
  std::vector<Tensor> layers;
};

/// Logistic noise tensors matching the logit shapes, for reuse between the
/// tape-free sample below and the in-graph Tape::binary_concrete path.
std::vector<Tensor> sample_logistic_noise(const PruningParams& params, Rng& rng);

MaskSample sample_mask(const PruningParams& params, double tau, Rng& rng);
MaskSample mask_from_noise(const PruningParams& params, const std::vector<Tensor>& noise,
                           double tau);

BinaryMask binarize(const PruningParams& params);

/// lambda * sum |theta|, tape-free value.
double l1_penalty(const PruningParams& params, double lambda);
/// Same quantity as a differentiable node over in-graph logit vars.
Var l1_penalty_var(Tape& tape, const std::vector<Var>& theta_vars, double lambda);

/// Fraction of pruned (zero) entries; error on an empty mask.
double pruning_ratio(const BinaryMask& mask);

/// Flat 0/1 bytes per layer, concatenated, plus a JSON sidecar carrying the
/// shapes and pruning ratio. `path` names the binary file; the sidecar is
/// written to path + ".json".
void save_mask(const BinaryMask& mask, const std::string& path);
BinaryMask load_mask(const std::string& path);

}  // namespace dcwp::masking
