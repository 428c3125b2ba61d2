#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "masking.hpp"
#include "rng.hpp"
#include "tape.hpp"
#include "tensor.hpp"

namespace dcwp::nn {

struct MLPConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden = {100, 100, 100};
  std::size_t classes = 0;

  void validate() const;  // every dim >= 1
  std::size_t layer_count() const { return hidden.size() + 1; }
};

/// Relu MLP split as encoder (all hidden layers; the penultimate activation
/// is the representation) plus a linear classifier head. Weights are stored
/// (in, out) row-major; an optional mask multiplies weights elementwise.
struct MaskedMLP {
  MLPConfig config;
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;

  std::size_t weight_numel() const;

  /// Plain inference pass (no tape). Mask may be null.
  Tensor logits(const Tensor& x, const masking::BinaryMask* mask = nullptr) const;
  /// Unit-norm penultimate representations (no tape). Mask may be null.
  Tensor embeddings(const Tensor& x, const masking::BinaryMask* mask = nullptr) const;
  /// Argmax class prediction per row.
  std::vector<int> predict(const Tensor& x, const masking::BinaryMask* mask = nullptr) const;
};

/// Kaiming-uniform fan-in init, biases zero. Deterministic in the rng state.
MaskedMLP init_weights(const MLPConfig& config, Rng& rng);

/// Handles into a forward pass recorded on a tape.
struct ModelVars {
  std::vector<Var> weights;  // leaves when training weights, constants when frozen
  std::vector<Var> biases;
  Var logits;
  Var embeddings;  // valid only when requested
};

/// Records the masked forward pass. Exactly one of `mask_vars` (in-graph
/// masks, e.g. straight-through samples during mask training; weights must
/// then be frozen) and `fixed_mask` (constant binary mask) may be set; both
/// null means the dense network.
ModelVars build_forward(Tape& tape, const MaskedMLP& model, const Tensor& x, bool train_weights,
                        const std::vector<Var>* mask_vars, const masking::BinaryMask* fixed_mask,
                        bool need_embeddings);

enum class OptKind { sgd, adam };

/// SGD / Adam over a fixed parameter list. Deterministic given call order.
class Optimizer {
 public:
  Optimizer(OptKind kind, double lr) : kind_(kind), lr_(lr) {}

  void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads);
  long step_count() const { return steps_; }
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

 private:
  OptKind kind_;
  double lr_;
  long steps_ = 0;
  std::vector<Tensor> m_, v_;
};

/// Checkpoint = magic "DCWPCKP1" + LE u32 header length + JSON header
/// (config, step, seed) + raw little-endian f64 blobs (W1, b1, W2, b2, ...).
void save_checkpoint(const MaskedMLP& model, const std::string& path, std::uint64_t seed,
                     long step);
MaskedMLP load_checkpoint(const std::string& path, std::uint64_t* seed_out = nullptr,
                          long* step_out = nullptr);

}  // namespace dcwp::nn
