#pragma once

#include <vector>

#include "masking.hpp"
#include "tape.hpp"
#include "tensor.hpp"

namespace dcwp::loss {

/// Batch partitioned into bias-conflicting proxies (S_bc) and the remaining
/// bias-aligned samples (S_ba). Indices are batch positions.
struct GroupedBatch {
  Tensor inputs;
  std::vector<int> labels;
  std::vector<int> conflicting;
  std::vector<int> aligned;

  std::size_t size() const { return labels.size(); }
  /// Checks that conflicting/aligned partition the batch.
  void validate_partition() const;
  /// Partition check plus label range check.
  void validate(std::size_t classes) const;
};

struct LossWeights {
  double lambda_up = 80.0;     // upweighting, >= 1
  double lambda_align = 0.05;  // alignment balance, >= 0 (0 disables the term)
  double lambda_l1 = 1e-8;     // sparsity multiplier, >= 0
  double q = 0.7;              // generalized CE exponent, in (0, 1]
  double tau = 0.1;            // contrastive temperature, > 0
  double tau_gumbel = 0.5;     // mask sampling temperature, > 0

  void validate() const;
};

/// Degenerate-group bookkeeping for the group-weighted losses.
struct LossFlags {
  bool conflicting_empty = false;
  bool aligned_empty = false;
  int skipped_anchors = 0;
};

/// Mean cross entropy, -mean log softmax(logits)[label].
Var ce(Tape& tape, Var logits, const std::vector<int>& labels);
/// Per-sample cross entropy vector (n).
Var ce_per_sample(Tape& tape, Var logits, const std::vector<int>& labels);

/// Generalized cross entropy, mean (1 - p_target^q) / q. q -> 0 recovers CE,
/// q = 1 is mean (1 - p_target).
Var gce(Tape& tape, Var logits, const std::vector<int>& labels, double q);

/// Group-weighted CE: lambda_up * mean-CE(S_bc) + mean-CE(S_ba).
/// An empty group contributes 0 and sets its flag.
Var wce(Tape& tape, Var logits, const GroupedBatch& batch, double lambda_up,
        LossFlags* flags = nullptr);

/// Supervised contrastive loss over anchor set V and positive pool Vplus.
/// For each anchor i the denominator runs over V \ {i}; positives are the
/// same-label members of Vplus (excluding i). Anchors with no positives or an
/// empty denominator pool are skipped (counted in flags->skipped_anchors).
/// Embedding rows must be unit norm (deviation > 1e-6 is an error).
Var supcon(Tape& tape, Var embeddings, const std::vector<int>& labels,
           const std::vector<int>& anchors, const std::vector<int>& positives, double tau,
           LossFlags* flags = nullptr);

/// Debiased alignment: supcon(S_bc, S) + supcon(S_ba, S_bc).
Var alignment(Tape& tape, Var embeddings, const GroupedBatch& batch, double tau,
              LossFlags* flags = nullptr);

/// wce + lambda_align * alignment, on one shared forward pass.
Var debias_loss(Tape& tape, Var logits, Var embeddings, const GroupedBatch& batch,
                const LossWeights& weights, LossFlags* flags = nullptr);

/// Plain CE over the whole batch plus the l1 mask-logit penalty; the
/// mask-regularized baseline objective. theta_vars may be empty when
/// lambda_l1 == 0.
Var mrm_objective(Tape& tape, Var logits, const std::vector<int>& labels,
                  const std::vector<Var>& theta_vars, double lambda_l1);

}  // namespace dcwp::loss
