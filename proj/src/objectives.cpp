#include "objectives.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dcwp::loss {

void GroupedBatch::validate_partition() const {
  require(inputs.rank() == 2 && inputs.rows() == labels.size(), ErrorCode::shape_mismatch,
          "grouped batch: inputs " + inputs.shape_str() + " vs " +
              std::to_string(labels.size()) + " labels");
  std::vector<char> seen(labels.size(), 0);
  for (int i : conflicting) {
    require(i >= 0 && i < static_cast<int>(labels.size()) && !seen[i], ErrorCode::invalid_argument,
            "grouped batch: bad conflicting index");
    seen[i] = 1;
  }
  for (int i : aligned) {
    require(i >= 0 && i < static_cast<int>(labels.size()) && !seen[i], ErrorCode::invalid_argument,
            "grouped batch: groups overlap or index out of range");
    seen[i] = 1;
  }
  require(conflicting.size() + aligned.size() == labels.size(), ErrorCode::invalid_argument,
          "grouped batch: groups do not partition the batch");
}

void GroupedBatch::validate(std::size_t classes) const {
  validate_partition();
  for (int y : labels)
    require(y >= 0 && y < static_cast<int>(classes), ErrorCode::invalid_argument,
            "grouped batch: label out of range");
}

void LossWeights::validate() const {
  require(lambda_up >= 1.0, ErrorCode::invalid_argument, "loss weights: lambda_up must be >= 1");
  require(lambda_align >= 0.0, ErrorCode::invalid_argument,
          "loss weights: lambda_align must be >= 0");
  require(lambda_l1 >= 0.0, ErrorCode::invalid_argument, "loss weights: lambda_l1 must be >= 0");
  require(q > 0.0 && q <= 1.0, ErrorCode::invalid_argument, "loss weights: q must be in (0,1]");
  require(tau > 0.0, ErrorCode::invalid_argument, "loss weights: tau must be > 0");
  require(tau_gumbel > 0.0, ErrorCode::invalid_argument, "loss weights: tau_gumbel must be > 0");
}

namespace {

void check_labels(const Tensor& logits, const std::vector<int>& labels) {
  require(logits.rank() == 2 && logits.rows() == labels.size(), ErrorCode::shape_mismatch,
          "loss: logits " + logits.shape_str() + " vs " + std::to_string(labels.size()) +
              " labels");
  int classes = static_cast<int>(logits.cols());
  for (int y : labels)
    if (y < 0 || y >= classes) fail(ErrorCode::invalid_argument, "loss: label out of range");
}

}  // namespace

Var ce_per_sample(Tape& tape, Var logits, const std::vector<int>& labels) {
  check_labels(tape.value(logits), labels);
  Var logp = tape.log_softmax_rows(logits);
  return tape.scale(tape.take_per_row(logp, labels), -1.0);
}

Var ce(Tape& tape, Var logits, const std::vector<int>& labels) {
  return tape.mean(ce_per_sample(tape, logits, labels));
}

Var gce(Tape& tape, Var logits, const std::vector<int>& labels, double q) {
  require(q > 0.0 && q <= 1.0, ErrorCode::invalid_argument, "gce: q must be in (0,1]");
  check_labels(tape.value(logits), labels);
  Var logp = tape.take_per_row(tape.log_softmax_rows(logits), labels);
  Var pq = tape.exp(tape.scale(logp, q));
  Var ones = tape.constant(Tensor::full({labels.size()}, 1.0));
  return tape.mean(tape.scale(tape.sub(ones, pq), 1.0 / q));
}

Var wce(Tape& tape, Var logits, const GroupedBatch& batch, double lambda_up, LossFlags* flags) {
  require(lambda_up >= 1.0, ErrorCode::invalid_argument, "wce: lambda_up must be >= 1");
  batch.validate(tape.value(logits).cols());
  if (flags) {
    flags->conflicting_empty = batch.conflicting.empty();
    flags->aligned_empty = batch.aligned.empty();
  }
  // lambda_up * mean(S_bc) + mean(S_ba) as one weighted sum over per-sample CE.
  Tensor weights({batch.size()});
  if (!batch.conflicting.empty()) {
    double w = lambda_up / static_cast<double>(batch.conflicting.size());
    for (int i : batch.conflicting) weights[static_cast<std::size_t>(i)] += w;
  }
  if (!batch.aligned.empty()) {
    double w = 1.0 / static_cast<double>(batch.aligned.size());
    for (int i : batch.aligned) weights[static_cast<std::size_t>(i)] += w;
  }
  return tape.dot(tape.constant(std::move(weights)), ce_per_sample(tape, logits, batch.labels));
}

Var supcon(Tape& tape, Var embeddings, const std::vector<int>& labels,
           const std::vector<int>& anchors, const std::vector<int>& positives, double tau,
           LossFlags* flags) {
  require(tau > 0.0, ErrorCode::invalid_argument, "supcon: tau must be > 0");
  const Tensor& z = tape.value(embeddings);
  require(z.rank() == 2 && z.rows() == labels.size(), ErrorCode::shape_mismatch,
          "supcon: embeddings " + z.shape_str() + " vs " + std::to_string(labels.size()) +
              " labels");
  // Rows must be unit norm; an exactly-zero row is the documented sentinel
  // for a relu-dead representation and is excluded from every term.
  std::vector<char> dead(z.rows(), 0);
  for (std::size_t r = 0; r < z.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < z.cols(); ++c) s += z.at(r, c) * z.at(r, c);
    if (s == 0.0) {
      dead[r] = 1;
      continue;
    }
    require(std::fabs(std::sqrt(s) - 1.0) <= 1e-6, ErrorCode::domain,
            "supcon: embedding row " + std::to_string(r) + " is not unit norm");
  }
  auto check_index = [&](int i) {
    require(i >= 0 && i < static_cast<int>(labels.size()), ErrorCode::invalid_argument,
            "supcon: index out of range");
  };
  for (int i : anchors) check_index(i);
  for (int i : positives) check_index(i);
  std::size_t live_pool = 0;
  for (int a : anchors)
    if (!dead[static_cast<std::size_t>(a)]) ++live_pool;

  // Active anchors need at least one positive and a nonempty denominator pool.
  std::vector<int> active;
  std::vector<std::vector<int>> positive_sets;
  for (int i : anchors) {
    if (dead[static_cast<std::size_t>(i)]) continue;
    std::vector<int> pset;
    for (int k : positives)
      if (k != i && !dead[static_cast<std::size_t>(k)] &&
          labels[static_cast<std::size_t>(k)] == labels[static_cast<std::size_t>(i)])
        pset.push_back(k);
    bool has_pool = live_pool >= 2;
    if (pset.empty() || !has_pool) continue;
    active.push_back(i);
    positive_sets.push_back(std::move(pset));
  }
  if (flags) flags->skipped_anchors += static_cast<int>(anchors.size() - active.size());
  if (active.empty()) return tape.constant(Tensor::scalar(0.0));

  std::size_t na = active.size();
  std::size_t nv = anchors.size();

  // numerator: sum_i (1/|P_i|) sum_{j in P_i} z_i . z_j / tau
  Tensor pos_weights({na, z.rows()});
  for (std::size_t r = 0; r < na; ++r) {
    double w = 1.0 / static_cast<double>(positive_sets[r].size());
    for (int j : positive_sets[r]) pos_weights.at(r, static_cast<std::size_t>(j)) += w;
  }
  Var z_anchor = tape.gather_rows(embeddings, active);
  Var sims_all = tape.scale(tape.matmul(z_anchor, embeddings, false, true), 1.0 / tau);
  Var numerator = tape.sum(tape.mul(tape.constant(std::move(pos_weights)), sims_all));

  // denominator: sum_i log sum_{a in V \ {i}} exp(z_i . z_a / tau)
  Tensor pool_mask({na, nv});
  pool_mask.fill(1.0);
  for (std::size_t r = 0; r < na; ++r)
    for (std::size_t c = 0; c < nv; ++c)
      if (anchors[c] == active[r] || dead[static_cast<std::size_t>(anchors[c])])
        pool_mask.at(r, c) = 0.0;
  Var z_pool = tape.gather_rows(embeddings, anchors);
  Var sims_pool = tape.scale(tape.matmul(z_anchor, z_pool, false, true), 1.0 / tau);
  Var masked = tape.mul(tape.exp(sims_pool), tape.constant(std::move(pool_mask)));
  Var lse = tape.sum(tape.log(tape.rowsum(masked)));

  return tape.sub(lse, numerator);
}

Var alignment(Tape& tape, Var embeddings, const GroupedBatch& batch, double tau,
              LossFlags* flags) {
  batch.validate_partition();
  std::vector<int> everyone(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) everyone[i] = static_cast<int>(i);
  Var gap = supcon(tape, embeddings, batch.labels, batch.conflicting, everyone, tau, flags);
  Var spread = supcon(tape, embeddings, batch.labels, batch.aligned, batch.conflicting, tau, flags);
  return tape.add(gap, spread);
}

Var debias_loss(Tape& tape, Var logits, Var embeddings, const GroupedBatch& batch,
                const LossWeights& weights, LossFlags* flags) {
  Var base = wce(tape, logits, batch, weights.lambda_up, flags);
  if (weights.lambda_align == 0.0) return base;
  Var align = alignment(tape, embeddings, batch, weights.tau, flags);
  return tape.add(base, tape.scale(align, weights.lambda_align));
}

Var mrm_objective(Tape& tape, Var logits, const std::vector<int>& labels,
                  const std::vector<Var>& theta_vars, double lambda_l1) {
  Var base = ce(tape, logits, labels);
  if (lambda_l1 == 0.0 || theta_vars.empty()) return base;
  return tape.add(base, masking::l1_penalty_var(tape, theta_vars, lambda_l1));
}

}  // namespace dcwp::loss
