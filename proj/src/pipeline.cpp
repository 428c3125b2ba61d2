#include "pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hashing.hpp"
#include "json.hpp"

namespace dcwp::pipeline {

namespace {

// independent seed streams per stage, so changing one stage's draw count
// never perturbs another stage
constexpr std::uint64_t kStreamData = 1;
constexpr std::uint64_t kStreamMining = 2;
constexpr std::uint64_t kStreamPretrain = 3;
constexpr std::uint64_t kStreamTheta = 4;
constexpr std::uint64_t kStreamFinetune = 5;

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

// ---------------------------------------------------------------------------
// batch assembly

class BatchSampler {
 public:
  enum class Mode { uniform, uniform_pairs, grouped };

  static BatchSampler uniform(const data::BiasedDataset& train, const MiningResult& mining) {
    return BatchSampler(train, mining, Mode::uniform, 0.0);
  }
  static BatchSampler uniform_pairs(const data::BiasedDataset& train, const MiningResult& mining) {
    return BatchSampler(train, mining, Mode::uniform_pairs, 0.0);
  }
  /// Pair slots drawn bias-conflicting with probability lambda_up/(1+lambda_up),
  /// uniformly within the (group, class) cell, which realizes the
  /// group-mean upweighting in expectation.
  static BatchSampler grouped(const data::BiasedDataset& train, const MiningResult& mining,
                              double lambda_up) {
    return BatchSampler(train, mining, Mode::grouped, lambda_up / (1.0 + lambda_up));
  }

  loss::GroupedBatch draw(std::size_t batch, Rng& rng) const {
    require(batch >= 1, ErrorCode::invalid_argument, "sampler: empty batch");
    std::vector<int> picks;
    picks.reserve(batch);
    while (picks.size() < batch) {
      bool want_pair = batch - picks.size() >= 2 && mode_ != Mode::uniform;
      switch (mode_) {
        case Mode::uniform: {
          picks.push_back(any_index(rng));
          break;
        }
        case Mode::uniform_pairs: {
          int i = any_index(rng);
          picks.push_back(i);
          if (want_pair) picks.push_back(classmate(i, rng));
          break;
        }
        case Mode::grouped: {
          bool conflicting = bernoulli(rng, rho_bc_);
          const auto& cells = conflicting ? bc_cells_ : ba_cells_;
          const auto& classes = conflicting ? bc_classes_ : ba_classes_;
          const auto& alt_cells = conflicting ? ba_cells_ : bc_cells_;
          const auto& alt_classes = conflicting ? ba_classes_ : bc_classes_;
          const auto* use_cells = &cells;
          const auto* use_classes = &classes;
          if (use_classes->empty()) {
            use_cells = &alt_cells;
            use_classes = &alt_classes;
          }
          require(!use_classes->empty(), ErrorCode::state, "sampler: empty training set");
          int cls = (*use_classes)[uniform_index(rng, use_classes->size())];
          const std::vector<int>& cell = (*use_cells)[static_cast<std::size_t>(cls)];
          picks.push_back(cell[uniform_index(rng, cell.size())]);
          if (want_pair) picks.push_back(cell[uniform_index(rng, cell.size())]);
          break;
        }
      }
    }

    loss::GroupedBatch out;
    out.inputs = Tensor({batch, train_.inputs.cols()});
    out.labels.resize(batch);
    for (std::size_t k = 0; k < batch; ++k) {
      std::size_t src = static_cast<std::size_t>(picks[k]);
      for (std::size_t c = 0; c < train_.inputs.cols(); ++c)
        out.inputs.at(k, c) = train_.inputs.at(src, c);
      out.labels[k] = train_.labels[src];
      if (is_conflicting_[src]) out.conflicting.push_back(static_cast<int>(k));
      else out.aligned.push_back(static_cast<int>(k));
    }
    return out;
  }

 private:
  BatchSampler(const data::BiasedDataset& train, const MiningResult& mining, Mode mode,
               double rho_bc)
      : train_(train), mode_(mode), rho_bc_(rho_bc) {
    is_conflicting_.assign(train.size(), 0);
    for (int i : mining.conflicting) is_conflicting_[static_cast<std::size_t>(i)] = 1;
    by_class_.resize(train.classes);
    bc_cells_.resize(train.classes);
    ba_cells_.resize(train.classes);
    for (std::size_t s = 0; s < train.size(); ++s) {
      int y = train.labels[s];
      by_class_[static_cast<std::size_t>(y)].push_back(static_cast<int>(s));
      (is_conflicting_[s] ? bc_cells_ : ba_cells_)[static_cast<std::size_t>(y)].push_back(
          static_cast<int>(s));
    }
    for (std::size_t c = 0; c < train.classes; ++c) {
      if (!bc_cells_[c].empty()) bc_classes_.push_back(static_cast<int>(c));
      if (!ba_cells_[c].empty()) ba_classes_.push_back(static_cast<int>(c));
    }
  }

  int any_index(Rng& rng) const { return static_cast<int>(uniform_index(rng, train_.size())); }
  int classmate(int i, Rng& rng) const {
    const std::vector<int>& cell = by_class_[static_cast<std::size_t>(train_.labels[i])];
    return cell[uniform_index(rng, cell.size())];
  }

  const data::BiasedDataset& train_;
  Mode mode_;
  double rho_bc_;
  std::vector<std::uint8_t> is_conflicting_;
  std::vector<std::vector<int>> by_class_, bc_cells_, ba_cells_;
  std::vector<int> bc_classes_, ba_classes_;
};

nn::MLPConfig model_config_for(const ExperimentConfig& config, const data::BiasedDataset& train) {
  nn::MLPConfig mc;
  mc.input_dim = train.inputs.cols();
  mc.hidden = config.hidden;
  mc.classes = train.classes;
  mc.validate();
  return mc;
}

double resolved_lambda_l1(const ExperimentConfig& config, const nn::MaskedMLP& model) {
  if (!config.lambda_l1_auto) return config.weights.lambda_l1;
  return 0.1 / static_cast<double>(model.weight_numel());
}

// collect leaf gradients as value tensors, in parameter order
std::vector<Tensor> leaf_grads(Tape& tape, const std::vector<Var>& vars) {
  std::vector<Tensor> grads;
  grads.reserve(vars.size());
  for (Var v : vars) grads.push_back(tape.grad(v));
  return grads;
}

// one ERM-style training pass (used by mining and pretraining)
nn::MaskedMLP train_plain(const data::BiasedDataset& train, const ExperimentConfig& config,
                          std::size_t iters, bool use_gce, double lr, Rng& rng,
                          std::vector<double>* loss_history) {
  nn::MLPConfig mc = model_config_for(config, train);
  nn::MaskedMLP model = nn::init_weights(mc, rng);
  nn::Optimizer opt(config.optimizer, lr);
  MiningResult no_groups;
  BatchSampler sampler = BatchSampler::uniform(train, no_groups);
  for (std::size_t it = 0; it < iters; ++it) {
    loss::GroupedBatch batch = sampler.draw(config.batch, rng);
    Tape tape;
    nn::ModelVars vars = nn::build_forward(tape, model, batch.inputs, true, nullptr, nullptr, false);
    Var out = use_gce ? loss::gce(tape, vars.logits, batch.labels, config.weights.q)
                      : loss::ce(tape, vars.logits, batch.labels);
    if (loss_history) loss_history->push_back(tape.value(out).item());
    tape.backward(out);
    std::vector<Tensor*> params;
    std::vector<Var> all_vars;
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
      params.push_back(&model.weights[l]);
      all_vars.push_back(vars.weights[l]);
      params.push_back(&model.biases[l]);
      all_vars.push_back(vars.biases[l]);
    }
    opt.step(params, leaf_grads(tape, all_vars));
  }
  return model;
}

std::vector<int> predict_all(const nn::MaskedMLP& model, const masking::BinaryMask* mask,
                             const data::BiasedDataset& ds) {
  std::vector<int> preds(ds.size());
  const std::size_t chunk = 2048;
  for (std::size_t begin = 0; begin < ds.size(); begin += chunk) {
    std::size_t end = std::min(ds.size(), begin + chunk);
    Tensor x({end - begin, ds.inputs.cols()});
    for (std::size_t s = begin; s < end; ++s)
      for (std::size_t c = 0; c < ds.inputs.cols(); ++c)
        x.at(s - begin, c) = ds.inputs.at(s, c);
    std::vector<int> part = model.predict(x, mask);
    for (std::size_t s = begin; s < end; ++s) preds[s] = part[s - begin];
  }
  return preds;
}

// shared finetuning loop; mask == nullptr finetunes the dense network
nn::MaskedMLP finetune_impl(nn::MaskedMLP model, const masking::BinaryMask* mask,
                            const data::BiasedDataset& train, const MiningResult& mining,
                            const ExperimentConfig& config, Rng& rng) {
  bool weighted = config.method == Method::dcwp && config.wce;
  bool align_on = config.method == Method::dcwp && config.align;
  BatchSampler sampler =
      weighted && config.sampler == SamplerMode::oversample
          ? BatchSampler::grouped(train, mining, config.lambda_up_finetune)
          : (align_on || weighted ? BatchSampler::uniform_pairs(train, mining)
                                  : BatchSampler::uniform(train, mining));
  nn::Optimizer opt(config.optimizer, config.lr_finetune);
  for (std::size_t it = 0; it < config.finetune_iters; ++it) {
    loss::GroupedBatch batch = sampler.draw(config.batch, rng);
    Tape tape;
    nn::ModelVars vars =
        nn::build_forward(tape, model, batch.inputs, true, nullptr, mask, align_on);
    Var base;
    if (weighted && config.sampler == SamplerMode::analytic)
      base = loss::wce(tape, vars.logits, batch, config.lambda_up_finetune);
    else
      base = loss::ce(tape, vars.logits, batch.labels);
    if (align_on) {
      Var al = loss::alignment(tape, vars.embeddings, batch, config.weights.tau);
      base = tape.add(base, tape.scale(al, config.weights.lambda_align));
    }
    tape.backward(base);
    std::vector<Tensor*> params;
    std::vector<Var> all_vars;
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
      params.push_back(&model.weights[l]);
      all_vars.push_back(vars.weights[l]);
      params.push_back(&model.biases[l]);
      all_vars.push_back(vars.biases[l]);
    }
    opt.step(params, leaf_grads(tape, all_vars));
  }
  return model;
}

}  // namespace

TrainTestSplit build_datasets(const ExperimentConfig& config) {
  Rng rng(derive_seed(config.seed, kStreamData));
  TrainTestSplit split;
  switch (config.dataset.kind) {
    case DatasetKind::synth: {
      data::SyntheticSpec spec = config.dataset.synth;
      spec.test_mode = false;
      split.train = data::generate_synthetic(spec, config.dataset.train_n, rng);
      spec.test_mode = true;
      split.test = data::generate_synthetic(spec, config.dataset.test_n, rng);
      break;
    }
    case DatasetKind::binary: {
      split.train = data::sample_binary_env(config.dataset.binary, config.dataset.train_n, rng);
      data::BinaryEnvSpec test_env{0.5, config.dataset.binary.spurious_dims, 0.0};
      split.test = data::sample_binary_env(test_env, config.dataset.test_n, rng);
      break;
    }
    case DatasetKind::cmnist: {
      data::IdxContent imgs = data::load_idx(config.dataset.images_path);
      data::IdxContent labs = data::load_idx(config.dataset.labels_path);
      require(!imgs.is_labels && labs.is_labels, ErrorCode::format,
              "cmnist: images/labels paths are swapped or invalid");
      require(imgs.values.rows() == labs.values.numel(), ErrorCode::format,
              "cmnist: image/label counts differ");
      std::size_t limit = std::min(config.dataset.cmnist_limit, imgs.values.rows());
      Tensor train_imgs({limit, imgs.values.cols()});
      std::vector<int> train_labs(limit);
      for (std::size_t s = 0; s < limit; ++s) {
        train_labs[s] = static_cast<int>(labs.values[s]);
        for (std::size_t c = 0; c < imgs.values.cols(); ++c)
          train_imgs.at(s, c) = imgs.values.at(s, c);
      }
      data::ColoredMnistSpec spec;
      spec.rho = config.dataset.cmnist_rho;
      split.train = data::generate_colored_mnist(train_imgs, train_labs, spec, rng);

      data::IdxContent timgs = data::load_idx(config.dataset.test_images_path);
      data::IdxContent tlabs = data::load_idx(config.dataset.test_labels_path);
      require(!timgs.is_labels && tlabs.is_labels, ErrorCode::format,
              "cmnist: test images/labels paths are swapped or invalid");
      std::size_t tlimit = std::min(config.dataset.cmnist_test_limit, timgs.values.rows());
      Tensor test_imgs({tlimit, timgs.values.cols()});
      std::vector<int> test_labs(tlimit);
      for (std::size_t s = 0; s < tlimit; ++s) {
        test_labs[s] = static_cast<int>(tlabs.values[s]);
        for (std::size_t c = 0; c < timgs.values.cols(); ++c)
          test_imgs.at(s, c) = timgs.values.at(s, c);
      }
      data::ColoredMnistSpec test_spec;
      test_spec.rho = config.dataset.cmnist_rho;
      test_spec.test_mode = true;
      split.test = data::generate_colored_mnist(test_imgs, test_labs, test_spec, rng);
      break;
    }
    case DatasetKind::container: {
      split.train = data::load_dataset(config.dataset.train_container);
      split.test = data::load_dataset(config.dataset.test_container);
      break;
    }
  }
  split.train.validate();
  split.test.validate();
  return split;
}

MiningResult mine_bias_conflicting(const data::BiasedDataset& train,
                                   const ExperimentConfig& config, Rng& rng) {
  bool gce_mode = config.mining_mode == MiningMode::gce;
  std::size_t iters = gce_mode ? config.mining_iters : config.mining_early_iters;
  nn::MaskedMLP capturer = train_plain(train, config, iters, gce_mode, config.lr_mining, rng, nullptr);
  std::vector<int> preds = predict_all(capturer, nullptr, train);

  MiningResult out;
  std::size_t truly_conflicting = 0, mined_and_true = 0;
  for (std::size_t s = 0; s < train.size(); ++s) {
    bool mined = preds[s] != train.labels[s];
    if (mined) out.conflicting.push_back(static_cast<int>(s));
    else out.aligned.push_back(static_cast<int>(s));
    bool truth = train.aligned[s] == 0;
    truly_conflicting += truth ? 1 : 0;
    mined_and_true += (mined && truth) ? 1 : 0;
  }
  if (!out.conflicting.empty())
    out.precision =
        static_cast<double>(mined_and_true) / static_cast<double>(out.conflicting.size());
  if (truly_conflicting > 0)
    out.recall = static_cast<double>(mined_and_true) / static_cast<double>(truly_conflicting);
  return out;
}

nn::MaskedMLP pretrain(const data::BiasedDataset& train, const ExperimentConfig& config, Rng& rng,
                       std::vector<double>* loss_history) {
  return train_plain(train, config, config.pretrain_iters, false, config.lr_pretrain, rng, loss_history);
}

masking::PruningParams train_pruning_params(const nn::MaskedMLP& pretrained,
                                            const data::BiasedDataset& train,
                                            const MiningResult& mining,
                                            const ExperimentConfig& config, Rng& rng) {
  masking::PruningParams params =
      masking::PruningParams::like(pretrained.weights, config.theta_init);
  double lambda_l1 = resolved_lambda_l1(config, pretrained);
  bool mrm_mode = config.method == Method::mrm;
  bool weighted = !mrm_mode && config.wce;
  bool align_on = !mrm_mode && config.align;
  BatchSampler sampler =
      weighted && config.sampler == SamplerMode::oversample
          ? BatchSampler::grouped(train, mining, config.weights.lambda_up)
          : (align_on || weighted ? BatchSampler::uniform_pairs(train, mining)
                                  : BatchSampler::uniform(train, mining));
  nn::Optimizer opt(config.optimizer, config.lr_theta);

  for (std::size_t it = 0; it < config.theta_iters; ++it) {
    loss::GroupedBatch batch = sampler.draw(config.batch, rng);
    Tape tape;
    std::vector<Var> theta_vars;
    std::vector<Var> mask_vars;
    std::vector<Tensor> noise = masking::sample_logistic_noise(params, rng);
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
      theta_vars.push_back(tape.leaf(params.layers[l]));
      // one mask sample per optimization step, shared by every loss term
      mask_vars.push_back(
          tape.binary_concrete(theta_vars[l], noise[l], config.weights.tau_gumbel));
    }
    nn::ModelVars vars =
        nn::build_forward(tape, pretrained, batch.inputs, false, &mask_vars, nullptr, align_on);

    Var objective;
    if (mrm_mode) {
      objective = loss::mrm_objective(tape, vars.logits, batch.labels, theta_vars, lambda_l1);
    } else {
      Var base;
      if (weighted && config.sampler == SamplerMode::analytic)
        base = loss::wce(tape, vars.logits, batch, config.weights.lambda_up);
      else
        base = loss::ce(tape, vars.logits, batch.labels);
      if (align_on) {
        Var al = loss::alignment(tape, vars.embeddings, batch, config.weights.tau);
        base = tape.add(base, tape.scale(al, config.weights.lambda_align));
      }
      objective = lambda_l1 > 0.0
                      ? tape.add(base, masking::l1_penalty_var(tape, theta_vars, lambda_l1))
                      : base;
    }
    tape.backward(objective);
    std::vector<Tensor*> param_ptrs;
    for (Tensor& layer : params.layers) param_ptrs.push_back(&layer);
    opt.step(param_ptrs, leaf_grads(tape, theta_vars));
    params.check_finite();
  }
  return params;
}

nn::MaskedMLP prune_and_finetune(const nn::MaskedMLP& pretrained,
                                 const masking::PruningParams& params,
                                 const data::BiasedDataset& train, const MiningResult& mining,
                                 const ExperimentConfig& config, Rng& rng,
                                 masking::BinaryMask* mask_out) {
  masking::BinaryMask mask = masking::binarize(params);
  require(masking::pruning_ratio(mask) < 1.0, ErrorCode::state,
          "prune: every weight was pruned (all keep-logits <= 0)");
  nn::MaskedMLP model = pretrained;
  if (config.reset_after_prune) {
    // rewind surviving weights to their initialization (same stream the
    // pretraining stage used, so this reproduces the starting point exactly)
    Rng init_rng(derive_seed(config.seed, kStreamPretrain));
    model = nn::init_weights(model.config, init_rng);
  }
  if (mask_out) *mask_out = mask;
  return finetune_impl(std::move(model), &mask, train, mining, config, rng);
}

nn::MaskedMLP finetune_dense(const nn::MaskedMLP& pretrained, const data::BiasedDataset& train,
                             const MiningResult& mining, const ExperimentConfig& config,
                             Rng& rng) {
  return finetune_impl(pretrained, nullptr, train, mining, config, rng);
}

loss::GroupedBatch draw_grouped_batch(const data::BiasedDataset& train,
                                      const MiningResult& mining, double lambda_up,
                                      std::size_t batch, Rng& rng) {
  return BatchSampler::grouped(train, mining, lambda_up).draw(batch, rng);
}

MetricsReport evaluate(const nn::MaskedMLP& model, const masking::BinaryMask* mask,
                       const data::BiasedDataset& test) {
  test.validate();
  std::vector<int> preds = predict_all(model, mask, test);

  std::vector<std::size_t> cell_total(test.classes * test.bias_values, 0);
  std::vector<std::size_t> cell_correct(test.classes * test.bias_values, 0);
  std::size_t conf_total = 0, conf_correct = 0, alig_total = 0, alig_correct = 0;
  for (std::size_t s = 0; s < test.size(); ++s) {
    bool correct = preds[s] == test.labels[s];
    std::size_t cell = static_cast<std::size_t>(test.labels[s]) * test.bias_values +
                       static_cast<std::size_t>(test.bias_labels[s]);
    cell_total[cell]++;
    cell_correct[cell] += correct ? 1 : 0;
    if (test.aligned[s]) {
      alig_total++;
      alig_correct += correct ? 1 : 0;
    } else {
      conf_total++;
      conf_correct += correct ? 1 : 0;
    }
  }

  MetricsReport report;
  double sum_acc = 0.0;
  std::size_t nonempty = 0;
  double worst = 2.0;
  for (std::size_t c = 0; c < cell_total.size(); ++c) {
    if (cell_total[c] == 0) continue;
    double acc = static_cast<double>(cell_correct[c]) / static_cast<double>(cell_total[c]);
    sum_acc += acc;
    ++nonempty;
    worst = std::min(worst, acc);
  }
  require(nonempty > 0, ErrorCode::invalid_argument, "evaluate: empty test set");
  report.unbiased_accuracy = sum_acc / static_cast<double>(nonempty);
  if (conf_total > 0)
    report.conflicting_accuracy =
        static_cast<double>(conf_correct) / static_cast<double>(conf_total);
  if (alig_total > 0)
    report.aligned_accuracy = static_cast<double>(alig_correct) / static_cast<double>(alig_total);
  if (worst <= 1.0) report.worst_group_accuracy = worst;
  return report;
}

// ---------------------------------------------------------------------------
// report serialization

namespace {

nlohmann::json report_json(const MetricsReport& r, bool wall_clock) {
  nlohmann::json j;
  j["unbiased_accuracy"] = r.unbiased_accuracy;
  auto put_opt = [&](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
    else j[key] = nullptr;  // explicit skip marker
  };
  put_opt("conflicting_accuracy", r.conflicting_accuracy);
  put_opt("aligned_accuracy", r.aligned_accuracy);
  put_opt("worst_group_accuracy", r.worst_group_accuracy);
  put_opt("mining_precision", r.mining_precision);
  put_opt("mining_recall", r.mining_recall);
  j["pruning_ratio"] = r.pruning_ratio;
  nlohmann::json stages = nlohmann::json::object();
  for (const StageStat& s : r.stages) {
    stages[s.stage] = nlohmann::json::object();
    stages[s.stage]["iterations"] = s.iterations;
    if (wall_clock) stages[s.stage]["seconds"] = s.seconds;
  }
  j["stages"] = stages;
  return j;
}

std::string format_opt(const std::optional<double>& v) {
  if (!v) return "skip";
  std::ostringstream os;
  os.precision(6);
  os << *v;
  return os.str();
}

}  // namespace

std::string MetricsReport::canonical_json() const { return report_json(*this, false).dump(2) + "\n"; }

std::string MetricsReport::timings_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const StageStat& s : stages) j[s.stage] = s.seconds;
  return j.dump(2) + "\n";
}

MetricsReport MetricsReport::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  require(!j.is_discarded() && j.is_object(), ErrorCode::format, "report: invalid JSON");
  MetricsReport r;
  auto get_opt = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<double>();
  };
  require(j.contains("unbiased_accuracy"), ErrorCode::format, "report: missing unbiased_accuracy");
  r.unbiased_accuracy = j["unbiased_accuracy"].get<double>();
  r.conflicting_accuracy = get_opt("conflicting_accuracy");
  r.aligned_accuracy = get_opt("aligned_accuracy");
  r.worst_group_accuracy = get_opt("worst_group_accuracy");
  r.mining_precision = get_opt("mining_precision");
  r.mining_recall = get_opt("mining_recall");
  r.pruning_ratio = j.value("pruning_ratio", 0.0);
  if (j.contains("stages"))
    for (auto it = j["stages"].begin(); it != j["stages"].end(); ++it)
      r.stages.push_back({it.key(), it.value().value("iterations", std::size_t{0}),
                          it.value().value("seconds", 0.0)});
  return r;
}

std::string MetricsReport::to_csv() const {
  std::ostringstream os;
  os << "unbiased_accuracy,conflicting_accuracy,aligned_accuracy,worst_group_accuracy,"
        "mining_precision,mining_recall,pruning_ratio\n";
  os.precision(10);
  os << unbiased_accuracy << ',' << format_opt(conflicting_accuracy) << ','
     << format_opt(aligned_accuracy) << ',' << format_opt(worst_group_accuracy) << ','
     << format_opt(mining_precision) << ',' << format_opt(mining_recall) << ',' << pruning_ratio
     << "\n";
  return os.str();
}

std::string MetricsReport::to_table() const {
  std::ostringstream os;
  os.precision(4);
  os << std::fixed;
  os << "metric                     value\n";
  os << "unbiased accuracy          " << unbiased_accuracy << "\n";
  os << "bias-conflict accuracy     " << format_opt(conflicting_accuracy) << "\n";
  os << "bias-aligned accuracy      " << format_opt(aligned_accuracy) << "\n";
  os << "worst-group accuracy       " << format_opt(worst_group_accuracy) << "\n";
  os << "mining precision           " << format_opt(mining_precision) << "\n";
  os << "mining recall              " << format_opt(mining_recall) << "\n";
  os << "pruning ratio              " << pruning_ratio << "\n";
  for (const StageStat& s : stages)
    os << "stage " << s.stage << ": " << s.iterations << " iterations, " << s.seconds << " s\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// orchestration

RunResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  RunResult result;
  result.config = config;

  namespace fs = std::filesystem;
  std::string out_dir = config.out_dir;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    // manifest goes first: resolved config, seed, content hash, artifact map
    std::string canonical = config.to_kv().canonical();
    std::string hash_input = canonical;
    if (config.dataset.kind == DatasetKind::cmnist) {
      hash_input += sha256_file(config.dataset.images_path);
      hash_input += sha256_file(config.dataset.labels_path);
      hash_input += sha256_file(config.dataset.test_images_path);
      hash_input += sha256_file(config.dataset.test_labels_path);
    } else if (config.dataset.kind == DatasetKind::container) {
      hash_input += sha256_file(config.dataset.train_container);
      hash_input += sha256_file(config.dataset.test_container);
    }
    nlohmann::json manifest;
    manifest["config"] = canonical;
    manifest["seed"] = config.seed;
    manifest["content_hash"] = sha256_hex(hash_input);
    manifest["artifacts"] = {{"pretrained", "pretrained.ckpt"},
                             {"final", "final.ckpt"},
                             {"mask", "mask.bin"},
                             {"report", "report.json"},
                             {"report_csv", "report.csv"},
                             {"timings", "timings.json"}};
    std::ofstream mf(out_dir + "/manifest.json");
    require(mf.good(), ErrorCode::io, "run: cannot write manifest in " + out_dir);
    mf << manifest.dump(2) << "\n";
  }

  TrainTestSplit split = build_datasets(config);
  MetricsReport report;
  auto timed = [&](const std::string& name, std::size_t iters, auto&& body) {
    double start = now_seconds();
    body();
    report.stages.push_back({name, iters, now_seconds() - start});
  };

  MiningResult mining;
  bool needs_mining = config.method == Method::dcwp;
  if (needs_mining) {
    Rng rng(derive_seed(config.seed, kStreamMining));
    std::size_t iters = config.mining_mode == MiningMode::gce ? config.mining_iters
                                                              : config.mining_early_iters;
    timed("mining", iters,
          [&] { mining = mine_bias_conflicting(split.train, config, rng); });
  }

  nn::MaskedMLP pretrained;
  {
    Rng rng(derive_seed(config.seed, kStreamPretrain));
    timed("pretrain", config.pretrain_iters,
          [&] { pretrained = pretrain(split.train, config, rng); });
  }

  nn::MaskedMLP final_model = pretrained;
  masking::BinaryMask mask;
  bool masked = false;
  if (config.method != Method::erm) {
    if (config.pruning) {
      masking::PruningParams params;
      {
        Rng rng(derive_seed(config.seed, kStreamTheta));
        timed("mask_training", config.theta_iters, [&] {
          params = train_pruning_params(pretrained, split.train, mining, config, rng);
        });
      }
      {
        Rng rng(derive_seed(config.seed, kStreamFinetune));
        timed("finetune", config.finetune_iters, [&] {
          final_model =
              prune_and_finetune(pretrained, params, split.train, mining, config, rng, &mask);
        });
      }
      masked = true;
      report.pruning_ratio = masking::pruning_ratio(mask);
    } else {
      Rng rng(derive_seed(config.seed, kStreamFinetune));
      timed("finetune", config.finetune_iters,
            [&] { final_model = finetune_dense(pretrained, split.train, mining, config, rng); });
    }
  }

  MetricsReport eval = evaluate(final_model, masked ? &mask : nullptr, split.test);
  report.unbiased_accuracy = eval.unbiased_accuracy;
  report.conflicting_accuracy = eval.conflicting_accuracy;
  report.aligned_accuracy = eval.aligned_accuracy;
  report.worst_group_accuracy = eval.worst_group_accuracy;
  report.mining_precision = mining.precision;
  report.mining_recall = mining.recall;

  if (!out_dir.empty()) {
    nn::save_checkpoint(pretrained, out_dir + "/pretrained.ckpt", config.seed, 0);
    nn::save_checkpoint(final_model, out_dir + "/final.ckpt", config.seed,
                        static_cast<long>(config.finetune_iters));
    if (masked) masking::save_mask(mask, out_dir + "/mask.bin");
    std::ofstream rf(out_dir + "/report.json");
    rf << report.canonical_json();
    std::ofstream cf(out_dir + "/report.csv");
    cf << report.to_csv();
    std::ofstream tf(out_dir + "/timings.json");
    tf << report.timings_json();
  }

  result.report = report;
  result.final_model = final_model;
  result.mask = mask;
  result.out_dir = out_dir;
  return result;
}

}  // namespace dcwp::pipeline
