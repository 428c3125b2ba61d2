#include "masking.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace dcwp::masking {

PruningParams PruningParams::like(const std::vector<Tensor>& weight_shapes, double init_logit) {
  PruningParams p;
  p.layers.reserve(weight_shapes.size());
  for (const Tensor& w : weight_shapes) p.layers.push_back(Tensor::full(w.shape(), init_logit));
  return p;
}

std::size_t PruningParams::numel() const {
  std::size_t n = 0;
  for (const Tensor& t : layers) n += t.numel();
  return n;
}

void PruningParams::check_finite() const {
  for (const Tensor& t : layers)
    require(t.all_finite(), ErrorCode::numeric, "pruning params: non-finite logit");
}

std::vector<Tensor> sample_logistic_noise(const PruningParams& params, Rng& rng) {
  std::vector<Tensor> noise;
  noise.reserve(params.layers.size());
  for (const Tensor& th : params.layers) {
    Tensor n(th.shape());
    for (std::size_t i = 0; i < n.numel(); ++i) n[i] = logistic(rng);
    noise.push_back(std::move(n));
  }
  return noise;
}

MaskSample mask_from_noise(const PruningParams& params, const std::vector<Tensor>& noise,
                           double tau) {
  require(tau > 0.0, ErrorCode::invalid_argument, "sample_mask: tau must be positive");
  require(noise.size() == params.layers.size(), ErrorCode::shape_mismatch,
          "sample_mask: noise layer count mismatch");
  MaskSample s;
  s.tau = tau;
  s.hard.reserve(params.layers.size());
  s.relaxed.reserve(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const Tensor& th = params.layers[l];
    Tensor relaxed(th.shape());
    Tensor hard(th.shape());
    for (std::size_t i = 0; i < th.numel(); ++i) {
      double r = 1.0 / (1.0 + std::exp(-(th[i] + noise[l][i]) / tau));
      relaxed[i] = r;
      hard[i] = r > 0.5 ? 1.0 : 0.0;
    }
    s.relaxed.push_back(std::move(relaxed));
    s.hard.push_back(std::move(hard));
  }
  return s;
}

MaskSample sample_mask(const PruningParams& params, double tau, Rng& rng) {
  require(tau > 0.0, ErrorCode::invalid_argument, "sample_mask: tau must be positive");
  return mask_from_noise(params, sample_logistic_noise(params, rng), tau);
}

BinaryMask binarize(const PruningParams& params) {
  BinaryMask m;
  m.layers.reserve(params.layers.size());
  for (const Tensor& th : params.layers) {
    Tensor layer(th.shape());
    for (std::size_t i = 0; i < th.numel(); ++i) layer[i] = th[i] > 0.0 ? 1.0 : 0.0;
    m.layers.push_back(std::move(layer));
  }
  return m;
}

double l1_penalty(const PruningParams& params, double lambda) {
  require(lambda >= 0.0, ErrorCode::invalid_argument, "l1_penalty: lambda must be >= 0");
  double s = 0.0;
  for (const Tensor& th : params.layers)
    for (std::size_t i = 0; i < th.numel(); ++i) s += std::fabs(th[i]);
  return lambda * s;
}

Var l1_penalty_var(Tape& tape, const std::vector<Var>& theta_vars, double lambda) {
  require(lambda >= 0.0, ErrorCode::invalid_argument, "l1_penalty: lambda must be >= 0");
  require(!theta_vars.empty(), ErrorCode::invalid_argument, "l1_penalty: no logit layers");
  Var total;
  for (Var th : theta_vars) {
    Var s = tape.sum(tape.abs(th));
    total = total.valid() ? tape.add(total, s) : s;
  }
  return tape.scale(total, lambda);
}

double pruning_ratio(const BinaryMask& mask) {
  std::size_t total = 0, zeros = 0;
  for (const Tensor& layer : mask.layers) {
    total += layer.numel();
    for (std::size_t i = 0; i < layer.numel(); ++i)
      if (layer[i] == 0.0) ++zeros;
  }
  require(total > 0, ErrorCode::invalid_argument, "pruning_ratio: empty mask");
  return static_cast<double>(zeros) / static_cast<double>(total);
}

void save_mask(const BinaryMask& mask, const std::string& path) {
  std::ofstream bin(path, std::ios::binary);
  require(bin.good(), ErrorCode::io, "save_mask: cannot open " + path);
  nlohmann::json meta;
  meta["layers"] = nlohmann::json::array();
  for (const Tensor& layer : mask.layers) {
    for (std::size_t i = 0; i < layer.numel(); ++i) {
      char byte = layer[i] != 0.0 ? 1 : 0;
      bin.write(&byte, 1);
    }
    meta["layers"].push_back(layer.shape());
  }
  meta["pruning_ratio"] = pruning_ratio(mask);
  bin.close();
  std::ofstream side(path + ".json");
  require(side.good(), ErrorCode::io, "save_mask: cannot open " + path + ".json");
  side << meta.dump(2) << "\n";
}

BinaryMask load_mask(const std::string& path) {
  std::ifstream side(path + ".json");
  require(side.good(), ErrorCode::io, "load_mask: cannot open " + path + ".json");
  nlohmann::json meta = nlohmann::json::parse(side, nullptr, false);
  require(!meta.is_discarded() && meta.contains("layers"), ErrorCode::format,
          "load_mask: bad sidecar " + path + ".json");
  std::ifstream bin(path, std::ios::binary);
  require(bin.good(), ErrorCode::io, "load_mask: cannot open " + path);
  BinaryMask mask;
  for (const auto& shape_json : meta["layers"]) {
    std::vector<std::size_t> shape = shape_json.get<std::vector<std::size_t>>();
    Tensor layer(shape);
    for (std::size_t i = 0; i < layer.numel(); ++i) {
      char byte = 0;
      bin.read(&byte, 1);
      require(bin.good(), ErrorCode::format, "load_mask: truncated mask file " + path);
      require(byte == 0 || byte == 1, ErrorCode::format, "load_mask: invalid mask byte");
      layer[i] = byte;
    }
    mask.layers.push_back(std::move(layer));
  }
  return mask;
}

}  // namespace dcwp::masking
