#include "model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace dcwp::nn {

void MLPConfig::validate() const {
  require(input_dim >= 1, ErrorCode::invalid_argument, "mlp config: input_dim must be >= 1");
  require(classes >= 1, ErrorCode::invalid_argument, "mlp config: classes must be >= 1");
  require(!hidden.empty(), ErrorCode::invalid_argument, "mlp config: need at least one hidden layer");
  for (std::size_t h : hidden)
    require(h >= 1, ErrorCode::invalid_argument, "mlp config: hidden dim must be >= 1");
}

std::size_t MaskedMLP::weight_numel() const {
  std::size_t n = 0;
  for (const Tensor& w : weights) n += w.numel();
  return n;
}

namespace {

Tensor masked_weight(const Tensor& w, const masking::BinaryMask* mask, std::size_t layer) {
  if (!mask) return w;
  require(layer < mask->layers.size() && mask->layers[layer].same_shape(w),
          ErrorCode::shape_mismatch, "mask shape does not match weight shape");
  Tensor out = w;
  const Tensor& m = mask->layers[layer];
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= m[i];
  return out;
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor out = matmul_values(x, w, false, false);
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out.at(r, c) += b[c];
  return out;
}

void relu_inplace(Tensor& t) {
  for (std::size_t i = 0; i < t.numel(); ++i)
    if (t[i] < 0.0) t[i] = 0.0;
}

Tensor penultimate_activations(const MaskedMLP& model, const Tensor& x,
                               const masking::BinaryMask* mask) {
  require(x.rank() == 2 && x.cols() == model.config.input_dim, ErrorCode::shape_mismatch,
          "forward: input shape " + x.shape_str());
  Tensor h = x;
  for (std::size_t l = 0; l + 1 < model.weights.size(); ++l) {
    h = affine(h, masked_weight(model.weights[l], mask, l), model.biases[l]);
    relu_inplace(h);
  }
  return h;
}

}  // namespace

Tensor MaskedMLP::logits(const Tensor& x, const masking::BinaryMask* mask) const {
  Tensor h = penultimate_activations(*this, x, mask);
  std::size_t last = weights.size() - 1;
  return affine(h, masked_weight(weights[last], mask, last), biases[last]);
}

Tensor MaskedMLP::embeddings(const Tensor& x, const masking::BinaryMask* mask) const {
  Tensor h = penultimate_activations(*this, x, mask);
  for (std::size_t r = 0; r < h.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < h.cols(); ++c) s += h.at(r, c) * h.at(r, c);
    double nrm = std::sqrt(s);
    if (nrm == 0.0) continue;  // relu-dead row stays a zero sentinel
    for (std::size_t c = 0; c < h.cols(); ++c) h.at(r, c) /= nrm;
  }
  return h;
}

std::vector<int> MaskedMLP::predict(const Tensor& x, const masking::BinaryMask* mask) const {
  Tensor lg = logits(x, mask);
  std::vector<int> out(lg.rows());
  for (std::size_t r = 0; r < lg.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < lg.cols(); ++c)
      if (lg.at(r, c) > lg.at(r, best)) best = c;
    out[r] = static_cast<int>(best);
  }
  return out;
}

MaskedMLP init_weights(const MLPConfig& config, Rng& rng) {
  config.validate();
  MaskedMLP model;
  model.config = config;
  std::vector<std::size_t> dims;
  dims.push_back(config.input_dim);
  for (std::size_t h : config.hidden) dims.push_back(h);
  dims.push_back(config.classes);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    std::size_t fan_in = dims[l];
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Tensor w({dims[l], dims[l + 1]});
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] = uniform(rng, -bound, bound);
    model.weights.push_back(std::move(w));
    model.biases.push_back(Tensor({dims[l + 1]}));
  }
  return model;
}

ModelVars build_forward(Tape& tape, const MaskedMLP& model, const Tensor& x, bool train_weights,
                        const std::vector<Var>* mask_vars, const masking::BinaryMask* fixed_mask,
                        bool need_embeddings) {
  require(!(mask_vars && fixed_mask), ErrorCode::invalid_argument,
          "build_forward: choose one mask form");
  require(!(mask_vars && train_weights), ErrorCode::state,
          "build_forward: weights must stay frozen while masks are in-graph");
  require(x.rank() == 2 && x.cols() == model.config.input_dim, ErrorCode::shape_mismatch,
          "forward: input shape " + x.shape_str());
  if (mask_vars)
    require(mask_vars->size() == model.weights.size(), ErrorCode::shape_mismatch,
            "build_forward: one mask var per layer required");

  ModelVars vars;
  std::size_t layer_total = model.weights.size();
  for (std::size_t l = 0; l < layer_total; ++l) {
    vars.weights.push_back(train_weights ? tape.leaf(model.weights[l])
                                         : tape.constant(model.weights[l]));
    vars.biases.push_back(train_weights ? tape.leaf(model.biases[l])
                                        : tape.constant(model.biases[l]));
  }

  auto effective = [&](std::size_t l) {
    Var w = vars.weights[l];
    if (mask_vars) return tape.mul(w, (*mask_vars)[l]);
    if (fixed_mask) {
      require(fixed_mask->layers[l].same_shape(model.weights[l]), ErrorCode::shape_mismatch,
              "mask shape does not match weight shape");
      return tape.mul(w, tape.constant(fixed_mask->layers[l]));
    }
    return w;
  };

  Var h = tape.constant(x);
  for (std::size_t l = 0; l + 1 < layer_total; ++l)
    h = tape.relu(tape.add_rowvec(tape.matmul(h, effective(l)), vars.biases[l]));
  vars.logits = tape.add_rowvec(tape.matmul(h, effective(layer_total - 1)),
                                vars.biases[layer_total - 1]);
  if (need_embeddings) vars.embeddings = tape.l2_normalize_rows_safe(h);
  return vars;
}

void Optimizer::step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
  require(params.size() == grads.size(), ErrorCode::invalid_argument,
          "optimizer: parameter/gradient count mismatch");
  if (kind_ == OptKind::adam && m_.empty()) {
    for (const Tensor* p : params) {
      m_.push_back(Tensor(p->shape()));
      v_.push_back(Tensor(p->shape()));
    }
  }
  ++steps_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = grads[i];
    require(p.same_shape(g), ErrorCode::shape_mismatch, "optimizer: gradient shape mismatch");
    if (kind_ == OptKind::sgd) {
      p.axpy_inplace(-lr_, g);
      continue;
    }
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(steps_));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(steps_));
    for (std::size_t j = 0; j < p.numel(); ++j) {
      m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
      v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
      double mh = m[j] / bc1;
      double vh = v[j] / bc2;
      p[j] -= lr_ * mh / (std::sqrt(vh) + eps);
    }
  }
}

namespace {

void write_blob(std::ofstream& out, const Tensor& t) {
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
}

void read_blob(std::ifstream& in, Tensor& t, const std::string& path) {
  in.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.numel() * sizeof(double)));
  require(in.good(), ErrorCode::format, "checkpoint: truncated blob in " + path);
}

constexpr char kCkptMagic[8] = {'D', 'C', 'W', 'P', 'C', 'K', 'P', '1'};

}  // namespace

void save_checkpoint(const MaskedMLP& model, const std::string& path, std::uint64_t seed,
                     long step) {
  nlohmann::json header;
  header["input_dim"] = model.config.input_dim;
  header["hidden"] = model.config.hidden;
  header["classes"] = model.config.classes;
  header["seed"] = seed;
  header["step"] = step;
  std::string head = header.dump();

  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io, "checkpoint: cannot open " + path);
  out.write(kCkptMagic, 8);
  std::uint32_t len = static_cast<std::uint32_t>(head.size());
  unsigned char len_le[4] = {static_cast<unsigned char>(len & 0xff),
                             static_cast<unsigned char>((len >> 8) & 0xff),
                             static_cast<unsigned char>((len >> 16) & 0xff),
                             static_cast<unsigned char>((len >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(len_le), 4);
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    write_blob(out, model.weights[l]);
    write_blob(out, model.biases[l]);
  }
  require(out.good(), ErrorCode::io, "checkpoint: write failed for " + path);
}

MaskedMLP load_checkpoint(const std::string& path, std::uint64_t* seed_out, long* step_out) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io, "checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  require(in.good() && std::memcmp(magic, kCkptMagic, 8) == 0, ErrorCode::format,
          "checkpoint: bad magic in " + path);
  unsigned char len_le[4];
  in.read(reinterpret_cast<char*>(len_le), 4);
  require(in.good(), ErrorCode::format, "checkpoint: truncated header length in " + path);
  std::uint32_t len = static_cast<std::uint32_t>(len_le[0]) |
                      (static_cast<std::uint32_t>(len_le[1]) << 8) |
                      (static_cast<std::uint32_t>(len_le[2]) << 16) |
                      (static_cast<std::uint32_t>(len_le[3]) << 24);
  std::string head(len, '\0');
  in.read(head.data(), len);
  require(in.good(), ErrorCode::format, "checkpoint: truncated header in " + path);
  nlohmann::json header = nlohmann::json::parse(head, nullptr, false);
  require(!header.is_discarded(), ErrorCode::format, "checkpoint: invalid header JSON in " + path);

  MLPConfig config;
  config.input_dim = header.at("input_dim").get<std::size_t>();
  config.hidden = header.at("hidden").get<std::vector<std::size_t>>();
  config.classes = header.at("classes").get<std::size_t>();
  config.validate();
  if (seed_out) *seed_out = header.value("seed", 0ULL);
  if (step_out) *step_out = header.value("step", 0L);

  MaskedMLP model;
  model.config = config;
  std::vector<std::size_t> dims;
  dims.push_back(config.input_dim);
  for (std::size_t h : config.hidden) dims.push_back(h);
  dims.push_back(config.classes);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Tensor w({dims[l], dims[l + 1]});
    Tensor b({dims[l + 1]});
    read_blob(in, w, path);
    read_blob(in, b, path);
    model.weights.push_back(std::move(w));
    model.biases.push_back(std::move(b));
  }
  return model;
}

}  // namespace dcwp::nn
