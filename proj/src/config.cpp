#include "config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace dcwp::pipeline {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

KvConfig KvConfig::parse(const std::string& text) {
  KvConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string stripped = line;
    std::size_t hash = stripped.find('#');
    if (hash != std::string::npos) stripped = stripped.substr(0, hash);
    stripped = trim(stripped);
    if (stripped.empty()) continue;
    std::size_t eq = stripped.find('=');
    require(eq != std::string::npos, ErrorCode::format,
            "config: line " + std::to_string(lineno) + " is not `key = value`");
    std::string key = trim(stripped.substr(0, eq));
    std::string value = trim(stripped.substr(eq + 1));
    require(!key.empty(), ErrorCode::format,
            "config: empty key on line " + std::to_string(lineno));
    cfg.values_[key] = value;
  }
  return cfg;
}

KvConfig KvConfig::load(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io, "config: cannot open " + path);
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse(text);
}

void KvConfig::set(const std::string& key, const std::string& value) { values_[key] = value; }

bool KvConfig::has(const std::string& key) const { return values_.count(key) > 0; }

const std::string& KvConfig::raw(const std::string& key) const {
  auto it = values_.find(key);
  require(it != values_.end(), ErrorCode::invalid_argument, "config: missing key " + key);
  return it->second;
}

std::string KvConfig::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    double v = std::stod(it->second, &used);
    require(used == it->second.size(), ErrorCode::format, "");
    return v;
  } catch (...) {
    fail(ErrorCode::format, "config: key " + key + " is not a number: " + it->second);
  }
}

std::uint64_t KvConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    unsigned long long v = std::stoull(it->second, &used);
    require(used == it->second.size(), ErrorCode::format, "");
    return v;
  } catch (...) {
    fail(ErrorCode::format, "config: key " + key + " is not an integer: " + it->second);
  }
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "off" || v == "0" || v == "no") return false;
  fail(ErrorCode::format, "config: key " + key + " is not a boolean: " + v);
}

std::vector<std::size_t> KvConfig::get_dims(const std::string& key,
                                            const std::vector<std::size_t>& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<std::size_t> out;
  std::stringstream ss(it->second);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    require(!item.empty(), ErrorCode::format, "config: key " + key + " has an empty element");
    try {
      out.push_back(static_cast<std::size_t>(std::stoull(item)));
    } catch (...) {
      fail(ErrorCode::format, "config: key " + key + " has a non-integer element: " + item);
    }
  }
  require(!out.empty(), ErrorCode::format, "config: key " + key + " is empty");
  return out;
}

std::string KvConfig::canonical() const {
  std::ostringstream out;
  for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
  return out.str();
}

std::string method_name(Method m) {
  switch (m) {
    case Method::erm: return "erm";
    case Method::mrm: return "mrm";
    default: return "dcwp";
  }
}

Method method_from_name(const std::string& name) {
  if (name == "erm") return Method::erm;
  if (name == "mrm") return Method::mrm;
  if (name == "dcwp") return Method::dcwp;
  fail(ErrorCode::invalid_argument, "config: unknown method " + name);
}

namespace {

std::string dataset_kind_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::synth: return "synth";
    case DatasetKind::binary: return "binary";
    case DatasetKind::cmnist: return "cmnist";
    default: return "container";
  }
}

DatasetKind dataset_kind_from_name(const std::string& name) {
  if (name == "synth") return DatasetKind::synth;
  if (name == "binary") return DatasetKind::binary;
  if (name == "cmnist") return DatasetKind::cmnist;
  if (name == "container") return DatasetKind::container;
  fail(ErrorCode::invalid_argument, "config: unknown dataset kind " + name);
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "seed", "out_dir",
      "dataset.kind", "dataset.train_n", "dataset.test_n",
      "dataset.classes", "dataset.invariant_dims", "dataset.spurious_dims", "dataset.rho",
      "dataset.invariant_noise", "dataset.spurious_noise", "dataset.codebook_seed",
      "dataset.p", "dataset.phi",
      "dataset.images", "dataset.labels", "dataset.test_images", "dataset.test_labels",
      "dataset.limit", "dataset.test_limit",
      "dataset.train_container", "dataset.test_container",
      "model.hidden",
      "method", "mining.mode", "sampler",
      "batch", "mining.iters", "mining.early_iters", "pretrain.iters", "theta.iters",
      "finetune.iters",
      "optimizer", "lr.pretrain", "lr.mining", "lr.theta", "lr.finetune",
      "loss.q", "loss.lambda_up", "loss.lambda_up_finetune", "loss.lambda_align",
      "loss.lambda_l1", "loss.tau", "loss.tau_gumbel",
      "theta.init",
      "ablation.pruning", "ablation.align", "ablation.wce",
      "finetune.reset",
  };
  return keys;
}

}  // namespace

void ExperimentConfig::validate() const {
  weights.validate();
  require(batch >= 2, ErrorCode::invalid_argument, "config: batch must be >= 2");
  require(mining_iters >= 1 && pretrain_iters >= 1 && theta_iters >= 1 && finetune_iters >= 1,
          ErrorCode::invalid_argument, "config: iteration budgets must be >= 1");
  require(lambda_up_finetune >= 1.0, ErrorCode::invalid_argument,
          "config: loss.lambda_up_finetune must be >= 1");
  require(!hidden.empty(), ErrorCode::invalid_argument, "config: model.hidden must be nonempty");
  if (dataset.kind == DatasetKind::synth) dataset.synth.validate();
  if (dataset.kind == DatasetKind::binary) dataset.binary.validate();
  if (dataset.kind == DatasetKind::cmnist)
    require(dataset.cmnist_rho > 0.0 && dataset.cmnist_rho < 1.0, ErrorCode::invalid_argument,
            "config: dataset.rho must lie in (0,1)");
}

ExperimentConfig ExperimentConfig::from_kv(const KvConfig& kv) {
  for (const auto& [k, v] : kv.entries())
    require(known_keys().count(k) > 0, ErrorCode::invalid_argument, "config: unknown key " + k);

  ExperimentConfig c;
  c.seed = kv.get_u64("seed", c.seed);
  c.out_dir = kv.get_string("out_dir", c.out_dir);

  c.dataset.kind = dataset_kind_from_name(kv.get_string("dataset.kind", "synth"));
  c.dataset.train_n = kv.get_u64("dataset.train_n", c.dataset.train_n);
  c.dataset.test_n = kv.get_u64("dataset.test_n", c.dataset.test_n);
  c.dataset.synth.classes = kv.get_u64("dataset.classes", c.dataset.synth.classes);
  c.dataset.synth.invariant_dims =
      kv.get_u64("dataset.invariant_dims", c.dataset.synth.invariant_dims);
  c.dataset.synth.spurious_dims =
      kv.get_u64("dataset.spurious_dims", c.dataset.synth.spurious_dims);
  c.dataset.synth.rho = kv.get_double("dataset.rho", c.dataset.synth.rho);
  c.dataset.synth.invariant_noise =
      kv.get_double("dataset.invariant_noise", c.dataset.synth.invariant_noise);
  c.dataset.synth.spurious_noise =
      kv.get_double("dataset.spurious_noise", c.dataset.synth.spurious_noise);
  c.dataset.synth.codebook_seed = kv.get_u64("dataset.codebook_seed", c.dataset.synth.codebook_seed);
  c.dataset.binary.p = kv.get_double("dataset.p", c.dataset.binary.p);
  c.dataset.binary.phi = kv.get_double("dataset.phi", c.dataset.binary.phi);
  c.dataset.binary.spurious_dims = c.dataset.synth.spurious_dims;
  c.dataset.cmnist_rho = kv.get_double("dataset.rho", c.dataset.cmnist_rho);
  c.dataset.images_path = kv.get_string("dataset.images", "");
  c.dataset.labels_path = kv.get_string("dataset.labels", "");
  c.dataset.test_images_path = kv.get_string("dataset.test_images", "");
  c.dataset.test_labels_path = kv.get_string("dataset.test_labels", "");
  c.dataset.cmnist_limit = kv.get_u64("dataset.limit", c.dataset.cmnist_limit);
  c.dataset.cmnist_test_limit = kv.get_u64("dataset.test_limit", c.dataset.cmnist_test_limit);
  c.dataset.train_container = kv.get_string("dataset.train_container", "");
  c.dataset.test_container = kv.get_string("dataset.test_container", "");

  c.hidden = kv.get_dims("model.hidden", c.hidden);
  c.method = method_from_name(kv.get_string("method", "dcwp"));
  std::string mining = kv.get_string("mining.mode", "gce");
  if (mining == "gce") c.mining_mode = MiningMode::gce;
  else if (mining == "early_stopped_erm") c.mining_mode = MiningMode::early_stopped_erm;
  else fail(ErrorCode::invalid_argument, "config: unknown mining.mode " + mining);
  std::string sampler = kv.get_string("sampler", "oversample");
  if (sampler == "oversample") c.sampler = SamplerMode::oversample;
  else if (sampler == "analytic") c.sampler = SamplerMode::analytic;
  else fail(ErrorCode::invalid_argument, "config: unknown sampler " + sampler);

  c.batch = kv.get_u64("batch", c.batch);
  c.mining_iters = kv.get_u64("mining.iters", c.mining_iters);
  c.mining_early_iters = kv.get_u64("mining.early_iters", c.mining_early_iters);
  c.pretrain_iters = kv.get_u64("pretrain.iters", c.pretrain_iters);
  c.theta_iters = kv.get_u64("theta.iters", c.theta_iters);
  c.finetune_iters = kv.get_u64("finetune.iters", c.finetune_iters);

  std::string opt = kv.get_string("optimizer", "adam");
  if (opt == "adam") c.optimizer = nn::OptKind::adam;
  else if (opt == "sgd") c.optimizer = nn::OptKind::sgd;
  else fail(ErrorCode::invalid_argument, "config: unknown optimizer " + opt);
  c.lr_pretrain = kv.get_double("lr.pretrain", c.lr_pretrain);
  c.lr_mining = kv.get_double("lr.mining", c.lr_mining);
  c.lr_theta = kv.get_double("lr.theta", c.lr_theta);
  c.lr_finetune = kv.get_double("lr.finetune", c.lr_finetune);

  c.weights.q = kv.get_double("loss.q", c.weights.q);
  c.weights.lambda_up = kv.get_double("loss.lambda_up", c.weights.lambda_up);
  c.lambda_up_finetune = kv.get_double("loss.lambda_up_finetune", c.lambda_up_finetune);
  c.weights.lambda_align = kv.get_double("loss.lambda_align", c.weights.lambda_align);
  std::string l1 = kv.get_string("loss.lambda_l1", "");
  if (l1 == "auto") {
    c.lambda_l1_auto = true;
  } else if (!l1.empty()) {
    c.weights.lambda_l1 = kv.get_double("loss.lambda_l1", c.weights.lambda_l1);
  }
  c.weights.tau = kv.get_double("loss.tau", c.weights.tau);
  c.weights.tau_gumbel = kv.get_double("loss.tau_gumbel", c.weights.tau_gumbel);
  c.theta_init = kv.get_double("theta.init", c.theta_init);

  c.pruning = kv.get_bool("ablation.pruning", c.pruning);
  c.align = kv.get_bool("ablation.align", c.align);
  c.wce = kv.get_bool("ablation.wce", c.wce);
  c.reset_after_prune = kv.get_bool("finetune.reset", c.reset_after_prune);

  c.validate();
  return c;
}

KvConfig ExperimentConfig::to_kv() const {
  KvConfig kv;
  auto put_u = [&](const std::string& k, std::uint64_t v) { kv.set(k, std::to_string(v)); };
  auto put_d = [&](const std::string& k, double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    kv.set(k, os.str());
  };
  auto put_b = [&](const std::string& k, bool v) { kv.set(k, v ? "on" : "off"); };

  put_u("seed", seed);
  if (!out_dir.empty()) kv.set("out_dir", out_dir);
  kv.set("dataset.kind", dataset_kind_name(dataset.kind));
  put_u("dataset.train_n", dataset.train_n);
  put_u("dataset.test_n", dataset.test_n);
  switch (dataset.kind) {
    case DatasetKind::synth:
      put_u("dataset.classes", dataset.synth.classes);
      put_u("dataset.invariant_dims", dataset.synth.invariant_dims);
      put_u("dataset.spurious_dims", dataset.synth.spurious_dims);
      put_d("dataset.rho", dataset.synth.rho);
      put_d("dataset.invariant_noise", dataset.synth.invariant_noise);
      put_d("dataset.spurious_noise", dataset.synth.spurious_noise);
      put_u("dataset.codebook_seed", dataset.synth.codebook_seed);
      break;
    case DatasetKind::binary:
      put_d("dataset.p", dataset.binary.p);
      put_d("dataset.phi", dataset.binary.phi);
      put_u("dataset.spurious_dims", dataset.binary.spurious_dims);
      break;
    case DatasetKind::cmnist:
      put_d("dataset.rho", dataset.cmnist_rho);
      kv.set("dataset.images", dataset.images_path);
      kv.set("dataset.labels", dataset.labels_path);
      kv.set("dataset.test_images", dataset.test_images_path);
      kv.set("dataset.test_labels", dataset.test_labels_path);
      put_u("dataset.limit", dataset.cmnist_limit);
      put_u("dataset.test_limit", dataset.cmnist_test_limit);
      break;
    case DatasetKind::container:
      kv.set("dataset.train_container", dataset.train_container);
      kv.set("dataset.test_container", dataset.test_container);
      break;
  }
  {
    std::ostringstream os;
    for (std::size_t i = 0; i < hidden.size(); ++i) os << (i ? "," : "") << hidden[i];
    kv.set("model.hidden", os.str());
  }
  kv.set("method", method_name(method));
  kv.set("mining.mode", mining_mode == MiningMode::gce ? "gce" : "early_stopped_erm");
  kv.set("sampler", sampler == SamplerMode::oversample ? "oversample" : "analytic");
  put_u("batch", batch);
  put_u("mining.iters", mining_iters);
  put_u("mining.early_iters", mining_early_iters);
  put_u("pretrain.iters", pretrain_iters);
  put_u("theta.iters", theta_iters);
  put_u("finetune.iters", finetune_iters);
  kv.set("optimizer", optimizer == nn::OptKind::adam ? "adam" : "sgd");
  put_d("lr.pretrain", lr_pretrain);
  put_d("lr.mining", lr_mining);
  put_d("lr.theta", lr_theta);
  put_d("lr.finetune", lr_finetune);
  put_d("loss.q", weights.q);
  put_d("loss.lambda_up", weights.lambda_up);
  put_d("loss.lambda_up_finetune", lambda_up_finetune);
  put_d("loss.lambda_align", weights.lambda_align);
  if (lambda_l1_auto) kv.set("loss.lambda_l1", "auto");
  else put_d("loss.lambda_l1", weights.lambda_l1);
  put_d("loss.tau", weights.tau);
  put_d("loss.tau_gumbel", weights.tau_gumbel);
  put_d("theta.init", theta_init);
  put_b("ablation.pruning", pruning);
  put_b("ablation.align", align);
  put_b("ablation.wce", wce);
  put_b("finetune.reset", reset_after_prune);
  return kv;
}

}  // namespace dcwp::pipeline
