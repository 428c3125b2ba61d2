#include "theory.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dcwp::theory {

void PruneProbabilities::validate() const {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  require(in_unit(pi_inv), ErrorCode::invalid_argument, "prune probabilities: pi_inv not in [0,1]");
  for (double v : pi_sp)
    require(in_unit(v), ErrorCode::invalid_argument, "prune probabilities: pi_sp not in [0,1]");
}

std::vector<double> LinearWeights::alphas() const {
  require(w_inv != 0.0, ErrorCode::domain, "weight ratios: w_inv is zero");
  std::vector<double> a(w_sp.size());
  for (std::size_t i = 0; i < w_sp.size(); ++i) a[i] = w_sp[i] / w_inv;
  return a;
}

namespace {

// one draw of Z_sp,i conditioned on y, using a single uniform
inline double draw_spurious(double y, double p, double phi, Rng& rng) {
  double u = uniform01(rng);
  if (u < phi) return -y;
  if (u < phi + (1.0 - phi) * p) return y;
  return -y;
}

}  // namespace

McEstimate mc_loss(const PruneProbabilities& pi, const LinearWeights& w,
                   const data::BinaryEnvSpec& env, std::size_t n, Rng& rng) {
  pi.validate();
  env.validate();
  require(n >= 1, ErrorCode::invalid_argument, "mc_loss: n must be >= 1");
  require(pi.pi_sp.size() == w.w_sp.size() && w.w_sp.size() == env.spurious_dims,
          ErrorCode::shape_mismatch, "mc_loss: dimension mismatch");
  std::size_t d = env.spurious_dims;
  double total = 0.0, total_sq = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    double y = bernoulli(rng, 0.5) ? 1.0 : -1.0;
    double o = 0.0;
    if (bernoulli(rng, pi.pi_inv)) o += w.w_inv * y;
    for (std::size_t i = 0; i < d; ++i) {
      double z = draw_spurious(y, env.p, env.phi, rng);
      if (bernoulli(rng, pi.pi_sp[i])) o += w.w_sp[i] * z;
    }
    double loss = o == 0.0 ? 0.5 : (y * o > 0.0 ? 0.0 : 1.0);
    total += loss;
    total_sq += loss * loss;
  }
  double mean = total / static_cast<double>(n);
  double var = std::max(0.0, total_sq / static_cast<double>(n) - mean * mean);
  return {mean, std::sqrt(var / static_cast<double>(n))};
}

double exact_loss(const PruneProbabilities& pi, const LinearWeights& w,
                  const data::BinaryEnvSpec& env) {
  pi.validate();
  env.validate();
  std::size_t d = env.spurious_dims;
  require(pi.pi_sp.size() == w.w_sp.size() && w.w_sp.size() == d, ErrorCode::shape_mismatch,
          "exact_loss: dimension mismatch");
  require(d <= 20, ErrorCode::invalid_argument, "exact_loss: enumeration limited to D <= 20");
  bool deterministic_mask = (pi.pi_inv == 0.0 || pi.pi_inv == 1.0);
  for (double v : pi.pi_sp) deterministic_mask = deterministic_mask && (v == 0.0 || v == 1.0);
  require(deterministic_mask || d <= 10, ErrorCode::invalid_argument,
          "exact_loss: fractional keep-probabilities limited to D <= 10");

  // condition on y = +1 (the loss is symmetric in y)
  double p_same = (1.0 - env.phi) * env.p;  // P(Z_sp,i = y | y)
  double total = 0.0;
  for (std::uint64_t pattern = 0; pattern < (1ULL << d); ++pattern) {
    double prob = 1.0;
    for (std::size_t i = 0; i < d; ++i)
      prob *= (pattern >> i) & 1 ? p_same : 1.0 - p_same;
    if (deterministic_mask) {
      double o = pi.pi_inv == 1.0 ? w.w_inv : 0.0;
      for (std::size_t i = 0; i < d; ++i)
        if (pi.pi_sp[i] == 1.0) o += w.w_sp[i] * (((pattern >> i) & 1) ? 1.0 : -1.0);
      total += prob * (o == 0.0 ? 0.5 : (o > 0.0 ? 0.0 : 1.0));
      continue;
    }
    for (std::uint64_t mask = 0; mask < (1ULL << (d + 1)); ++mask) {
      double mask_prob = (mask & 1) ? pi.pi_inv : 1.0 - pi.pi_inv;
      double o = (mask & 1) ? w.w_inv : 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        bool kept = (mask >> (i + 1)) & 1;
        mask_prob *= kept ? pi.pi_sp[i] : 1.0 - pi.pi_sp[i];
        if (kept) o += w.w_sp[i] * (((pattern >> i) & 1) ? 1.0 : -1.0);
      }
      if (mask_prob == 0.0) continue;
      total += prob * mask_prob * (o == 0.0 ? 0.5 : (o > 0.0 ? 0.0 : 1.0));
    }
  }
  return total;
}

namespace {

double hoeffding_bound(const PruneProbabilities& pi, const std::vector<double>& alphas, double c) {
  pi.validate();
  require(pi.pi_sp.size() == alphas.size(), ErrorCode::shape_mismatch,
          "bound: alpha/pi dimension mismatch");
  double numerator = pi.pi_inv;
  double denom = 1.0;
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    numerator += c * alphas[i] * pi.pi_sp[i];
    denom += 4.0 * alphas[i] * alphas[i];
  }
  return 2.0 * std::exp(-2.0 * numerator * numerator / denom);
}

}  // namespace

double training_bound(const PruneProbabilities& pi, const std::vector<double>& alphas, double p) {
  require(p > 0.5 && p <= 1.0, ErrorCode::domain, "training_bound: p must lie in (0.5,1]");
  return hoeffding_bound(pi, alphas, 2.0 * p - 1.0);
}

double test_bound(const PruneProbabilities& pi, const std::vector<double>& alphas) {
  return hoeffding_bound(pi, alphas, 0.0);
}

double mixture_bound(const PruneProbabilities& pi, const std::vector<double>& alphas, double p,
                     double phi) {
  require(p > 0.5 && p <= 1.0, ErrorCode::domain, "mixture_bound: p must lie in (0.5,1]");
  require(phi >= 0.0 && phi <= 1.0 - 1.0 / (2.0 * p) + 1e-15, ErrorCode::domain,
          "mixture_bound: phi must lie in [0, 1 - 1/(2p)]");
  return hoeffding_bound(pi, alphas, 2.0 * p * (1.0 - phi) - 1.0);
}

// ---------------------------------------------------------------------------
// Gradient flow

double flow_fixed_point(double p) {
  require(p >= 0.5 && p < 1.0, ErrorCode::domain, "flow: p must lie in [0.5, 1)");
  return 0.5 * std::log(p / (1.0 - p));
}

namespace {

struct FlowDeriv {
  double d_inv;
  std::vector<double> d_sp;
};

void flow_rhs(double p, const FlowState& s, FlowDeriv& out) {
  double prod = 1.0;
  std::size_t d = s.w_sp.size();
  out.d_sp.resize(d);
  std::vector<double>& factors = out.d_sp;  // reuse storage for the factors first
  for (std::size_t i = 0; i < d; ++i) {
    double f = p * std::exp(-s.w_sp[i]) + (1.0 - p) * std::exp(s.w_sp[i]);
    factors[i] = f;
    prod *= f;
  }
  double damp = std::exp(-s.w_inv);
  out.d_inv = damp * prod;
  for (std::size_t i = 0; i < d; ++i) {
    double diff = p * std::exp(-s.w_sp[i]) - (1.0 - p) * std::exp(s.w_sp[i]);
    factors[i] = damp * diff * (prod / factors[i]);
  }
}

void rk4_step(double p, FlowState& s, double h) {
  std::size_t d = s.w_sp.size();
  FlowDeriv k1, k2, k3, k4;
  FlowState tmp = s;
  flow_rhs(p, s, k1);
  tmp.w_inv = s.w_inv + 0.5 * h * k1.d_inv;
  for (std::size_t i = 0; i < d; ++i) tmp.w_sp[i] = s.w_sp[i] + 0.5 * h * k1.d_sp[i];
  flow_rhs(p, tmp, k2);
  tmp.w_inv = s.w_inv + 0.5 * h * k2.d_inv;
  for (std::size_t i = 0; i < d; ++i) tmp.w_sp[i] = s.w_sp[i] + 0.5 * h * k2.d_sp[i];
  flow_rhs(p, tmp, k3);
  tmp.w_inv = s.w_inv + h * k3.d_inv;
  for (std::size_t i = 0; i < d; ++i) tmp.w_sp[i] = s.w_sp[i] + h * k3.d_sp[i];
  flow_rhs(p, tmp, k4);
  s.w_inv += h / 6.0 * (k1.d_inv + 2.0 * k2.d_inv + 2.0 * k3.d_inv + k4.d_inv);
  for (std::size_t i = 0; i < d; ++i)
    s.w_sp[i] += h / 6.0 * (k1.d_sp[i] + 2.0 * k2.d_sp[i] + 2.0 * k3.d_sp[i] + k4.d_sp[i]);
  s.t += h;
  require(std::isfinite(s.w_inv), ErrorCode::numeric,
          "flow: non-finite state at t = " + std::to_string(s.t));
  for (double v : s.w_sp)
    require(std::isfinite(v), ErrorCode::numeric,
            "flow: non-finite state at t = " + std::to_string(s.t));
}

void validate_flow_init(double p, const FlowState& init) {
  require(p >= 0.5 && p < 1.0, ErrorCode::domain, "flow: p must lie in [0.5, 1)");
  require(init.w_inv >= 0.0, ErrorCode::invalid_argument, "flow: w_inv(0) must be >= 0");
  double wstar = flow_fixed_point(p);
  for (double v : init.w_sp)
    require(v >= 0.0 && v <= wstar + 1e-12, ErrorCode::invalid_argument,
            "flow: w_sp(0) must lie in [0, 0.5 log(p/(1-p))]");
  require(!init.w_sp.empty(), ErrorCode::invalid_argument, "flow: need at least one spurious dim");
}

double next_step(double t, double dt) { return t < 1.0 ? dt : dt * t; }

}  // namespace

FlowTrajectory gradient_flow(double p, const FlowState& init, double horizon, double dt,
                             const std::vector<double>& sample_times) {
  validate_flow_init(p, init);
  require(dt > 0.0, ErrorCode::invalid_argument, "flow: dt must be positive");
  require(horizon >= 0.0, ErrorCode::invalid_argument, "flow: horizon must be >= 0");
  for (std::size_t i = 0; i + 1 < sample_times.size(); ++i)
    require(sample_times[i] <= sample_times[i + 1], ErrorCode::invalid_argument,
            "flow: sample times must be ascending");

  FlowTrajectory out;
  FlowState s = init;
  s.t = 0.0;
  std::size_t next_sample = 0;
  auto capture_due = [&]() {
    while (next_sample < sample_times.size() && s.t >= sample_times[next_sample] - 1e-12) {
      out.samples.push_back(s);
      ++next_sample;
    }
  };
  capture_due();
  while (s.t < horizon - 1e-12) {
    double h = std::min(next_step(s.t, dt), horizon - s.t);
    if (next_sample < sample_times.size())
      h = std::min(h, std::max(sample_times[next_sample] - s.t, dt * 1e-6));
    rk4_step(p, s, h);
    capture_due();
  }
  out.terminal = s;
  return out;
}

FlowTrajectory gradient_flow_until(double p, const FlowState& init, double target_dev, double dt,
                                   double max_horizon, std::size_t sample_count) {
  validate_flow_init(p, init);
  require(target_dev > 0.0 && dt > 0.0 && max_horizon > 0.0, ErrorCode::invalid_argument,
          "flow: positive target, dt and horizon required");
  double wstar = flow_fixed_point(p);

  // first pass: find the convergence time with the plain integrator
  FlowState s = init;
  s.t = 0.0;
  double reached = max_horizon;
  bool converged = false;
  while (s.t < max_horizon) {
    double dev = 0.0;
    for (double v : s.w_sp) dev = std::max(dev, std::fabs(v - wstar));
    if (dev <= target_dev) {
      reached = std::max(s.t, dt);
      converged = true;
      break;
    }
    rk4_step(p, s, next_step(s.t, dt));
  }
  if (!converged) reached = max_horizon;

  // second pass: sample the trajectory at log-spaced times up to `reached`
  std::vector<double> times;
  times.reserve(sample_count);
  double t0 = std::min(dt, reached / 2.0);
  for (std::size_t i = 0; i < sample_count; ++i) {
    double frac = static_cast<double>(i) / static_cast<double>(sample_count - 1);
    times.push_back(t0 * std::pow(reached / t0, frac));
  }
  return gradient_flow(p, init, reached, dt, times);
}

Envelopes analytic_envelopes(double p, const FlowState& init, double t) {
  validate_flow_init(p, init);
  require(t >= 0.0, ErrorCode::invalid_argument, "envelopes: t must be >= 0");
  std::size_t d = init.w_sp.size();
  double dd = static_cast<double>(d);
  double root_pq = std::sqrt(p * (1.0 - p));

  Envelopes env;
  env.w_inv_lower = std::log(std::exp(init.w_inv) + std::pow(4.0 * p * (1.0 - p), dd / 2.0) * t);
  double prod = 1.0;
  for (double w0 : init.w_sp) prod *= p * std::exp(-w0) + root_pq;
  env.w_inv_upper = std::log(std::exp(init.w_inv) + prod * t);

  // the damping constant uses any upper bound M >= sup_{s<=t} w_inv(s)
  double m = env.w_inv_upper;
  double w0_min = *std::min_element(init.w_sp.begin(), init.w_sp.end());
  double atanh_arg = std::sqrt((1.0 - p) / p) * std::exp(w0_min);
  double gain = std::exp(-m) * std::pow(2.0, dd - 1.0) * std::pow(p * (1.0 - p), dd / 2.0) * t;
  double wstar = flow_fixed_point(p);
  if (atanh_arg >= 1.0) {
    env.w_sp_lower = wstar;  // initialization already at the fixed point
  } else {
    env.w_sp_lower = wstar + std::log(std::tanh(std::atanh(atanh_arg) + gain));
  }
  env.alpha_lower = env.w_inv_upper > 0.0 ? env.w_sp_lower / env.w_inv_upper
                                          : env.w_sp_lower > 0.0
                                                ? std::numeric_limits<double>::infinity()
                                                : 0.0;
  return env;
}

// ---------------------------------------------------------------------------
// Finite-time training experiments

LinearWeights train_linear_classifier(const data::BinaryEnvSpec& env,
                                      const LinearTrainOptions& opts, Rng& rng) {
  env.validate();
  require(opts.train_n >= opts.batch && opts.batch >= 1, ErrorCode::invalid_argument,
          "linear training: need train_n >= batch >= 1");
  data::BiasedDataset ds = data::sample_binary_env(env, opts.train_n, rng);
  std::size_t dim = env.spurious_dims + 1;
  std::vector<double> w(dim, 0.0);
  std::size_t batches = opts.train_n / opts.batch;
  std::vector<double> grad(dim);
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    for (std::size_t b = 0; b < batches; ++b) {
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = 0; k < opts.batch; ++k) {
        std::size_t s = b * opts.batch + k;
        double margin = 0.0;
        for (std::size_t j = 0; j < dim; ++j) margin += w[j] * ds.inputs.at(s, j);
        double prob = 1.0 / (1.0 + std::exp(-margin));
        double target = ds.labels[s] == 1 ? 1.0 : 0.0;  // labels mapped to {0,1}
        double delta = prob - target;
        for (std::size_t j = 0; j < dim; ++j) grad[j] += delta * ds.inputs.at(s, j);
      }
      for (std::size_t j = 0; j < dim; ++j)
        w[j] -= opts.lr * grad[j] / static_cast<double>(opts.batch);
    }
  }
  LinearWeights out;
  out.w_inv = w[0];
  out.w_sp.assign(w.begin() + 1, w.end());
  return out;
}

double linear_accuracy(const LinearWeights& w, const data::BinaryEnvSpec& env, std::size_t n,
                       Rng& rng) {
  data::BiasedDataset ds = data::sample_binary_env(env, n, rng);
  std::size_t dim = env.spurious_dims + 1;
  require(w.w_sp.size() + 1 == dim, ErrorCode::shape_mismatch, "linear_accuracy: dim mismatch");
  std::size_t correct = 0;
  for (std::size_t s = 0; s < n; ++s) {
    double o = w.w_inv * ds.inputs.at(s, 0);
    for (std::size_t i = 0; i < w.w_sp.size(); ++i) o += w.w_sp[i] * ds.inputs.at(s, 1 + i);
    double y = ds.inputs.at(s, 0);
    if (o * y > 0.0) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

std::vector<WeightRatioPoint> weight_ratio_experiment(const std::vector<double>& p_grid,
                                                      std::size_t spurious_dims,
                                                      const LinearTrainOptions& opts,
                                                      std::size_t seeds, std::uint64_t base_seed) {
  require(!p_grid.empty() && seeds >= 1, ErrorCode::invalid_argument,
          "weight ratio: empty grid or no seeds");
  for (double p : p_grid)
    require(p > 0.5 && p < 1.0, ErrorCode::invalid_argument,
            "weight ratio: p grid must lie in (0.5, 1)");
  std::vector<WeightRatioPoint> out;
  for (double p : p_grid) {
    data::BinaryEnvSpec env{p, spurious_dims, 0.0};
    data::BinaryEnvSpec test_env{0.5, spurious_dims, 0.0};
    double sum_alpha = 0.0, sum_alpha_sq = 0.0, sum_acc = 0.0;
    for (std::size_t seed = 0; seed < seeds; ++seed) {
      Rng rng(derive_seed(base_seed, static_cast<std::uint64_t>(seed * 1000003) +
                                         static_cast<std::uint64_t>(p * 1e6)));
      LinearWeights w = train_linear_classifier(env, opts, rng);
      double mean_sp = 0.0;
      for (double v : w.w_sp) mean_sp += v;
      mean_sp /= static_cast<double>(w.w_sp.size());
      double alpha = mean_sp / w.w_inv;
      sum_alpha += alpha;
      sum_alpha_sq += alpha * alpha;
      sum_acc += linear_accuracy(w, test_env, 20000, rng);
    }
    WeightRatioPoint pt;
    pt.p = p;
    pt.mean_alpha = sum_alpha / static_cast<double>(seeds);
    double var = std::max(0.0, sum_alpha_sq / static_cast<double>(seeds) -
                                   pt.mean_alpha * pt.mean_alpha);
    pt.se = seeds > 1 ? std::sqrt(var / static_cast<double>(seeds - 1)) : 0.0;
    pt.test_accuracy = sum_acc / static_cast<double>(seeds);
    out.push_back(pt);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Misalignment

Tensor semi_orthogonal(std::size_t q, std::size_t d, Rng& rng) {
  require(q >= d, ErrorCode::invalid_argument,
          "semi_orthogonal: need Q >= d for orthonormal columns");
  Tensor w({q, d});
  for (std::size_t i = 0; i < w.numel(); ++i) w[i] = normal01(rng);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t prev = 0; prev < c; ++prev) {
      double proj = 0.0;
      for (std::size_t r = 0; r < q; ++r) proj += w.at(r, c) * w.at(r, prev);
      for (std::size_t r = 0; r < q; ++r) w.at(r, c) -= proj * w.at(r, prev);
    }
    double nrm = 0.0;
    for (std::size_t r = 0; r < q; ++r) nrm += w.at(r, c) * w.at(r, c);
    nrm = std::sqrt(nrm);
    require(nrm > 1e-12, ErrorCode::numeric, "semi_orthogonal: degenerate column");
    for (std::size_t r = 0; r < q; ++r) w.at(r, c) /= nrm;
  }
  return w;
}

MisalignmentResult misalignment_experiment(std::size_t spurious_dims, double p, std::size_t q,
                                           std::size_t n_pairs, Rng& rng) {
  require(q >= spurious_dims + 1, ErrorCode::invalid_argument,
          "misalignment: semi-orthogonality requires Q >= D+1");
  require(n_pairs >= 2, ErrorCode::invalid_argument, "misalignment: need at least 2 pairs");
  std::size_t dim = spurious_dims + 1;
  Tensor w = semi_orthogonal(q, dim, rng);
  data::BinaryEnvSpec biased{p, spurious_dims, 0.0};
  data::BinaryEnvSpec test_env{0.5, spurious_dims, 0.0};

  auto draw_sample = [&](const data::BinaryEnvSpec& env, double y, std::vector<double>& x) {
    x[0] = y;
    for (std::size_t i = 0; i < spurious_dims; ++i) x[1 + i] = draw_spurious(y, env.p, env.phi, rng);
  };
  auto embed = [&](const std::vector<double>& x, std::vector<double>& h) {
    for (std::size_t r = 0; r < q; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < dim; ++c) s += w.at(r, c) * x[c];
      h[r] = s;
    }
  };
  auto cosine = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t r = 0; r < q; ++r) {
      ab += a[r] * b[r];
      aa += a[r] * a[r];
      bb += b[r] * b[r];
    }
    return ab / std::sqrt(aa * bb);
  };

  std::vector<double> x(dim), hb1(q), hb2(q), hd(q);
  double sum_cross = 0.0, sumsq_cross = 0.0, sum_within = 0.0, sumsq_within = 0.0;
  for (std::size_t k = 0; k < n_pairs; ++k) {
    double y = bernoulli(rng, 0.5) ? 1.0 : -1.0;
    draw_sample(biased, y, x);
    embed(x, hb1);
    draw_sample(biased, y, x);
    embed(x, hb2);
    draw_sample(test_env, y, x);
    embed(x, hd);
    double cross = cosine(hb1, hd);
    double within = cosine(hb1, hb2);
    sum_cross += cross;
    sumsq_cross += cross * cross;
    sum_within += within;
    sumsq_within += within * within;
  }
  double n = static_cast<double>(n_pairs);
  MisalignmentResult res;
  res.cross_env_mean = sum_cross / n;
  res.within_biased_mean = sum_within / n;
  double var_cross = std::max(0.0, sumsq_cross / n - res.cross_env_mean * res.cross_env_mean);
  double var_within =
      std::max(0.0, sumsq_within / n - res.within_biased_mean * res.within_biased_mean);
  res.cross_env_se = std::sqrt(var_cross / (n - 1.0));
  res.within_biased_se = std::sqrt(var_within / (n - 1.0));
  return res;
}

// ---------------------------------------------------------------------------
// Bound grid

std::vector<BoundsGridRow> run_bounds_grid(const BoundsGridSpec& spec) {
  require(!spec.p_values.empty() && !spec.pi_values.empty(), ErrorCode::invalid_argument,
          "bounds grid: empty grid");
  std::vector<BoundsGridRow> rows;
  for (double p : spec.p_values) {
    data::BinaryEnvSpec env{p, spec.spurious_dims, 0.0};
    Rng train_rng(derive_seed(spec.seed, static_cast<std::uint64_t>(p * 1e9)));
    LinearWeights w = train_linear_classifier(env, spec.pretrain, train_rng);
    std::vector<double> alphas = w.alphas();
    data::BinaryEnvSpec mc_env{p, spec.spurious_dims, spec.phi};
    for (double pi_inv : spec.pi_values) {
      for (double pi_sp : spec.pi_values) {
        PruneProbabilities pi;
        pi.pi_inv = pi_inv;
        pi.pi_sp.assign(spec.spurious_dims, pi_sp);
        Rng mc_rng(derive_seed(spec.seed, static_cast<std::uint64_t>(p * 1e6) +
                                              static_cast<std::uint64_t>(pi_inv * 1e4) +
                                              static_cast<std::uint64_t>(pi_sp * 100) + 7));
        McEstimate mc = mc_loss(pi, w, mc_env, spec.mc_samples, mc_rng);
        BoundsGridRow row;
        row.p = p;
        row.phi = spec.phi;
        row.pi_inv = pi_inv;
        row.pi_sp = pi_sp;
        row.mc = mc.value;
        row.se = mc.se;
        row.train_bound = training_bound(pi, alphas, p);
        row.test_bound = test_bound(pi, alphas);
        // at phi = 0 the mixture bound coincides with the training bound, so
        // this is always the bound matching the sampled environment
        row.mixture_bound = mixture_bound(pi, alphas, p, spec.phi);
        row.violation = row.mc > row.mixture_bound + 3.0 * row.se;
        rows.push_back(row);
      }
    }
  }
  return rows;
}

}  // namespace dcwp::theory
