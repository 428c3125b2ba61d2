#include "tape.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace dcwp {

Var Tape::push(Tensor value, bool requires_grad, std::function<void(Tape&)> back) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Node& Tape::node(Var v) {
  require(v.id >= 0 && v.id < static_cast<int>(nodes_.size()), ErrorCode::invalid_argument,
          "tape: invalid var id " + std::to_string(v.id));
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Tape::Node& Tape::node(Var v) const {
  require(v.id >= 0 && v.id < static_cast<int>(nodes_.size()), ErrorCode::invalid_argument,
          "tape: invalid var id " + std::to_string(v.id));
  return nodes_[static_cast<std::size_t>(v.id)];
}

Tensor& Tape::grad_buffer(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

Var Tape::leaf(Tensor value) { return push(std::move(value), true, nullptr); }

Var Tape::constant(Tensor value) { return push(std::move(value), false, nullptr); }

const Tensor& Tape::value(Var v) const { return node(v).value; }

const Tensor& Tape::grad(Var v) {
  Node& n = node(v);
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var output) {
  Node& out = node(output);
  require(out.value.numel() == 1, ErrorCode::invalid_argument,
          "backward: output is not scalar, shape " + out.value.shape_str());
  for (Node& n : nodes_) n.has_grad = false;
  grad_buffer(output.id).fill(1.0);
  for (int id = output.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.has_grad && n.requires_grad && n.back) n.back(*this);
  }
}

// ---------------------------------------------------------------------------
// primitives

Var Tape::matmul(Var a, Var b, bool trans_a, bool trans_b) {
  Tensor out = matmul_values(value(a), value(b), trans_a, trans_b);
  bool rg = wants_grad(a) || wants_grad(b);
  int self = static_cast<int>(nodes_.size());
  auto back = [a, b, trans_a, trans_b, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    if (t.wants_grad(a)) {
      Tensor da = !trans_a ? (!trans_b ? matmul_values(g, bv, false, true)
                                       : matmul_values(g, bv, false, false))
                           : (!trans_b ? matmul_values(bv, g, false, true)
                                       : matmul_values(bv, g, true, true));
      t.grad_buffer(a.id).add_inplace(da);
    }
    if (t.wants_grad(b)) {
      Tensor db = !trans_b ? (!trans_a ? matmul_values(av, g, true, false)
                                       : matmul_values(av, g, false, false))
                           : (!trans_a ? matmul_values(g, av, true, false)
                                       : matmul_values(g, av, true, true));
      t.grad_buffer(b.id).add_inplace(db);
    }
  };
  return push(std::move(out), rg, rg ? std::function<void(Tape&)>(back) : nullptr);
}

Var Tape::add(Var a, Var b) {
  require(value(a).same_shape(value(b)), ErrorCode::shape_mismatch,
          "add: " + value(a).shape_str() + " vs " + value(b).shape_str());
  Tensor out = value(a);
  out.add_inplace(value(b));
  bool rg = wants_grad(a) || wants_grad(b);
  int self = static_cast<int>(nodes_.size());
  auto back = [a, b, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    if (t.wants_grad(a)) t.grad_buffer(a.id).add_inplace(g);
    if (t.wants_grad(b)) t.grad_buffer(b.id).add_inplace(g);
  };
  return push(std::move(out), rg, rg ? std::function<void(Tape&)>(back) : nullptr);
}

Var Tape::add_rowvec(Var mat, Var vec) {
  const Tensor& m = value(mat);
  const Tensor& v = value(vec);
  require(m.rank() == 2 && v.rank() == 1 && m.cols() == v.numel(), ErrorCode::shape_mismatch,
          "add_rowvec: " + m.shape_str() + " vs " + v.shape_str());
  Tensor out = m;
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out.at(r, c) += v[c];
  bool rg = wants_grad(mat) || wants_grad(vec);
  int self = static_cast<int>(nodes_.size());
  auto back = [mat, vec, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    if (t.wants_grad(mat)) t.grad_buffer(mat.id).add_inplace(g);
    if (t.wants_grad(vec)) {
      Tensor& dv = t.grad_buffer(vec.id);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) dv[c] += g.at(r, c);
    }
  };
  return push(std::move(out), rg, rg ? std::function<void(Tape&)>(back) : nullptr);
}

Var Tape::sub(Var a, Var b) {
  require(value(a).same_shape(value(b)), ErrorCode::shape_mismatch,
          "sub: " + value(a).shape_str() + " vs " + value(b).shape_str());
  Tensor out = value(a);
  out.axpy_inplace(-1.0, value(b));
  bool rg = wants_grad(a) || wants_grad(b);
  int self = static_cast<int>(nodes_.size());
  auto back = [a, b, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    if (t.wants_grad(a)) t.grad_buffer(a.id).add_inplace(g);
    if (t.wants_grad(b)) t.grad_buffer(b.id).axpy_inplace(-1.0, g);
  };
  return push(std::move(out), rg, rg ? std::function<void(Tape&)>(back) : nullptr);
}

Var Tape::mul(Var a, Var b) {
  require(value(a).same_shape(value(b)), ErrorCode::shape_mismatch,
          "mul: " + value(a).shape_str() + " vs " + value(b).shape_str());
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= value(b)[i];
  bool rg = wants_grad(a) || wants_grad(b);
  int self = static_cast<int>(nodes_.size());
  auto back = [a, b, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    if (t.wants_grad(a)) {
      Tensor& da = t.grad_buffer(a.id);
      const Tensor& bv = t.value(b);
      for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i] * bv[i];
    }
    if (t.wants_grad(b)) {
      Tensor& db = t.grad_buffer(b.id);
      const Tensor& av = t.value(a);
      for (std::size_t i = 0; i < g.numel(); ++i) db[i] += g[i] * av[i];
    }
  };
  return push(std::move(out), rg, rg ? std::function<void(Tape&)>(back) : nullptr);
}

Var Tape::scale(Var a, double s) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= s;
  bool rg = wants_grad(a);
  int self = static_cast<int>(nodes_.size());
  auto back = [a, s, self](Tape& t) {
    t.grad_buffer(a.id).axpy_inplace(s, t.nodes_[self].grad);
  };
  return push(std::move(out), rg, rg ? std::function<void(Tape&)>(back) : nullptr);
}

Var Tape::relu(Var a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  bool rg = wants_grad(a);
  int self = static_cast<int>(nodes_.size());
  auto back = [a, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& x = t.value(a);
    Tensor& da = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.numel(); ++i)
      if (x[i] > 0.0) da[i] += g[i];
  };
  return push(std::move(out), rg, rg ? std::function<void(Tape&)>(back) : nullptr);
}

Var Tape::sigmoid(Var a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  bool rg = wants_grad(a);
  int self = static_cast<int>(nodes_.size());
  auto back = [a, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].value;
    Tensor& da = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i] * y[i] * (1.0 - y[i]);
  };
  return push(std::move(out), rg, rg ? std::function<void(Tape&)>(back) : nullptr);
}

Var Tape::exp(Var a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::exp(out[i]);
  bool rg = wants_grad(a);
  int self = static_cast<int>(nodes_.size());
  auto back = [a, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].value;
    Tensor& da = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i] * y[i];
  };
  return push(std::move(out), rg, rg ? std::function<void(Tape&)>(back) : nullptr);
}

Var Tape::log(Var a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.numel(); ++i) {
    if (out[i] <= 0.0) fail(ErrorCode::domain, "log: non-positive input");
    out[i] = std::log(out[i]);
  }
  bool rg = wants_grad(a);
  int self = static_cast<int>(nodes_.size());
  auto back = [a, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& x = t.value(a);
    Tensor& da = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i] / x[i];
  };
  return push(std::move(out), rg, rg ? std::function<void(Tape&)>(back) : nullptr);
}

Var Tape::abs(Var a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::fabs(out[i]);
  bool rg = wants_grad(a);
  int self = static_cast<int>(nodes_.size());
  auto back = [a, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& x = t.value(a);
    Tensor& da = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      if (x[i] > 0.0) da[i] += g[i];
      else if (x[i] < 0.0) da[i] -= g[i];
    }
  };
  return push(std::move(out), rg, rg ? std::function<void(Tape&)>(back) : nullptr);
}

Var Tape::sum(Var a) {
  double s = 0.0;
  for (std::size_t i = 0; i < value(a).numel(); ++i) s += value(a)[i];
  bool rg = wants_grad(a);
  int self = static_cast<int>(nodes_.size());
  auto back = [a, self](Tape& t) {
    double g = t.nodes_[self].grad[0];
    Tensor& da = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < da.numel(); ++i) da[i] += g;
  };
  return push(Tensor::scalar(s), rg, rg ? std::function<void(Tape&)>(back) : nullptr);
}

Var Tape::mean(Var a) {
  std::size_t n = value(a).numel();
  require(n > 0, ErrorCode::invalid_argument, "mean: empty tensor");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += value(a)[i];
  bool rg = wants_grad(a);
  int self = static_cast<int>(nodes_.size());
  auto back = [a, n, self](Tape& t) {
    double g = t.nodes_[self].grad[0] / static_cast<double>(n);
    Tensor& da = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < da.numel(); ++i) da[i] += g;
  };
  return push(Tensor::scalar(s / static_cast<double>(n)), rg,
              rg ? std::function<void(Tape&)>(back) : nullptr);
}

Var Tape::rowsum(Var a) {
  const Tensor& x = value(a);
  require(x.rank() == 2, ErrorCode::shape_mismatch, "rowsum: need 2-d, got " + x.shape_str());
  Tensor out({x.rows()});
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) s += x.at(r, c);
    out[r] = s;
  }
  bool rg = wants_grad(a);
  int self = static_cast<int>(nodes_.size());
  auto back = [a, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& x = t.value(a);
    Tensor& da = t.grad_buffer(a.id);
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < x.cols(); ++c) da.at(r, c) += g[r];
  };
  return push(std::move(out), rg, rg ? std::function<void(Tape&)>(back) : nullptr);
}

Var Tape::dot(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require(av.rank() == 1 && bv.rank() == 1 && av.numel() == bv.numel(), ErrorCode::shape_mismatch,
          "dot: " + av.shape_str() + " vs " + bv.shape_str());
  double s = 0.0;
  for (std::size_t i = 0; i < av.numel(); ++i) s += av[i] * bv[i];
  bool rg = wants_grad(a) || wants_grad(b);
  int self = static_cast<int>(nodes_.size());
  auto back = [a, b, self](Tape& t) {
    double g = t.nodes_[self].grad[0];
    if (t.wants_grad(a)) t.grad_buffer(a.id).axpy_inplace(g, t.value(b));
    if (t.wants_grad(b)) t.grad_buffer(b.id).axpy_inplace(g, t.value(a));
  };
  return push(Tensor::scalar(s), rg, rg ? std::function<void(Tape&)>(back) : nullptr);
}

namespace {
constexpr double kDeadRow = -1.0;  // sentinel in the saved norms vector
}

Var Tape::l2_normalize_rows(Var a) {
  const Tensor& x = value(a);
  require(x.rank() == 2, ErrorCode::shape_mismatch,
          "l2_normalize_rows: need 2-d, got " + x.shape_str());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) s += x.at(r, c) * x.at(r, c);
    require(s > 0.0, ErrorCode::domain, "l2_normalize_rows: zero row " + std::to_string(r));
  }
  return l2_normalize_rows_safe(a);
}

Var Tape::l2_normalize_rows_safe(Var a) {
  const Tensor& x = value(a);
  require(x.rank() == 2, ErrorCode::shape_mismatch,
          "l2_normalize_rows: need 2-d, got " + x.shape_str());
  Tensor out = x;
  std::vector<double> norms(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) s += x.at(r, c) * x.at(r, c);
    double nrm = std::sqrt(s);
    if (nrm == 0.0) {
      norms[r] = kDeadRow;
      continue;
    }
    norms[r] = nrm;
    for (std::size_t c = 0; c < x.cols(); ++c) out.at(r, c) /= nrm;
  }
  bool rg = wants_grad(a);
  int self = static_cast<int>(nodes_.size());
  auto back = [a, self, norms](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].value;
    Tensor& da = t.grad_buffer(a.id);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      if (norms[r] == kDeadRow) continue;  // subgradient 0 at the dead point
      double gy = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) gy += g.at(r, c) * y.at(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c)
        da.at(r, c) += (g.at(r, c) - y.at(r, c) * gy) / norms[r];
    }
  };
  return push(std::move(out), rg, rg ? std::function<void(Tape&)>(back) : nullptr);
}

Var Tape::log_softmax_rows(Var a) {
  const Tensor& x = value(a);
  require(x.rank() == 2, ErrorCode::shape_mismatch,
          "log_softmax_rows: need 2-d, got " + x.shape_str());
  Tensor out = x;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mx = x.at(r, 0);
    for (std::size_t c = 1; c < x.cols(); ++c) mx = std::max(mx, x.at(r, c));
    double lse = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) lse += std::exp(x.at(r, c) - mx);
    lse = mx + std::log(lse);
    for (std::size_t c = 0; c < x.cols(); ++c) out.at(r, c) -= lse;
  }
  bool rg = wants_grad(a);
  int self = static_cast<int>(nodes_.size());
  auto back = [a, self](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].value;  // log-probabilities
    Tensor& da = t.grad_buffer(a.id);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double gs = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) gs += g.at(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c)
        da.at(r, c) += g.at(r, c) - std::exp(y.at(r, c)) * gs;
    }
  };
  return push(std::move(out), rg, rg ? std::function<void(Tape&)>(back) : nullptr);
}

Var Tape::gather_rows(Var a, std::vector<int> rows) {
  const Tensor& x = value(a);
  require(x.rank() == 2, ErrorCode::shape_mismatch, "gather_rows: need 2-d, got " + x.shape_str());
  int limit = static_cast<int>(x.rows());
  for (int r : rows)
    if (r < 0 || r >= limit)
      fail(ErrorCode::invalid_argument,
           "gather_rows: row index " + std::to_string(r) + " out of range");
  Tensor out({rows.size(), x.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < x.cols(); ++c)
      out.at(i, c) = x.at(static_cast<std::size_t>(rows[i]), c);
  bool rg = wants_grad(a);
  int self = static_cast<int>(nodes_.size());
  auto back = [a, self, rows](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& da = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t c = 0; c < g.cols(); ++c)
        da.at(static_cast<std::size_t>(rows[i]), c) += g.at(i, c);
  };
  return push(std::move(out), rg, rg ? std::function<void(Tape&)>(back) : nullptr);
}

Var Tape::take_per_row(Var a, std::vector<int> col_per_row) {
  const Tensor& x = value(a);
  require(x.rank() == 2, ErrorCode::shape_mismatch, "take_per_row: need 2-d, got " + x.shape_str());
  require(col_per_row.size() == x.rows(), ErrorCode::shape_mismatch,
          "take_per_row: index count " + std::to_string(col_per_row.size()) + " vs rows " +
              std::to_string(x.rows()));
  int col_limit = static_cast<int>(x.cols());
  for (int c : col_per_row)
    if (c < 0 || c >= col_limit)
      fail(ErrorCode::invalid_argument,
           "take_per_row: column index " + std::to_string(c) + " out of range");
  Tensor out({x.rows()});
  for (std::size_t r = 0; r < x.rows(); ++r)
    out[r] = x.at(r, static_cast<std::size_t>(col_per_row[r]));
  bool rg = wants_grad(a);
  int self = static_cast<int>(nodes_.size());
  auto back = [a, self, col_per_row](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& da = t.grad_buffer(a.id);
    for (std::size_t r = 0; r < g.numel(); ++r)
      da.at(r, static_cast<std::size_t>(col_per_row[r])) += g[r];
  };
  return push(std::move(out), rg, rg ? std::function<void(Tape&)>(back) : nullptr);
}

Var Tape::binary_concrete(Var theta, const Tensor& logistic_noise, double tau) {
  const Tensor& th = value(theta);
  require(tau > 0.0, ErrorCode::invalid_argument, "binary_concrete: tau must be positive");
  require(th.same_shape(logistic_noise), ErrorCode::shape_mismatch,
          "binary_concrete: " + th.shape_str() + " vs noise " + logistic_noise.shape_str());
  Tensor relaxed = th;
  Tensor hard(th.shape());
  for (std::size_t i = 0; i < th.numel(); ++i) {
    double r = 1.0 / (1.0 + std::exp(-(th[i] + logistic_noise[i]) / tau));
    relaxed[i] = r;
    hard[i] = r > 0.5 ? 1.0 : 0.0;
  }
  bool rg = wants_grad(theta);
  int self = static_cast<int>(nodes_.size());
  auto back = [theta, self, relaxed, tau](Tape& t) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& da = t.grad_buffer(theta.id);
    for (std::size_t i = 0; i < g.numel(); ++i)
      da[i] += g[i] * relaxed[i] * (1.0 - relaxed[i]) / tau;
  };
  return push(std::move(hard), rg, rg ? std::function<void(Tape&)>(back) : nullptr);
}

Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                              double h) {
  require(h > 0.0, ErrorCode::invalid_argument, "finite_difference_grad: h must be positive");
  Tensor g(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    double orig = probe[i];
    probe[i] = orig + h;
    double fp = f(probe);
    probe[i] = orig - h;
    double fm = f(probe);
    probe[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace dcwp
