#include "depthforensics/autograd.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "depthforensics/error.hpp"
#include "depthforensics/params.hpp"

namespace dfx::ag {

namespace {

// C = alpha * op(A) op(B) + beta * C, row-major. op(A) is m x k, op(B) is k x n.
void gemm(bool ta, bool tb, int m, int n, int k, const double* a, const double* b, double beta,
          double* c) {
  if (m == 0 || n == 0 || k == 0) return;
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k,
              1.0, a, ta ? m : k, b, tb ? k : n, beta, c, n);
}

void check_same_shape(const Tape& t, Var a, Var b, const char* op) {
  if (t.rows(a) != t.rows(b) || t.cols(a) != t.cols(b))
    throw Error(ErrorCode::InvalidArgument, std::string(op) + ": shape mismatch (" +
                                                std::to_string(t.rows(a)) + "x" + std::to_string(t.cols(a)) +
                                                " vs " + std::to_string(t.rows(b)) + "x" +
                                                std::to_string(t.cols(b)) + ")");
}

}  // namespace

// ---- tape ---------------------------------------------------------------

Var Tape::push(int rows, int cols, std::vector<double> value, bool needs_grad, BackwardFn fn) {
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(int rows, int cols, std::vector<double> values) {
  require(values.size() == static_cast<std::size_t>(rows) * cols, "constant: value count does not match shape");
  return push(rows, cols, std::move(values), false, nullptr);
}

Var Tape::leaf(int rows, int cols, std::vector<double> values) {
  require(values.size() == static_cast<std::size_t>(rows) * cols, "leaf: value count does not match shape");
  return push(rows, cols, std::move(values), true, [](Tape&) {});
}

Var Tape::param(const ParamStore& store, int param_id) {
  if (auto it = bound_params_.find(param_id); it != bound_params_.end()) return it->second;
  const Param& p = store.at(param_id);
  Var v = leaf(p.rows, p.cols, p.value);
  bound_params_.emplace(param_id, v);
  return v;
}

double Tape::scalar(Var v) const {
  require(nodes_[v.id].value.size() == 1, "scalar: node is not 1x1");
  return nodes_[v.id].value[0];
}

std::vector<double>& Tape::mutable_grad(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Tape::backward(Var root) {
  require(nodes_[root.id].value.size() == 1, "backward: root must be a scalar");
  for (auto& n : nodes_) n.grad.clear();
  mutable_grad(root)[0] = 1.0;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty() || !n.backward) continue;
    // Closures only touch grads of earlier nodes; nodes_ never reallocates here.
    n.backward(*this);
  }
}

void Tape::accumulate_param_grads(std::vector<std::vector<double>>& out) const {
  for (const auto& [pid, v] : bound_params_) {
    const auto& g = nodes_[v.id].grad;
    if (g.empty()) continue;
    auto& dst = out.at(pid);
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  }
}

// ---- linear algebra ------------------------------------------------------

Var matmul(Tape& t, Var a, Var b) {
  const int m = t.rows(a), k = t.cols(a), n = t.cols(b);
  require(t.rows(b) == k, "matmul: inner dimensions differ (" + std::to_string(k) + " vs " +
                              std::to_string(t.rows(b)) + ")");
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  gemm(false, false, m, n, k, t.val(a).data(), t.val(b).data(), 0.0, out.data());
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  Var o{static_cast<int>(t.node_count())};
  return t.push(m, n, std::move(out), ng, [a, b, o, m, n, k](Tape& t) {
    const double* g = t.grad_vec(o).data();
    if (t.needs_grad(a)) gemm(false, true, m, k, n, g, t.val(b).data(), 1.0, t.mutable_grad(a).data());
    if (t.needs_grad(b)) gemm(true, false, k, n, m, t.val(a).data(), g, 1.0, t.mutable_grad(b).data());
  });
}

Var matmul_nt(Tape& t, Var a, Var b) {
  const int m = t.rows(a), k = t.cols(a), n = t.rows(b);
  require(t.cols(b) == k, "matmul_nt: inner dimensions differ");
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  gemm(false, true, m, n, k, t.val(a).data(), t.val(b).data(), 0.0, out.data());
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  Var o{static_cast<int>(t.node_count())};
  return t.push(m, n, std::move(out), ng, [a, b, o, m, n, k](Tape& t) {
    const double* g = t.grad_vec(o).data();
    if (t.needs_grad(a)) gemm(false, false, m, k, n, g, t.val(b).data(), 1.0, t.mutable_grad(a).data());
    if (t.needs_grad(b)) gemm(true, false, n, k, m, g, t.val(a).data(), 1.0, t.mutable_grad(b).data());
  });
}

Var transpose(Tape& t, Var a) {
  const int m = t.rows(a), n = t.cols(a);
  const auto& x = t.val(a);
  std::vector<double> out(x.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(j) * m + i] = x[static_cast<std::size_t>(i) * n + j];
  Var o{static_cast<int>(t.node_count())};
  return t.push(n, m, std::move(out), t.needs_grad(a), [a, o, m, n](Tape& t) {
    const auto& g = t.grad_vec(o);
    auto& ga = t.mutable_grad(a);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) ga[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(j) * m + i];
  });
}

// ---- elementwise ---------------------------------------------------------

Var add(Tape& t, Var a, Var b) {
  check_same_shape(t, a, b, "add");
  std::vector<double> out = t.val(a);
  const auto& y = t.val(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  Var o{static_cast<int>(t.node_count())};
  return t.push(t.rows(a), t.cols(a), std::move(out), t.needs_grad(a) || t.needs_grad(b), [a, b, o](Tape& t) {
    const auto& g = t.grad_vec(o);
    for (Var v : {a, b}) {
      if (!t.needs_grad(v)) continue;
      auto& gv = t.mutable_grad(v);
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    }
  });
}

Var sub(Tape& t, Var a, Var b) {
  check_same_shape(t, a, b, "sub");
  std::vector<double> out = t.val(a);
  const auto& y = t.val(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
  Var o{static_cast<int>(t.node_count())};
  return t.push(t.rows(a), t.cols(a), std::move(out), t.needs_grad(a) || t.needs_grad(b), [a, b, o](Tape& t) {
    const auto& g = t.grad_vec(o);
    if (t.needs_grad(a)) {
      auto& ga = t.mutable_grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.needs_grad(b)) {
      auto& gb = t.mutable_grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Tape& t, Var a, Var b) {
  check_same_shape(t, a, b, "mul");
  std::vector<double> out = t.val(a);
  const auto& y = t.val(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  Var o{static_cast<int>(t.node_count())};
  return t.push(t.rows(a), t.cols(a), std::move(out), t.needs_grad(a) || t.needs_grad(b), [a, b, o](Tape& t) {
    const auto& g = t.grad_vec(o);
    if (t.needs_grad(a)) {
      const auto& y = t.val(b);
      auto& ga = t.mutable_grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    }
    if (t.needs_grad(b)) {
      const auto& x = t.val(a);
      auto& gb = t.mutable_grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
    }
  });
}

Var scale(Tape& t, Var a, double s) {
  std::vector<double> out = t.val(a);
  for (double& v : out) v *= s;
  Var o{static_cast<int>(t.node_count())};
  return t.push(t.rows(a), t.cols(a), std::move(out), t.needs_grad(a), [a, o, s](Tape& t) {
    const auto& g = t.grad_vec(o);
    auto& ga = t.mutable_grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var add_row_bias(Tape& t, Var a, Var bias) {
  const int m = t.rows(a), n = t.cols(a);
  require(static_cast<int>(t.size(bias)) == n, "add_row_bias: bias length must equal column count");
  std::vector<double> out = t.val(a);
  const auto& bv = t.val(bias);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(i) * n + j] += bv[j];
  Var o{static_cast<int>(t.node_count())};
  return t.push(m, n, std::move(out), t.needs_grad(a) || t.needs_grad(bias), [a, bias, o, m, n](Tape& t) {
    const auto& g = t.grad_vec(o);
    if (t.needs_grad(a)) {
      auto& ga = t.mutable_grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.needs_grad(bias)) {
      auto& gb = t.mutable_grad(bias);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) gb[j] += g[static_cast<std::size_t>(i) * n + j];
    }
  });
}

Var add_col_bias(Tape& t, Var a, Var bias) {
  const int m = t.rows(a), n = t.cols(a);
  require(static_cast<int>(t.size(bias)) == m, "add_col_bias: bias length must equal row count");
  std::vector<double> out = t.val(a);
  const auto& bv = t.val(bias);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(i) * n + j] += bv[i];
  Var o{static_cast<int>(t.node_count())};
  return t.push(m, n, std::move(out), t.needs_grad(a) || t.needs_grad(bias), [a, bias, o, m, n](Tape& t) {
    const auto& g = t.grad_vec(o);
    if (t.needs_grad(a)) {
      auto& ga = t.mutable_grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.needs_grad(bias)) {
      auto& gb = t.mutable_grad(bias);
      for (int i = 0; i < m; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += g[static_cast<std::size_t>(i) * n + j];
        gb[i] += s;
      }
    }
  });
}

Var relu(Tape& t, Var a) {
  std::vector<double> out = t.val(a);
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  Var o{static_cast<int>(t.node_count())};
  return t.push(t.rows(a), t.cols(a), std::move(out), t.needs_grad(a), [a, o](Tape& t) {
    const auto& g = t.grad_vec(o);
    const auto& x = t.val(a);
    auto& ga = t.mutable_grad(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > 0.0) ga[i] += g[i];
  });
}

Var gelu(Tape& t, Var a) {
  const auto& x = t.val(a);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * std::numbers::sqrt2 / 2.0));
  Var o{static_cast<int>(t.node_count())};
  return t.push(t.rows(a), t.cols(a), std::move(out), t.needs_grad(a), [a, o](Tape& t) {
    const auto& g = t.grad_vec(o);
    const auto& x = t.val(a);
    auto& ga = t.mutable_grad(a);
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(x[i] * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x[i] * x[i]);
      ga[i] += g[i] * (cdf + x[i] * pdf);
    }
  });
}

Var sigmoid(Tape& t, Var a) {
  std::vector<double> out = t.val(a);
  for (double& v : out) v = 1.0 / (1.0 + std::exp(-v));
  Var o{static_cast<int>(t.node_count())};
  return t.push(t.rows(a), t.cols(a), std::move(out), t.needs_grad(a), [a, o](Tape& t) {
    const auto& g = t.grad_vec(o);
    const auto& y = t.val(o);
    auto& ga = t.mutable_grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var softmax_rows(Tape& t, Var a, double s) {
  const int m = t.rows(a), n = t.cols(a);
  const auto& x = t.val(a);
  std::vector<double> out(x.size());
  for (int i = 0; i < m; ++i) {
    const double* xi = x.data() + static_cast<std::size_t>(i) * n;
    double* yi = out.data() + static_cast<std::size_t>(i) * n;
    double mx = xi[0] * s;
    for (int j = 1; j < n; ++j) mx = std::max(mx, xi[j] * s);
    double z = 0.0;
    for (int j = 0; j < n; ++j) z += (yi[j] = std::exp(xi[j] * s - mx));
    for (int j = 0; j < n; ++j) yi[j] /= z;
  }
  Var o{static_cast<int>(t.node_count())};
  return t.push(m, n, std::move(out), t.needs_grad(a), [a, o, m, n, s](Tape& t) {
    const auto& g = t.grad_vec(o);
    const auto& y = t.val(o);
    auto& ga = t.mutable_grad(a);
    for (int i = 0; i < m; ++i) {
      const std::size_t r = static_cast<std::size_t>(i) * n;
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += g[r + j] * y[r + j];
      for (int j = 0; j < n; ++j) ga[r + j] += s * y[r + j] * (g[r + j] - dot);
    }
  });
}

Var layernorm_rows(Tape& t, Var a, Var gamma, Var beta, double eps) {
  const int m = t.rows(a), n = t.cols(a);
  require(static_cast<int>(t.size(gamma)) == n && static_cast<int>(t.size(beta)) == n,
          "layernorm_rows: affine parameters must match the row width");
  const auto& x = t.val(a);
  const auto& gv = t.val(gamma);
  const auto& bv = t.val(beta);
  std::vector<double> xhat(x.size()), inv_std(m), out(x.size());
  for (int i = 0; i < m; ++i) {
    const std::size_t r = static_cast<std::size_t>(i) * n;
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += x[r + j];
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (x[r + j] - mu) * (x[r + j] - mu);
    var /= n;
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < n; ++j) {
      xhat[r + j] = (x[r + j] - mu) * inv_std[i];
      out[r + j] = gv[j] * xhat[r + j] + bv[j];
    }
  }
  const bool ng = t.needs_grad(a) || t.needs_grad(gamma) || t.needs_grad(beta);
  Var o{static_cast<int>(t.node_count())};
  return t.push(m, n, std::move(out), ng,
                [a, gamma, beta, o, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t) {
                  const auto& g = t.grad_vec(o);
                  const auto& gv = t.val(gamma);
                  if (t.needs_grad(gamma)) {
                    auto& gg = t.mutable_grad(gamma);
                    for (int i = 0; i < m; ++i)
                      for (int j = 0; j < n; ++j)
                        gg[j] += g[static_cast<std::size_t>(i) * n + j] * xhat[static_cast<std::size_t>(i) * n + j];
                  }
                  if (t.needs_grad(beta)) {
                    auto& gb = t.mutable_grad(beta);
                    for (int i = 0; i < m; ++i)
                      for (int j = 0; j < n; ++j) gb[j] += g[static_cast<std::size_t>(i) * n + j];
                  }
                  if (t.needs_grad(a)) {
                    auto& ga = t.mutable_grad(a);
                    for (int i = 0; i < m; ++i) {
                      const std::size_t r = static_cast<std::size_t>(i) * n;
                      double mean_d = 0.0, mean_dx = 0.0;
                      for (int j = 0; j < n; ++j) {
                        const double d = g[r + j] * gv[j];
                        mean_d += d;
                        mean_dx += d * xhat[r + j];
                      }
                      mean_d /= n;
                      mean_dx /= n;
                      for (int j = 0; j < n; ++j)
                        ga[r + j] += inv_std[i] * (g[r + j] * gv[j] - mean_d - xhat[r + j] * mean_dx);
                    }
                  }
                });
}

// ---- shape ops ------------------------------------------------------------

Var slice_cols(Tape& t, Var a, int start, int count) {
  const int m = t.rows(a), n = t.cols(a);
  require(start >= 0 && count > 0 && start + count <= n, "slice_cols: range out of bounds");
  const auto& x = t.val(a);
  std::vector<double> out(static_cast<std::size_t>(m) * count);
  for (int i = 0; i < m; ++i)
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(i) * n + start, count,
                out.begin() + static_cast<std::ptrdiff_t>(i) * count);
  Var o{static_cast<int>(t.node_count())};
  return t.push(m, count, std::move(out), t.needs_grad(a), [a, o, m, n, start, count](Tape& t) {
    const auto& g = t.grad_vec(o);
    auto& ga = t.mutable_grad(a);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < count; ++j)
        ga[static_cast<std::size_t>(i) * n + start + j] += g[static_cast<std::size_t>(i) * count + j];
  });
}

Var concat_cols(Tape& t, std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const int m = t.rows(parts[0]);
  int n = 0;
  bool ng = false;
  for (Var p : parts) {
    require(t.rows(p) == m, "concat_cols: row counts differ");
    n += t.cols(p);
    ng = ng || t.needs_grad(p);
  }
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  int off = 0;
  for (Var p : parts) {
    const int c = t.cols(p);
    const auto& x = t.val(p);
    for (int i = 0; i < m; ++i)
      std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(i) * c, c, out.begin() + static_cast<std::ptrdiff_t>(i) * n + off);
    off += c;
  }
  Var o{static_cast<int>(t.node_count())};
  std::vector<Var> ins(parts.begin(), parts.end());
  return t.push(m, n, std::move(out), ng, [ins, o, m, n](Tape& t) {
    const auto& g = t.grad_vec(o);
    int off = 0;
    for (Var p : ins) {
      const int c = t.cols(p);
      if (t.needs_grad(p)) {
        auto& gp = t.mutable_grad(p);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < c; ++j) gp[static_cast<std::size_t>(i) * c + j] += g[static_cast<std::size_t>(i) * n + off + j];
      }
      off += c;
    }
  });
}

Var concat_rows(Tape& t, std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const int n = t.cols(parts[0]);
  int m = 0;
  bool ng = false;
  std::vector<double> out;
  for (Var p : parts) {
    require(t.cols(p) == n, "concat_rows: column counts differ");
    m += t.rows(p);
    ng = ng || t.needs_grad(p);
    out.insert(out.end(), t.val(p).begin(), t.val(p).end());
  }
  Var o{static_cast<int>(t.node_count())};
  std::vector<Var> ins(parts.begin(), parts.end());
  return t.push(m, n, std::move(out), ng, [ins, o](Tape& t) {
    const auto& g = t.grad_vec(o);
    std::size_t off = 0;
    for (Var p : ins) {
      const std::size_t sz = t.size(p);
      if (t.needs_grad(p)) {
        auto& gp = t.mutable_grad(p);
        for (std::size_t i = 0; i < sz; ++i) gp[i] += g[off + i];
      }
      off += sz;
    }
  });
}

Var reshape(Tape& t, Var a, int rows, int cols) {
  require(static_cast<std::size_t>(rows) * cols == t.size(a), "reshape: element count changes");
  Var o{static_cast<int>(t.node_count())};
  return t.push(rows, cols, t.val(a), t.needs_grad(a), [a, o](Tape& t) {
    const auto& g = t.grad_vec(o);
    auto& ga = t.mutable_grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var global_avg_pool(Tape& t, Var a) {
  const int c = t.rows(a), hw = t.cols(a);
  const auto& x = t.val(a);
  std::vector<double> out(c, 0.0);
  for (int i = 0; i < c; ++i) {
    double s = 0.0;
    for (int j = 0; j < hw; ++j) s += x[static_cast<std::size_t>(i) * hw + j];
    out[i] = s / hw;
  }
  Var o{static_cast<int>(t.node_count())};
  return t.push(1, c, std::move(out), t.needs_grad(a), [a, o, c, hw](Tape& t) {
    const auto& g = t.grad_vec(o);
    auto& ga = t.mutable_grad(a);
    for (int i = 0; i < c; ++i)
      for (int j = 0; j < hw; ++j) ga[static_cast<std::size_t>(i) * hw + j] += g[i] / hw;
  });
}

Var sum_all(Tape& t, Var a) {
  double s = 0.0;
  for (double v : t.val(a)) s += v;
  Var o{static_cast<int>(t.node_count())};
  return t.push(1, 1, {s}, t.needs_grad(a), [a, o](Tape& t) {
    const double g = t.grad_vec(o)[0];
    for (double& v : t.mutable_grad(a)) v += g;
  });
}

Var mean_all(Tape& t, Var a) { return scale(t, sum_all(t, a), 1.0 / static_cast<double>(t.size(a))); }

// ---- convolution ------------------------------------------------------------

namespace {

void im2col(const double* x, const ConvGeometry& g, double* cols) {
  const int ho = g.out_height(), wo = g.out_width();
  const int k = g.kernel;
  for (int c = 0; c < g.in_channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double* row = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            row[oy * wo + ox] = (iy >= 0 && iy < g.height && ix >= 0 && ix < g.width)
                                    ? x[(static_cast<std::size_t>(c) * g.height + iy) * g.width + ix]
                                    : 0.0;
          }
        }
      }
}

void col2im(const double* cols, const ConvGeometry& g, double* dx) {
  const int ho = g.out_height(), wo = g.out_width();
  const int k = g.kernel;
  for (int c = 0; c < g.in_channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const double* row = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.height) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix < 0 || ix >= g.width) continue;
            dx[(static_cast<std::size_t>(c) * g.height + iy) * g.width + ix] += row[oy * wo + ox];
          }
        }
      }
}

}  // namespace

Var conv2d(Tape& t, Var x, Var weight, Var bias, const ConvGeometry& g) {
  require(g.kernel > 0 && g.stride > 0 && g.pad >= 0, "conv2d: invalid geometry");
  require(t.rows(x) == g.in_channels && t.cols(x) == g.height * g.width,
          "conv2d: input shape does not match geometry");
  const int kk = g.in_channels * g.kernel * g.kernel;
  require(t.cols(weight) == kk, "conv2d: weight width must be Cin*k*k");
  const int cout = t.rows(weight);
  require(static_cast<int>(t.size(bias)) == cout, "conv2d: bias length must equal output channels");
  const int ho = g.out_height(), wo = g.out_width();
  require(ho > 0 && wo > 0, "conv2d: empty output");
  const int npos = ho * wo;

  std::vector<double> cols(static_cast<std::size_t>(kk) * npos);
  im2col(t.val(x).data(), g, cols.data());
  std::vector<double> out(static_cast<std::size_t>(cout) * npos);
  const auto& bv = t.val(bias);
  for (int c = 0; c < cout; ++c) std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(c) * npos, npos, bv[c]);
  gemm(false, false, cout, npos, kk, t.val(weight).data(), cols.data(), 1.0, out.data());

  const bool ng = t.needs_grad(x) || t.needs_grad(weight) || t.needs_grad(bias);
  Var o{static_cast<int>(t.node_count())};
  return t.push(cout, npos, std::move(out), ng,
                [x, weight, bias, o, g, kk, cout, npos, cols = std::move(cols)](Tape& t) {
                  const auto& gy = t.grad_vec(o);
                  if (t.needs_grad(weight))
                    gemm(false, true, cout, kk, npos, gy.data(), cols.data(), 1.0, t.mutable_grad(weight).data());
                  if (t.needs_grad(bias)) {
                    auto& gb = t.mutable_grad(bias);
                    for (int c = 0; c < cout; ++c) {
                      double s = 0.0;
                      for (int j = 0; j < npos; ++j) s += gy[static_cast<std::size_t>(c) * npos + j];
                      gb[c] += s;
                    }
                  }
                  if (t.needs_grad(x)) {
                    std::vector<double> dcols(static_cast<std::size_t>(kk) * npos, 0.0);
                    gemm(true, false, kk, npos, cout, t.val(weight).data(), gy.data(), 0.0, dcols.data());
                    col2im(dcols.data(), g, t.mutable_grad(x).data());
                  }
                });
}

Var patchify(Tape& t, Var image, int height, int width, int channels, int patches_per_side) {
  require(patches_per_side > 0, "patchify: patches per side must be positive");
  require(height % patches_per_side == 0 && width % patches_per_side == 0,
          "patchify: image " + std::to_string(height) + "x" + std::to_string(width) +
              " is not divisible into " + std::to_string(patches_per_side) + " patches per side");
  require(t.size(image) == static_cast<std::size_t>(height) * width * channels, "patchify: image size mismatch");
  const int ph = height / patches_per_side, pw = width / patches_per_side;
  const int np = patches_per_side * patches_per_side;
  const int pd = ph * pw * channels;
  // index[p * pd + e] = source offset in the image
  std::vector<std::size_t> index(static_cast<std::size_t>(np) * pd);
  for (int pr = 0; pr < patches_per_side; ++pr)
    for (int pc = 0; pc < patches_per_side; ++pc) {
      const int p = pr * patches_per_side + pc;
      for (int dy = 0; dy < ph; ++dy)
        for (int dx = 0; dx < pw; ++dx)
          for (int c = 0; c < channels; ++c)
            index[static_cast<std::size_t>(p) * pd + (dy * pw + dx) * channels + c] =
                (static_cast<std::size_t>(pr * ph + dy) * width + pc * pw + dx) * channels + c;
    }
  const auto& x = t.val(image);
  std::vector<double> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) out[i] = x[index[i]];
  Var o{static_cast<int>(t.node_count())};
  return t.push(np, pd, std::move(out), t.needs_grad(image), [image, o, index = std::move(index)](Tape& t) {
    const auto& g = t.grad_vec(o);
    auto& gi = t.mutable_grad(image);
    for (std::size_t i = 0; i < index.size(); ++i) gi[index[i]] += g[i];
  });
}

// ---- losses -----------------------------------------------------------------

Var cross_entropy(Tape& t, Var logits, int label) {
  const int k = static_cast<int>(t.size(logits));
  require(label >= 0 && label < k, "cross_entropy: label out of range");
  const auto& z = t.val(logits);
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  Var o{static_cast<int>(t.node_count())};
  return t.push(1, 1, {lse - z[label]}, t.needs_grad(logits), [logits, o, label, lse](Tape& t) {
    const double g = t.grad_vec(o)[0];
    const auto& z = t.val(logits);
    auto& gz = t.mutable_grad(logits);
    for (std::size_t i = 0; i < z.size(); ++i)
      gz[i] += g * (std::exp(z[i] - lse) - (static_cast<int>(i) == label ? 1.0 : 0.0));
  });
}

Var ssim(Tape& t, Var a, Var b, double c1, double c2) {
  require(t.size(a) == t.size(b), "ssim: shape mismatch");
  require(c1 > 0.0 && c2 > 0.0, "ssim: constants must be positive");
  const auto& x = t.val(a);
  const auto& y = t.val(b);
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double vx = 0.0, vy = 0.0, cxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
    cxy += (x[i] - mx) * (y[i] - my);
  }
  vx /= n;
  vy /= n;
  cxy /= n;
  const double n1 = 2.0 * mx * my + c1, n2 = 2.0 * cxy + c2;
  const double d1 = mx * mx + my * my + c1, d2 = vx + vy + c2;
  const double s = (n1 * n2) / (d1 * d2);
  Var o{static_cast<int>(t.node_count())};
  return t.push(1, 1, {s}, t.needs_grad(a) || t.needs_grad(b),
                [a, b, o, n, mx, my, n1, n2, d1, d2, s](Tape& t) {
                  const double g = t.grad_vec(o)[0];
                  const auto& x = t.val(a);
                  const auto& y = t.val(b);
                  // dS/dx_i = S [2 my/(n N1) + 2 (y_i - my)/(n N2) - 2 mx/(n D1) - 2 (x_i - mx)/(n D2)]
                  auto side = [&](Var v, const std::vector<double>& self, const std::vector<double>& other,
                                  double m_self, double m_other) {
                    if (!t.needs_grad(v)) return;
                    auto& gv = t.mutable_grad(v);
                    for (std::size_t i = 0; i < self.size(); ++i) {
                      const double d = 2.0 * m_other / (n * n1) + 2.0 * (other[i] - m_other) / (n * n2) -
                                       2.0 * m_self / (n * d1) - 2.0 * (self[i] - m_self) / (n * d2);
                      gv[i] += g * s * d;
                    }
                  };
                  side(a, x, y, mx, my);
                  side(b, y, x, my, mx);
                });
}

Var abs_diff_sum(Tape& t, Var a, Var b) {
  require(t.size(a) == t.size(b), "abs_diff_sum: shape mismatch");
  const auto& x = t.val(a);
  const auto& y = t.val(b);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - y[i]);
  Var o{static_cast<int>(t.node_count())};
  return t.push(1, 1, {s}, t.needs_grad(a) || t.needs_grad(b), [a, b, o](Tape& t) {
    const double g = t.grad_vec(o)[0];
    const auto& x = t.val(a);
    const auto& y = t.val(b);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] > y[i] ? 1.0 : (x[i] < y[i] ? -1.0 : 0.0);
      if (t.needs_grad(a)) t.mutable_grad(a)[i] += g * d;
      if (t.needs_grad(b)) t.mutable_grad(b)[i] -= g * d;
    }
  });
}

}  // namespace dfx::ag
