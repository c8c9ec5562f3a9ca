#include "sequst/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

namespace sequst {

const Tensor& Var::value() const { return tape_->value(id_); }

double Var::item() const {
  const Tensor& v = value();
  if (v.size() != 1) throw std::logic_error("item() on non-scalar value");
  return v[0];
}

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Tape::reference(const Tensor& value) {
  Node node;
  node.external = &value;
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Tape::parameter(Tensor& param) {
  Node node;
  node.external = &param;
  node.param = recording_ ? &param : nullptr;
  node.requires_grad = recording_;
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.value;
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward fn) {
  Node node;
  node.value = std::move(value);
  if (recording_) {
    for (const Var& in : inputs) {
      if (in.tape() != this) throw std::logic_error("tape: mixing values from different tapes");
      node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
    }
    if (node.requires_grad) node.backward = std::move(fn);
  }
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

std::span<double> Tape::accumulator(Var v) {
  Node& n = nodes_[v.id()];
  const std::size_t want = value(v.id()).size();
  if (n.grad.size() != want) n.grad.assign(want, 0.0);
  return n.grad;
}

void Tape::backward(Var root) {
  if (!recording_) throw std::logic_error("tape: backward on a non-recording tape");
  if (root.tape() != this || root.value().size() != 1) {
    throw std::logic_error("tape: backward root must be a scalar on this tape");
  }
  if (!nodes_[root.id()].requires_grad) return;
  accumulator(root)[0] += 1.0;
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.empty()) continue;
    if (n.param) {
      n.param->ensure_grad();
      auto dst = n.param->grad();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
    } else if (n.backward) {
      n.backward(*this, id);
    }
  }
}

namespace ag {
namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("autograd: ") + what);
}

// Accumulates into an input's gradient only when that input needs one.
template <typename F>
void feed(Tape& t, Var in, F&& fill) {
  if (!in.requires_grad()) return;
  fill(t.accumulator(in));
}

double sigmoid_scalar(double x) {
  if (x >= 0) {
    const double z = std::exp(-x);
    return 1.0 / (1.0 + z);
  }
  const double z = std::exp(x);
  return z / (1.0 + z);
}

double softplus_scalar(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.cols() == B.rows(), "matmul shape mismatch");
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor out = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    double* o = &out(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A(i, p);
      if (av == 0.0) continue;
      const double* br = &B(p, 0);
      for (std::size_t j = 0; j < n; ++j) o[j] += av * br[j];
    }
  }
  return a.tape()->record(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    feed(t, a, [&](std::span<double> ga) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * B(p, j);
          ga[i * k + p] += s;
        }
    });
    feed(t, b, [&](std::span<double> gb) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A(i, p);
          if (av == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * g[i * n + j];
        }
    });
  });
}

Var matmul_transposed(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.cols() == B.cols(), "matmul_transposed shape mismatch");
  const std::size_t m = A.rows(), k = A.cols(), n = B.rows();
  Tensor out = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += A(i, p) * B(j, p);
      out(i, j) = s;
    }
  return a.tape()->record(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    feed(t, a, [&](std::span<double> ga) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += g[i * n + j] * B(j, p);
    });
    feed(t, b, [&](std::span<double> gb) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += g[i * n + j] * A(i, p);
    });
  });
}

Var add(Var a, Var b) {
  require(a.value().size() == b.value().size(), "add shape mismatch");
  Tensor out = a.value();
  out.drop_grad();
  auto bv = b.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    feed(t, a, [&](std::span<double> ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i]; });
    feed(t, b, [&](std::span<double> gb) { for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i]; });
  });
}

Var sub(Var a, Var b) {
  require(a.value().size() == b.value().size(), "sub shape mismatch");
  Tensor out = a.value();
  out.drop_grad();
  auto bv = b.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    feed(t, a, [&](std::span<double> ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i]; });
    feed(t, b, [&](std::span<double> gb) { for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i]; });
  });
}

Var add_row(Var a, Var row) {
  const Tensor& A = a.value();
  require(row.value().size() == A.cols(), "add_row width mismatch");
  const std::size_t m = A.rows(), n = A.cols();
  Tensor out = Tensor::matrix(m, n);
  auto r = row.value().values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = A(i, j) + r[j];
  return a.tape()->record(std::move(out), {a, row}, [a, row, m, n](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    feed(t, a, [&](std::span<double> ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i]; });
    feed(t, row, [&](std::span<double> gr) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gr[j] += g[i * n + j];
    });
  });
}

Var mul(Var a, Var b) {
  require(a.value().size() == b.value().size(), "mul shape mismatch");
  Tensor out = a.value();
  out.drop_grad();
  auto bv = b.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto av = a.value().values();
    auto bv = b.value().values();
    feed(t, a, [&](std::span<double> ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i]; });
    feed(t, b, [&](std::span<double> gb) { for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i]; });
  });
}

Var mul_const(Var a, const Tensor& factor) {
  require(a.value().size() == factor.size(), "mul_const shape mismatch");
  Tensor out = a.value();
  out.drop_grad();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor[i];
  auto f = std::make_shared<std::vector<double>>(factor.values().begin(), factor.values().end());
  return a.tape()->record(std::move(out), {a}, [a, f](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    feed(t, a, [&](std::span<double> ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*f)[i]; });
  });
}

Var add_const(Var a, const Tensor& offset) {
  require(a.value().size() == offset.size(), "add_const shape mismatch");
  Tensor out = a.value();
  out.drop_grad();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += offset[i];
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    feed(t, a, [&](std::span<double> ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i]; });
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  out.drop_grad();
  for (double& v : out.values()) v *= factor;
  return a.tape()->record(std::move(out), {a}, [a, factor](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    feed(t, a, [&](std::span<double> ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor; });
  });
}

Var map(Var a, const std::function<double(double)>& f, const std::function<double(double)>& df) {
  Tensor out = a.value();
  out.drop_grad();
  for (double& v : out.values()) v = f(v);
  return a.tape()->record(std::move(out), {a}, [a, df](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto x = a.value().values();
    feed(t, a, [&](std::span<double> ga) { for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(x[i]); });
  });
}

Var relu(Var a) {
  return map(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var softplus(Var a) { return map(a, softplus_scalar, sigmoid_scalar); }

Var sigmoid(Var a) {
  return map(a, sigmoid_scalar, [](double x) {
    const double s = sigmoid_scalar(x);
    return s * (1.0 - s);
  });
}

Var tanh(Var a) {
  return map(a, [](double x) { return std::tanh(x); }, [](double x) {
    const double y = std::tanh(x);
    return 1.0 - y * y;
  });
}

Var exp(Var a) {
  return map(a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Var log_softmax_rows(Var a) {
  const Tensor& A = a.value();
  const std::size_t m = A.rows(), n = A.cols();
  Tensor out = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    auto r = A.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double s = 0.0;
    for (double v : r) s += std::exp(v - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < n; ++j) out(i, j) = r[j] - lse;
  }
  return a.tape()->record(std::move(out), {a}, [a, m, n](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    const Tensor& y = t.value(self);
    feed(t, a, [&](std::span<double> ga) {
      for (std::size_t i = 0; i < m; ++i) {
        double gs = 0.0;
        for (std::size_t j = 0; j < n; ++j) gs += g[i * n + j];
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i * n + j] - std::exp(y(i, j)) * gs;
      }
    });
  });
}

Var concat_cols(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.rows() == B.rows(), "concat_cols row mismatch");
  const std::size_t m = A.rows(), na = A.cols(), nb = B.cols();
  Tensor out = Tensor::matrix(m, na + nb);
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(&A(i, 0), na, &out(i, 0));
    std::copy_n(&B(i, 0), nb, &out(i, na));
  }
  return a.tape()->record(std::move(out), {a, b}, [a, b, m, na, nb](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    const std::size_t w = na + nb;
    feed(t, a, [&](std::span<double> ga) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < na; ++j) ga[i * na + j] += g[i * w + j];
    });
    feed(t, b, [&](std::span<double> gb) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < nb; ++j) gb[i * nb + j] += g[i * w + na + j];
    });
  });
}

Var gather_rows(Var table, std::span<const std::size_t> ids) {
  const Tensor& T = table.value();
  const std::size_t n = T.cols();
  Tensor out = Tensor::matrix(ids.size(), n);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] < T.rows(), "gather_rows index out of range");
    std::copy_n(&T(ids[i], 0), n, &out(i, 0));
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(ids.begin(), ids.end());
  return table.tape()->record(std::move(out), {table}, [table, idx, n](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    feed(t, table, [&](std::span<double> gt) {
      for (std::size_t i = 0; i < idx->size(); ++i)
        for (std::size_t j = 0; j < n; ++j) gt[(*idx)[i] * n + j] += g[i * n + j];
    });
  });
}

Var pick(Var a, std::span<const std::size_t> rows, std::span<const std::size_t> cols) {
  require(rows.size() == cols.size(), "pick index length mismatch");
  const Tensor& A = a.value();
  const std::size_t n = A.cols();
  Tensor out = Tensor::matrix(rows.size(), 1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] < A.rows() && cols[i] < n, "pick index out of range");
    out[i] = A(rows[i], cols[i]);
  }
  auto flat = std::make_shared<std::vector<std::size_t>>();
  for (std::size_t i = 0; i < rows.size(); ++i) flat->push_back(rows[i] * n + cols[i]);
  return a.tape()->record(std::move(out), {a}, [a, flat](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    feed(t, a, [&](std::span<double> ga) {
      for (std::size_t i = 0; i < flat->size(); ++i) ga[(*flat)[i]] += g[i];
    });
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.tape()->record(Tensor::scalar(s), {a}, [a](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    feed(t, a, [&](std::span<double> ga) { for (double& v : ga) v += g; });
  });
}

Var mean(Var a) {
  require(a.value().size() > 0, "mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var kl_from_target(const Tensor& target, Var log_q) {
  const Tensor& Q = log_q.value();
  require(target.size() == Q.size(), "kl_from_target shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double p = target[i];
    if (p > 0.0) s += p * (std::log(p) - Q[i]);
  }
  auto p = std::make_shared<std::vector<double>>(target.values().begin(), target.values().end());
  return log_q.tape()->record(Tensor::scalar(s), {log_q}, [log_q, p](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    feed(t, log_q, [&](std::span<double> gq) {
      for (std::size_t i = 0; i < gq.size(); ++i) gq[i] -= g * (*p)[i];
    });
  });
}

namespace {

struct LstmCache {
  std::size_t steps = 0, in_dim = 0, hidden = 0;
  bool reverse = false;
  // Per processed position t (original row index): gate activations and states.
  std::vector<double> i, f, g, o, c, tanh_c;
};

}  // namespace

Var lstm(Var x, Var wx, Var wh, Var bias, bool reverse) {
  const Tensor& X = x.value();
  const Tensor& WX = wx.value();
  const Tensor& WH = wh.value();
  const Tensor& B = bias.value();
  const std::size_t L = X.rows(), d = X.cols(), h = WH.rows();
  require(WX.rows() == d && WX.cols() == 4 * h && WH.cols() == 4 * h && B.size() == 4 * h,
          "lstm parameter shape mismatch");

  auto cache = std::make_shared<LstmCache>();
  cache->steps = L;
  cache->in_dim = d;
  cache->hidden = h;
  cache->reverse = reverse;
  for (auto* v : {&cache->i, &cache->f, &cache->g, &cache->o, &cache->c, &cache->tanh_c}) v->assign(L * h, 0.0);

  Tensor out = Tensor::matrix(L, h);
  std::vector<double> z(4 * h);
  std::vector<double> h_prev(h, 0.0), c_prev(h, 0.0);
  for (std::size_t s = 0; s < L; ++s) {
    const std::size_t t = reverse ? L - 1 - s : s;
    for (std::size_t q = 0; q < 4 * h; ++q) z[q] = B[q];
    for (std::size_t p = 0; p < d; ++p) {
      const double xv = X(t, p);
      if (xv == 0.0) continue;
      const double* w = &WX(p, 0);
      for (std::size_t q = 0; q < 4 * h; ++q) z[q] += xv * w[q];
    }
    for (std::size_t p = 0; p < h; ++p) {
      const double hv = h_prev[p];
      if (hv == 0.0) continue;
      const double* w = &WH(p, 0);
      for (std::size_t q = 0; q < 4 * h; ++q) z[q] += hv * w[q];
    }
    for (std::size_t u = 0; u < h; ++u) {
      const double ig = sigmoid_scalar(z[u]);
      const double fg = sigmoid_scalar(z[h + u]);
      const double gg = std::tanh(z[2 * h + u]);
      const double og = sigmoid_scalar(z[3 * h + u]);
      const double cv = fg * c_prev[u] + ig * gg;
      const double tc = std::tanh(cv);
      const std::size_t k = t * h + u;
      cache->i[k] = ig;
      cache->f[k] = fg;
      cache->g[k] = gg;
      cache->o[k] = og;
      cache->c[k] = cv;
      cache->tanh_c[k] = tc;
      out(t, u) = og * tc;
      c_prev[u] = cv;
      h_prev[u] = og * tc;
    }
  }

  return x.tape()->record(std::move(out), {x, wx, wh, bias}, [x, wx, wh, bias, cache](Tape& t, std::size_t self) {
    const auto& C = *cache;
    const std::size_t L = C.steps, d = C.in_dim, h = C.hidden;
    auto gout = t.grad(self);
    const Tensor& X = x.value();
    const Tensor& WX = wx.value();
    const Tensor& WH = wh.value();
    const Tensor& H = t.value(self);

    std::vector<double> dz_all(L * 4 * h, 0.0);
    std::vector<double> dwh(h * 4 * h, 0.0);
    std::vector<double> dh_next(h, 0.0), dc_next(h, 0.0);
    for (std::size_t s = L; s-- > 0;) {
      const std::size_t t_idx = C.reverse ? L - 1 - s : s;
      const bool has_prev = s > 0;
      const std::size_t prev = C.reverse ? t_idx + 1 : t_idx - 1;
      double* dz = &dz_all[t_idx * 4 * h];
      for (std::size_t u = 0; u < h; ++u) {
        const std::size_t k = t_idx * h + u;
        const double dh = gout[k] + dh_next[u];
        const double tc = C.tanh_c[k];
        const double og = C.o[k], ig = C.i[k], fg = C.f[k], gg = C.g[k];
        const double c_prev = has_prev ? C.c[prev * h + u] : 0.0;
        const double dc = dh * og * (1.0 - tc * tc) + dc_next[u];
        dz[u] = dc * gg * ig * (1.0 - ig);
        dz[h + u] = dc * c_prev * fg * (1.0 - fg);
        dz[2 * h + u] = dc * ig * (1.0 - gg * gg);
        dz[3 * h + u] = dh * tc * og * (1.0 - og);
        dc_next[u] = dc * fg;
      }
      std::fill(dh_next.begin(), dh_next.end(), 0.0);
      if (has_prev) {
        for (std::size_t p = 0; p < h; ++p) {
          const double hp = H(prev, p);
          const double* w = &WH(p, 0);
          double acc = 0.0;
          for (std::size_t q = 0; q < 4 * h; ++q) {
            acc += dz[q] * w[q];
            dwh[p * 4 * h + q] += hp * dz[q];
          }
          dh_next[p] = acc;
        }
      }
    }

    feed(t, wh, [&](std::span<double> g) { for (std::size_t i = 0; i < g.size(); ++i) g[i] += dwh[i]; });
    feed(t, bias, [&](std::span<double> g) {
      for (std::size_t r = 0; r < L; ++r)
        for (std::size_t q = 0; q < 4 * h; ++q) g[q] += dz_all[r * 4 * h + q];
    });
    feed(t, wx, [&](std::span<double> g) {
      for (std::size_t r = 0; r < L; ++r)
        for (std::size_t p = 0; p < d; ++p) {
          const double xv = X(r, p);
          if (xv == 0.0) continue;
          for (std::size_t q = 0; q < 4 * h; ++q) g[p * 4 * h + q] += xv * dz_all[r * 4 * h + q];
        }
    });
    feed(t, x, [&](std::span<double> g) {
      for (std::size_t r = 0; r < L; ++r)
        for (std::size_t p = 0; p < d; ++p) {
          const double* w = &WX(p, 0);
          double acc = 0.0;
          for (std::size_t q = 0; q < 4 * h; ++q) acc += dz_all[r * 4 * h + q] * w[q];
          g[r * d + p] += acc;
        }
    });
  });
}

}  // namespace ag
}  // namespace sequst
