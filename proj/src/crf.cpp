#include "sequst/crf.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#include "sequst/numerics.hpp"

namespace sequst {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_shapes(const Tensor& e, const Tensor& t, const std::vector<char>& allowed) {
  if (e.rows() == 0) throw std::invalid_argument("crf: sequence length must be at least 1");
  if (t.rows() != e.cols() || t.cols() != e.cols()) throw std::invalid_argument("crf: transition shape mismatch");
  if (!allowed.empty() && allowed.size() != e.size()) throw std::invalid_argument("crf: mask shape mismatch");
}

}  // namespace

CrfPosterior crf_forward_backward(const Tensor& emissions, const Tensor& transitions,
                                  const std::vector<char>& allowed) {
  check_shapes(emissions, transitions, allowed);
  const std::size_t L = emissions.rows(), Y = emissions.cols();
  auto em = [&](std::size_t j, std::size_t y) {
    return (allowed.empty() || allowed[j * Y + y]) ? emissions(j, y) : kNegInf;
  };

  std::vector<double> alpha(L * Y), beta(L * Y, 0.0), buf(Y);
  for (std::size_t y = 0; y < Y; ++y) alpha[y] = em(0, y);
  for (std::size_t j = 1; j < L; ++j) {
    for (std::size_t y = 0; y < Y; ++y) {
      for (std::size_t p = 0; p < Y; ++p) buf[p] = alpha[(j - 1) * Y + p] + transitions(p, y);
      alpha[j * Y + y] = log_sum_exp(buf) + em(j, y);
    }
  }
  for (std::size_t j = L - 1; j-- > 0;) {
    for (std::size_t y = 0; y < Y; ++y) {
      for (std::size_t n = 0; n < Y; ++n) buf[n] = transitions(y, n) + em(j + 1, n) + beta[(j + 1) * Y + n];
      beta[j * Y + y] = log_sum_exp(buf);
    }
  }

  CrfPosterior out;
  out.log_partition = log_sum_exp(std::span<const double>(alpha.data() + (L - 1) * Y, Y));
  if (!std::isfinite(out.log_partition)) throw NumericError("crf: mask admits no path");
  const double z = out.log_partition;
  out.unary = Tensor::matrix(L, Y);
  for (std::size_t j = 0; j < L; ++j)
    for (std::size_t y = 0; y < Y; ++y) {
      const double a = alpha[j * Y + y];
      out.unary(j, y) = a == kNegInf ? 0.0 : std::exp(a + beta[j * Y + y] - z);
    }
  out.pairwise = Tensor::matrix(Y, Y);
  for (std::size_t j = 1; j < L; ++j)
    for (std::size_t p = 0; p < Y; ++p) {
      const double a = alpha[(j - 1) * Y + p];
      if (a == kNegInf) continue;
      for (std::size_t y = 0; y < Y; ++y) {
        const double e = em(j, y);
        if (e == kNegInf) continue;
        out.pairwise(p, y) += std::exp(a + transitions(p, y) + e + beta[j * Y + y] - z);
      }
    }
  return out;
}

double crf_log_partition(const Tensor& emissions, const Tensor& transitions) {
  return crf_forward_backward(emissions, transitions).log_partition;
}

Tensor crf_token_marginals(const Tensor& emissions, const Tensor& transitions) {
  return crf_forward_backward(emissions, transitions).unary;
}

double crf_path_score(const Tensor& emissions, const Tensor& transitions, const std::vector<int>& path) {
  if (path.size() != emissions.rows()) throw std::invalid_argument("crf_path_score: length mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < path.size(); ++j) {
    s += emissions(j, path[j]);
    if (j > 0) s += transitions(path[j - 1], path[j]);
  }
  return s;
}

ViterbiResult crf_viterbi(const Tensor& emissions, const Tensor& transitions) {
  check_shapes(emissions, transitions, {});
  const std::size_t L = emissions.rows(), Y = emissions.cols();
  std::vector<double> score(Y), next(Y);
  std::vector<int> back(L * Y, 0);
  for (std::size_t y = 0; y < Y; ++y) score[y] = emissions(0, y);
  for (std::size_t j = 1; j < L; ++j) {
    for (std::size_t y = 0; y < Y; ++y) {
      int best = 0;
      double best_v = score[0] + transitions(0, y);
      for (std::size_t p = 1; p < Y; ++p) {
        const double v = score[p] + transitions(p, y);
        if (v > best_v) {
          best_v = v;
          best = static_cast<int>(p);
        }
      }
      back[j * Y + y] = best;
      next[y] = best_v + emissions(j, y);
    }
    score.swap(next);
  }
  ViterbiResult r;
  int last = 0;
  for (std::size_t y = 1; y < Y; ++y) {
    if (score[y] > score[last]) last = static_cast<int>(y);
  }
  r.score = score[last];
  r.path.assign(L, 0);
  r.path[L - 1] = last;
  for (std::size_t j = L - 1; j > 0; --j) r.path[j - 1] = back[j * Y + r.path[j]];
  return r;
}

namespace ag {

Var crf_log_partition(Var emissions, Var transitions, std::vector<char> allowed) {
  auto post = std::make_shared<CrfPosterior>(
      crf_forward_backward(emissions.value(), transitions.value(), allowed));
  Tensor z = Tensor::scalar(post->log_partition);
  return emissions.tape()->record(std::move(z), {emissions, transitions},
                                  [emissions, transitions, post](Tape& t, std::size_t self) {
                                    const double g = t.grad(self)[0];
                                    if (emissions.requires_grad()) {
                                      auto ge = t.accumulator(emissions);
                                      auto u = post->unary.values();
                                      for (std::size_t i = 0; i < ge.size(); ++i) ge[i] += g * u[i];
                                    }
                                    if (transitions.requires_grad()) {
                                      auto gt = t.accumulator(transitions);
                                      auto p = post->pairwise.values();
                                      for (std::size_t i = 0; i < gt.size(); ++i) gt[i] += g * p[i];
                                    }
                                  });
}

}  // namespace ag
}  // namespace sequst
