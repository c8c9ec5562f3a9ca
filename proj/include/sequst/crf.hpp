#pragma once

#include <vector>

#include "sequst/autograd.hpp"
#include "sequst/tensor.hpp"

namespace sequst {

/// Linear-chain CRF without start/stop scores. A path y scores
/// Σ_j emission(j, y_j) + Σ_{j>0} transition(y_{j−1}, y_j).
///
/// `allowed`, when non-empty, is an L×|Y| 0/1 mask restricting the paths that
/// enter the sum. It lets one routine produce log Z, the gold-path score
/// (mask = the gold path), and log p(y_j = c | X) (mask pins position j).
struct CrfPosterior {
  double log_partition = 0.0;
  Tensor unary;     // L×|Y| token marginals
  Tensor pairwise;  // |Y|×|Y| expected transition counts
};

CrfPosterior crf_forward_backward(const Tensor& emissions, const Tensor& transitions,
                                  const std::vector<char>& allowed = {});

double crf_log_partition(const Tensor& emissions, const Tensor& transitions);
Tensor crf_token_marginals(const Tensor& emissions, const Tensor& transitions);
double crf_path_score(const Tensor& emissions, const Tensor& transitions, const std::vector<int>& path);

struct ViterbiResult {
  std::vector<int> path;
  double score = 0.0;
};

/// Highest-scoring path; ties go to the lowest tag index.
ViterbiResult crf_viterbi(const Tensor& emissions, const Tensor& transitions);

namespace ag {

/// Differentiable (masked) log partition; gradients are the corresponding
/// unary and pairwise marginals.
Var crf_log_partition(Var emissions, Var transitions, std::vector<char> allowed = {});

}  // namespace ag
}  // namespace sequst
