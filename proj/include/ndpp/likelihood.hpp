#pragma once

#include <vector>

#include "ndpp/kernel.hpp"

namespace ndpp {

using Basket = IndexVec;
using BasketList = std::vector<Basket>;

struct LikelihoodReport {
  double mean_subset_logdet = 0.0;
  double log_normalizer = 0.0;
  double reg = 0.0;
  double objective = 0.0;
  bool feasible = true;  // false => objective is -inf and gradients are zero
};

struct Gradients {
  Mat gv;  // m x k
  Mat gb;  // m x k, zeros when tied (the B-role part is folded into gv)
  Mat gd;  // k x k
};

// log det(I_M + L) through the 2K x 2K reduction; never materializes an
// M x M matrix. Throws Errc::numerical_failure if the reduced matrix is
// singular or has nonpositive determinant.
double log_normalizer(const NdppParams& p);

// log det(L_Y + eps*I). y must be nonempty with indices < m. Throws
// Errc::non_positive_minor when the stabilized minor has nonpositive
// determinant.
double subset_logdet(const NdppParams& p, const Basket& y, double eps);

// alpha * sum_i |v_i|^2 / mu_i + beta * sum_i |b_i|^2 / mu_i (second term
// dropped when tied). Throws Errc::zero_count if a referenced mu_i is zero.
double regularizer(const NdppParams& p, const std::vector<double>& mu);

// Full objective: mean subset log det - log normalizer - regularizer, with
// analytic gradients for v, b (untied) and d. An infeasible batch (some
// nonpositive stabilized minor) yields a flagged report with -inf objective
// and zero gradients instead of throwing. threads parallelizes the per-subset
// terms with a thread-count-independent reduction.
std::pair<LikelihoodReport, Gradients> objective_and_grad(
    const NdppParams& p, const BasketList& batch, const std::vector<double>& mu,
    double eps, int threads = 1);

// Same report without gradient work (step-feasibility probes, validation).
LikelihoodReport objective_only(const NdppParams& p, const BasketList& batch,
                                const std::vector<double>& mu, double eps,
                                int threads = 1);

// Mean per-basket unregularized log likelihood: mean subset_logdet - Z.
// Returns -inf if any minor is nonpositive. Used for validation and test
// scoring.
double mean_loglik(const NdppParams& p, const BasketList& baskets, double eps,
                   int threads = 1);

// Normalizer and its gradients through the explicit Schur/inverse route.
// Requires C nonsingular (|det C| > 1e-10), which only happens for even K;
// exists purely as an independent cross-check of the primal path.
struct SchurNormalizer {
  double log_normalizer = 0.0;
  Mat gv, gb, gc;  // gc is the raw dZ/dC, before the skew chain rule
};
SchurNormalizer normalizer_schur(const NdppParams& p);

}  // namespace ndpp
