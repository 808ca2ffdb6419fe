#pragma once

#include "ndpp/inference.hpp"
#include "ndpp/likelihood.hpp"
#include "ndpp/training.hpp"

namespace ndpp {

struct CiValue {
  double value = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

struct EvalReport {
  CiValue mpr;
  CiValue auc;
  double test_loglik = 0.0;
  std::vector<std::pair<std::string, CiValue>> rel_errors;
};

struct ApproxBoundReport {
  double sigma_min = 0.0;   // over all principal minors with |Y| <= 2k
  double sigma_max = 0.0;
  double kappa = 0.0;       // sigma_max / sigma_min
  double log_kappa_ratio = 0.0;  // log sigma_max / log sigma_min; NaN unless sigma_min > 1
  double thm2_bound = 0.0;  // multiplier; NaN unless sigma_min > 1
  double cor1_multiplier = 0.0;
  double cor1_additive = 0.0;
  double greedy_logdet = 0.0;
  double exact_logdet = 0.0;
  double greedy_ratio = 0.0;  // greedy_logdet / exact_logdet
};

// Percentile bootstrap (B resamples of the mean) 95% interval.
CiValue bootstrap_mean_ci(const std::vector<double>& values, Index b, std::uint64_t seed);

// Mean percentile rank: for each basket of size >= 2, one uniformly chosen
// item is held out, the rest is conditioned on, and the held-out item's
// conditioned score is ranked (ties count as hits) against every item outside
// the conditioning set. 100 = perfect, ~50 = uninformative.
CiValue mpr(const NdppParams& p, const BasketDataset& data, std::uint64_t seed);

// AUC for observed baskets vs. size-matched uniform random baskets, scored by
// eps-stabilized subset log det minus the log normalizer. Ties credit 0.5;
// infeasible minors score -inf.
CiValue auc_discrimination(const NdppParams& p, const BasketDataset& data,
                           std::uint64_t seed, double eps = 1e-5);

// |(reference - candidate) / reference|. Throws Errc::zero_reference when
// |reference| < 1e-300.
double relative_logdet_error(double candidate_logdet, double reference_logdet);

// Rejection-samples L = V1 diag(s) V2^T (V1 = V2 when symmetric) until the
// exhaustive P0 check passes. Throws Errc::rejection_exhausted after
// max_tries failures.
InferenceKernel sample_synthetic_p0(Index m, Index k, const std::vector<double>& singular,
                                    std::uint64_t seed, Index max_tries = 1000,
                                    bool symmetric = false);

// Exhaustive bound study on a small kernel (m <= 12): spectral extremes over
// all minors up to size 2k, both approximation bounds, and the greedy/exact
// log-det ratio.
ApproxBoundReport approx_bound_study(const InferenceKernel& kern, Index k);

}  // namespace ndpp
