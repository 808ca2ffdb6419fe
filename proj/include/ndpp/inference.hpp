#pragma once

#include <string>

#include "ndpp/kernel.hpp"

namespace ndpp {

struct MapResult {
  IndexVec items;
  double log_det = 0.0;
  double wall_ms = 0.0;
  std::string algorithm;
};

// Incremental greedy state for L = btilde * ctilde * btilde^T. Each select()
// appends one item, maintaining for every item the marginal determinant gain
//   delta_i = det(L_{Y+i}) / det(L_Y)
// via rank-one updates; cost per selection is O(M r).
class GreedyState {
 public:
  explicit GreedyState(const InferenceKernel& k);

  // Appends item a: folds its p/q pair into the state and downdates every
  // other item's gain. Requires |delta(a)| > 0 (caller guards thresholds).
  void select(Index a);

  const std::vector<double>& delta() const { return delta_; }
  double delta(Index i) const { return delta_[i]; }
  const IndexVec& chosen() const { return chosen_; }
  bool is_chosen(Index i) const { return chosen_flag_[i] != 0; }
  // Sum of accumulated log gains; valid only while every selected gain was
  // positive (log_det_valid()).
  double log_det() const { return log_det_; }
  bool log_det_valid() const { return log_det_valid_; }

  // sum_j p_j^T q_j, which equals B_Y^T (B_Y C B_Y^T)^-1 B_Y when that
  // inverse exists.
  Mat pq_outer() const;

 private:
  const InferenceKernel* k_;
  Mat bc_;   // btilde * ctilde, rows indexed by item
  Mat bct_;  // btilde * ctilde^T
  std::vector<double> delta_;
  std::vector<std::vector<double>> p_rows_, q_rows_;
  IndexVec chosen_;
  std::vector<char> chosen_flag_;
  double log_det_ = 0.0;
  bool log_det_valid_ = true;
};

// Thrown when a selection step cannot make progress; carries whatever was
// selected before the failure so callers can surface a partial result.
class DegenerateGainError : public Error {
 public:
  DegenerateGainError(const std::string& msg, MapResult partial_result)
      : Error(Errc::degenerate_gain, msg), partial(std::move(partial_result)) {}
  MapResult partial;
};

// Greedy MAP: selects exactly size items, largest gain first, ties to the
// smallest index. Throws DegenerateGainError (with the partial selection)
// when the best available gain is <= 1e-12.
MapResult greedy_map(const InferenceKernel& k, Index size);

// Forces the items of y (in order) into the state and returns the final gain
// vector: entry i (for i not in y) is the conditioned singleton score
// det(L_{y+i})/det(L_y). Entries for i in y are stale bookkeeping values.
// Throws Errc::degenerate_conditioning if a forced gain has |delta| <= 1e-12.
std::vector<double> condition_singletons(const InferenceKernel& k, const IndexVec& y);

// Greedy with per-step uniform candidate sampling (without replacement) of
// floor((M/size)*ln 10) unchosen items; falls back to the full argmax when
// the sample would cover all remaining items.
MapResult stochastic_greedy(const InferenceKernel& k, Index size, std::uint64_t seed);

// Random-swap chain over size-k subsets, acceptance det'/(det'+det),
// nonpositive-determinant proposals rejected; returns the best state visited.
// swaps = 0 uses floor(3M/r).
MapResult mcmc_map(const InferenceKernel& k, Index size, std::uint64_t seed,
                   Index swaps = 0);

double mcmc_accept_probability(double det_new, double det_cur);

// Greedy start, then best-improvement single swaps under a floor(k^2 ln(10k))
// swap budget. Never returns a worse set than greedy.
MapResult local_search(const InferenceKernel& k, Index size, std::uint64_t seed);

// Exhaustive argmax over all size-k subsets in lexicographic order (first
// maximum kept). Throws Errc::too_large when C(M, k) > 2e6.
MapResult exact_map(const InferenceKernel& k, Index size);

// det(L_Y) of a materialized principal minor, as (sign, log|det|).
LogDet minor_logdet(const InferenceKernel& k, const IndexVec& y);

}  // namespace ndpp
