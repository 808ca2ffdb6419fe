#include "ndpp/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace ndpp {

namespace {

constexpr double kGainTol = 1e-12;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void check_size(const InferenceKernel& k, Index size) {
  if (size == 0 || size > k.m)
    throw Error(Errc::dimension_error, "map: size must be in [1, m]");
}

}  // namespace

GreedyState::GreedyState(const InferenceKernel& k) : k_(&k) {
  if (k.btilde.rows != k.m || k.btilde.cols != k.r || k.ctilde.rows != k.r ||
      k.ctilde.cols != k.r)
    throw Error(Errc::dimension_error, "GreedyState: kernel shape mismatch");
  bc_ = matmul(k.btilde, k.ctilde);
  bct_ = matmul_a_bt(k.btilde, k.ctilde);
  delta_.resize(k.m);
  chosen_flag_.assign(k.m, 0);
  // Initial gains are the kernel diagonal: delta_i = b_i C b_i^T.
  for (Index i = 0; i < k.m; ++i) {
    const double* bci = bc_.row(i);
    const double* bi = k.btilde.row(i);
    double acc = 0.0;
    for (Index s = 0; s < k.r; ++s) acc += bci[s] * bi[s];
    delta_[i] = acc;
  }
}

void GreedyState::select(Index a) {
  if (a >= k_->m) throw Error(Errc::dimension_error, "select: item out of range");
  if (chosen_flag_[a]) throw Error(Errc::dimension_error, "select: item already chosen");
  Index r = k_->r;
  double da = delta_[a];

  // p = (b_a - b_a C^T Q^T P) / delta_a ; q = b_a - b_a C P^T Q.
  // b_a C^T Q^T P = sum_j <bct_a, q_j> p_j and symmetrically for q.
  const double* ba = k_->btilde.row(a);
  const double* bca = bc_.row(a);
  const double* bcta = bct_.row(a);
  std::vector<double> p(ba, ba + r), q(ba, ba + r);
  for (Index j = 0; j < p_rows_.size(); ++j) {
    const double* pj = p_rows_[j].data();
    const double* qj = q_rows_[j].data();
    double cq = 0.0, cp = 0.0;
    for (Index s = 0; s < r; ++s) {
      cq += bcta[s] * qj[s];
      cp += bca[s] * pj[s];
    }
    for (Index s = 0; s < r; ++s) {
      p[s] -= cq * pj[s];
      q[s] -= cp * qj[s];
    }
  }
  for (Index s = 0; s < r; ++s) p[s] /= da;

  if (da > 0.0 && log_det_valid_)
    log_det_ += std::log(da);
  else
    log_det_valid_ = false;

  // Downdate all remaining gains: delta_i -= (b_i C p^T)(b_i C^T q^T).
  for (Index i = 0; i < k_->m; ++i) {
    if (chosen_flag_[i]) continue;
    const double* bci = bc_.row(i);
    const double* bcti = bct_.row(i);
    double xp = 0.0, yq = 0.0;
    for (Index s = 0; s < r; ++s) {
      xp += bci[s] * p[s];
      yq += bcti[s] * q[s];
    }
    delta_[i] -= xp * yq;
  }

  p_rows_.push_back(std::move(p));
  q_rows_.push_back(std::move(q));
  chosen_.push_back(a);
  chosen_flag_[a] = 1;
}

Mat GreedyState::pq_outer() const {
  Index r = k_->r;
  Mat s(r, r);
  for (Index j = 0; j < p_rows_.size(); ++j) {
    const double* pj = p_rows_[j].data();
    const double* qj = q_rows_[j].data();
    for (Index x = 0; x < r; ++x)
      for (Index y = 0; y < r; ++y) s(x, y) += pj[x] * qj[y];
  }
  return s;
}

MapResult greedy_map(const InferenceKernel& k, Index size) {
  check_size(k, size);
  auto t0 = Clock::now();
  GreedyState st(k);
  for (Index step = 0; step < size; ++step) {
    Index best = k.m;
    double best_gain = -std::numeric_limits<double>::infinity();
    for (Index i = 0; i < k.m; ++i) {
      if (st.is_chosen(i)) continue;
      if (st.delta(i) > best_gain) {
        best_gain = st.delta(i);
        best = i;
      }
    }
    if (best_gain <= kGainTol) {
      MapResult partial;
      partial.items = st.chosen();
      partial.log_det = st.log_det_valid() ? st.log_det() : kNegInf;
      partial.wall_ms = ms_since(t0);
      partial.algorithm = "greedy";
      throw DegenerateGainError("greedy_map: best marginal gain <= 1e-12", partial);
    }
    st.select(best);
  }
  MapResult r;
  r.items = st.chosen();
  r.log_det = st.log_det();
  r.wall_ms = ms_since(t0);
  r.algorithm = "greedy";
  return r;
}

std::vector<double> condition_singletons(const InferenceKernel& k, const IndexVec& y) {
  for (Index i : y)
    if (i >= k.m) throw Error(Errc::dimension_error, "condition_singletons: item out of range");
  GreedyState st(k);
  for (Index a : y) {
    if (st.is_chosen(a))
      throw Error(Errc::dimension_error, "condition_singletons: duplicate item");
    if (std::fabs(st.delta(a)) <= kGainTol)
      throw Error(Errc::degenerate_conditioning,
                  "condition_singletons: forced gain too close to zero");
    st.select(a);
  }
  return st.delta();
}

MapResult stochastic_greedy(const InferenceKernel& k, Index size, std::uint64_t seed) {
  check_size(k, size);
  auto t0 = Clock::now();
  Rng rng(seed);
  // floor((M/k) * ln 10) candidates per step, sampled fresh without
  // replacement from the unchosen items.
  Index sample =
      static_cast<Index>(std::floor(static_cast<double>(k.m) / static_cast<double>(size) *
                                    std::log(10.0)));
  GreedyState st(k);
  IndexVec unchosen(k.m);
  for (Index i = 0; i < k.m; ++i) unchosen[i] = i;
  for (Index step = 0; step < size; ++step) {
    Index best = k.m;
    double best_gain = -std::numeric_limits<double>::infinity();
    if (sample >= unchosen.size()) {
      for (Index i : unchosen)
        if (st.delta(i) > best_gain) {
          best_gain = st.delta(i);
          best = i;
        }
    } else {
      // Partial Fisher-Yates over a scratch copy; candidates surface in draw
      // order but the argmax below is order-independent (strict > with the
      // smallest index winning ties via a final min pass).
      IndexVec pool = unchosen;
      for (Index t = 0; t < sample; ++t) {
        Index j = t + rng.below(pool.size() - t);
        std::swap(pool[t], pool[j]);
      }
      for (Index t = 0; t < sample; ++t) {
        Index i = pool[t];
        if (st.delta(i) > best_gain || (st.delta(i) == best_gain && i < best)) {
          best_gain = st.delta(i);
          best = i;
        }
      }
    }
    if (best_gain <= kGainTol) {
      MapResult partial;
      partial.items = st.chosen();
      partial.log_det = st.log_det_valid() ? st.log_det() : kNegInf;
      partial.wall_ms = ms_since(t0);
      partial.algorithm = "stochastic_greedy";
      throw DegenerateGainError("stochastic_greedy: best sampled gain <= 1e-12", partial);
    }
    st.select(best);
    unchosen.erase(std::find(unchosen.begin(), unchosen.end(), best));
  }
  MapResult r;
  r.items = st.chosen();
  r.log_det = st.log_det();
  r.wall_ms = ms_since(t0);
  r.algorithm = "stochastic_greedy";
  return r;
}

LogDet minor_logdet(const InferenceKernel& k, const IndexVec& y) {
  Mat by = row_gather(k.btilde, y);
  Mat ly = matmul_a_bt(matmul(by, k.ctilde), by);
  return lu_logdet(ly);
}

double mcmc_accept_probability(double det_new, double det_cur) {
  if (det_new <= 0.0) return 0.0;
  if (det_cur <= 0.0) return 1.0;
  return det_new / (det_new + det_cur);
}

MapResult mcmc_map(const InferenceKernel& k, Index size, std::uint64_t seed, Index swaps) {
  check_size(k, size);
  auto t0 = Clock::now();
  Rng rng(seed);
  if (swaps == 0)
    swaps = static_cast<Index>(std::floor(3.0 * static_cast<double>(k.m) /
                                          static_cast<double>(k.r)));

  IndexVec cur = rng.sample_without_replacement(k.m, size);
  std::vector<char> in_cur(k.m, 0);
  for (Index i : cur) in_cur[i] = 1;
  IndexVec out;
  out.reserve(k.m - size);
  for (Index i = 0; i < k.m; ++i)
    if (!in_cur[i]) out.push_back(i);

  auto signed_det = [&](const IndexVec& y) {
    LogDet ld = minor_logdet(k, y);
    if (ld.sign == 0) return 0.0;
    return ld.sign * std::exp(ld.log_abs);
  };

  double det_cur = signed_det(cur);
  IndexVec best = cur;
  double best_det = det_cur;

  for (Index t = 0; t < swaps; ++t) {
    if (out.empty()) break;  // size == m: nothing to swap
    Index ii = rng.below(cur.size());
    Index jj = rng.below(out.size());
    IndexVec prop = cur;
    prop[ii] = out[jj];
    double det_prop = signed_det(prop);
    if (det_prop <= 0.0) continue;  // rejected outright
    double accept = mcmc_accept_probability(det_prop, det_cur);
    if (rng.uniform01() < accept) {
      std::swap(cur[ii], out[jj]);
      det_cur = det_prop;
      if (det_cur > best_det) {
        best_det = det_cur;
        best = cur;
      }
    }
  }

  MapResult r;
  r.items = best;
  std::sort(r.items.begin(), r.items.end());
  r.log_det = best_det > 0.0 ? std::log(best_det) : kNegInf;
  r.wall_ms = ms_since(t0);
  r.algorithm = "mcmc";
  return r;
}

MapResult local_search(const InferenceKernel& k, Index size, std::uint64_t seed) {
  (void)seed;  // kept for interface symmetry; the search is deterministic
  check_size(k, size);
  auto t0 = Clock::now();
  MapResult greedy = greedy_map(k, size);

  Index budget = static_cast<Index>(
      std::floor(static_cast<double>(size) * static_cast<double>(size) *
                 std::log(10.0 * static_cast<double>(size))));
  // A swap must clear LU recomputation noise, not just strict inequality.
  constexpr double kImprove = 1e-9;

  IndexVec cur = greedy.items;
  bool moved = false;
  for (Index t = 0; t < budget; ++t) {
    double best_ratio = 1.0 + kImprove;
    Index best_pos = size, best_j = k.m;
    for (Index pos = 0; pos < cur.size(); ++pos) {
      IndexVec rest;
      rest.reserve(cur.size() - 1);
      for (Index s = 0; s < cur.size(); ++s)
        if (s != pos) rest.push_back(cur[s]);
      std::vector<double> delta;
      try {
        delta = condition_singletons(k, rest);
      } catch (const Error& e) {
        if (e.code() == Errc::degenerate_conditioning) continue;
        throw;
      }
      double self = delta[cur[pos]];
      if (self <= kGainTol) continue;
      for (Index j = 0; j < k.m; ++j) {
        bool in_cur_set = false;
        for (Index s : cur)
          if (s == j) {
            in_cur_set = true;
            break;
          }
        if (in_cur_set) continue;
        double ratio = delta[j] / self;
        if (ratio > best_ratio) {
          best_ratio = ratio;
          best_pos = pos;
          best_j = j;
        }
      }
    }
    if (best_pos == size) break;  // local optimum
    cur[best_pos] = best_j;
    moved = true;
  }

  if (!moved) {
    greedy.algorithm = "local_search";
    greedy.wall_ms = ms_since(t0);
    return greedy;
  }
  LogDet ld = minor_logdet(k, cur);
  MapResult r;
  r.items = cur;
  r.log_det = ld.sign > 0 ? ld.log_abs : kNegInf;
  r.wall_ms = ms_since(t0);
  r.algorithm = "local_search";
  return r;
}

MapResult exact_map(const InferenceKernel& k, Index size) {
  check_size(k, size);
  auto t0 = Clock::now();
  // C(m, size) with early bailout against the enumeration guard.
  double combos = 1.0;
  for (Index i = 0; i < size; ++i) {
    combos *= static_cast<double>(k.m - i) / static_cast<double>(i + 1);
    if (combos > 2e6) throw Error(Errc::too_large, "exact_map: C(m,k) > 2e6");
  }

  Mat l = materialize(k);
  IndexVec y(size);
  for (Index i = 0; i < size; ++i) y[i] = i;

  auto next_combination = [&](IndexVec& comb) {
    Index i = size;
    while (i > 0) {
      --i;
      if (comb[i] != i + k.m - size) {
        ++comb[i];
        for (Index j = i + 1; j < size; ++j) comb[j] = comb[j - 1] + 1;
        return true;
      }
    }
    return false;
  };

  IndexVec best;
  int best_sign = 0;
  double best_log = kNegInf;
  Mat minor(size, size);
  do {
    for (Index a = 0; a < size; ++a)
      for (Index b = 0; b < size; ++b) minor(a, b) = l(y[a], y[b]);
    LogDet ld = lu_logdet(minor);
    // Lexicographic order plus strict improvement keeps the first maximum;
    // nonpositive determinants never displace a positive one.
    bool better;
    if (best.empty()) {
      better = true;
    } else if (ld.sign > 0) {
      better = best_sign <= 0 || ld.log_abs > best_log;
    } else {
      better = false;
    }
    if (better) {
      best = y;
      best_sign = ld.sign;
      best_log = ld.log_abs;
    }
  } while (next_combination(y));

  MapResult r;
  r.items = best;
  r.log_det = best_sign > 0 ? best_log : kNegInf;
  r.wall_ms = ms_since(t0);
  r.algorithm = "exact";
  return r;
}

}  // namespace ndpp
