#include "ndpp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ndpp {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}  // namespace

CiValue bootstrap_mean_ci(const std::vector<double>& values, Index b, std::uint64_t seed) {
  if (values.empty()) throw Error(Errc::dimension_error, "bootstrap: empty sample");
  CiValue ci;
  double sum = 0.0;
  for (double v : values) sum += v;
  ci.value = sum / static_cast<double>(values.size());
  Rng rng(seed);
  std::vector<double> means(b);
  Index n = values.size();
  for (Index t = 0; t < b; ++t) {
    double s = 0.0;
    for (Index i = 0; i < n; ++i) s += values[rng.below(n)];
    means[t] = s / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  Index lo = static_cast<Index>(std::floor(0.025 * static_cast<double>(b - 1)));
  Index hi = static_cast<Index>(std::ceil(0.975 * static_cast<double>(b - 1)));
  ci.lo = means[lo];
  ci.hi = means[hi];
  return ci;
}

CiValue mpr(const NdppParams& p, const BasketDataset& data, std::uint64_t seed) {
  InferenceKernel kern = to_inference_kernel(p);
  Rng rng(mix_seed(seed, 0x39D2));
  std::vector<double> ranks;
  ranks.reserve(data.baskets.size());
  for (const Basket& y : data.baskets) {
    if (y.size() < 2)
      throw Error(Errc::basket_too_small, "mpr: baskets must have >= 2 items");
    Index drop = rng.below(y.size());
    Index held = y[drop];
    IndexVec rest;
    rest.reserve(y.size() - 1);
    for (Index i = 0; i < y.size(); ++i)
      if (i != drop) rest.push_back(y[i]);
    std::vector<double> delta = condition_singletons(kern, rest);
    std::vector<char> in_rest(p.m, 0);
    for (Index i : rest) in_rest[i] = 1;
    double score = delta[held];
    Index wins = 0, pool = 0;
    for (Index i = 0; i < p.m; ++i) {
      if (in_rest[i]) continue;
      ++pool;  // held-out item itself included
      if (score >= delta[i]) ++wins;
    }
    ranks.push_back(100.0 * static_cast<double>(wins) / static_cast<double>(pool));
  }
  return bootstrap_mean_ci(ranks, 1000, mix_seed(seed, 0xB001));
}

namespace {

// Mann-Whitney AUC with midrank ties over two score lists.
double auc_from_scores(const std::vector<double>& pos, const std::vector<double>& neg) {
  struct Entry {
    double s;
    int label;
  };
  std::vector<Entry> all;
  all.reserve(pos.size() + neg.size());
  for (double s : pos) all.push_back({s, 1});
  for (double s : neg) all.push_back({s, 0});
  std::stable_sort(all.begin(), all.end(),
                   [](const Entry& a, const Entry& b) { return a.s < b.s; });
  double rank_sum_pos = 0.0;
  Index i = 0;
  while (i < all.size()) {
    Index j = i;
    while (j < all.size() && all[j].s == all[i].s) ++j;
    double midrank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
    for (Index t = i; t < j; ++t)
      if (all[t].label == 1) rank_sum_pos += midrank;
    i = j;
  }
  double n1 = static_cast<double>(pos.size());
  double n2 = static_cast<double>(neg.size());
  double u = rank_sum_pos - n1 * (n1 + 1.0) / 2.0;
  return u / (n1 * n2);
}

}  // namespace

CiValue auc_discrimination(const NdppParams& p, const BasketDataset& data,
                           std::uint64_t seed, double eps) {
  double z = log_normalizer(p);
  Rng rng(mix_seed(seed, 0xAC17));
  Index n = data.baskets.size();
  std::vector<double> pos(n), neg(n);
  auto score = [&](const Basket& y) {
    try {
      return subset_logdet(p, y, eps) - z;
    } catch (const Error& e) {
      if (e.code() == Errc::non_positive_minor) return kNegInf;
      throw;
    }
  };
  for (Index i = 0; i < n; ++i) {
    const Basket& y = data.baskets[i];
    pos[i] = score(y);
    Basket rand_y = rng.sample_without_replacement(p.m, y.size());
    neg[i] = score(rand_y);
  }
  CiValue ci;
  ci.value = auc_from_scores(pos, neg);
  // Bootstrap over baskets: resample (observed, random) score pairs together.
  Rng brng(mix_seed(seed, 0xB002));
  Index b = 1000;
  std::vector<double> stats(b);
  std::vector<double> rp(n), rn(n);
  for (Index t = 0; t < b; ++t) {
    for (Index i = 0; i < n; ++i) {
      Index j = brng.below(n);
      rp[i] = pos[j];
      rn[i] = neg[j];
    }
    stats[t] = auc_from_scores(rp, rn);
  }
  std::sort(stats.begin(), stats.end());
  Index lo = static_cast<Index>(std::floor(0.025 * static_cast<double>(b - 1)));
  Index hi = static_cast<Index>(std::ceil(0.975 * static_cast<double>(b - 1)));
  ci.lo = stats[lo];
  ci.hi = stats[hi];
  return ci;
}

double relative_logdet_error(double candidate_logdet, double reference_logdet) {
  if (std::fabs(reference_logdet) < 1e-300)
    throw Error(Errc::zero_reference, "relative_logdet_error: reference ~ 0");
  return std::fabs((reference_logdet - candidate_logdet) / reference_logdet);
}

InferenceKernel sample_synthetic_p0(Index m, Index k, const std::vector<double>& singular,
                                    std::uint64_t seed, Index max_tries, bool symmetric) {
  if (singular.size() != k)
    throw Error(Errc::dimension_error, "sample_synthetic_p0: need k singular values");
  if (k > m) throw Error(Errc::dimension_error, "sample_synthetic_p0: k > m");
  Rng rng(mix_seed(seed, 0x57A7));
  for (Index t = 0; t < max_tries; ++t) {
    Mat v1 = random_orthonormal(m, k, rng.next_u64());
    Mat v2 = symmetric ? v1 : random_orthonormal(m, k, rng.next_u64());
    // L = V1 diag(s) V2^T in product form: btilde = [V1|V2],
    // ctilde = [[0, diag(s)], [0, 0]].
    InferenceKernel kern;
    kern.m = m;
    kern.r = 2 * k;
    kern.btilde = Mat(m, 2 * k);
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < k; ++j) {
        kern.btilde(i, j) = v1(i, j);
        kern.btilde(i, k + j) = v2(i, j);
      }
    kern.ctilde = Mat(2 * k, 2 * k);
    for (Index j = 0; j < k; ++j) kern.ctilde(j, k + j) = singular[j];
    if (check_p0(materialize(kern))) return kern;
  }
  throw Error(Errc::rejection_exhausted, "sample_synthetic_p0: no P0 draw within budget");
}

ApproxBoundReport approx_bound_study(const InferenceKernel& kern, Index k) {
  if (kern.m > 12) throw Error(Errc::too_large, "approx_bound_study: m > 12");
  if (k == 0 || k > kern.m)
    throw Error(Errc::dimension_error, "approx_bound_study: bad cardinality");
  Mat l = materialize(kern);
  Index m = kern.m;
  Index cap = std::min<Index>(2 * k, m);

  ApproxBoundReport r;
  r.sigma_min = std::numeric_limits<double>::infinity();
  r.sigma_max = 0.0;
  for (std::uint32_t mask = 1; mask < (1u << m); ++mask) {
    Index size = static_cast<Index>(__builtin_popcount(mask));
    if (size > cap) continue;
    IndexVec idx;
    idx.reserve(size);
    for (Index i = 0; i < m; ++i)
      if (mask & (1u << i)) idx.push_back(i);
    Mat minor(size, size);
    for (Index a = 0; a < size; ++a)
      for (Index b = 0; b < size; ++b) minor(a, b) = l(idx[a], idx[b]);
    std::vector<double> sv = singular_values(minor);
    for (double s : sv) {
      r.sigma_max = std::max(r.sigma_max, s);
      r.sigma_min = std::min(r.sigma_min, s);
    }
  }

  double smin = r.sigma_min, smax = r.sigma_max;
  r.kappa = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
  constexpr double kNum = 4.0 * (1.0 - 0.77880078307140486825);  // 4(1 - e^{-1/4})
  if (smin > 1.0) {
    r.log_kappa_ratio = std::log(smax) / std::log(smin);
    r.thm2_bound = kNum / (2.0 * r.log_kappa_ratio - 1.0);
  } else {
    r.log_kappa_ratio = kNaN;
    r.thm2_bound = kNaN;
  }
  double log_kappa = std::log(r.kappa);
  r.cor1_multiplier = std::isinf(log_kappa) ? 0.0 : kNum / (2.0 * log_kappa + 1.0);
  // sigma_min = 0 drives the additive term to +inf (the bound is vacuous);
  // the multiplier is < 1 so there is no 0 * inf.
  r.cor1_additive = (1.0 - r.cor1_multiplier) * static_cast<double>(k) *
                    (1.0 - (smin > 0.0 ? std::log(smin) : kNegInf));

  MapResult g = greedy_map(kern, k);
  MapResult x = exact_map(kern, k);
  r.greedy_logdet = g.log_det;
  r.exact_logdet = x.log_det;
  r.greedy_ratio = g.log_det / x.log_det;
  return r;
}

}  // namespace ndpp
