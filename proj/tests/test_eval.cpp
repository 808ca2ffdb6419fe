#include <cmath>
#include <limits>

#include "doctest.h"
#include "ndpp/eval.hpp"
#include "support.hpp"

using namespace ndpp;
using namespace testsup;

namespace {

const double kNan = std::numeric_limits<double>::quiet_NaN();
const double kInf = std::numeric_limits<double>::infinity();
const double kThm2Flat = 4.0 * (1.0 - std::exp(-0.25));  // 0.88479686771...

NdppParams tied_model(Index m, Index k, const Mat& v) {
  NdppParams p;
  p.m = m;
  p.k = k;
  p.tied = true;
  p.v = v;
  p.d = Mat(k, k);
  return p;
}

BasketDataset dataset(Index m, BasketList baskets) {
  BasketDataset d;
  d.m = m;
  d.baskets = std::move(baskets);
  d.recompute_mu();
  return d;
}

InferenceKernel scaled_identity_kernel(Index m, double c) {
  InferenceKernel k;
  k.m = m;
  k.r = m;
  k.btilde = Mat::identity(m);
  k.ctilde = c * Mat::identity(m);
  return k;
}

}  // namespace

TEST_CASE("bootstrap ci brackets the mean") {
  std::vector<double> flat(25, 4.0);
  CiValue c = bootstrap_mean_ci(flat, 1000, 1);
  CHECK(c.value == doctest::Approx(4.0));
  CHECK(c.lo == doctest::Approx(4.0));
  CHECK(c.hi == doctest::Approx(4.0));

  Rng rng(3);
  std::vector<double> vals;
  for (int i = 0; i < 60; ++i) vals.push_back(rng.gaussian());
  CiValue ci = bootstrap_mean_ci(vals, 1000, 2);
  CHECK(ci.lo <= ci.value);
  CHECK(ci.value <= ci.hi);
  CHECK(ci.hi - ci.lo < 1.5);
  CiValue again = bootstrap_mean_ci(vals, 1000, 2);
  CHECK(again.lo == ci.lo);
  CHECK(again.hi == ci.hi);
}

TEST_CASE("mpr is 100 when the held-out item ranks strictly top") {
  // items 0 and 1 dominate, everything else is noise
  Mat v(6, 2);
  v(0, 0) = 2.0;
  v(1, 1) = 2.0;
  for (Index i = 2; i < 6; ++i) {
    v(i, 0) = 0.01;
    v(i, 1) = 0.005 * double(i);
  }
  NdppParams p = tied_model(6, 2, v);
  BasketDataset d = dataset(6, BasketList(8, Basket{0, 1}));
  CiValue r = mpr(p, d, 5);
  CHECK(r.value == doctest::Approx(100.0));
  CHECK(r.lo == doctest::Approx(100.0));
  CHECK(r.hi == doctest::Approx(100.0));
}

TEST_CASE("mpr counts ties as hits") {
  // identity kernel: every conditioned score is equal, so PR is always 100
  NdppParams p = tied_model(4, 4, Mat::identity(4));
  BasketDataset d = dataset(4, BasketList(6, Basket{0, 1}));
  CiValue r = mpr(p, d, 9);
  CHECK(r.value == doctest::Approx(100.0));
}

TEST_CASE("mpr hand-computed on a diagonal kernel") {
  // diag(3,2,1) with basket {1,2}: either held-out item beats exactly one
  // of its two-candidate pool, so every PR is 50
  Mat v(3, 1);
  v(0, 0) = std::sqrt(3.0);
  v(1, 0) = std::sqrt(2.0);
  v(2, 0) = 1.0;
  NdppParams p = tied_model(3, 1, v);
  // diagonal of v v^T is (3,2,1) but conditioning on a rank-1 kernel
  // degenerates, so use k=3 with orthogonal rows instead
  Mat v3(3, 3);
  v3(0, 0) = std::sqrt(3.0);
  v3(1, 1) = std::sqrt(2.0);
  v3(2, 2) = 1.0;
  p = tied_model(3, 3, v3);
  BasketDataset d = dataset(3, BasketList(10, Basket{1, 2}));
  CiValue r = mpr(p, d, 3);
  CHECK(r.value == doctest::Approx(50.0));
  CHECK(r.lo == doctest::Approx(50.0));
  CHECK(r.hi == doctest::Approx(50.0));
}

TEST_CASE("mpr is invariant under item relabeling") {
  NdppParams p = random_params(7, 3, true, 31);
  BasketDataset d = dataset(7, {{0, 1}, {2, 3, 4}, {5, 6}, {1, 4}, {0, 6, 3}});
  CiValue base = mpr(p, d, 12);

  IndexVec perm{3, 0, 6, 2, 5, 1, 4};  // new label of each old item
  NdppParams q = p;
  for (Index i = 0; i < 7; ++i)
    for (Index j = 0; j < 3; ++j) q.v(perm[i], j) = p.v(i, j);
  BasketList relabeled;
  for (const Basket& y : d.baskets) {
    Basket z;
    for (Index i : y) z.push_back(perm[i]);
    relabeled.push_back(z);
  }
  CiValue moved = mpr(q, dataset(7, relabeled), 12);
  CHECK(moved.value == base.value);
  CHECK(moved.lo == base.lo);
  CHECK(moved.hi == base.hi);
}

TEST_CASE("mpr rejects single-item baskets") {
  NdppParams p = tied_model(3, 3, Mat::identity(3));
  BasketDataset d = dataset(3, {{0}});
  try {
    mpr(p, d, 0);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::basket_too_small);
  }
}

TEST_CASE("auc separates a planted model from noise") {
  Mat v(20, 2);
  v(0, 0) = 2.0;
  v(1, 1) = 2.0;
  v(2, 0) = 1.4;
  v(2, 1) = 1.4;
  Rng rng(8);
  for (Index i = 3; i < 20; ++i) {
    v(i, 0) = 0.05 * rng.uniform01();
    v(i, 1) = 0.05 * rng.uniform01();
  }
  NdppParams p = tied_model(20, 2, v);
  BasketList obs;
  for (int t = 0; t < 10; ++t) {
    obs.push_back({0, 1});
    obs.push_back({0, 2});
    obs.push_back({1, 2});
  }
  CiValue r = auc_discrimination(p, dataset(20, obs), 0);
  CHECK(r.value == doctest::Approx(1.0));
  CHECK(r.lo <= r.value);
  CHECK(r.value <= r.hi);
}

TEST_CASE("auc is exactly half when every subset scores the same") {
  // identity kernel: every size-s subset has the same score, and random
  // baskets are size-matched, so the two score multisets coincide
  NdppParams p = tied_model(6, 6, Mat::identity(6));
  BasketDataset d = dataset(6, {{0, 1}, {2, 3}, {1, 4, 5}, {0, 3, 5}, {2, 4}});
  CiValue r = auc_discrimination(p, d, 17);
  CHECK(r.value == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("auc hits zero when the observed basket scores worst") {
  Mat v(5, 2);
  v(0, 0) = 2.0;
  v(1, 1) = 2.0;
  v(2, 0) = 1.3;
  v(2, 1) = -1.3;
  v(3, 0) = 1e-4;
  v(4, 1) = 1e-4;
  NdppParams p = tied_model(5, 2, v);
  BasketDataset d = dataset(5, {{3, 4}});  // the weakest pair in the catalog
  int zero_hits = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CiValue r = auc_discrimination(p, d, seed);
    CHECK(r.value <= 0.5);  // ties only when the random draw IS {3,4}
    if (r.value == 0.0) ++zero_hits;
  }
  CHECK(zero_hits >= 8);
}

TEST_CASE("relative logdet error pinned values") {
  CHECK(relative_logdet_error(10.0, 10.0) == 0.0);
  CHECK(relative_logdet_error(9.0, 10.0) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(relative_logdet_error(11.0, 10.0) == doctest::Approx(0.1).epsilon(1e-12));
  try {
    relative_logdet_error(1.0, 0.0);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::zero_reference);
  }
}

TEST_CASE("synthetic sampler honors the requested spectrum") {
  InferenceKernel k = sample_synthetic_p0(5, 3, {3, 2, 1}, 1, 20000);
  CHECK(k.m == 5);
  CHECK(k.r == 6);
  Mat l = materialize(k);
  CHECK(check_p0(l));
  auto sv = singular_values(l);
  REQUIRE(sv.size() == 5);
  CHECK(sv[0] == doctest::Approx(3.0).epsilon(1e-8));
  CHECK(sv[1] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(sv[2] == doctest::Approx(1.0).epsilon(1e-8));
  // zeros come back as sqrt(eigen noise) through the Gram route
  CHECK(std::fabs(sv[3]) <= 1e-6);
  CHECK(std::fabs(sv[4]) <= 1e-6);
}

TEST_CASE("symmetric sampler accepts its first draw") {
  InferenceKernel k = sample_synthetic_p0(6, 3, {3, 2, 1}, 9, 1, true);
  Mat l = materialize(k);
  CHECK(max_abs_diff(l, transpose(l)) <= 1e-10);
  CHECK(check_p0(l));
}

TEST_CASE("sampler reports exhaustion") {
  try {
    sample_synthetic_p0(5, 2, {3, 1}, 0, 0);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::rejection_exhausted);
  }
  try {
    sample_synthetic_p0(5, 2, {3, 1}, 0, 10, false);
  } catch (const Error& e) {
    // a tiny budget may legitimately exhaust; anything else is a bug
    CHECK(e.code() == Errc::rejection_exhausted);
  }
}

TEST_CASE("bound study on a flat-spectrum kernel") {
  ApproxBoundReport r = approx_bound_study(scaled_identity_kernel(5, 1.5), 2);
  CHECK(r.sigma_min == doctest::Approx(1.5).epsilon(1e-10));
  CHECK(r.sigma_max == doctest::Approx(1.5).epsilon(1e-10));
  CHECK(r.kappa == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(r.log_kappa_ratio == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(r.thm2_bound == doctest::Approx(kThm2Flat).epsilon(1e-10));
  CHECK(r.cor1_multiplier == doctest::Approx(kThm2Flat).epsilon(1e-10));
  double want_add = (1.0 - r.cor1_multiplier) * 2.0 * (1.0 - std::log(1.5));
  CHECK(r.cor1_additive == doctest::Approx(want_add).epsilon(1e-10));
  CHECK(r.greedy_ratio == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(r.greedy_ratio >= r.thm2_bound);
}

TEST_CASE("bound study gates thm2 when sigma_min drops to one or below") {
  InferenceKernel k = scaled_identity_kernel(4, 1.0);
  k.ctilde(0, 0) = 2.0;
  k.ctilde(1, 1) = 0.5;  // sigma_min = 0.5
  ApproxBoundReport r = approx_bound_study(k, 1);
  CHECK(r.sigma_min == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(r.sigma_max == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(std::isnan(r.thm2_bound));
  CHECK(std::isnan(r.log_kappa_ratio));
  CHECK(!std::isnan(r.cor1_multiplier));
  CHECK(!std::isnan(r.cor1_additive));
  CHECK(r.greedy_ratio == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("bound study rejects kernels too large to enumerate") {
  try {
    approx_bound_study(scaled_identity_kernel(13, 2.0), 2);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::too_large);
  }
}

TEST_CASE("approximation bounds hold on full-rank psd kernels") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    InferenceKernel k =
        sample_synthetic_p0(5, 5, {4.0, 3.0, 2.5, 1.8, 1.3}, seed, 5, true);
    ApproxBoundReport r = approx_bound_study(k, 2);
    // interlacing keeps every minor's spectrum inside [1.3, 4]
    CHECK(r.sigma_min >= 1.3 - 1e-8);
    CHECK(r.sigma_max <= 4.0 + 1e-8);
    REQUIRE(r.sigma_min > 1.0);
    CHECK(r.greedy_ratio >= r.thm2_bound - 1e-10);
    CHECK(r.greedy_logdet >=
          r.cor1_multiplier * r.exact_logdet - r.cor1_additive - 1e-10);
  }
}

TEST_CASE("additive bound stays vacuously valid on rank-deficient kernels") {
  InferenceKernel k = sample_synthetic_p0(5, 3, {3, 2, 1}, 1, 20000);
  ApproxBoundReport r = approx_bound_study(k, 2);
  CHECK(r.sigma_min <= 1e-8);  // size-4 minors of a rank-3 kernel are singular
  CHECK(std::isnan(r.thm2_bound));
  CHECK(r.cor1_additive == kInf);
  CHECK(!std::isnan(r.cor1_multiplier));
  CHECK(r.cor1_multiplier < 1.0);
  CHECK(r.greedy_logdet >=
        r.cor1_multiplier * r.exact_logdet - r.cor1_additive);
  (void)kNan;
}
