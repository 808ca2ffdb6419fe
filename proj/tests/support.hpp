// Shared test oracles: deliberately naive reference implementations that the
// fast library paths are checked against.
#pragma once

#include <cmath>
#include <vector>

#include "ndpp/eval.hpp"
#include "ndpp/inference.hpp"
#include "ndpp/kernel.hpp"
#include "ndpp/likelihood.hpp"

namespace testsup {

using namespace ndpp;

// Cofactor-expansion determinant, O(n!), for n <= 8.
inline double cofactor_det(const Mat& m) {
  Index n = m.rows;
  if (n == 0) return 1.0;
  if (n == 1) return m(0, 0);
  double det = 0.0;
  double sign = 1.0;
  for (Index j = 0; j < n; ++j) {
    Mat sub(n - 1, n - 1);
    for (Index r = 1; r < n; ++r) {
      Index cc = 0;
      for (Index c = 0; c < n; ++c) {
        if (c == j) continue;
        sub(r - 1, cc++) = m(r, c);
      }
    }
    det += sign * m(0, j) * cofactor_det(sub);
    sign = -sign;
  }
  return det;
}

inline Mat principal_minor(const Mat& l, const IndexVec& y) {
  Mat s(y.size(), y.size());
  for (Index a = 0; a < y.size(); ++a)
    for (Index b = 0; b < y.size(); ++b) s(a, b) = l(y[a], y[b]);
  return s;
}

// Random dense parameters with entries scaled to keep minors well away from
// zero crossings.
inline NdppParams random_params(Index m, Index k, bool tied, std::uint64_t seed,
                                double scale = 1.0) {
  NdppParams p;
  p.m = m;
  p.k = k;
  p.tied = tied;
  Rng rng(seed);
  p.v = Mat(m, k);
  for (double& x : p.v.a) x = scale * (rng.uniform01() - 0.2);
  if (!tied) {
    p.b = Mat(m, k);
    for (double& x : p.b.a) x = scale * (rng.uniform01() - 0.2);
  }
  p.d = Mat(k, k);
  for (double& x : p.d.a) x = rng.gaussian();
  return p;
}

// Central-difference gradient of the training objective w.r.t. every stored
// parameter entry. Step h_i = base * (1 + |theta_i|).
struct FdGrads {
  Mat gv, gb, gd;
};

inline FdGrads fd_gradient(const NdppParams& p0, const BasketList& batch,
                           const std::vector<double>& mu, double eps, double base = 1e-6) {
  NdppParams p = p0;
  auto eval = [&]() {
    return objective_only(p, batch, mu, eps).objective;
  };
  auto diff = [&](double& slot) {
    double orig = slot;
    double h = base * (1.0 + std::fabs(orig));
    slot = orig + h;
    double fp = eval();
    slot = orig - h;
    double fm = eval();
    slot = orig;
    return (fp - fm) / (2.0 * h);
  };
  FdGrads g;
  g.gv = Mat(p.m, p.k);
  for (Index i = 0; i < p.v.a.size(); ++i) g.gv.a[i] = diff(p.v.a[i]);
  g.gb = Mat(p.m, p.k);
  if (!p.tied)
    for (Index i = 0; i < p.b.a.size(); ++i) g.gb.a[i] = diff(p.b.a[i]);
  g.gd = Mat(p.k, p.k);
  for (Index i = 0; i < p.d.a.size(); ++i) g.gd.a[i] = diff(p.d.a[i]);
  return g;
}

// Conditioned singleton scores through the dense Schur complement:
// (L_dd - L_dy L_yy^-1 L_yd)_ii for i outside y.
inline std::vector<double> schur_condition_oracle(const Mat& l, const IndexVec& y) {
  Index m = l.rows;
  std::vector<char> in_y(m, 0);
  for (Index i : y) in_y[i] = 1;
  IndexVec rest;
  for (Index i = 0; i < m; ++i)
    if (!in_y[i]) rest.push_back(i);
  std::vector<double> out(m, 0.0);
  if (y.empty()) {
    for (Index i : rest) out[i] = l(i, i);
    return out;
  }
  Mat lyy = principal_minor(l, y);
  Mat lyr(y.size(), rest.size());
  Mat lry(rest.size(), y.size());
  for (Index a = 0; a < y.size(); ++a)
    for (Index b = 0; b < rest.size(); ++b) {
      lyr(a, b) = l(y[a], rest[b]);
      lry(b, a) = l(rest[b], y[a]);
    }
  Mat x = solve(lyy, lyr);          // L_yy^-1 L_yr
  Mat prod = matmul(lry, x);        // L_ry L_yy^-1 L_yr
  for (Index b = 0; b < rest.size(); ++b)
    out[rest[b]] = l(rest[b], rest[b]) - prod(b, b);
  return out;
}

// Max relative mismatch max_i |a_i - b_i| / (atol + rtol * |b_i|) style check.
inline bool close(double a, double b, double rtol, double atol = 0.0) {
  return std::fabs(a - b) <= atol + rtol * std::fabs(b);
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
  double v = 0.0;
  for (Index i = 0; i < a.a.size(); ++i) v = std::max(v, std::fabs(a.a[i] - b.a[i]));
  return v;
}

}  // namespace testsup
