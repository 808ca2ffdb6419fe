#include "ndpp/likelihood.hpp"

#include <cmath>
#include <limits>

namespace ndpp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_params(const NdppParams& p) {
  const Mat& b = p.bmat();
  if (p.v.rows != p.m || p.v.cols != p.k || b.rows != p.m || b.cols != p.k ||
      p.d.rows != p.k || p.d.cols != p.k)
    throw Error(Errc::dimension_error, "likelihood: factor shape mismatch");
}

void check_basket(const NdppParams& p, const Basket& y) {
  if (y.empty()) throw Error(Errc::dimension_error, "subset_logdet: empty subset");
  for (Index i : y)
    if (i >= p.m) throw Error(Errc::dimension_error, "subset_logdet: item out of range");
}

// W = [V | B], U = [V | B*C]; det(I_M + L) = det(I_2K + W^T U).
Mat reduced_normalizer_matrix(const NdppParams& p, const Mat& c) {
  const Mat& b = p.bmat();
  Mat bc = matmul(b, c);
  Index k = p.k;
  Mat m2 = Mat::identity(2 * k);
  // Accumulate W^T U block-wise without concatenating: [[V^T V, V^T BC],
  // [B^T V, B^T BC]].
  Mat vtv = matmul_at_b(p.v, p.v);
  Mat vtbc = matmul_at_b(p.v, bc);
  Mat btv = matmul_at_b(b, p.v);
  Mat btbc = matmul_at_b(b, bc);
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j) {
      m2(i, j) += vtv(i, j);
      m2(i, k + j) += vtbc(i, j);
      m2(k + i, j) += btv(i, j);
      m2(k + i, k + j) += btbc(i, j);
    }
  return m2;
}

struct SubsetTerm {
  bool feasible = true;
  double logdet = 0.0;
  Mat gv, gb, gc;  // gradients of log det(A_Y) w.r.t. V_Y, B_Y, C
};

// A_Y = V_Y V_Y^T + B_Y C B_Y^T + eps I and the gradients
//   dV_Y: (A^-T + A^-1) V_Y
//   dB_Y: A^-T B_Y C^T + A^-1 B_Y C
//   dC:   B_Y^T A^-T B_Y
SubsetTerm subset_term(const NdppParams& p, const Mat& c, const Basket& y,
                       double eps, bool want_grad) {
  SubsetTerm t;
  Mat vy = row_gather(p.v, y);
  Mat by = row_gather(p.bmat(), y);
  Mat byc = matmul(by, c);
  Mat ay = matmul_a_bt(vy, vy);
  Mat skew = matmul_a_bt(byc, by);
  for (Index i = 0; i < ay.a.size(); ++i) ay.a[i] += skew.a[i];
  for (Index i = 0; i < y.size(); ++i) ay(i, i) += eps;

  LogDet ld = lu_logdet(ay);
  if (ld.sign <= 0) {
    t.feasible = false;
    t.logdet = kNegInf;
    return t;
  }
  t.logdet = ld.log_abs;
  if (!want_grad) return t;

  Mat ainv = inverse(ay);
  Mat ainvt = transpose(ainv);
  Mat s = ainv + ainvt;
  t.gv = matmul(s, vy);
  Mat byct = matmul_a_bt(by, c);
  t.gb = matmul(ainvt, byct) + matmul(ainv, byc);
  t.gc = matmul_at_b(by, matmul(ainvt, by));
  return t;
}

double regularizer_checked(const NdppParams& p, const std::vector<double>& mu) {
  bool use_alpha = p.alpha != 0.0;
  bool use_beta = !p.tied && p.beta != 0.0;
  if (!use_alpha && !use_beta) return 0.0;
  if (mu.size() != p.m) throw Error(Errc::dimension_error, "regularizer: mu size mismatch");
  double r = 0.0;
  for (Index i = 0; i < p.m; ++i) {
    if (mu[i] == 0.0) throw Error(Errc::zero_count, "regularizer: item with zero count");
    if (use_alpha) {
      double s = 0.0;
      const double* vi = p.v.row(i);
      for (Index j = 0; j < p.k; ++j) s += vi[j] * vi[j];
      r += p.alpha * s / mu[i];
    }
    if (use_beta) {
      double s = 0.0;
      const double* bi = p.b.row(i);
      for (Index j = 0; j < p.k; ++j) s += bi[j] * bi[j];
      r += p.beta * s / mu[i];
    }
  }
  return r;
}

}  // namespace

double log_normalizer(const NdppParams& p) {
  check_params(p);
  Mat m2 = reduced_normalizer_matrix(p, p.cmat());
  LogDet ld = lu_logdet(m2);
  if (ld.sign <= 0)
    throw Error(Errc::numerical_failure, "log_normalizer: reduced matrix not positive");
  return ld.log_abs;
}

double subset_logdet(const NdppParams& p, const Basket& y, double eps) {
  check_params(p);
  check_basket(p, y);
  SubsetTerm t = subset_term(p, p.cmat(), y, eps, false);
  if (!t.feasible)
    throw Error(Errc::non_positive_minor, "subset_logdet: nonpositive determinant");
  return t.logdet;
}

double regularizer(const NdppParams& p, const std::vector<double>& mu) {
  check_params(p);
  return regularizer_checked(p, mu);
}

std::pair<LikelihoodReport, Gradients> objective_and_grad(
    const NdppParams& p, const BasketList& batch, const std::vector<double>& mu,
    double eps, int threads) {
  check_params(p);
  for (const Basket& y : batch) check_basket(p, y);
  Index k = p.k;
  const Mat& b = p.bmat();
  Mat c = p.cmat();

  Gradients g;
  g.gv = Mat(p.m, k);
  g.gb = Mat(p.m, k);
  g.gd = Mat(k, k);
  LikelihoodReport rep;
  rep.reg = regularizer_checked(p, mu);

  // Normalizer and its gradients. M2 = I + W^T U as in reduced_normalizer_matrix.
  Mat m2 = reduced_normalizer_matrix(p, c);
  LogDet ld = lu_logdet(m2);
  if (ld.sign <= 0)
    throw Error(Errc::numerical_failure, "objective_and_grad: normalizer not positive");
  rep.log_normalizer = ld.log_abs;

  Mat m2inv = inverse(m2);
  Mat bc = matmul(b, c);
  // dZ/dW = U M2^-1, dZ/dU = W M2^-T, with W = [V|B], U = [V|BC]. Block
  // splits give the V/B/C gradients; everything stays M x 2K.
  Mat m2inv_tl = Mat(k, k), m2inv_tr = Mat(k, k), m2inv_bl = Mat(k, k), m2inv_br = Mat(k, k);
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j) {
      m2inv_tl(i, j) = m2inv(i, j);
      m2inv_tr(i, j) = m2inv(i, k + j);
      m2inv_bl(i, j) = m2inv(k + i, j);
      m2inv_br(i, j) = m2inv(k + i, k + j);
    }
  // Gw = U*M2inv: columns [V*tl + BC*bl | V*tr + BC*br]
  Mat gw1 = matmul(p.v, m2inv_tl) + matmul(bc, m2inv_bl);
  Mat gw2 = matmul(p.v, m2inv_tr) + matmul(bc, m2inv_br);
  // Gu = W*M2inv^T: columns [V*tl^T + B*tr^T | V*bl^T + B*br^T]
  Mat gu1 = matmul_a_bt(p.v, m2inv_tl) + matmul_a_bt(b, m2inv_tr);
  Mat gu2 = matmul_a_bt(p.v, m2inv_bl) + matmul_a_bt(b, m2inv_br);

  Mat gvz = gw1 + gu1;                     // dZ/dV
  Mat gbz = gw2 + matmul_a_bt(gu2, c);     // dZ/dB = Gw2 + Gu2*C^T
  Mat gcz = matmul_at_b(b, gu2);           // dZ/dC = B^T Gu2

  // Per-subset terms, each into its own slot so the reduction order is fixed.
  Index n = batch.size();
  std::vector<SubsetTerm> terms(n);
  parallel_for(n, threads, [&](Index i) {
    terms[i] = subset_term(p, c, batch[i], eps, true);
  });

  for (Index i = 0; i < n; ++i) {
    if (!terms[i].feasible) {
      rep.mean_subset_logdet = kNegInf;
      rep.objective = kNegInf;
      rep.feasible = false;
      g.gv = Mat(p.m, k);
      g.gb = Mat(p.m, k);
      g.gd = Mat(k, k);
      return {rep, g};
    }
  }

  double sum_logdet = 0.0;
  Mat gc_sum(k, k);
  double inv_n = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
  for (Index i = 0; i < n; ++i) {
    const SubsetTerm& t = terms[i];
    const Basket& y = batch[i];
    sum_logdet += t.logdet;
    for (Index r = 0; r < y.size(); ++r) {
      double* gvrow = g.gv.row(y[r]);
      const double* tv = t.gv.row(r);
      double* gbrow = g.gb.row(y[r]);
      const double* tb = t.gb.row(r);
      for (Index j = 0; j < k; ++j) {
        gvrow[j] += inv_n * tv[j];
        gbrow[j] += inv_n * tb[j];
      }
    }
    axpy(gc_sum, inv_n, t.gc);
  }
  rep.mean_subset_logdet = n > 0 ? sum_logdet * inv_n : 0.0;
  rep.objective = rep.mean_subset_logdet - rep.log_normalizer - rep.reg;

  // Assemble: subset mean minus normalizer minus regularizer.
  axpy(g.gv, -1.0, gvz);
  axpy(g.gb, -1.0, gbz);
  Mat gc_total = gc_sum - gcz;

  if (p.alpha != 0.0)
    for (Index i = 0; i < p.m; ++i) {
      double w = 2.0 * p.alpha / mu[i];
      double* gvrow = g.gv.row(i);
      const double* vi = p.v.row(i);
      for (Index j = 0; j < k; ++j) gvrow[j] -= w * vi[j];
    }
  if (!p.tied && p.beta != 0.0)
    for (Index i = 0; i < p.m; ++i) {
      double w = 2.0 * p.beta / mu[i];
      double* gbrow = g.gb.row(i);
      const double* bi = p.b.row(i);
      for (Index j = 0; j < k; ++j) gbrow[j] -= w * bi[j];
    }

  // C = D - D^T chain rule.
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j) g.gd(i, j) = gc_total(i, j) - gc_total(j, i);

  if (p.tied) {
    // B is the same storage as V: fold the B-role gradient into gv.
    axpy(g.gv, 1.0, g.gb);
    g.gb = Mat(p.m, k);
  }
  return {rep, g};
}

LikelihoodReport objective_only(const NdppParams& p, const BasketList& batch,
                                const std::vector<double>& mu, double eps, int threads) {
  check_params(p);
  for (const Basket& y : batch) check_basket(p, y);
  Mat c = p.cmat();
  LikelihoodReport rep;
  rep.reg = regularizer_checked(p, mu);
  Mat m2 = reduced_normalizer_matrix(p, c);
  LogDet ld = lu_logdet(m2);
  if (ld.sign <= 0)
    throw Error(Errc::numerical_failure, "objective_only: normalizer not positive");
  rep.log_normalizer = ld.log_abs;

  Index n = batch.size();
  std::vector<SubsetTerm> terms(n);
  parallel_for(n, threads, [&](Index i) {
    terms[i] = subset_term(p, c, batch[i], eps, false);
  });
  double sum_logdet = 0.0;
  for (Index i = 0; i < n; ++i) {
    if (!terms[i].feasible) {
      rep.mean_subset_logdet = kNegInf;
      rep.objective = kNegInf;
      rep.feasible = false;
      return rep;
    }
    sum_logdet += terms[i].logdet;
  }
  rep.mean_subset_logdet = n > 0 ? sum_logdet / static_cast<double>(n) : 0.0;
  rep.objective = rep.mean_subset_logdet - rep.log_normalizer - rep.reg;
  return rep;
}

double mean_loglik(const NdppParams& p, const BasketList& baskets, double eps, int threads) {
  check_params(p);
  for (const Basket& y : baskets) check_basket(p, y);
  if (baskets.empty()) return 0.0;
  Mat c = p.cmat();
  double z = log_normalizer(p);
  Index n = baskets.size();
  std::vector<double> lds(n);
  std::vector<char> ok(n, 1);
  parallel_for(n, threads, [&](Index i) {
    SubsetTerm t = subset_term(p, c, baskets[i], eps, false);
    ok[i] = t.feasible ? 1 : 0;
    lds[i] = t.logdet;
  });
  double sum = 0.0;
  for (Index i = 0; i < n; ++i) {
    if (!ok[i]) return kNegInf;
    sum += lds[i];
  }
  return sum / static_cast<double>(n) - z;
}

SchurNormalizer normalizer_schur(const NdppParams& p) {
  check_params(p);
  const Mat& b = p.bmat();
  Mat c = p.cmat();
  LogDet cld = lu_logdet(c);
  if (cld.sign == 0 || cld.log_abs <= std::log(1e-10))
    throw Error(Errc::numerical_failure, "normalizer_schur: C singular");

  Index k = p.k;
  Mat cinv = inverse(c);
  Mat cinvt = transpose(cinv);
  Mat ik_vtv = Mat::identity(k) + matmul_at_b(p.v, p.v);
  Mat ik_vtv_inv = inverse(ik_vtv);
  // X = I - V (I + V^T V)^-1 V^T applied implicitly:
  //   X B = B - V * (I+V^T V)^-1 (V^T B),  B^T X B = B^T B - (B^T V)(...)
  Mat vtb = matmul_at_b(p.v, b);
  Mat xb = b - matmul(p.v, matmul(ik_vtv_inv, vtb));
  Mat btxb = matmul_at_b(b, b) - matmul(transpose(vtb), matmul(ik_vtv_inv, vtb));

  Mat f = cinv + btxb;    // C^-1 + B^T X B
  Mat g2 = cinvt + btxb;  // C^-T + B^T X B
  Mat finv = inverse(f);
  Mat g2inv = inverse(g2);

  SchurNormalizer out;
  LogDet ld1 = lu_logdet(ik_vtv);
  LogDet ld2 = lu_logdet(f);
  if (ld1.sign <= 0 || ld2.sign <= 0)
    throw Error(Errc::numerical_failure, "normalizer_schur: nonpositive factor");
  out.log_normalizer = ld1.log_abs + ld2.log_abs + cld.log_abs;

  Mat fg_sum = finv + g2inv;
  Mat btxv = matmul_at_b(xb, p.v);  // B^T X V (X symmetric idempotent-free; B^T X V = (XB)^T V)
  out.gv = 2.0 * matmul(p.v, ik_vtv_inv) - matmul(xb, matmul(fg_sum, btxv));
  out.gb = matmul(xb, fg_sum);
  out.gc = cinvt - matmul(cinvt, matmul(transpose(finv), cinvt));
  return out;
}

}  // namespace ndpp
