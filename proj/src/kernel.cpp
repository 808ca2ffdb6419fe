#include "ndpp/kernel.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>

namespace ndpp {

Mat NdppParams::cmat() const {
  Mat c(k, k);
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j) c(i, j) = d(i, j) - d(j, i);
  return c;
}

Mat BlockC::materialize() const {
  Mat c(ell, ell);
  for (Index p = 0; p < lambdas.size(); ++p) {
    c(2 * p, 2 * p + 1) = lambdas[p];
    c(2 * p + 1, 2 * p) = -lambdas[p];
  }
  return c;
}

InferenceKernel to_inference_kernel(const NdppParams& p) {
  const Mat& b = p.bmat();
  if (p.v.rows != p.m || p.v.cols != p.k || b.rows != p.m || b.cols != p.k)
    throw Error(Errc::dimension_error, "to_inference_kernel: factor shape mismatch");
  InferenceKernel k;
  k.m = p.m;
  k.r = 2 * p.k;
  k.btilde = Mat(p.m, 2 * p.k);
  for (Index i = 0; i < p.m; ++i) {
    std::memcpy(k.btilde.row(i), p.v.row(i), p.k * sizeof(double));
    std::memcpy(k.btilde.row(i) + p.k, b.row(i), p.k * sizeof(double));
  }
  Mat c = p.cmat();
  k.ctilde = Mat(2 * p.k, 2 * p.k);
  for (Index i = 0; i < p.k; ++i) {
    k.ctilde(i, i) = 1.0;
    for (Index j = 0; j < p.k; ++j) k.ctilde(p.k + i, p.k + j) = c(i, j);
  }
  return k;
}

Mat materialize(const NdppParams& p) {
  const Mat& b = p.bmat();
  Mat l = matmul_a_bt(p.v, p.v);
  Mat bc = matmul(b, p.cmat());
  Mat skew = matmul_a_bt(bc, b);
  for (Index i = 0; i < l.a.size(); ++i) l.a[i] += skew.a[i];
  return l;
}

Mat materialize(const InferenceKernel& k) {
  return matmul_a_bt(matmul(k.btilde, k.ctilde), k.btilde);
}

std::pair<Mat, BlockC> skew_factorize(const Mat& a, double tol) {
  if (a.rows != a.cols) throw Error(Errc::dimension_error, "skew_factorize: not square");
  Index m = a.rows;
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j)
      if (std::fabs(a(i, j) + a(j, i)) > tol)
        throw Error(Errc::not_skew_symmetric, "skew_factorize: a + a^T exceeds tolerance");

  // a^T a is symmetric PSD with doubled eigenvalues lambda_i^2; each pair of
  // singular vectors spans one rotation plane of a.
  SymEigen e = symmetric_eigen(matmul_at_b(a, a));
  double sigma1 = e.values.empty() ? 0.0 : std::sqrt(std::max(e.values[0], 0.0));
  double cut = 1e-10 * std::max(sigma1, 1.0);

  Mat pairs(m, 0);
  std::vector<std::vector<double>> basis;  // accepted u/w vectors
  std::vector<double> lambdas;

  auto project_out = [&](std::vector<double>& x) {
    for (const auto& b : basis) {
      double dot = 0.0;
      for (Index i = 0; i < m; ++i) dot += b[i] * x[i];
      for (Index i = 0; i < m; ++i) x[i] -= dot * b[i];
    }
  };
  auto norm_of = [&](const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::sqrt(s);
  };

  for (Index j = 0; j < m; ++j) {
    double sigma = std::sqrt(std::max(e.values[j], 0.0));
    if (sigma <= cut) break;  // values are sorted descending
    std::vector<double> u(m);
    for (Index i = 0; i < m; ++i) u[i] = e.vectors(i, j);
    // Each plane contributes two eigenvectors of a^T a; the second of a pair
    // projects to ~0 against the plane already captured.
    project_out(u);
    double nu = norm_of(u);
    if (nu < 0.5) continue;
    for (double& x : u) x /= nu;
    project_out(u);  // second pass for orthogonality hygiene
    nu = norm_of(u);
    for (double& x : u) x /= nu;

    std::vector<double> au(m, 0.0);
    for (Index i = 0; i < m; ++i) {
      double acc = 0.0;
      for (Index c2 = 0; c2 < m; ++c2) acc += a(i, c2) * u[c2];
      au[i] = acc;
    }
    double lambda = norm_of(au);
    if (lambda <= cut) continue;
    std::vector<double> w(m);
    for (Index i = 0; i < m; ++i) w[i] = -au[i] / lambda;  // a*u = -lambda*w
    project_out(w);
    double dotuw = 0.0;
    for (Index i = 0; i < m; ++i) dotuw += u[i] * w[i];
    for (Index i = 0; i < m; ++i) w[i] -= dotuw * u[i];
    double nw = norm_of(w);
    for (double& x : w) x /= nw;

    lambdas.push_back(lambda);
    basis.push_back(u);
    basis.push_back(w);
  }

  BlockC bc;
  bc.ell = 2 * lambdas.size();
  bc.lambdas = std::move(lambdas);
  Mat b(m, bc.ell);
  for (Index p = 0; p * 2 < bc.ell; ++p) {
    for (Index i = 0; i < m; ++i) {
      b(i, 2 * p) = basis[2 * p][i];
      b(i, 2 * p + 1) = basis[2 * p + 1][i];
    }
  }
  return {std::move(b), std::move(bc)};
}

bool check_p0(const Mat& l) {
  if (l.rows != l.cols) throw Error(Errc::dimension_error, "check_p0: not square");
  Index m = l.rows;
  if (m > 25) throw Error(Errc::too_large, "check_p0: m > 25");
  for (std::uint32_t mask = 1; mask < (1u << m); ++mask) {
    IndexVec idx;
    for (Index i = 0; i < m; ++i)
      if (mask & (1u << i)) idx.push_back(i);
    Mat minor(idx.size(), idx.size());
    for (Index i = 0; i < idx.size(); ++i)
      for (Index j = 0; j < idx.size(); ++j) minor(i, j) = l(idx[i], idx[j]);
    LogDet ld = lu_logdet(minor);
    if (ld.sign < 0 && ld.log_abs > std::log(1e-10)) return false;
  }
  return true;
}

double quadratic_form(const Mat& l, const std::vector<double>& x) {
  if (l.rows != l.cols || x.size() != l.rows)
    throw Error(Errc::dimension_error, "quadratic_form: shape mismatch");
  double acc = 0.0;
  for (Index i = 0; i < l.rows; ++i) {
    double row = 0.0;
    for (Index j = 0; j < l.cols; ++j) row += l(i, j) * x[j];
    acc += x[i] * row;
  }
  return acc;
}

bool check_psd_quadratic(const Mat& l, Index trials, std::uint64_t seed, double tol) {
  Rng rng(seed);
  std::vector<double> x(l.rows);
  for (Index t = 0; t < trials; ++t) {
    for (double& v : x) v = rng.gaussian();
    if (quadratic_form(l, x) < -tol) return false;
  }
  return true;
}

namespace {

constexpr char kMagic[4] = {'N', 'D', 'P', 'P'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::FILE* f, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  if (std::fwrite(b, 1, 4, f) != 4) throw Error(Errc::io_error, "write failed");
}

void put_u64(std::FILE* f, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  if (std::fwrite(b, 1, 8, f) != 8) throw Error(Errc::io_error, "write failed");
}

void put_f64(std::FILE* f, double x) {
  std::uint64_t v;
  std::memcpy(&v, &x, 8);
  put_u64(f, v);
}

bool get_bytes(std::FILE* f, unsigned char* b, std::size_t n) {
  return std::fread(b, 1, n, f) == n;
}

std::uint32_t get_u32(std::FILE* f) {
  unsigned char b[4];
  if (!get_bytes(f, b, 4)) throw Error(Errc::format_error, "truncated file");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint64_t get_u64(std::FILE* f) {
  unsigned char b[8];
  if (!get_bytes(f, b, 8)) throw Error(Errc::format_error, "truncated file");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

double get_f64(std::FILE* f) {
  std::uint64_t v = get_u64(f);
  double x;
  std::memcpy(&x, &v, 8);
  return x;
}

struct FileCloser {
  std::FILE* f;
  ~FileCloser() {
    if (f) std::fclose(f);
  }
};

}  // namespace

void save_model(const NdppParams& p, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw Error(Errc::io_error, "cannot open for write: " + path);
  FileCloser closer{f};
  if (std::fwrite(kMagic, 1, 4, f) != 4) throw Error(Errc::io_error, "write failed");
  put_u32(f, kVersion);
  put_u64(f, p.m);
  put_u64(f, p.k);
  unsigned char tied = p.tied ? 1 : 0;
  if (std::fwrite(&tied, 1, 1, f) != 1) throw Error(Errc::io_error, "write failed");
  put_f64(f, p.alpha);
  put_f64(f, p.beta);
  for (double x : p.v.a) put_f64(f, x);
  if (!p.tied)
    for (double x : p.b.a) put_f64(f, x);
  for (double x : p.d.a) put_f64(f, x);
  if (std::fflush(f) != 0) throw Error(Errc::io_error, "flush failed");
}

NdppParams load_model(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw Error(Errc::io_error, "cannot open for read: " + path);
  FileCloser closer{f};
  unsigned char magic[4];
  if (!get_bytes(f, magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw Error(Errc::format_error, "bad magic");
  std::uint32_t version = get_u32(f);
  if (version != kVersion) throw Error(Errc::format_error, "unsupported version");
  NdppParams p;
  p.m = static_cast<Index>(get_u64(f));
  p.k = static_cast<Index>(get_u64(f));
  if (p.m == 0 || p.k == 0 || p.m > (Index(1) << 32) || p.k > p.m * 4 + 1024)
    throw Error(Errc::format_error, "implausible dimensions");
  unsigned char tied;
  if (!get_bytes(f, &tied, 1)) throw Error(Errc::format_error, "truncated file");
  if (tied > 1) throw Error(Errc::format_error, "bad tied flag");
  p.tied = tied == 1;
  p.alpha = get_f64(f);
  p.beta = get_f64(f);
  p.v = Mat(p.m, p.k);
  for (double& x : p.v.a) x = get_f64(f);
  if (!p.tied) {
    p.b = Mat(p.m, p.k);
    for (double& x : p.b.a) x = get_f64(f);
  }
  p.d = Mat(p.k, p.k);
  for (double& x : p.d.a) x = get_f64(f);
  unsigned char extra;
  if (std::fread(&extra, 1, 1, f) == 1)
    throw Error(Errc::format_error, "trailing bytes");
  if (!all_finite(p.v) || !all_finite(p.b) || !all_finite(p.d) ||
      !std::isfinite(p.alpha) || !std::isfinite(p.beta))
    throw Error(Errc::format_error, "non-finite payload");
  return p;
}

}  // namespace ndpp
