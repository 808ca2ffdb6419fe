#include "ndpp/matcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <thread>

namespace ndpp {

const char* errc_name(Errc c) {
  switch (c) {
    case Errc::dimension_error: return "DimensionError";
    case Errc::singular_matrix: return "SingularMatrix";
    case Errc::not_skew_symmetric: return "NotSkewSymmetric";
    case Errc::too_large: return "TooLarge";
    case Errc::io_error: return "IoError";
    case Errc::format_error: return "FormatError";
    case Errc::numerical_failure: return "NumericalFailure";
    case Errc::non_positive_minor: return "NonPositiveMinor";
    case Errc::zero_count: return "ZeroCount";
    case Errc::empty_dataset: return "EmptyDataset";
    case Errc::split_too_large: return "SplitTooLarge";
    case Errc::diverged: return "Diverged";
    case Errc::degenerate_gain: return "DegenerateGain";
    case Errc::degenerate_conditioning: return "DegenerateConditioning";
    case Errc::basket_too_small: return "BasketTooSmall";
    case Errc::zero_reference: return "ZeroReference";
    case Errc::rejection_exhausted: return "RejectionExhausted";
    case Errc::unknown_item: return "UnknownItem";
  }
  return "Error";
}

Mat Mat::identity(Index n) {
  Mat m(n, n);
  for (Index i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Mat Mat::from_data(Index r, Index c, std::vector<double> data) {
  if (data.size() != r * c)
    throw Error(Errc::dimension_error, "from_data: size mismatch");
  Mat m;
  m.rows = r;
  m.cols = c;
  m.a = std::move(data);
  if (!all_finite(m)) throw Error(Errc::dimension_error, "from_data: non-finite entry");
  return m;
}

bool all_finite(const Mat& m) {
  for (double x : m.a)
    if (!std::isfinite(x)) return false;
  return true;
}

double max_abs(const Mat& m) {
  double v = 0.0;
  for (double x : m.a) v = std::max(v, std::fabs(x));
  return v;
}

Mat transpose(const Mat& m) {
  Mat t(m.cols, m.rows);
  for (Index i = 0; i < m.rows; ++i)
    for (Index j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
  return t;
}

static void check_same_shape(const Mat& x, const Mat& y, const char* what) {
  if (!x.same_shape(y)) throw Error(Errc::dimension_error, what);
}

Mat operator+(const Mat& x, const Mat& y) {
  check_same_shape(x, y, "operator+: shape mismatch");
  Mat r = x;
  for (Index i = 0; i < r.a.size(); ++i) r.a[i] += y.a[i];
  return r;
}

Mat operator-(const Mat& x, const Mat& y) {
  check_same_shape(x, y, "operator-: shape mismatch");
  Mat r = x;
  for (Index i = 0; i < r.a.size(); ++i) r.a[i] -= y.a[i];
  return r;
}

Mat operator*(double s, const Mat& x) {
  Mat r = x;
  for (double& v : r.a) v *= s;
  return r;
}

void axpy(Mat& x, double s, const Mat& y) {
  check_same_shape(x, y, "axpy: shape mismatch");
  for (Index i = 0; i < x.a.size(); ++i) x.a[i] += s * y.a[i];
}

Mat matmul(const Mat& x, const Mat& y) {
  if (x.cols != y.rows) throw Error(Errc::dimension_error, "matmul: inner dim mismatch");
  Mat r(x.rows, y.cols);
  for (Index i = 0; i < x.rows; ++i) {
    const double* xi = x.row(i);
    double* ri = r.row(i);
    for (Index s = 0; s < x.cols; ++s) {
      double c = xi[s];
      if (c == 0.0) continue;
      const double* ys = y.row(s);
      for (Index j = 0; j < y.cols; ++j) ri[j] += c * ys[j];
    }
  }
  return r;
}

Mat matmul_at_b(const Mat& x, const Mat& y) {
  if (x.rows != y.rows) throw Error(Errc::dimension_error, "matmul_at_b: row mismatch");
  Mat r(x.cols, y.cols);
  for (Index i = 0; i < x.rows; ++i) {
    const double* xi = x.row(i);
    const double* yi = y.row(i);
    for (Index s = 0; s < x.cols; ++s) {
      double c = xi[s];
      if (c == 0.0) continue;
      double* rs = r.row(s);
      for (Index j = 0; j < y.cols; ++j) rs[j] += c * yi[j];
    }
  }
  return r;
}

Mat matmul_a_bt(const Mat& x, const Mat& y) {
  if (x.cols != y.cols) throw Error(Errc::dimension_error, "matmul_a_bt: col mismatch");
  Mat r(x.rows, y.rows);
  for (Index i = 0; i < x.rows; ++i) {
    const double* xi = x.row(i);
    double* ri = r.row(i);
    for (Index j = 0; j < y.rows; ++j) {
      const double* yj = y.row(j);
      double acc = 0.0;
      for (Index s = 0; s < x.cols; ++s) acc += xi[s] * yj[s];
      ri[j] = acc;
    }
  }
  return r;
}

Mat col_slice(const Mat& m, Index c0, Index c1) {
  if (c0 > c1 || c1 > m.cols) throw Error(Errc::dimension_error, "col_slice: bad range");
  Mat r(m.rows, c1 - c0);
  for (Index i = 0; i < m.rows; ++i)
    std::memcpy(r.row(i), m.row(i) + c0, (c1 - c0) * sizeof(double));
  return r;
}

Mat row_gather(const Mat& m, const IndexVec& idx) {
  Mat r(idx.size(), m.cols);
  for (Index i = 0; i < idx.size(); ++i) {
    if (idx[i] >= m.rows) throw Error(Errc::dimension_error, "row_gather: index out of range");
    std::memcpy(r.row(i), m.row(idx[i]), m.cols * sizeof(double));
  }
  return r;
}

namespace {

struct LuFactor {
  Mat lu;
  IndexVec piv;    // piv[j] = row swapped into position j at step j
  int perm_sign = 1;
  bool zero_pivot = false;
};

LuFactor lu_factor(const Mat& a) {
  LuFactor f;
  f.lu = a;
  Index n = a.rows;
  f.piv.resize(n);
  Mat& lu = f.lu;
  for (Index j = 0; j < n; ++j) {
    Index p = j;
    double best = std::fabs(lu(j, j));
    for (Index i = j + 1; i < n; ++i) {
      double v = std::fabs(lu(i, j));
      if (v > best) {
        best = v;
        p = i;
      }
    }
    f.piv[j] = p;
    if (p != j) {
      for (Index c = 0; c < n; ++c) std::swap(lu(j, c), lu(p, c));
      f.perm_sign = -f.perm_sign;
    }
    double piv = lu(j, j);
    if (piv == 0.0) {
      f.zero_pivot = true;
      continue;
    }
    for (Index i = j + 1; i < n; ++i) {
      double m = lu(i, j) / piv;
      lu(i, j) = m;
      if (m == 0.0) continue;
      const double* rj = lu.row(j);
      double* ri = lu.row(i);
      for (Index c = j + 1; c < n; ++c) ri[c] -= m * rj[c];
    }
  }
  return f;
}

// Solve with a precomputed factorization; rhs has one system per column.
Mat lu_solve(const LuFactor& f, const Mat& rhs) {
  Index n = f.lu.rows;
  Mat x = rhs;
  for (Index j = 0; j < n; ++j) {
    if (f.piv[j] != j)
      for (Index c = 0; c < x.cols; ++c) std::swap(x(j, c), x(f.piv[j], c));
  }
  for (Index j = 0; j < n; ++j)  // forward: L has unit diagonal
    for (Index i = j + 1; i < n; ++i) {
      double m = f.lu(i, j);
      if (m == 0.0) continue;
      for (Index c = 0; c < x.cols; ++c) x(i, c) -= m * x(j, c);
    }
  for (Index j = n; j-- > 0;) {  // backward
    double d = f.lu(j, j);
    for (Index c = 0; c < x.cols; ++c) x(j, c) /= d;
    for (Index i = 0; i < j; ++i) {
      double m = f.lu(i, j);
      if (m == 0.0) continue;
      for (Index c = 0; c < x.cols; ++c) x(i, c) -= m * x(j, c);
    }
  }
  return x;
}

constexpr double kLogSingular = -690.77552789821368;  // log(1e-300)

}  // namespace

LogDet lu_logdet(const Mat& m) {
  if (m.rows != m.cols) throw Error(Errc::dimension_error, "lu_logdet: not square");
  if (m.rows == 0) return {1, 0.0};
  LuFactor f = lu_factor(m);
  LogDet r;
  if (f.zero_pivot) {
    r.sign = 0;
    r.log_abs = -std::numeric_limits<double>::infinity();
    return r;
  }
  int sign = f.perm_sign;
  double log_abs = 0.0;
  for (Index j = 0; j < m.rows; ++j) {
    double d = f.lu(j, j);
    if (d < 0) {
      sign = -sign;
      d = -d;
    }
    log_abs += std::log(d);
  }
  r.log_abs = log_abs;
  r.sign = (log_abs < kLogSingular) ? 0 : sign;
  return r;
}

Mat solve(const Mat& a, const Mat& rhs) {
  if (a.rows != a.cols) throw Error(Errc::dimension_error, "solve: matrix not square");
  if (a.rows != rhs.rows) throw Error(Errc::dimension_error, "solve: rhs row mismatch");
  LuFactor f = lu_factor(a);
  double tol = 1e-12 * max_abs(a);
  for (Index j = 0; j < a.rows; ++j)
    if (std::fabs(f.lu(j, j)) <= tol)
      throw Error(Errc::singular_matrix, "solve: pivot below threshold");
  return lu_solve(f, rhs);
}

Mat inverse(const Mat& a) { return solve(a, Mat::identity(a.rows)); }

SymEigen symmetric_eigen(const Mat& s) {
  if (s.rows != s.cols) throw Error(Errc::dimension_error, "symmetric_eigen: not square");
  Index n = s.rows;
  Mat a = s;
  Mat v = Mat::identity(n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Index p = 0; p < n; ++p)
      for (Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off <= 1e-30 * (1.0 + max_abs(a)) * (1.0 + max_abs(a))) break;
    for (Index p = 0; p < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        double apq = a(p, q);
        if (std::fabs(apq) < 1e-300) continue;
        double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double sn = t * c;
        for (Index i = 0; i < n; ++i) {  // rotate rows/cols p,q
          double aip = a(i, p), aiq = a(i, q);
          a(i, p) = c * aip - sn * aiq;
          a(i, q) = sn * aip + c * aiq;
        }
        for (Index i = 0; i < n; ++i) {
          double api = a(p, i), aqi = a(q, i);
          a(p, i) = c * api - sn * aqi;
          a(q, i) = sn * api + c * aqi;
        }
        for (Index i = 0; i < n; ++i) {
          double vip = v(i, p), viq = v(i, q);
          v(i, p) = c * vip - sn * viq;
          v(i, q) = sn * vip + c * viq;
        }
      }
    }
  }
  std::vector<Index> order(n);
  for (Index i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](Index x, Index y) { return a(x, x) > a(y, y); });
  SymEigen e;
  e.values.resize(n);
  e.vectors = Mat(n, n);
  for (Index j = 0; j < n; ++j) {
    e.values[j] = a(order[j], order[j]);
    for (Index i = 0; i < n; ++i) e.vectors(i, j) = v(i, order[j]);
  }
  return e;
}

std::vector<double> singular_values(const Mat& m) {
  Mat g = (m.rows >= m.cols) ? matmul_at_b(m, m) : matmul_a_bt(m, m);
  SymEigen e = symmetric_eigen(g);
  std::vector<double> sv(e.values.size());
  for (Index i = 0; i < sv.size(); ++i) sv[i] = std::sqrt(std::max(e.values[i], 0.0));
  return sv;
}

std::uint64_t Rng::next_state() {
  // splitmix64 over an internal counter; statistically solid, cheap, and
  // byte-portable everywhere.
  std::uint64_t z = (s_ += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::uint64_t Rng::next_u64() { return next_state(); }

double Rng::uniform01() { return (next_u64() >> 11) * 0x1.0p-53; }

double Rng::gaussian() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // u1 in (0,1] so the log is finite.
  double u1 = ((next_u64() >> 11) + 1) * 0x1.0p-53;
  double u2 = uniform01();
  double r = std::sqrt(-2.0 * std::log(u1));
  double t = 6.283185307179586476925286766559 * u2;
  spare_ = r * std::sin(t);
  have_spare_ = true;
  return r * std::cos(t);
}

Index Rng::below(Index n) {
  if (n == 0) throw Error(Errc::dimension_error, "Rng::below(0)");
  return static_cast<Index>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
}

void Rng::shuffle(IndexVec& v) {
  for (Index i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
}

IndexVec Rng::sample_without_replacement(Index n, Index k) {
  if (k > n) throw Error(Errc::dimension_error, "sample_without_replacement: k > n");
  IndexVec pool(n);
  for (Index i = 0; i < n; ++i) pool[i] = i;
  IndexVec out(k);
  for (Index i = 0; i < k; ++i) {
    Index j = i + below(n - i);
    std::swap(pool[i], pool[j]);
    out[i] = pool[i];
  }
  return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

Mat random_orthonormal(Index m, Index k, std::uint64_t seed) {
  if (k > m) throw Error(Errc::dimension_error, "random_orthonormal: k > m");
  Rng rng(seed);
  Mat g(m, k);
  for (double& x : g.a) x = rng.gaussian();
  // Modified Gram-Schmidt with one reorthogonalization pass. MGS normalizes
  // by a positive norm, which is exactly the positive-diagonal-R convention.
  for (Index j = 0; j < k; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (Index p = 0; p < j; ++p) {
        double dot = 0.0;
        for (Index i = 0; i < m; ++i) dot += g(i, p) * g(i, j);
        for (Index i = 0; i < m; ++i) g(i, j) -= dot * g(i, p);
      }
    }
    double norm = 0.0;
    for (Index i = 0; i < m; ++i) norm += g(i, j) * g(i, j);
    norm = std::sqrt(norm);
    if (norm < 1e-12)
      throw Error(Errc::numerical_failure, "random_orthonormal: rank collapse");
    for (Index i = 0; i < m; ++i) g(i, j) /= norm;
  }
  return g;
}

void parallel_for(Index n, int threads, const std::function<void(Index)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  Index nt = std::min<Index>(static_cast<Index>(threads), n);
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (Index t = 0; t < nt; ++t) {
    pool.emplace_back([&, t]() {
      for (Index i = t; i < n; i += nt) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace ndpp
