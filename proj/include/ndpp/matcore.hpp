#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "ndpp/errors.hpp"

namespace ndpp {

using Index = std::size_t;
using IndexVec = std::vector<Index>;

// Dense row-major matrix of doubles. Small value type, no views; slices copy.
struct Mat {
  Index rows = 0;
  Index cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(Index r, Index c) : rows(r), cols(c), a(r * c, 0.0) {}

  static Mat identity(Index n);
  // Validates that every entry is finite.
  static Mat from_data(Index r, Index c, std::vector<double> data);

  double& operator()(Index i, Index j) { return a[i * cols + j]; }
  double operator()(Index i, Index j) const { return a[i * cols + j]; }
  double* row(Index i) { return a.data() + i * cols; }
  const double* row(Index i) const { return a.data() + i * cols; }

  bool empty() const { return rows == 0 || cols == 0; }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

bool all_finite(const Mat& m);
double max_abs(const Mat& m);
Mat transpose(const Mat& m);

Mat operator+(const Mat& x, const Mat& y);
Mat operator-(const Mat& x, const Mat& y);
Mat operator*(double s, const Mat& x);

// x += s*y, shapes must match.
void axpy(Mat& x, double s, const Mat& y);

Mat matmul(const Mat& x, const Mat& y);        // x*y
Mat matmul_at_b(const Mat& x, const Mat& y);   // x^T*y
Mat matmul_a_bt(const Mat& x, const Mat& y);   // x*y^T

// Copies columns [c0, c1) into a fresh matrix.
Mat col_slice(const Mat& m, Index c0, Index c1);
// Copies the given rows (in order) into a fresh matrix.
Mat row_gather(const Mat& m, const IndexVec& idx);

struct LogDet {
  int sign = 0;     // -1, 0, +1; 0 = singular to working precision
  double log_abs = 0.0;
};

// log|det| via partially pivoted LU. sign=0 when |det| < 1e-300.
LogDet lu_logdet(const Mat& m);

// Solves a*x = rhs (one column per rhs column). Throws Errc::singular_matrix
// when a pivot falls below 1e-12 * max|a|.
Mat solve(const Mat& a, const Mat& rhs);
Mat inverse(const Mat& a);

struct SymEigen {
  std::vector<double> values;  // descending
  Mat vectors;                 // eigenvectors in columns, matching order
};

// Cyclic Jacobi eigensolver for symmetric input.
SymEigen symmetric_eigen(const Mat& s);

// Singular values of a general matrix, descending, via the Gram matrix.
std::vector<double> singular_values(const Mat& m);

// Deterministic, bit-portable random stream (splitmix64). std:: distributions
// are not reproducible across standard libraries, so the draws are hand-rolled.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : s_(seed) {}

  std::uint64_t next_u64();
  double uniform01();              // [0, 1)
  double gaussian();               // N(0, 1), Box-Muller with cached spare
  Index below(Index n);            // uniform in [0, n)
  void shuffle(IndexVec& v);       // Fisher-Yates
  // k distinct values from [0, n), in draw order.
  IndexVec sample_without_replacement(Index n, Index k);

 private:
  std::uint64_t next_state();
  std::uint64_t s_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Derives an independent stream seed from (seed, stream) with splitmix mixing.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// m x k matrix with orthonormal columns: QR of a seeded gaussian matrix with
// the R diagonal sign-fixed positive. Throws Errc::dimension_error if k > m.
Mat random_orthonormal(Index m, Index k, std::uint64_t seed);

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks over
// `threads` workers; with threads <= 1 it runs inline. Results must be
// written to preallocated per-i slots so the outcome is thread-count
// independent.
void parallel_for(Index n, int threads, const std::function<void(Index)>& fn);

}  // namespace ndpp
