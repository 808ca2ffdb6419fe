#pragma once

#include <string>
#include <utility>

#include "ndpp/matcore.hpp"

namespace ndpp {

// Learned kernel factors. L = V V^T + B C B^T with C = D - D^T, so C is skew
// by construction and never stored. When tied, B is identically V and is not
// stored independently.
struct NdppParams {
  Index m = 0;  // catalog size
  Index k = 0;  // embedding rank
  Mat v;        // m x k
  Mat b;        // m x k, empty when tied
  Mat d;        // k x k
  bool tied = true;
  double alpha = 0.0;  // regularizer weight on V rows
  double beta = 0.0;   // regularizer weight on B rows (ignored when tied)

  const Mat& bmat() const { return tied ? v : b; }
  Mat cmat() const;  // D - D^T
};

// Kernel in the generic product form L = btilde * ctilde * btilde^T used by
// the inference algorithms. r is the inner dimension (btilde is m x r).
struct InferenceKernel {
  Index m = 0;
  Index r = 0;
  Mat btilde;
  Mat ctilde;
};

// Skew-symmetric spectral form: pairs of vectors with positive weights,
// materializing to blockdiag([[0, l], [-l, 0]]).
struct BlockC {
  Index ell = 0;                 // even
  std::vector<double> lambdas;   // ell/2 positive weights, nonincreasing
  Mat materialize() const;
};

// btilde = [V | B], ctilde = blockdiag(I_K, C). r = 2K.
InferenceKernel to_inference_kernel(const NdppParams& p);

Mat materialize(const NdppParams& p);      // m x m kernel, small-m paths only
Mat materialize(const InferenceKernel& k);

// Factorizes a skew-symmetric matrix (checked against tol) into orthonormal
// vector pairs: a = sum_i lambda_i (u_i w_i^T - w_i u_i^T). Returns the m x ell
// pair matrix [u_1 w_1 u_2 w_2 ...] and the weights.
std::pair<Mat, BlockC> skew_factorize(const Mat& a, double tol = 1e-8);

// Exhaustive principal-minor check: det(L_Y) >= -1e-10 for every nonempty Y.
// Guarded to m <= 25 (2^m enumeration).
bool check_p0(const Mat& l);

double quadratic_form(const Mat& l, const std::vector<double>& x);

// Random probes x^T L x >= -tol; a P0 matrix can still fail this (P0 does not
// imply PSD of the symmetric part).
bool check_psd_quadratic(const Mat& l, Index trials, std::uint64_t seed, double tol = 1e-10);

// Binary little-endian model file: magic "NDPP", version, dims, tied flag,
// regularizer weights, then the factor payloads row-major.
void save_model(const NdppParams& p, const std::string& path);
NdppParams load_model(const std::string& path);

}  // namespace ndpp
