#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "gkt/tensor.hpp"

namespace gkt {

/// Solves M X = rhs for symmetric positive definite M via Cholesky.
/// M must be symmetric to 1e-10 relative; a non-positive pivot throws
/// NotSpdError (signals a degenerate basis set upstream).
Tensor solve_spd(const Tensor& M, const Tensor& rhs);

/// Cholesky factor L (lower) with M = L L^T.
Tensor cholesky(const Tensor& M);

/// General square solve via partial-pivot LU; used for the indefinite
/// saddle block systems at verification scale.
Tensor solve_lu(const Tensor& A, const Tensor& rhs);

struct SvdResult {
  Tensor u;                    // r x r
  std::vector<double> sigma;   // descending, nonnegative
  Tensor vt;                   // r x d
};

/// One-sided Jacobi SVD for r <= d <= 64 (verification scale, values only).
SvdResult svd_small(const Tensor& B);

struct PcgResult {
  Tensor x;
  std::int64_t iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

/// Jacobi-preconditioned conjugate gradient on an SPD operator given as a
/// matvec callback. `diag` holds the operator diagonal.
PcgResult pcg(const std::function<void(const double*, double*)>& matvec,
              const Tensor& rhs, const Tensor& diag, double rel_tol,
              std::int64_t max_iters);

// Small dense helpers shared by the verification suite.
Tensor matmul_plain(const Tensor& A, const Tensor& B);
Tensor transpose_plain(const Tensor& A);
double dot_plain(const Tensor& a, const Tensor& b);
double norm2_plain(const Tensor& a);

}  // namespace gkt
