#include "gkt/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gkt/flops.hpp"

namespace gkt {

Tensor matmul_plain(const Tensor& A, const Tensor& B) {
  if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows())
    throw DimensionError("matmul shape mismatch " + A.shape_str() + " * " + B.shape_str());
  const std::int64_t n = A.rows(), k = A.cols(), m = B.cols();
  Tensor C({n, m});
  const double* a = A.data();
  const double* b = B.data();
  double* c = C.data();
  for (std::int64_t i = 0; i < n; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * m;
    for (std::int64_t l = 0; l < k; ++l) {
      const double av = arow[l];
      if (av == 0.0) continue;
      const double* brow = b + l * m;
      for (std::int64_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  flops::add_macs(static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(k) *
                  static_cast<std::uint64_t>(m));
  return C;
}

Tensor transpose_plain(const Tensor& A) {
  if (A.rank() != 2) throw DimensionError("transpose expects rank-2");
  Tensor T({A.cols(), A.rows()});
  for (std::int64_t i = 0; i < A.rows(); ++i)
    for (std::int64_t j = 0; j < A.cols(); ++j) T.at(j, i) = A.at(i, j);
  return T;
}

double dot_plain(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) throw DimensionError("dot length mismatch");
  double s = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

double norm2_plain(const Tensor& a) { return std::sqrt(dot_plain(a, a)); }

Tensor cholesky(const Tensor& M) {
  if (M.rank() != 2 || M.rows() != M.cols()) throw DimensionError("cholesky expects square");
  const std::int64_t d = M.rows();
  double scale = 0.0;
  for (std::int64_t i = 0; i < d; ++i) scale = std::max(scale, std::fabs(M.at(i, i)));
  for (std::int64_t i = 0; i < d; ++i)
    for (std::int64_t j = i + 1; j < d; ++j)
      if (std::fabs(M.at(i, j) - M.at(j, i)) > 1e-10 * std::max(1.0, scale))
        throw NotSpdError("matrix is not symmetric");

  Tensor L({d, d});
  for (std::int64_t i = 0; i < d; ++i) {
    for (std::int64_t j = 0; j <= i; ++j) {
      double s = M.at(i, j);
      for (std::int64_t k = 0; k < j; ++k) s -= L.at(i, k) * L.at(j, k);
      if (i == j) {
        if (s <= 0.0 || !std::isfinite(s))
          throw NotSpdError("non-positive pivot in Cholesky (degenerate basis?)");
        L.at(i, i) = std::sqrt(s);
      } else {
        L.at(i, j) = s / L.at(j, j);
      }
    }
  }
  return L;
}

namespace {

Tensor cholesky_solve(const Tensor& L, const Tensor& rhs) {
  const std::int64_t d = L.rows();
  const std::int64_t k = rhs.rank() == 1 ? 1 : rhs.cols();
  Tensor X = rhs.rank() == 1 ? rhs.reshaped({d, 1}) : rhs;
  // forward substitution L y = rhs
  for (std::int64_t c = 0; c < k; ++c) {
    for (std::int64_t i = 0; i < d; ++i) {
      double s = X.at(i, c);
      for (std::int64_t j = 0; j < i; ++j) s -= L.at(i, j) * X.at(j, c);
      X.at(i, c) = s / L.at(i, i);
    }
    // back substitution L^T x = y
    for (std::int64_t i = d - 1; i >= 0; --i) {
      double s = X.at(i, c);
      for (std::int64_t j = i + 1; j < d; ++j) s -= L.at(j, i) * X.at(j, c);
      X.at(i, c) = s / L.at(i, i);
    }
  }
  return rhs.rank() == 1 ? X.reshaped({d}) : X;
}

}  // namespace

Tensor solve_spd(const Tensor& M, const Tensor& rhs) {
  const std::int64_t d = M.rows();
  if ((rhs.rank() == 1 && rhs.numel() != d) || (rhs.rank() == 2 && rhs.rows() != d))
    throw DimensionError("solve_spd rhs mismatch");
  Tensor L = cholesky(M);
  return cholesky_solve(L, rhs);
}

Tensor solve_lu(const Tensor& A, const Tensor& rhs) {
  if (A.rank() != 2 || A.rows() != A.cols()) throw DimensionError("solve_lu expects square");
  const std::int64_t n = A.rows();
  const std::int64_t k = rhs.rank() == 1 ? 1 : rhs.cols();
  Tensor LU = A;
  std::vector<std::int64_t> piv(static_cast<std::size_t>(n));
  std::iota(piv.begin(), piv.end(), 0);

  for (std::int64_t col = 0; col < n; ++col) {
    std::int64_t p = col;
    double best = std::fabs(LU.at(col, col));
    for (std::int64_t i = col + 1; i < n; ++i) {
      double v = std::fabs(LU.at(i, col));
      if (v > best) { best = v; p = i; }
    }
    if (best == 0.0) throw NumericalError("singular matrix in solve_lu");
    if (p != col) {
      for (std::int64_t j = 0; j < n; ++j) std::swap(LU.at(p, j), LU.at(col, j));
      std::swap(piv[static_cast<std::size_t>(p)], piv[static_cast<std::size_t>(col)]);
    }
    const double pivot = LU.at(col, col);
    for (std::int64_t i = col + 1; i < n; ++i) {
      const double f = LU.at(i, col) / pivot;
      LU.at(i, col) = f;
      for (std::int64_t j = col + 1; j < n; ++j) LU.at(i, j) -= f * LU.at(col, j);
    }
  }

  Tensor X({n, k});
  Tensor R = rhs.rank() == 1 ? rhs.reshaped({n, 1}) : rhs;
  for (std::int64_t c = 0; c < k; ++c) {
    for (std::int64_t i = 0; i < n; ++i) {
      double s = R.at(piv[static_cast<std::size_t>(i)], c);
      for (std::int64_t j = 0; j < i; ++j) s -= LU.at(i, j) * X.at(j, c);
      X.at(i, c) = s;
    }
    for (std::int64_t i = n - 1; i >= 0; --i) {
      double s = X.at(i, c);
      for (std::int64_t j = i + 1; j < n; ++j) s -= LU.at(i, j) * X.at(j, c);
      X.at(i, c) = s / LU.at(i, i);
    }
  }
  return rhs.rank() == 1 ? X.reshaped({n}) : X;
}

SvdResult svd_small(const Tensor& B) {
  if (B.rank() != 2) throw DimensionError("svd_small expects rank-2");
  const std::int64_t r = B.rows(), d = B.cols();
  if (r > d || d > 64) throw DimensionError("svd_small handles r <= d <= 64");

  // One-sided Jacobi on the rows of B: rotate row pairs of W = B until all
  // rows are mutually orthogonal; then W = diag(sigma) * Vt and the
  // accumulated rotations give U.
  Tensor W = B;
  Tensor U = Tensor::identity(r);
  const std::int64_t max_sweeps = 60;
  const double tol = 1e-14;
  for (std::int64_t sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::int64_t p = 0; p < r - 1; ++p) {
      for (std::int64_t q = p + 1; q < r; ++q) {
        double app = 0.0, aqq = 0.0, apq = 0.0;
        for (std::int64_t j = 0; j < d; ++j) {
          app += W.at(p, j) * W.at(p, j);
          aqq += W.at(q, j) * W.at(q, j);
          apq += W.at(p, j) * W.at(q, j);
        }
        off = std::max(off, std::fabs(apq) / std::max(std::sqrt(app * aqq), 1e-300));
        if (std::fabs(apq) <= tol * std::sqrt(app * aqq)) continue;
        const double tau = (aqq - app) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::int64_t j = 0; j < d; ++j) {
          const double wp = W.at(p, j), wq = W.at(q, j);
          W.at(p, j) = c * wp - s * wq;
          W.at(q, j) = s * wp + c * wq;
        }
        for (std::int64_t j = 0; j < r; ++j) {
          const double up = U.at(j, p), uq = U.at(j, q);
          U.at(j, p) = c * up - s * uq;
          U.at(j, q) = s * up + c * uq;
        }
      }
    }
    if (off < 1e-13) break;
    if (sweep == max_sweeps - 1) throw NumericalError("svd_small: Jacobi sweeps did not converge");
  }

  std::vector<double> sigma(static_cast<std::size_t>(r));
  Tensor Vt({r, d});
  std::vector<std::int64_t> order(static_cast<std::size_t>(r));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> norms(static_cast<std::size_t>(r));
  for (std::int64_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::int64_t j = 0; j < d; ++j) s += W.at(i, j) * W.at(i, j);
    norms[static_cast<std::size_t>(i)] = std::sqrt(s);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    return norms[static_cast<std::size_t>(a)] > norms[static_cast<std::size_t>(b)];
  });

  Tensor Usorted({r, r});
  for (std::int64_t i = 0; i < r; ++i) {
    const std::int64_t src = order[static_cast<std::size_t>(i)];
    const double s = norms[static_cast<std::size_t>(src)];
    sigma[static_cast<std::size_t>(i)] = s;
    for (std::int64_t j = 0; j < d; ++j)
      Vt.at(i, j) = (s > 0.0) ? W.at(src, j) / s : 0.0;
    for (std::int64_t j = 0; j < r; ++j) Usorted.at(j, i) = U.at(j, src);
  }
  return SvdResult{std::move(Usorted), std::move(sigma), std::move(Vt)};
}

PcgResult pcg(const std::function<void(const double*, double*)>& matvec,
              const Tensor& rhs, const Tensor& diag, double rel_tol,
              std::int64_t max_iters) {
  const std::int64_t n = rhs.numel();
  PcgResult res;
  res.x = Tensor({n});
  Tensor r = rhs;
  Tensor z({n}), p({n}), Ap({n});
  const double rhs_norm = norm2_plain(rhs);
  if (rhs_norm == 0.0) {
    res.converged = true;
    return res;
  }
  for (std::int64_t i = 0; i < n; ++i) z[i] = r[i] / diag[i];
  p = z;
  double rz = dot_plain(r, z);
  for (std::int64_t it = 0; it < max_iters; ++it) {
    matvec(p.data(), Ap.data());
    const double pAp = dot_plain(p, Ap);
    if (pAp <= 0.0 || !std::isfinite(pAp)) throw NumericalError("pcg: operator not SPD");
    const double alpha = rz / pAp;
    for (std::int64_t i = 0; i < n; ++i) {
      res.x[i] += alpha * p[i];
      r[i] -= alpha * Ap[i];
    }
    const double rel = norm2_plain(r) / rhs_norm;
    res.iterations = it + 1;
    res.relative_residual = rel;
    if (rel <= rel_tol) {
      res.converged = true;
      return res;
    }
    for (std::int64_t i = 0; i < n; ++i) z[i] = r[i] / diag[i];
    const double rz_new = dot_plain(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::int64_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  return res;
}

}  // namespace gkt
