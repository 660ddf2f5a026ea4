#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gkt/rng.hpp"
#include "gkt/tensor.hpp"

namespace gkt {

/// d discretized basis functions: column j holds v_j evaluated at the n grid
/// points of a mesh with size h (and spacial dimension m for the h^m weight).
struct BasisSet {
  Tensor values;  // n x d nodal values
  double h = 0.0;
  int m = 1;
  std::string domain = "omega";

  std::int64_t n() const { return values.rows(); }
  std::int64_t d() const { return values.cols(); }
  double weight() const;  // h^m

  /// Smallest singular value of sqrt(h^m) * values; must exceed 1e-8.
  double min_singular_value() const;
  void require_full_rank() const;
};

/// Discrete inner product <u, v>_h = h^m sum_i u_i v_i.
double h_inner(const Tensor& u, const Tensor& v, double h, int m = 1);

/// Gram matrix M = h^m V^T V; Cholesky-verified SPD.
Tensor gram_matrix(const BasisSet& V);

/// Mixed matrix B (r x d) with B_ij = b(v_j, q_i) = h^m sum v_j(xi) q_i(x).
Tensor mixed_matrix(const BasisSet& V, const BasisSet& Q0);

struct ProjectionResult {
  Tensor lambda;        // r, from the Schur closed form
  Tensor lambda_block;  // r, from the direct block solve of the saddle system
  Tensor mu;            // d
  Tensor p;             // n nodal values, p = Q0 lambda
  double residual_dual_norm = 0.0;  // sqrt((zeta - B^T lambda)^T M^-1 (...))
  double schur_vs_block_rel = 0.0;
};

/// Petrov-Galerkin projection of f onto span(Q0) tested against span(V):
/// solves the saddle system both by the Schur closed form
/// lambda = (B M^-1 B^T)^-1 B M^-1 zeta and by a direct block solve.
ProjectionResult petrov_galerkin_project(const Tensor& f, const BasisSet& Q0,
                                         const BasisSet& V);

struct AttentionWeights {
  Tensor wq_tilde, wk_tilde, wv_tilde;  // d x d
  std::int64_t r = 0;

  /// h^m * (y Wq~) ((y Wk~)^T (y Wv~)) zeta; equals Q0 lambda by construction.
  Tensor reproduce(const Tensor& y, const Tensor& zeta, double h, int m) const;
};

/// Builds the explicit updated projection matrices: Wq~ = Wq U,
/// Wk~ = Wq U Lambda with Lambda = blkdiag((B M^-1 B^T)^-1, 0),
/// Wv~ = Wv M^-1.
AttentionWeights construct_attention_weights(const Tensor& y, const Tensor& wq,
                                             const Tensor& wv,
                                             const std::vector<std::int64_t>& perm,
                                             const Tensor& M, const Tensor& B);

/// c = min singular value of B divided by the norm-equivalence constants.
double lbb_constant(const Tensor& B, double c_v, double c_q);

struct LbbEmpirical {
  double c = 0.0;
  bool all_hold = false;
  double min_margin = 0.0;  // min over p-draws of (sampled sup - c * ||p||)
};

/// Monte-Carlo spot check of the lower bound: for random p in span(Q0), the
/// sampled sup over random w in span(V) of |b(w,p)| / ||w|| must clear
/// c * ||p||_h. Sampling under-estimates the sup, so a pass is conservative.
LbbEmpirical lbb_empirical_check(const BasisSet& V, const BasisSet& Q0, const Tensor& B,
                                 double c_v, double c_q, std::int64_t p_draws,
                                 std::int64_t w_draws, Rng& rng);

struct CeaResult {
  double lhs = 0.0;       // ||f - p||_h
  double rhs = 0.0;       // c^-1 * minmax + ||f - f_h||_h
  bool holds = false;
  double minmax_closed = 0.0;
  double best_approx_err = 0.0;  // ||f - f_h||_h
  double c = 0.0;
};

/// Quasi-optimality check: f_h is the h-best approximation of f in span(Q0)
/// (least squares); p realizes the attention-constructed projection of f_h.
CeaResult cea_check(const Tensor& f, const BasisSet& Q0, const BasisSet& V,
                    const AttentionWeights& weights, const Tensor& y);

/// min over lambda of sqrt((zeta - B^T lambda)^T M^-1 (zeta - B^T lambda))
/// via exact-line-search gradient descent with random restarts (oracle).
double minmax_gradient_descent(const Tensor& zeta, const Tensor& M, const Tensor& B,
                               std::int64_t restarts, std::int64_t iters, Rng& rng);
double minmax_closed_form(const Tensor& zeta, const Tensor& M, const Tensor& B);

struct BasisUpdateResult {
  double max_defect = 0.0;      // max_j dual norm of a(v_j,.) - b(., z_j)
  double max_bound_gap = 0.0;   // max_j (defect_j - minmax_j), <= 1e-8 expected
  double z_route_rel = 0.0;     // per-column solve vs attention matrix route
};

/// Theorem "layer-wise dynamic basis update": builds z_j from the update rule
/// and verifies the dual-norm defect against the min-max bound.
BasisUpdateResult basis_update_check(const BasisSet& V, const BasisSet& K,
                                     const BasisSet& Q);

// ---- instance generation ---------------------------------------------------

enum class BasisFamily { fourier, random_orthonormal };

/// Deterministic verification instance: latent y (n x d), projection matrices
/// absorbed so that Q = y Wq and V = y Wv have h-orthonormal columns, with an
/// optional column permutation U and value-space dimension r <= d.
struct PgInstance {
  Tensor y;
  Tensor wq, wv;
  std::vector<std::int64_t> perm;
  BasisSet Q;   // n x d (columns of y Wq U)
  BasisSet Q0;  // first r columns
  BasisSet V;
  Tensor M, B;
  double h = 0.0;
  int m = 1;
};

PgInstance make_pg_instance(std::int64_t n, std::int64_t d, std::int64_t r,
                            BasisFamily family, std::uint64_t seed,
                            bool use_permutation);

/// Test/trial pair for the lower-bound battery: V h-orthonormal, Q0 built so
/// its last basis function leans mostly outside span(V). This isolates the
/// smallest singular value of B (the regime where the bound is not slack).
struct LbbInstance {
  BasisSet V, Q0;
  Tensor B;
};
LbbInstance make_lbb_instance(std::int64_t n, std::int64_t d, std::int64_t r,
                              BasisFamily family, std::uint64_t seed,
                              double out_of_span = 0.03);

/// Smooth 1D test function used by the cross-resolution sweeps.
Tensor sample_smooth_function(std::int64_t n, std::uint64_t seed);

/// Exactly h-orthonormal trigonometric columns on the periodic unit grid.
Tensor fourier_columns(std::int64_t n, std::int64_t d);

/// In-place modified Gram-Schmidt under <.,.>_h; returns the absorbed
/// upper-triangular transform T so that new = old * T.
Tensor orthonormalize_h(Tensor& columns, double h, int m);

// ---- batched verification ---------------------------------------------------

struct VerifyOptions {
  std::int64_t trials = 100;
  std::vector<std::int64_t> sizes = {16, 64, 256};
  std::vector<std::int64_t> dims = {4, 8};
  std::uint64_t seed = 1127802;
  bool inject_fault = false;  // perturb lambda by 1e-3 (negative control)
};

struct VerifyTrial {
  std::int64_t n = 0, d = 0, r = 0;
  std::string family;
  bool permuted = false;
  double reproduce_rel = 0.0;
  double schur_vs_block = 0.0;
  double minmax_gap = 0.0;
  double cea_lhs = 0.0, cea_rhs = 0.0;
  bool cea_holds = false;
  bool pass = false;
};

struct VerifyReport {
  VerifyOptions options;
  std::vector<VerifyTrial> trials;
  std::int64_t pass_count = 0;
  double max_reproduce_rel = 0.0;
  double max_schur_vs_block = 0.0;
  double max_minmax_gap = 0.0;
  bool all_pass = false;
};

VerifyReport run_verification(const VerifyOptions& options);

}  // namespace gkt
