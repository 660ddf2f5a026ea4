#include "gkt/galerkin.hpp"

#include <algorithm>
#include <cmath>

#include "gkt/linalg.hpp"

namespace gkt {

double BasisSet::weight() const {
  double w = 1.0;
  for (int i = 0; i < m; ++i) w *= h;
  return w;
}

double BasisSet::min_singular_value() const {
  Tensor scaled = values;
  const double s = std::sqrt(weight());
  for (std::int64_t i = 0; i < scaled.numel(); ++i) scaled[i] *= s;
  SvdResult svd = svd_small(transpose_plain(scaled));  // d x n with d <= n
  return svd.sigma.back();
}

void BasisSet::require_full_rank() const {
  if (min_singular_value() <= 1e-8)
    throw NotSpdError("basis set is (numerically) rank deficient");
}

double h_inner(const Tensor& u, const Tensor& v, double h, int m) {
  if (u.numel() != v.numel()) throw DimensionError("h_inner length mismatch");
  double w = 1.0;
  for (int i = 0; i < m; ++i) w *= h;
  double s = 0.0;
  for (std::int64_t i = 0; i < u.numel(); ++i) s += u[i] * v[i];
  return w * s;
}

Tensor gram_matrix(const BasisSet& V) {
  Tensor M = matmul_plain(transpose_plain(V.values), V.values);
  const double w = V.weight();
  for (std::int64_t i = 0; i < M.numel(); ++i) M[i] *= w;
  // symmetrize roundoff, then verify SPD via Cholesky
  for (std::int64_t i = 0; i < M.rows(); ++i)
    for (std::int64_t j = i + 1; j < M.cols(); ++j) {
      const double v = 0.5 * (M.at(i, j) + M.at(j, i));
      M.at(i, j) = v;
      M.at(j, i) = v;
    }
  cholesky(M);
  return M;
}

Tensor mixed_matrix(const BasisSet& V, const BasisSet& Q0) {
  if (V.n() != Q0.n()) throw DimensionError("mixed_matrix length mismatch");
  Tensor B = matmul_plain(transpose_plain(Q0.values), V.values);  // r x d
  const double w = V.weight();
  for (std::int64_t i = 0; i < B.numel(); ++i) B[i] *= w;
  return B;
}

namespace {

Tensor riesz_data(const Tensor& f, const BasisSet& V) {
  // zeta_j = <f, v_j>_h realized directly on f
  Tensor zeta({V.d()});
  for (std::int64_t j = 0; j < V.d(); ++j) {
    double s = 0.0;
    for (std::int64_t i = 0; i < V.n(); ++i) s += f[i] * V.values.at(i, j);
    zeta[j] = V.weight() * s;
  }
  return zeta;
}

double rel_diff(const Tensor& a, const Tensor& b) {
  double num = 0.0, den = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double d = a[i] - b[i];
    num += d * d;
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

}  // namespace

ProjectionResult petrov_galerkin_project(const Tensor& f, const BasisSet& Q0,
                                         const BasisSet& V) {
  if (Q0.d() > V.d()) throw DimensionError("value space larger than key space (r > d)");
  const std::int64_t d = V.d(), r = Q0.d();
  const Tensor M = gram_matrix(V);
  const Tensor B = mixed_matrix(V, Q0);
  const Tensor zeta = riesz_data(f, V);

  // Schur closed form: lambda = (B M^-1 B^T)^-1 B M^-1 zeta
  const Tensor Minv_Bt = solve_spd(M, transpose_plain(B));  // d x r
  const Tensor S = matmul_plain(B, Minv_Bt);                // r x r
  const Tensor Minv_zeta = solve_spd(M, zeta.reshaped({d, 1}));
  const Tensor rhs_schur = matmul_plain(B, Minv_zeta);      // r x 1
  Tensor lambda = solve_spd(S, rhs_schur).reshaped({r});

  // Direct block solve of the saddle system [[M, B^T], [B, 0]]
  Tensor block({d + r, d + r});
  for (std::int64_t i = 0; i < d; ++i)
    for (std::int64_t j = 0; j < d; ++j) block.at(i, j) = M.at(i, j);
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < d; ++j) {
      block.at(d + i, j) = B.at(i, j);
      block.at(j, d + i) = B.at(i, j);
    }
  Tensor rhs_block({d + r});
  for (std::int64_t j = 0; j < d; ++j) rhs_block[j] = zeta[j];
  Tensor sol = solve_lu(block, rhs_block);
  Tensor lambda_block({r});
  for (std::int64_t i = 0; i < r; ++i) lambda_block[i] = sol[d + i];

  ProjectionResult res;
  res.schur_vs_block_rel = rel_diff(lambda_block, lambda);
  res.lambda = lambda;
  res.lambda_block = std::move(lambda_block);

  // mu = M^-1 (zeta - B^T lambda); residual dual norm sqrt(residual^T mu)
  Tensor resid({d});
  for (std::int64_t j = 0; j < d; ++j) {
    double s = zeta[j];
    for (std::int64_t i = 0; i < r; ++i) s -= B.at(i, j) * lambda[i];
    resid[j] = s;
  }
  res.mu = solve_spd(M, resid.reshaped({d, 1})).reshaped({d});
  double dual2 = 0.0;
  for (std::int64_t j = 0; j < d; ++j) dual2 += resid[j] * res.mu[j];
  res.residual_dual_norm = std::sqrt(std::max(dual2, 0.0));

  res.p = Tensor({Q0.n()});
  for (std::int64_t i = 0; i < Q0.n(); ++i) {
    double s = 0.0;
    for (std::int64_t j = 0; j < r; ++j) s += Q0.values.at(i, j) * lambda[j];
    res.p[i] = s;
  }
  return res;
}

AttentionWeights construct_attention_weights(const Tensor& y, const Tensor& wq,
                                             const Tensor& wv,
                                             const std::vector<std::int64_t>& perm,
                                             const Tensor& M, const Tensor& B) {
  const std::int64_t d = wq.rows();
  const std::int64_t r = B.rows();
  if (static_cast<std::int64_t>(perm.size()) != d)
    throw DimensionError("permutation size mismatch");
  (void)y;

  Tensor U({d, d});
  for (std::int64_t j = 0; j < d; ++j) U.at(perm[static_cast<std::size_t>(j)], j) = 1.0;

  const Tensor Minv_Bt = solve_spd(M, transpose_plain(B));
  const Tensor S = matmul_plain(B, Minv_Bt);  // r x r Schur complement
  Tensor Sinv;
  try {
    Sinv = solve_spd(S, Tensor::identity(r));
  } catch (const NotSpdError&) {
    throw NumericalError("singular Schur complement in attention-weight construction");
  }
  Tensor Lambda({d, d});
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < r; ++j) Lambda.at(i, j) = Sinv.at(i, j);

  AttentionWeights out;
  out.r = r;
  out.wq_tilde = matmul_plain(wq, U);
  out.wk_tilde = matmul_plain(out.wq_tilde, Lambda);
  out.wv_tilde = transpose_plain(solve_spd(M, transpose_plain(wv)));  // wv M^-1, M symmetric
  return out;
}

Tensor AttentionWeights::reproduce(const Tensor& y, const Tensor& zeta, double h,
                                   int m) const {
  double w = 1.0;
  for (int i = 0; i < m; ++i) w *= h;
  const Tensor q = matmul_plain(y, wq_tilde);
  const Tensor k = matmul_plain(y, wk_tilde);
  const Tensor v = matmul_plain(y, wv_tilde);
  const Tensor ctx = matmul_plain(transpose_plain(k), v);          // d x d
  const Tensor coef = matmul_plain(ctx, zeta.reshaped({zeta.numel(), 1}));
  Tensor p = matmul_plain(q, coef).reshaped({y.rows()});
  for (std::int64_t i = 0; i < p.numel(); ++i) p[i] *= w;
  return p;
}

double lbb_constant(const Tensor& B, double c_v, double c_q) {
  SvdResult svd = svd_small(B);
  const double sigma_min = svd.sigma.back();
  if (sigma_min < 1e-12) throw NumericalError("degenerate trial/test pair (sigma_min ~ 0)");
  return sigma_min / (c_v * c_q);
}

LbbEmpirical lbb_empirical_check(const BasisSet& V, const BasisSet& Q0, const Tensor& B,
                                 double c_v, double c_q, std::int64_t p_draws,
                                 std::int64_t w_draws, Rng& rng) {
  LbbEmpirical out;
  out.c = lbb_constant(B, c_v, c_q);
  out.all_hold = true;
  out.min_margin = 1e300;
  const std::int64_t n = V.n();
  Tensor p({n}), w({n});
  for (std::int64_t t = 0; t < p_draws; ++t) {
    Tensor lambda = rng.normal_tensor({Q0.d()});
    for (std::int64_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::int64_t j = 0; j < Q0.d(); ++j) s += Q0.values.at(i, j) * lambda[j];
      p[i] = s;
    }
    const double p_norm = std::sqrt(h_inner(p, p, Q0.h, Q0.m));
    double best = 0.0;
    for (std::int64_t s = 0; s < w_draws; ++s) {
      Tensor mu = rng.normal_tensor({V.d()});
      for (std::int64_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::int64_t j = 0; j < V.d(); ++j) acc += V.values.at(i, j) * mu[j];
        w[i] = acc;
      }
      const double b_wp = h_inner(w, p, V.h, V.m);
      const double w_norm = std::sqrt(h_inner(w, w, V.h, V.m));
      if (w_norm > 0.0) best = std::max(best, std::fabs(b_wp) / w_norm);
    }
    const double margin = best - out.c * p_norm;
    out.min_margin = std::min(out.min_margin, margin);
    if (margin < 0.0) out.all_hold = false;
  }
  return out;
}

double minmax_closed_form(const Tensor& zeta, const Tensor& M, const Tensor& B) {
  const std::int64_t d = M.rows(), r = B.rows();
  const Tensor Minv_Bt = solve_spd(M, transpose_plain(B));
  const Tensor S = matmul_plain(B, Minv_Bt);
  const Tensor Minv_zeta = solve_spd(M, zeta.reshaped({d, 1}));
  const Tensor rhs = matmul_plain(B, Minv_zeta);
  const Tensor lambda = solve_spd(S, rhs).reshaped({r});
  Tensor resid({d});
  for (std::int64_t j = 0; j < d; ++j) {
    double s = zeta[j];
    for (std::int64_t i = 0; i < r; ++i) s -= B.at(i, j) * lambda[i];
    resid[j] = s;
  }
  const Tensor Minv_r = solve_spd(M, resid.reshaped({d, 1})).reshaped({d});
  double v = 0.0;
  for (std::int64_t j = 0; j < d; ++j) v += resid[j] * Minv_r[j];
  return std::sqrt(std::max(v, 0.0));
}

double minmax_gradient_descent(const Tensor& zeta, const Tensor& M, const Tensor& B,
                               std::int64_t restarts, std::int64_t iters, Rng& rng) {
  const std::int64_t d = M.rows(), r = B.rows();
  const Tensor Minv = solve_spd(M, Tensor::identity(d));
  auto objective = [&](const Tensor& lambda, Tensor* grad) {
    Tensor resid({d});
    for (std::int64_t j = 0; j < d; ++j) {
      double s = zeta[j];
      for (std::int64_t i = 0; i < r; ++i) s -= B.at(i, j) * lambda[i];
      resid[j] = s;
    }
    Tensor mr({d});
    for (std::int64_t i = 0; i < d; ++i) {
      double s = 0.0;
      for (std::int64_t j = 0; j < d; ++j) s += Minv.at(i, j) * resid[j];
      mr[i] = s;
    }
    double val = 0.0;
    for (std::int64_t j = 0; j < d; ++j) val += resid[j] * mr[j];
    if (grad) {
      for (std::int64_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::int64_t j = 0; j < d; ++j) s += B.at(i, j) * mr[j];
        (*grad)[i] = -2.0 * s;
      }
    }
    return val;
  };

  double best = 1e300;
  for (std::int64_t rs = 0; rs < restarts; ++rs) {
    Tensor lambda = rng.normal_tensor({r});
    Tensor grad({r}), hg({r});
    for (std::int64_t it = 0; it < iters; ++it) {
      const double val = objective(lambda, &grad);
      double g2 = 0.0;
      for (std::int64_t i = 0; i < r; ++i) g2 += grad[i] * grad[i];
      if (g2 < 1e-28 * std::max(1.0, val)) break;
      // exact line search on the quadratic: alpha = g^T g / (2 g^T H g),
      // H = 2 B M^-1 B^T; evaluate H g through the objective structure
      Tensor bmg({d});
      for (std::int64_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::int64_t i = 0; i < r; ++i) s += B.at(i, j) * grad[i];
        bmg[j] = s;
      }
      Tensor minv_bmg({d});
      for (std::int64_t i = 0; i < d; ++i) {
        double s = 0.0;
        for (std::int64_t j = 0; j < d; ++j) s += Minv.at(i, j) * bmg[j];
        minv_bmg[i] = s;
      }
      for (std::int64_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::int64_t j = 0; j < d; ++j) s += B.at(i, j) * minv_bmg[j];
        hg[i] = 2.0 * s;
      }
      double ghg = 0.0;
      for (std::int64_t i = 0; i < r; ++i) ghg += grad[i] * hg[i];
      if (ghg <= 0.0) break;
      const double alpha = g2 / ghg;
      for (std::int64_t i = 0; i < r; ++i) lambda[i] -= alpha * grad[i];
    }
    best = std::min(best, objective(lambda, nullptr));
  }
  return std::sqrt(std::max(best, 0.0));
}

CeaResult cea_check(const Tensor& f, const BasisSet& Q0, const BasisSet& V,
                    const AttentionWeights& weights, const Tensor& y) {
  CeaResult out;
  const std::int64_t n = Q0.n(), r = Q0.d();

  // f_h: best ||.||_h approximation of f in span(Q0) (least squares)
  const Tensor Gq = gram_matrix(Q0);
  Tensor zq({r});
  for (std::int64_t j = 0; j < r; ++j) {
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) s += f[i] * Q0.values.at(i, j);
    zq[j] = Q0.weight() * s;
  }
  const Tensor lam_f = solve_spd(Gq, zq.reshaped({r, 1})).reshaped({r});
  Tensor fh({n});
  for (std::int64_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::int64_t j = 0; j < r; ++j) s += Q0.values.at(i, j) * lam_f[j];
    fh[i] = s;
  }
  Tensor diff({n});
  for (std::int64_t i = 0; i < n; ++i) diff[i] = f[i] - fh[i];
  out.best_approx_err = std::sqrt(h_inner(diff, diff, Q0.h, Q0.m));

  // p: attention-realized projection of f_h; minmax on the same data
  const Tensor M = gram_matrix(V);
  const Tensor B = mixed_matrix(V, Q0);
  Tensor zeta({V.d()});
  for (std::int64_t j = 0; j < V.d(); ++j) {
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) s += fh[i] * V.values.at(i, j);
    zeta[j] = V.weight() * s;
  }
  const Tensor p = weights.reproduce(y, zeta, V.h, V.m);
  out.minmax_closed = minmax_closed_form(zeta, M, B);
  out.c = lbb_constant(B, 1.0, 1.0);

  for (std::int64_t i = 0; i < n; ++i) diff[i] = f[i] - p[i];
  out.lhs = std::sqrt(h_inner(diff, diff, Q0.h, Q0.m));
  out.rhs = out.minmax_closed / out.c + out.best_approx_err;
  out.holds = out.lhs <= out.rhs + 1e-9;
  return out;
}

BasisUpdateResult basis_update_check(const BasisSet& V, const BasisSet& K,
                                     const BasisSet& Q) {
  BasisUpdateResult out;
  const std::int64_t n = V.n(), dv = V.d(), dk = K.d(), r = Q.d();
  if (K.n() != n || Q.n() != n) throw DimensionError("basis_update_check length mismatch");

  const Tensor Mk = gram_matrix(K);
  const Tensor Bp = mixed_matrix(K, Q);  // r x dk, b(k_j, q_i)
  // A[l][j] = a(v_j, k_l) = h^m sum_i v_j(x_i) k_l(xi_i)
  Tensor A = matmul_plain(transpose_plain(K.values), V.values);  // dk x dv
  for (std::int64_t i = 0; i < A.numel(); ++i) A[i] *= K.weight();

  const Tensor Minv_Bt = solve_spd(Mk, transpose_plain(Bp));
  const Tensor S = matmul_plain(Bp, Minv_Bt);
  const Tensor Sinv = solve_spd(S, Tensor::identity(r));

  // attention matrix route: Lam = blkdiag(Sinv, 0) over the full Q columns
  // z_all = Q0 Sinv Bp Mk^-1 A
  const Tensor Minv_A = solve_spd(Mk, A);  // dk x dv
  const Tensor coeff = matmul_plain(matmul_plain(Sinv, Bp), Minv_A);  // r x dv
  Tensor Q0v = Q.values;
  const Tensor z_matrix = matmul_plain(Q0v, coeff);  // n x dv

  double max_defect = 0.0, max_gap = 0.0, max_route = 0.0;
  for (std::int64_t j = 0; j < dv; ++j) {
    Tensor zeta({dk});
    for (std::int64_t l = 0; l < dk; ++l) zeta[l] = A.at(l, j);
    // per-column saddle solve
    const Tensor Minv_z = solve_spd(Mk, zeta.reshaped({dk, 1}));
    const Tensor lam = solve_spd(S, matmul_plain(Bp, Minv_z)).reshaped({r});
    Tensor zj({n});
    for (std::int64_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::int64_t q = 0; q < r; ++q) s += Q.values.at(i, q) * lam[q];
      zj[i] = s;
    }
    // route agreement
    double num = 0.0, den = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      const double dd = zj[i] - z_matrix.at(i, j);
      num += dd * dd;
      den += zj[i] * zj[i];
    }
    max_route = std::max(max_route, std::sqrt(num) / std::max(std::sqrt(den), 1e-12));

    // defect of the functional ell(k) = a(v_j, k) - b(k, z_j) computed from
    // the nodal z_j (attention route), dual norm via Riesz identity
    Tensor ell({dk});
    for (std::int64_t l = 0; l < dk; ++l) {
      double s = 0.0;
      for (std::int64_t i = 0; i < n; ++i) s += K.values.at(i, l) * z_matrix.at(i, j);
      ell[l] = zeta[l] - K.weight() * s;
    }
    const Tensor Minv_e = solve_spd(Mk, ell.reshaped({dk, 1})).reshaped({dk});
    double defect2 = 0.0;
    for (std::int64_t l = 0; l < dk; ++l) defect2 += ell[l] * Minv_e[l];
    const double defect = std::sqrt(std::max(defect2, 0.0));
    const double bound = minmax_closed_form(zeta, Mk, Bp);
    max_defect = std::max(max_defect, defect);
    max_gap = std::max(max_gap, defect - bound);
  }
  out.max_defect = max_defect;
  out.max_bound_gap = max_gap;
  out.z_route_rel = max_route;
  return out;
}

// ---------------------------------------------------------------------------
// instance generation
// ---------------------------------------------------------------------------

Tensor fourier_columns(std::int64_t n, std::int64_t d) {
  if (d >= n) throw DimensionError("fourier_columns needs d < n");
  Tensor out({n, d});
  const double sqrt2 = std::sqrt(2.0);
  for (std::int64_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) / static_cast<double>(n);
    for (std::int64_t j = 0; j < d; ++j) {
      if (j == 0) {
        out.at(i, j) = 1.0;
      } else {
        const std::int64_t k = (j + 1) / 2;
        const double ang = 2.0 * 3.14159265358979323846 * static_cast<double>(k) * x;
        out.at(i, j) = (j % 2 == 1) ? sqrt2 * std::cos(ang) : sqrt2 * std::sin(ang);
      }
    }
  }
  return out;
}

Tensor orthonormalize_h(Tensor& columns, double h, int m) {
  const std::int64_t n = columns.rows(), d = columns.cols();
  double w = 1.0;
  for (int i = 0; i < m; ++i) w *= h;
  Tensor T = Tensor::identity(d);
  for (std::int64_t j = 0; j < d; ++j) {
    for (std::int64_t k = 0; k < j; ++k) {
      double dot = 0.0;
      for (std::int64_t i = 0; i < n; ++i) dot += columns.at(i, k) * columns.at(i, j);
      dot *= w;
      for (std::int64_t i = 0; i < n; ++i) columns.at(i, j) -= dot * columns.at(i, k);
      for (std::int64_t i = 0; i < d; ++i) T.at(i, j) -= dot * T.at(i, k);
    }
    double nrm2 = 0.0;
    for (std::int64_t i = 0; i < n; ++i) nrm2 += columns.at(i, j) * columns.at(i, j);
    nrm2 *= w;
    const double nrm = std::sqrt(nrm2);
    if (nrm < 1e-12) throw NotSpdError("rank-deficient columns in orthonormalize_h");
    for (std::int64_t i = 0; i < n; ++i) columns.at(i, j) /= nrm;
    for (std::int64_t i = 0; i < d; ++i) T.at(i, j) /= nrm;
  }
  return T;
}

Tensor sample_smooth_function(std::int64_t n, std::uint64_t seed) {
  Rng rng = Rng::substream(seed, "smooth-f");
  const std::int64_t modes = 6;
  std::vector<double> ac, as;
  for (std::int64_t k = 0; k <= modes; ++k) {
    const double decay = 1.0 / (1.0 + static_cast<double>(k * k));
    ac.push_back(rng.normal() * decay);
    as.push_back(rng.normal() * decay);
  }
  Tensor f({n});
  for (std::int64_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) / static_cast<double>(n);
    double s = ac[0];
    for (std::int64_t k = 1; k <= modes; ++k) {
      const double ang = 2.0 * 3.14159265358979323846 * static_cast<double>(k) * x;
      s += ac[static_cast<std::size_t>(k)] * std::cos(ang) +
           as[static_cast<std::size_t>(k)] * std::sin(ang);
    }
    f[i] = s;
  }
  return f;
}

PgInstance make_pg_instance(std::int64_t n, std::int64_t d, std::int64_t r,
                            BasisFamily family, std::uint64_t seed,
                            bool use_permutation) {
  if (r > d || d >= n) throw DimensionError("make_pg_instance needs r <= d < n");
  PgInstance inst;
  inst.h = 1.0 / static_cast<double>(n);
  inst.m = 1;

  Rng rng = Rng::substream(seed, "pg-instance");
  if (family == BasisFamily::fourier) {
    // smooth latent: trig columns mixed by a random invertible matrix
    Tensor base = fourier_columns(n, d);
    Tensor mix = rng.normal_tensor({d, d});
    for (std::int64_t i = 0; i < d; ++i) mix.at(i, i) += 2.0;
    inst.y = matmul_plain(base, mix);
  } else {
    inst.y = rng.normal_tensor({n, d});
  }

  auto absorbed_projection = [&](Rng& r2) {
    Tensor w = r2.normal_tensor({d, d});
    for (std::int64_t i = 0; i < d; ++i) w.at(i, i) += 2.0;  // keep well-conditioned
    Tensor cols = matmul_plain(inst.y, w);
    Tensor T = orthonormalize_h(cols, inst.h, inst.m);
    return std::pair<Tensor, Tensor>(matmul_plain(w, T), std::move(cols));
  };

  auto [wq, qcols] = absorbed_projection(rng);
  auto [wv, vcols] = absorbed_projection(rng);
  inst.wq = std::move(wq);
  inst.wv = std::move(wv);

  inst.perm.resize(static_cast<std::size_t>(d));
  for (std::int64_t i = 0; i < d; ++i) inst.perm[static_cast<std::size_t>(i)] = i;
  if (use_permutation) {
    for (std::int64_t i = d - 1; i > 0; --i)
      std::swap(inst.perm[static_cast<std::size_t>(i)],
                inst.perm[static_cast<std::size_t>(rng.index(i + 1))]);
  }
  // Q columns after permutation: column j of QU is column perm[j] of Q
  Tensor qperm({n, d});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < d; ++j)
      qperm.at(i, j) = qcols.at(i, inst.perm[static_cast<std::size_t>(j)]);

  inst.Q = BasisSet{qperm, inst.h, inst.m, "omega"};
  Tensor q0({n, r});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < r; ++j) q0.at(i, j) = qperm.at(i, j);
  inst.Q0 = BasisSet{std::move(q0), inst.h, inst.m, "omega"};
  inst.V = BasisSet{std::move(vcols), inst.h, inst.m, "omega*"};
  inst.Q0.require_full_rank();
  inst.V.require_full_rank();
  inst.M = gram_matrix(inst.V);
  inst.B = mixed_matrix(inst.V, inst.Q0);
  return inst;
}

LbbInstance make_lbb_instance(std::int64_t n, std::int64_t d, std::int64_t r,
                              BasisFamily family, std::uint64_t seed,
                              double out_of_span) {
  if (r > d || d + r >= n) throw DimensionError("make_lbb_instance needs r <= d, d + r < n");
  Rng rng = Rng::substream(seed, "lbb-instance");
  const double h = 1.0 / static_cast<double>(n);

  Tensor vcols = family == BasisFamily::fourier
                     ? fourier_columns(n, d)
                     : rng.normal_tensor({n, d});
  orthonormalize_h(vcols, h, 1);

  // first r-1 trial functions live inside span(V); the last one leans
  // out_of_span-fraction inside and the rest orthogonal to span(V)
  Tensor qcols({n, r});
  for (std::int64_t j = 0; j + 1 < r; ++j) {
    Tensor mix = rng.normal_tensor({d});
    for (std::int64_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::int64_t k = 0; k < d; ++k) s += vcols.at(i, k) * mix[k];
      qcols.at(i, j) = s;
    }
  }
  {
    Tensor w = rng.normal_tensor({n});
    // remove the span(V) component
    for (std::int64_t k = 0; k < d; ++k) {
      double dot = 0.0;
      for (std::int64_t i = 0; i < n; ++i) dot += w[i] * vcols.at(i, k);
      dot *= h;
      for (std::int64_t i = 0; i < n; ++i) w[i] -= dot * vcols.at(i, k);
    }
    double nrm = 0.0;
    for (std::int64_t i = 0; i < n; ++i) nrm += w[i] * w[i];
    nrm = std::sqrt(nrm * h);
    Tensor inside = rng.normal_tensor({d});
    for (std::int64_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::int64_t k = 0; k < d; ++k) s += vcols.at(i, k) * inside[k];
      qcols.at(i, r - 1) = out_of_span * s + std::sqrt(1.0 - out_of_span * out_of_span) *
                                                  (w[i] / nrm);
    }
  }
  orthonormalize_h(qcols, h, 1);

  LbbInstance inst;
  inst.V = BasisSet{std::move(vcols), h, 1, "omega*"};
  inst.Q0 = BasisSet{std::move(qcols), h, 1, "omega"};
  inst.V.require_full_rank();
  inst.Q0.require_full_rank();
  inst.B = mixed_matrix(inst.V, inst.Q0);
  return inst;
}

VerifyReport run_verification(const VerifyOptions& options) {
  VerifyReport report;
  report.options = options;
  std::int64_t counter = 0;
  const std::array<BasisFamily, 2> families = {BasisFamily::fourier,
                                               BasisFamily::random_orthonormal};
  Rng seeder = Rng::substream(options.seed, "verify-battery");
  while (static_cast<std::int64_t>(report.trials.size()) < options.trials) {
    for (BasisFamily family : families) {
      for (std::int64_t n : options.sizes) {
        for (std::int64_t d : options.dims) {
          if (static_cast<std::int64_t>(report.trials.size()) >= options.trials) break;
          const std::uint64_t seed = seeder.next_u64();
          Rng local = Rng::substream(seed, "trial");
          const std::int64_t r = 1 + local.index(d);
          // one random-permutation instance per suite, rest identity
          const bool permute = counter == 3;
          ++counter;
          PgInstance inst = make_pg_instance(n, d, r, family, seed, permute);

          VerifyTrial trial;
          trial.n = n;
          trial.d = d;
          trial.r = r;
          trial.permuted = permute;
          trial.family = family == BasisFamily::fourier ? "fourier" : "random";

          Tensor f = local.normal_tensor({n});
          ProjectionResult proj = petrov_galerkin_project(f, inst.Q0, inst.V);
          trial.schur_vs_block = proj.schur_vs_block_rel;

          AttentionWeights weights = construct_attention_weights(
              inst.y, inst.wq, inst.wv, inst.perm, inst.M, inst.B);
          Tensor zeta({inst.V.d()});
          for (std::int64_t j = 0; j < inst.V.d(); ++j) {
            double s = 0.0;
            for (std::int64_t i = 0; i < n; ++i) s += f[i] * inst.V.values.at(i, j);
            zeta[j] = inst.V.weight() * s;
          }
          Tensor p_attn = weights.reproduce(inst.y, zeta, inst.h, inst.m);
          if (options.inject_fault)
            for (std::int64_t i = 0; i < p_attn.numel(); ++i) p_attn[i] *= 1.0 + 1e-3;
          double num = 0.0, den = 0.0;
          for (std::int64_t i = 0; i < n; ++i) {
            const double dd = p_attn[i] - proj.p[i];
            num += dd * dd;
            den += proj.p[i] * proj.p[i];
          }
          trial.reproduce_rel = std::sqrt(num) / std::max(std::sqrt(den), 1e-300);

          const double mm_closed = minmax_closed_form(zeta, inst.M, inst.B);
          Rng gd_rng = Rng::substream(seed, "gd-oracle");
          const double mm_gd =
              minmax_gradient_descent(zeta, inst.M, inst.B, 20, 2000, gd_rng);
          // guard against r == d instances where the min-max term vanishes
          const Tensor minv_z = solve_spd(inst.M, zeta.reshaped({d, 1})).reshaped({d});
          double z2 = 0.0;
          for (std::int64_t j = 0; j < d; ++j) z2 += zeta[j] * minv_z[j];
          const double zeta_scale = std::sqrt(std::max(z2, 0.0));
          trial.minmax_gap = std::fabs(mm_closed - mm_gd) /
                             std::max(mm_closed, 1e-9 * std::max(1.0, zeta_scale));

          CeaResult cea = cea_check(f, inst.Q0, inst.V, weights, inst.y);
          trial.cea_lhs = cea.lhs;
          trial.cea_rhs = cea.rhs;
          trial.cea_holds = cea.holds;

          trial.pass = trial.reproduce_rel < 1e-9 && trial.cea_holds &&
                       trial.schur_vs_block < 1e-9 && trial.minmax_gap < 1e-6;
          report.max_reproduce_rel = std::max(report.max_reproduce_rel, trial.reproduce_rel);
          report.max_schur_vs_block = std::max(report.max_schur_vs_block, trial.schur_vs_block);
          report.max_minmax_gap = std::max(report.max_minmax_gap, trial.minmax_gap);
          if (trial.pass) ++report.pass_count;
          report.trials.push_back(std::move(trial));
        }
      }
    }
  }
  report.all_pass = report.pass_count == static_cast<std::int64_t>(report.trials.size());
  return report;
}

}  // namespace gkt
