#include "gkt/pde_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

#include "gkt/fft.hpp"
#include "gkt/linalg.hpp"
#include "gkt/parallel.hpp"

namespace gkt {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 6.283185307179586476925286766559;
}  // namespace

std::int64_t env_thread_count() {
  if (const char* env = std::getenv("GKT_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<std::int64_t>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<std::int64_t>(hw);
}

// ---------------------------------------------------------------------------
// Gaussian random fields
// ---------------------------------------------------------------------------

namespace {

double mode_scale_1d(std::int64_t k, const GrfSpec& spec) {
  const double lam = 4.0 * kPi * kPi * static_cast<double>(k * k) + spec.tau2;
  return spec.sigma * std::pow(lam, -spec.alpha / 2.0);
}

}  // namespace

Tensor grf_sample_1d_periodic(std::int64_t n, const GrfSpec& spec, std::uint64_t seed) {
  if (!is_power_of_two(n)) throw DimensionError("grf_sample_1d_periodic needs power-of-two n");
  Rng rng = Rng::substream(seed, "grf1d");
  std::vector<cdouble> coef(static_cast<std::size_t>(n), cdouble(0.0, 0.0));
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);

  coef[0] = cdouble(mode_scale_1d(0, spec) * rng.normal(), 0.0);
  for (std::int64_t k = 1; k < n / 2; ++k) {
    const double s = mode_scale_1d(k, spec) * inv_sqrt2;
    const double a = rng.normal(), b = rng.normal();
    coef[static_cast<std::size_t>(k)] = cdouble(s * a, s * b);
    coef[static_cast<std::size_t>(n - k)] = std::conj(coef[static_cast<std::size_t>(k)]);
  }
  coef[static_cast<std::size_t>(n / 2)] = cdouble(mode_scale_1d(n / 2, spec) * rng.normal(), 0.0);

  fft_inplace(coef, true);  // (1/n) sum coef e^{+2 pi i jk/n}
  Tensor u({n});
  for (std::int64_t j = 0; j < n; ++j)
    u[j] = static_cast<double>(n) * coef[static_cast<std::size_t>(j)].real();
  return u;
}

double grf_1d_analytic_variance(std::int64_t n, const GrfSpec& spec) {
  double var = mode_scale_1d(0, spec) * mode_scale_1d(0, spec);
  for (std::int64_t k = 1; k < n / 2; ++k) {
    const double s = mode_scale_1d(k, spec);
    var += 2.0 * s * s;
  }
  const double sn = mode_scale_1d(n / 2, spec);
  var += sn * sn;
  return var;
}

Tensor grf_sample_2d_neumann(std::int64_t n, const GrfSpec& spec, std::uint64_t seed,
                             std::int64_t max_modes) {
  const std::int64_t K = (max_modes < 0 ? n - 1 : max_modes);
  Rng rng = Rng::substream(seed, "grf2d");
  Tensor xi({K + 1, K + 1});
  for (std::int64_t j = 0; j <= K; ++j)
    for (std::int64_t k = 0; k <= K; ++k) {
      const double lam = kPi * kPi * static_cast<double>(j * j + k * k) + spec.tau2;
      xi.at(j, k) = spec.sigma * std::pow(lam, -spec.alpha / 2.0) * rng.normal();
    }
  // basis phi_jk(x,y) = c_j c_k cos(j pi x) cos(k pi y), c_0 = 1, c_j = sqrt2
  Tensor C({K + 1, n});
  const double h = 1.0 / static_cast<double>(n - 1);
  for (std::int64_t j = 0; j <= K; ++j) {
    const double cj = (j == 0) ? 1.0 : std::sqrt(2.0);
    for (std::int64_t i = 0; i < n; ++i)
      C.at(j, i) = cj * std::cos(static_cast<double>(j) * kPi * static_cast<double>(i) * h);
  }
  // field = C^T xi C, evaluated row grid x column grid
  Tensor tmp = matmul_plain(transpose_plain(C), xi);  // n x (K+1)
  return matmul_plain(tmp, C);                        // n x n
}

double grf_2d_analytic_variance_at(std::int64_t n, const GrfSpec& spec, double x,
                                   double y, std::int64_t max_modes) {
  const std::int64_t K = (max_modes < 0 ? n - 1 : max_modes);
  double var = 0.0;
  for (std::int64_t j = 0; j <= K; ++j)
    for (std::int64_t k = 0; k <= K; ++k) {
      const double lam = kPi * kPi * static_cast<double>(j * j + k * k) + spec.tau2;
      const double cj = (j == 0) ? 1.0 : std::sqrt(2.0);
      const double ck = (k == 0) ? 1.0 : std::sqrt(2.0);
      const double phi = cj * ck * std::cos(static_cast<double>(j) * kPi * x) *
                         std::cos(static_cast<double>(k) * kPi * y);
      const double sd = spec.sigma * std::pow(lam, -spec.alpha / 2.0);
      var += sd * sd * phi * phi;
    }
  return var;
}

// ---------------------------------------------------------------------------
// Burgers pseudo-spectral solver
// ---------------------------------------------------------------------------

Tensor burgers_solve(const Tensor& u0, double nu, double t_end, double dt) {
  const std::int64_t n = u0.numel();
  if (!is_power_of_two(n)) throw DimensionError("burgers_solve needs power-of-two n");
  if (dt <= 0.0 || t_end < 0.0) throw ConfigError("burgers_solve needs dt > 0, t_end >= 0");
  const std::int64_t steps = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(t_end / dt)));
  const double step = t_end / static_cast<double>(steps);

  std::vector<double> kappa(static_cast<std::size_t>(n));
  std::vector<double> efull(static_cast<std::size_t>(n)), ehalf(static_cast<std::size_t>(n));
  std::vector<double> dealias(static_cast<std::size_t>(n));
  for (std::int64_t k = 0; k < n; ++k) {
    const std::int64_t ks = (k <= n / 2) ? k : k - n;
    kappa[static_cast<std::size_t>(k)] = kTwoPi * static_cast<double>(ks);
    const double lam = -nu * kappa[static_cast<std::size_t>(k)] * kappa[static_cast<std::size_t>(k)];
    efull[static_cast<std::size_t>(k)] = std::exp(lam * step);
    ehalf[static_cast<std::size_t>(k)] = std::exp(lam * step / 2.0);
    dealias[static_cast<std::size_t>(k)] = (std::llabs(ks) <= n / 3) ? 1.0 : 0.0;
  }

  std::vector<cdouble> v(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = cdouble(u0[i], 0.0);
  fft_inplace(v, false);

  std::vector<cdouble> work(static_cast<std::size_t>(n));
  auto nonlinear = [&](const std::vector<cdouble>& vh, std::vector<cdouble>& out) {
    out = vh;
    fft_inplace(out, true);  // physical space
    for (std::int64_t i = 0; i < n; ++i) {
      const double ur = out[static_cast<std::size_t>(i)].real();
      out[static_cast<std::size_t>(i)] = cdouble(0.5 * ur * ur, 0.0);
    }
    fft_inplace(out, false);
    for (std::int64_t k = 0; k < n; ++k) {
      const cdouble w = out[static_cast<std::size_t>(k)];
      // -d/dx of u^2/2: multiply by -i kappa, dealiased
      out[static_cast<std::size_t>(k)] =
          dealias[static_cast<std::size_t>(k)] *
          cdouble(kappa[static_cast<std::size_t>(k)] * w.imag(),
                  -kappa[static_cast<std::size_t>(k)] * w.real());
    }
  };

  std::vector<cdouble> a(static_cast<std::size_t>(n)), b(static_cast<std::size_t>(n)),
      c(static_cast<std::size_t>(n)), d(static_cast<std::size_t>(n)),
      stage(static_cast<std::size_t>(n));

  for (std::int64_t s = 0; s < steps; ++s) {
    nonlinear(v, a);
    for (std::int64_t k = 0; k < n; ++k)
      stage[static_cast<std::size_t>(k)] = ehalf[static_cast<std::size_t>(k)] *
          (v[static_cast<std::size_t>(k)] + 0.5 * step * a[static_cast<std::size_t>(k)]);
    nonlinear(stage, b);
    for (std::int64_t k = 0; k < n; ++k)
      stage[static_cast<std::size_t>(k)] = ehalf[static_cast<std::size_t>(k)] * v[static_cast<std::size_t>(k)] +
          0.5 * step * b[static_cast<std::size_t>(k)];
    nonlinear(stage, c);
    for (std::int64_t k = 0; k < n; ++k)
      stage[static_cast<std::size_t>(k)] = efull[static_cast<std::size_t>(k)] * v[static_cast<std::size_t>(k)] +
          step * ehalf[static_cast<std::size_t>(k)] * c[static_cast<std::size_t>(k)];
    nonlinear(stage, d);
    for (std::int64_t k = 0; k < n; ++k) {
      v[static_cast<std::size_t>(k)] =
          efull[static_cast<std::size_t>(k)] * v[static_cast<std::size_t>(k)] +
          (step / 6.0) * (efull[static_cast<std::size_t>(k)] * a[static_cast<std::size_t>(k)] +
                          2.0 * ehalf[static_cast<std::size_t>(k)] *
                              (b[static_cast<std::size_t>(k)] + c[static_cast<std::size_t>(k)]) +
                          d[static_cast<std::size_t>(k)]);
    }
    if ((s & 127) == 0 || s == steps - 1) {
      double m = 0.0;
      for (std::int64_t k = 0; k < n; ++k)
        m = std::max(m, std::fabs(v[static_cast<std::size_t>(k)].real()) +
                            std::fabs(v[static_cast<std::size_t>(k)].imag()));
      if (!std::isfinite(m) || m > 1e12)
        throw InstabilityError("burgers_solve blow-up; try a smaller dt");
    }
  }

  work = v;
  fft_inplace(work, true);
  Tensor out({n});
  for (std::int64_t i = 0; i < n; ++i) out[i] = work[static_cast<std::size_t>(i)].real();
  out.check_finite("burgers_solve output");
  return out;
}

// ---------------------------------------------------------------------------
// Darcy
// ---------------------------------------------------------------------------

Tensor coeff_pushforward(const Tensor& rho) {
  Tensor a(rho.shape());
  for (std::int64_t i = 0; i < rho.numel(); ++i) a[i] = rho[i] < 0.0 ? 3.0 : 12.0;
  return a;
}

Tensor darcy_solve_fd(const Tensor& a, const DarcySolveOptions& options) {
  if (a.rank() != 2 || a.rows() != a.cols()) throw DimensionError("darcy_solve_fd expects n x n");
  const std::int64_t n = a.rows();
  const std::int64_t in = n - 2;  // interior extent
  if (in < 1) throw DimensionError("darcy_solve_fd grid too small");
  for (std::int64_t i = 0; i < a.numel(); ++i)
    if (!(a[i] > 0.0)) throw ConfigError("darcy coefficient must be strictly positive");
  const double h = 1.0 / static_cast<double>(n - 1);
  const double inv_h2 = 1.0 / (h * h);

  auto ae = [&](std::int64_t i, std::int64_t j) { return 0.5 * (a.at(i, j) + a.at(i, j + 1)); };
  auto aw = [&](std::int64_t i, std::int64_t j) { return 0.5 * (a.at(i, j) + a.at(i, j - 1)); };
  auto an = [&](std::int64_t i, std::int64_t j) { return 0.5 * (a.at(i, j) + a.at(i + 1, j)); };
  auto as = [&](std::int64_t i, std::int64_t j) { return 0.5 * (a.at(i, j) + a.at(i - 1, j)); };

  Tensor rhs({in * in});
  Tensor diag({in * in});
  for (std::int64_t i = 1; i <= in; ++i)
    for (std::int64_t j = 1; j <= in; ++j) {
      const std::int64_t idx = (i - 1) * in + (j - 1);
      rhs[idx] = options.forcing != nullptr ? options.forcing->at(i, j) : 1.0;
      diag[idx] = (ae(i, j) + aw(i, j) + an(i, j) + as(i, j)) * inv_h2;
    }

  auto matvec = [&](const double* x, double* y) {
    for (std::int64_t i = 1; i <= in; ++i)
      for (std::int64_t j = 1; j <= in; ++j) {
        const std::int64_t idx = (i - 1) * in + (j - 1);
        const double uc = x[idx];
        const double ue = (j < in) ? x[idx + 1] : 0.0;
        const double uw = (j > 1) ? x[idx - 1] : 0.0;
        const double un = (i < in) ? x[idx + in] : 0.0;
        const double us = (i > 1) ? x[idx - in] : 0.0;
        y[idx] = inv_h2 * (ae(i, j) * (uc - ue) + aw(i, j) * (uc - uw) +
                           an(i, j) * (uc - un) + as(i, j) * (uc - us));
      }
  };

  PcgResult res = pcg(matvec, rhs, diag, options.rel_tol, 10 * n * n);
  if (!res.converged)
    throw NumericalError("darcy_solve_fd: CG failed to reach tolerance in 10 n^2 iterations");

  Tensor u({n, n});
  for (std::int64_t i = 1; i <= in; ++i)
    for (std::int64_t j = 1; j <= in; ++j) u.at(i, j) = res.x[(i - 1) * in + (j - 1)];
  return u;
}

// ---------------------------------------------------------------------------
// downsampling / noise
// ---------------------------------------------------------------------------

Tensor downsample_1d(const Tensor& field, std::int64_t target_n, Boundary boundary) {
  const std::int64_t n = field.numel();
  if (target_n == n) return field;
  Tensor out({target_n});
  if (boundary == Boundary::periodic) {
    if (n % target_n == 0) {
      const std::int64_t stride = n / target_n;
      for (std::int64_t i = 0; i < target_n; ++i) out[i] = field[i * stride];
      return out;
    }
    for (std::int64_t i = 0; i < target_n; ++i) {
      const double s = static_cast<double>(i) * static_cast<double>(n) / static_cast<double>(target_n);
      const std::int64_t i0 = static_cast<std::int64_t>(std::floor(s));
      const double w = s - static_cast<double>(i0);
      out[i] = (1.0 - w) * field[i0 % n] + w * field[(i0 + 1) % n];
    }
    return out;
  }
  if ((n - 1) % (target_n - 1) == 0) {
    const std::int64_t stride = (n - 1) / (target_n - 1);
    for (std::int64_t i = 0; i < target_n; ++i) out[i] = field[i * stride];
    return out;
  }
  const double scale = static_cast<double>(n - 1) / static_cast<double>(target_n - 1);
  for (std::int64_t i = 0; i < target_n; ++i) {
    const double s = static_cast<double>(i) * scale;
    std::int64_t i0 = static_cast<std::int64_t>(std::floor(s));
    if (i0 >= n - 1) i0 = n - 2;
    const double w = s - static_cast<double>(i0);
    out[i] = (1.0 - w) * field[i0] + w * field[i0 + 1];
  }
  return out;
}

Tensor downsample_2d(const Tensor& field, std::int64_t target_n, Boundary boundary) {
  if (field.rank() != 2 || field.rows() != field.cols())
    throw DimensionError("downsample_2d expects square field");
  const std::int64_t n = field.rows();
  if (target_n == n) return field;
  if (boundary != Boundary::periodic && (n - 1) % (target_n - 1) == 0) {
    const std::int64_t stride = (n - 1) / (target_n - 1);
    Tensor out({target_n, target_n});
    for (std::int64_t i = 0; i < target_n; ++i)
      for (std::int64_t j = 0; j < target_n; ++j) out.at(i, j) = field.at(i * stride, j * stride);
    return out;
  }
  // bilinear fallback (align corners)
  Tensor out({target_n, target_n});
  const double scale = static_cast<double>(n - 1) / static_cast<double>(target_n - 1);
  for (std::int64_t i = 0; i < target_n; ++i) {
    double si = static_cast<double>(i) * scale;
    std::int64_t i0 = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(si)), n - 2);
    const double wi = si - static_cast<double>(i0);
    for (std::int64_t j = 0; j < target_n; ++j) {
      double sj = static_cast<double>(j) * scale;
      std::int64_t j0 = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(sj)), n - 2);
      const double wj = sj - static_cast<double>(j0);
      out.at(i, j) = (1 - wi) * (1 - wj) * field.at(i0, j0) + (1 - wi) * wj * field.at(i0, j0 + 1) +
                     wi * (1 - wj) * field.at(i0 + 1, j0) + wi * wj * field.at(i0 + 1, j0 + 1);
    }
  }
  return out;
}

Tensor add_noise(const Tensor& u, double eps, const Tensor& per_point_std,
                 std::uint64_t seed) {
  if (u.numel() != per_point_std.numel()) throw DimensionError("add_noise std table mismatch");
  Tensor out = u;
  if (eps == 0.0) return out;
  Rng rng = Rng::substream(seed, "noise");
  for (std::int64_t i = 0; i < u.numel(); ++i)
    out[i] += eps * per_point_std[i] * rng.normal();
  return out;
}

// ---------------------------------------------------------------------------
// dataset building
// ---------------------------------------------------------------------------

Problem problem_from_string(const std::string& s) {
  if (s == "burgers" || s == "burgers1d") return Problem::burgers1d;
  if (s == "darcy" || s == "darcy2d") return Problem::darcy2d;
  if (s == "darcy-inverse" || s == "darcy_inverse") return Problem::darcy_inverse;
  throw ConfigError("unknown problem: " + s);
}

std::string to_string(Problem p) {
  switch (p) {
    case Problem::burgers1d: return "burgers1d";
    case Problem::darcy2d: return "darcy2d";
    case Problem::darcy_inverse: return "darcy-inverse";
  }
  return "?";
}

bool burgers_energy_ok(const DataSample& s) {
  double e0 = 0.0, e1 = 0.0;
  for (std::int64_t i = 0; i < s.input.numel(); ++i) e0 += s.input[i] * s.input[i];
  for (std::int64_t i = 0; i < s.target.numel(); ++i) e1 += s.target[i] * s.target[i];
  return e1 <= e0 * (1.0 + 1e-12);
}

namespace {

DataSample make_burgers_sample(const DatasetConfig& cfg, std::uint64_t sample_seed) {
  GrfSpec spec;  // sigma 25, tau^2 25, alpha 2, periodic
  Tensor u0_fine = grf_sample_1d_periodic(cfg.burgers_fine_n, spec, sample_seed);
  Tensor u1_fine = burgers_solve(u0_fine, cfg.burgers_nu, cfg.burgers_t_end, cfg.burgers_dt);
  DataSample s;
  s.input = downsample_1d(u0_fine, cfg.burgers_n, Boundary::periodic);
  s.target = downsample_1d(u1_fine, cfg.burgers_n, Boundary::periodic);
  s.input_grid = Grid{1, cfg.burgers_n, Boundary::periodic};
  s.target_grid = s.input_grid;
  return s;
}

struct DarcyPair {
  Tensor a_nf, u_nf, a_nc;
};

DarcyPair make_darcy_fields(const DatasetConfig& cfg, std::uint64_t sample_seed) {
  GrfSpec spec;
  spec.dimension = 2;
  spec.sigma = 1.0;
  spec.tau2 = 9.0;
  spec.boundary = Boundary::neumann;
  Tensor rho = grf_sample_2d_neumann(cfg.darcy_fine_n, spec, sample_seed);
  Tensor a_fine = coeff_pushforward(rho);
  Tensor u_fine = darcy_solve_fd(a_fine);
  DarcyPair p;
  p.a_nf = downsample_2d(a_fine, cfg.darcy_nf, Boundary::dirichlet);
  p.u_nf = downsample_2d(u_fine, cfg.darcy_nf, Boundary::dirichlet);
  p.a_nc = downsample_2d(a_fine, cfg.darcy_nc, Boundary::dirichlet);
  return p;
}

}  // namespace

Dataset dataset_build(const DatasetConfig& cfg) {
  if (cfg.count_train < 0 || cfg.count_test < 0) throw ConfigError("negative sample count");
  Dataset ds;
  ds.config = cfg;
  ds.train.resize(static_cast<std::size_t>(cfg.count_train));
  ds.test.resize(static_cast<std::size_t>(cfg.count_test));
  const std::int64_t threads = env_thread_count();

  auto split_seed = [&](bool train, std::int64_t idx) {
    // disjoint substreams for the two splits
    return Rng::substream(cfg.seed, train ? "datagen-train" : "datagen-test",
                          static_cast<std::uint64_t>(idx))
        .next_u64();
  };

  switch (cfg.problem) {
    case Problem::burgers1d: {
      parallel_for(cfg.count_train + cfg.count_test, threads, [&](std::int64_t i) {
        const bool train = i < cfg.count_train;
        const std::int64_t idx = train ? i : i - cfg.count_train;
        DataSample s = make_burgers_sample(cfg, split_seed(train, idx));
        (train ? ds.train : ds.test)[static_cast<std::size_t>(idx)] = std::move(s);
      });
      break;
    }
    case Problem::darcy2d: {
      parallel_for(cfg.count_train + cfg.count_test, threads, [&](std::int64_t i) {
        const bool train = i < cfg.count_train;
        const std::int64_t idx = train ? i : i - cfg.count_train;
        DarcyPair p = make_darcy_fields(cfg, split_seed(train, idx));
        DataSample s;
        s.input = std::move(p.a_nf);
        s.target = std::move(p.u_nf);
        s.input_grid = Grid{2, cfg.darcy_nf, Boundary::dirichlet};
        s.target_grid = s.input_grid;
        (train ? ds.train : ds.test)[static_cast<std::size_t>(idx)] = std::move(s);
      });
      break;
    }
    case Problem::darcy_inverse: {
      // clean solutions first; the noise table comes from the training split
      std::vector<DarcyPair> train_pairs(static_cast<std::size_t>(cfg.count_train));
      std::vector<DarcyPair> test_pairs(static_cast<std::size_t>(cfg.count_test));
      parallel_for(cfg.count_train + cfg.count_test, threads, [&](std::int64_t i) {
        const bool train = i < cfg.count_train;
        const std::int64_t idx = train ? i : i - cfg.count_train;
        DarcyPair p = make_darcy_fields(cfg, split_seed(train, idx));
        (train ? train_pairs : test_pairs)[static_cast<std::size_t>(idx)] = std::move(p);
      });

      const std::int64_t npts = cfg.darcy_nf * cfg.darcy_nf;
      Tensor mean({npts}), var({npts});
      if (cfg.count_train > 0) {
        for (const DarcyPair& p : train_pairs)
          for (std::int64_t i = 0; i < npts; ++i) mean[i] += p.u_nf[i];
        for (std::int64_t i = 0; i < npts; ++i) mean[i] /= static_cast<double>(cfg.count_train);
        for (const DarcyPair& p : train_pairs)
          for (std::int64_t i = 0; i < npts; ++i) {
            const double d = p.u_nf[i] - mean[i];
            var[i] += d * d;
          }
        for (std::int64_t i = 0; i < npts; ++i) var[i] /= static_cast<double>(cfg.count_train);
      }
      ds.noise_std = Tensor({npts});
      for (std::int64_t i = 0; i < npts; ++i) ds.noise_std[i] = std::sqrt(var[i]);

      auto finalize = [&](std::vector<DarcyPair>& pairs, std::vector<DataSample>& out,
                          bool train) {
        for (std::size_t idx = 0; idx < pairs.size(); ++idx) {
          DataSample s;
          const std::uint64_t noise_seed =
              Rng::substream(cfg.seed, train ? "noise-train" : "noise-test",
                             static_cast<std::uint64_t>(idx))
                  .next_u64();
          Tensor flat_u = pairs[idx].u_nf.reshaped({npts});
          s.input = add_noise(flat_u, cfg.noise_eps, ds.noise_std, noise_seed)
                        .reshaped({cfg.darcy_nf, cfg.darcy_nf});
          s.target = std::move(pairs[idx].a_nc);
          s.input_grid = Grid{2, cfg.darcy_nf, Boundary::dirichlet};
          s.target_grid = Grid{2, cfg.darcy_nc, Boundary::dirichlet};
          out[idx] = std::move(s);
        }
      };
      finalize(train_pairs, ds.train, true);
      finalize(test_pairs, ds.test, false);
      break;
    }
  }
  return ds;
}

}  // namespace gkt
