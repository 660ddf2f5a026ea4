#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gkt/rng.hpp"
#include "gkt/tensor.hpp"

namespace gkt {

enum class Boundary { periodic, dirichlet, neumann };

struct Grid {
  int m = 1;                 // spacial dimension
  std::int64_t n = 0;        // points per axis
  Boundary boundary = Boundary::periodic;

  /// periodic 1D: h = 1/n, x_i = i/n; non-periodic: h = 1/(n-1), endpoints
  /// included.
  double h() const {
    return boundary == Boundary::periodic ? 1.0 / static_cast<double>(n)
                                          : 1.0 / static_cast<double>(n - 1);
  }
  double point(std::int64_t i) const { return static_cast<double>(i) * h(); }
  std::int64_t total_points() const { return m == 1 ? n : n * n; }
};

struct DataSample {
  Tensor input;
  Tensor target;
  Grid input_grid;
  Grid target_grid;
};

/// Covariance (-Delta + tau^2 I)^(-alpha) scaled by sigma^2.
struct GrfSpec {
  int dimension = 1;
  double sigma = 25.0;
  double tau2 = 25.0;
  double alpha = 2.0;
  Boundary boundary = Boundary::periodic;
};

/// Karhunen-Loeve synthesis on the periodic unit interval: independent
/// normals per Fourier mode scaled by sigma (4 pi^2 k^2 + tau^2)^(-alpha/2),
/// mode 0 included, Hermitian symmetry enforced, inverse FFT to a real field.
Tensor grf_sample_1d_periodic(std::int64_t n, const GrfSpec& spec, std::uint64_t seed);

/// Truncated analytic pointwise variance of the 1D sampler (mode sum).
double grf_1d_analytic_variance(std::int64_t n, const GrfSpec& spec);

/// Cosine-basis KL synthesis on (0,1)^2 with homogeneous Neumann boundary:
/// coefficients xi_jk (pi^2 (j^2+k^2) + tau^2)^(-alpha/2) on the L2-orthonormal
/// basis c_j c_k cos(j pi x) cos(k pi y), truncated at max_modes (default n-1).
Tensor grf_sample_2d_neumann(std::int64_t n, const GrfSpec& spec, std::uint64_t seed,
                             std::int64_t max_modes = -1);

double grf_2d_analytic_variance_at(std::int64_t n, const GrfSpec& spec, double x,
                                   double y, std::int64_t max_modes = -1);

/// Pseudo-spectral viscous Burgers on the periodic unit interval:
/// conservative-form nonlinearity with 2/3-rule dealiasing, integrating-factor
/// RK4 in time. Throws InstabilityError if the field blows up.
Tensor burgers_solve(const Tensor& u0, double nu, double t_end, double dt);

/// psi(rho) = 12 if rho > 0, 3 if rho < 0 (ties map to 12).
Tensor coeff_pushforward(const Tensor& rho);

struct DarcySolveOptions {
  double rel_tol = 1e-10;
  const Tensor* forcing = nullptr;  // defaults to f == 1
};

/// Flux-form 5-point finite differences for -div(a grad u) = f with
/// homogeneous Dirichlet boundary; edge coefficients by arithmetic averaging;
/// Jacobi-preconditioned CG solve.
Tensor darcy_solve_fd(const Tensor& a, const DarcySolveOptions& options = {});

/// Stride subsampling when the grids align (periodic: src % dst == 0;
/// endpoint grids: (src-1) % (dst-1) == 0), bilinear fallback otherwise.
Tensor downsample_1d(const Tensor& field, std::int64_t target_n, Boundary boundary);
Tensor downsample_2d(const Tensor& field, std::int64_t target_n, Boundary boundary);

/// u + eps * eta with eta_i ~ N(0, c_i) from the per-point std table.
Tensor add_noise(const Tensor& u, double eps, const Tensor& per_point_std,
                 std::uint64_t seed);

// ---- dataset building -------------------------------------------------------

enum class Problem { burgers1d, darcy2d, darcy_inverse };

Problem problem_from_string(const std::string& s);
std::string to_string(Problem p);

struct DatasetConfig {
  Problem problem = Problem::burgers1d;
  std::int64_t count_train = 256;
  std::int64_t count_test = 64;
  std::uint64_t seed = 1127802;

  // burgers
  std::int64_t burgers_n = 512;        // delivered resolution
  std::int64_t burgers_fine_n = 8192;  // generation resolution
  double burgers_nu = 0.1 / (2.0 * 3.14159265358979323846);
  double burgers_dt = 1e-4;
  double burgers_t_end = 1.0;

  // darcy
  std::int64_t darcy_fine_n = 421;   // FD solve grid
  std::int64_t darcy_nf = 141;       // delivered fine grid
  std::int64_t darcy_nc = 43;        // inverse-problem target grid
  double noise_eps = 0.0;            // inverse-problem input noise
};

struct Dataset {
  DatasetConfig config;
  std::vector<DataSample> train;
  std::vector<DataSample> test;
  Tensor noise_std;  // per-point std table (darcy-inverse), empty otherwise
};

/// Generates train/test splits from disjoint seed substreams. Sample
/// generation is parallel over the sample index (GKT_THREADS bounds workers).
Dataset dataset_build(const DatasetConfig& config);

/// Energy-law check ||u(.,1)|| <= ||u0|| for every generated Burgers pair.
bool burgers_energy_ok(const DataSample& s);

std::int64_t env_thread_count();

}  // namespace gkt
