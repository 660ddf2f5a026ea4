#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gkt/attention.hpp"
#include "gkt/autograd.hpp"
#include "gkt/params.hpp"
#include "gkt/pde_data.hpp"

namespace gkt {

enum class DecoderKind { spectral_conv, pointwise_ffn };

DecoderKind decoder_from_string(const std::string& s);
std::string to_string(DecoderKind d);

struct ModelConfig {
  Problem problem = Problem::burgers1d;
  AttnVariant variant = AttnVariant::galerkin;
  LnScheme ln_scheme = LnScheme::pre_dot;
  std::int64_t n_layers = 4;
  std::int64_t d_model = 96;
  std::int64_t n_head = 1;
  DecoderKind decoder = DecoderKind::spectral_conv;
  std::int64_t n_modes = 16;
  std::int64_t d_decoder = 48;
  Activation activation = Activation::silu;
  std::int64_t seq_n = 512;       // 1D resolution
  std::int64_t n_f = 141;         // 2D fine grid
  std::int64_t n_c = 43;          // 2D coarse grid
  std::int64_t extractor_hidden = 32;
  double init_eta = 1e-2;
  double init_delta = 1e-2;
  double dropout_attn = 0.0;
  double dropout_ffn = 0.0;
  double ln_eps = 1e-5;
  std::uint64_t seed = 1127802;

  std::int64_t coord_dim() const { return problem == Problem::burgers1d ? 1 : 2; }
  /// intermediate CiNN size, nearest even integer to sqrt(n_f * n_c)
  std::int64_t n_m() const;
  void validate() const;

  static ModelConfig paper_burgers();
  static ModelConfig paper_darcy();
  static ModelConfig paper_darcy_inverse();
  static ModelConfig desk_burgers();
};

/// Per-grid-point standardization fit on the training split; frozen,
/// non-trainable, stored with the checkpoint.
struct GaussianNormalizer {
  Tensor mean;  // same shape as one sample field
  Tensor std;   // per-point std (eps-floored on apply)
  double eps = 1e-12;
  bool fitted = false;

  void fit(const std::vector<const Tensor*>& fields);
  Tensor apply(const Tensor& x) const;
  Tensor invert(const Tensor& x) const;
  Var apply(Var x) const;
  Var invert(Var x) const;
};

struct FfnExtractor {
  ParamRef w1, b1, w2, b2;
  Activation act = Activation::silu;
  static FfnExtractor create(ParamStore& store, std::int64_t c_in, std::int64_t hidden,
                             std::int64_t d_model, Activation act, Rng& rng,
                             const std::string& prefix);
  Var forward(Tape& tape, const std::vector<Var>& bound, Var x) const;
};

/// 3-level interpolation-based CNN for downsampling: channel expansion,
/// resize to the intermediate grid, three residual conv blocks, resize to the
/// coarse grid.
struct CinnDown {
  ParamRef conv0_k, conv0_b;
  ParamRef block_k[3], block_b[3];
  Activation act = Activation::silu;
  std::int64_t n_f = 0, n_m = 0, n_c = 0;
  static CinnDown create(ParamStore& store, std::int64_t c_in, std::int64_t d_model,
                         std::int64_t n_f, std::int64_t n_m, std::int64_t n_c,
                         Activation act, Rng& rng, const std::string& prefix);
  Var forward(Tape& tape, const std::vector<Var>& bound, Var x) const;
};

/// Upsampling CiNN: resize to the intermediate grid, one matching-channel
/// conv, resize to the fine grid.
struct CinnUp {
  ParamRef conv_k, conv_b;
  std::int64_t n_c = 0, n_m = 0, n_f = 0;
  static CinnUp create(ParamStore& store, std::int64_t d_model, std::int64_t n_c,
                       std::int64_t n_m, std::int64_t n_f, Rng& rng,
                       const std::string& prefix);
  Var forward(Tape& tape, const std::vector<Var>& bound, Var x) const;
};

/// Two spectral-convolution layers with pointwise linear bypass, then a
/// linear head to one channel.
struct SpectralDecoder1d {
  ParamRef trans_w, trans_b;
  ParamRef sc_w[2], bypass_w[2], bypass_b[2];
  ParamRef head_w, head_b;
  Activation act = Activation::silu;
  std::int64_t n_modes = 0;
  static SpectralDecoder1d create(ParamStore& store, std::int64_t d_in,
                                  std::int64_t d_dec, std::int64_t n_modes,
                                  Activation act, Rng& rng, const std::string& prefix);
  Var forward(Tape& tape, const std::vector<Var>& bound, Var x) const;  // (n,d_in)->(n,1)
};

struct SpectralDecoder2d {
  ParamRef trans_w, trans_b;
  ParamRef sc_w[2], bypass_w[2], bypass_b[2];
  ParamRef head_w, head_b;
  Activation act = Activation::silu;
  std::int64_t n_modes = 0;
  std::int64_t grid_n = 0;  // spatial extent (padded internally to a power of two)
  static SpectralDecoder2d create(ParamStore& store, std::int64_t d_in,
                                  std::int64_t d_dec, std::int64_t n_modes,
                                  std::int64_t grid_n, Activation act, Rng& rng,
                                  const std::string& prefix);
  Var forward(Tape& tape, const std::vector<Var>& bound, Var x) const;  // (n*n,d_in)->(n,n)
};

struct PointwiseDecoder {
  ParamRef w1, b1, w2, b2;
  Activation act = Activation::relu;
  static PointwiseDecoder create(ParamStore& store, std::int64_t d_in, std::int64_t hidden,
                                 Activation act, Rng& rng, const std::string& prefix);
  Var forward(Tape& tape, const std::vector<Var>& bound, Var x) const;  // (n,d_in)->(n,1)
};

class OperatorModel {
 public:
  explicit OperatorModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  std::int64_t parameter_count() const { return params_.total_scalars(); }

  GaussianNormalizer& input_normalizer() { return input_norm_; }
  GaussianNormalizer& target_normalizer() { return target_norm_; }
  const GaussianNormalizer& input_normalizer() const { return input_norm_; }
  const GaussianNormalizer& target_normalizer() const { return target_norm_; }

  /// Fits the non-trainable normalizers on the training split (2D problems).
  void fit_normalizers(const std::vector<DataSample>& train);

  /// Tape-recorded forward pass of one sample.
  Var forward(Tape& tape, const std::vector<Var>& bound, const DataSample& sample,
              Rng* dropout_rng = nullptr, bool training = false) const;

  /// Convenience inference: fresh tape, returns the prediction tensor.
  Tensor predict(const DataSample& sample) const;

  Tensor coords_for(const Grid& grid) const;

 private:
  ModelConfig config_;
  ParamStore params_;
  GaussianNormalizer input_norm_, target_norm_;

  FfnExtractor extractor_;       // burgers
  CinnDown down_;                // darcy problems
  CinnUp up_;                    // darcy forward
  std::vector<EncoderLayer> layers_;
  SpectralDecoder1d dec1d_;
  SpectralDecoder2d dec2d_;
  PointwiseDecoder dec_pw_;
};

// ---- loss ------------------------------------------------------------------

enum class RegKind { none, h1_seminorm, darcy_flux };

struct LossConfig {
  double gamma = 0.0;
  RegKind reg = RegKind::none;

  static LossConfig for_problem(Problem p, double h);
};

/// h-weighted squared L2 error plus gamma times the problem regularizer
/// (H1 seminorm via central differences in 1D, a*grad via the 5-point stencil
/// in 2D). Single-sample; the trainer averages over the batch.
Var operator_loss(Tape& tape, Var pred, const Tensor& target, const Tensor* coeff_a,
                  const Grid& grid, const LossConfig& cfg);

double relative_l2(const Tensor& pred, const Tensor& target);

}  // namespace gkt
