#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gkt/autograd.hpp"
#include "gkt/params.hpp"
#include "gkt/rng.hpp"

namespace gkt {

enum class AttnVariant { fourier, galerkin, softmax, linear_softmax };
enum class LnScheme { regular, pre_dot };
enum class Activation { silu, relu };

AttnVariant attn_variant_from_string(const std::string& s);
std::string to_string(AttnVariant v);
LnScheme ln_scheme_from_string(const std::string& s);
std::string to_string(LnScheme s);

struct AttentionConfig {
  AttnVariant variant = AttnVariant::galerkin;
  LnScheme ln_scheme = LnScheme::pre_dot;
  std::int64_t d_model = 64;
  std::int64_t n_head = 1;
  std::int64_t coord_dim = 1;
  double init_eta = 1e-2;
  double init_delta = 1e-2;
  double dropout_attn = 0.0;
  double dropout_ffn = 0.0;
  double ln_eps = 1e-5;
  Activation activation = Activation::silu;

  std::int64_t head_dim() const { return d_model / n_head; }
  std::int64_t head_width() const { return head_dim() + coord_dim; }
  void validate() const;
};

/// Per-position features plus the grid coordinates they live on.
struct LatentRep {
  Tensor features;  // n x d_model
  Tensor coords;    // n x m, entries in [0,1]^m
};

/// Diagonally dominant initialization W = eta * U + delta * I with U the
/// Xavier-uniform (gain 1) matrix.
Tensor init_projection(std::int64_t d, double eta, double delta, Rng& rng);
Tensor init_projection(std::int64_t d, double eta, double delta, std::uint64_t seed);

Tensor xavier_uniform(std::int64_t fan_in, std::int64_t fan_out, Rng& rng);

// ---- raw attention variants (single head, explicit Q/K/V) ----------------

struct Qkv {
  Var q, k, v;
};

Qkv project_qkv(Var y, Var wq, Var wk, Var wv);

/// z = (Q~ K~^T) V / n, two matmuls in that order (materializes the n x n
/// kernel). normalize_qk applies the non-affine layer norm head-wise first.
Var attn_fourier(Var q, Var k, Var v, bool normalize_qk, double eps = 1e-5);

/// z = Q (K~^T V~) / n with the d x d inner product formed first; never
/// materializes an n x n array.
Var attn_galerkin(Var q, Var k, Var v, bool normalize_kv, double eps = 1e-5);

/// Classic softmax baseline: z = softmax_rows(Q K^T / sqrt(d)) V.
Var attn_softmax(Var q, Var k, Var v);

/// Linear baseline: z = softmax_feat(Q) (softmax_seq(K)^T V) with the feature
/// softmax over d and the sequence softmax over n.
Var attn_linear_softmax(Var q, Var k, Var v);

/// Closed-form multiply-add count of the two dot-product matmuls per layer.
std::uint64_t dot_product_macs(AttnVariant v, std::int64_t n, std::int64_t d);

// ---- encoder layer ---------------------------------------------------------

struct EncoderLayer {
  AttentionConfig cfg;
  struct Head {
    ParamRef wq, wk, wv;
    ParamRef ln1_gain, ln1_bias, ln2_gain, ln2_bias;  // pre-dot scheme only
  };
  std::vector<Head> heads;
  ParamRef merge_w, merge_b;
  ParamRef ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  ParamRef post_ln1_gain, post_ln1_bias, post_ln2_gain, post_ln2_bias;  // regular scheme

  static EncoderLayer create(ParamStore& store, const AttentionConfig& cfg, Rng& rng,
                             const std::string& prefix);

  /// One residual encoder block. Coordinates are re-concatenated to every
  /// head's input; output coords always equal input coords.
  Var forward(Tape& tape, const std::vector<Var>& bound, Var features,
              const Tensor& coords, Rng* dropout_rng = nullptr,
              bool training = false) const;
};

}  // namespace gkt
