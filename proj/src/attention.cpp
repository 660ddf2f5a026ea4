#include "gkt/attention.hpp"

#include <cmath>

namespace gkt {

AttnVariant attn_variant_from_string(const std::string& s) {
  if (s == "fourier" || s == "ft") return AttnVariant::fourier;
  if (s == "galerkin" || s == "gt") return AttnVariant::galerkin;
  if (s == "softmax" || s == "st") return AttnVariant::softmax;
  if (s == "linear-softmax" || s == "lt") return AttnVariant::linear_softmax;
  throw ConfigError("unknown attention variant: " + s);
}

std::string to_string(AttnVariant v) {
  switch (v) {
    case AttnVariant::fourier: return "fourier";
    case AttnVariant::galerkin: return "galerkin";
    case AttnVariant::softmax: return "softmax";
    case AttnVariant::linear_softmax: return "linear-softmax";
  }
  return "?";
}

LnScheme ln_scheme_from_string(const std::string& s) {
  if (s == "regular") return LnScheme::regular;
  if (s == "new" || s == "pre-dot" || s == "pre-dot-product") return LnScheme::pre_dot;
  throw ConfigError("unknown ln scheme: " + s);
}

std::string to_string(LnScheme s) {
  return s == LnScheme::regular ? "regular" : "new";
}

void AttentionConfig::validate() const {
  if (d_model <= 0 || n_head <= 0 || coord_dim <= 0)
    throw ConfigError("attention config extents must be positive");
  if (d_model % n_head != 0)
    throw ConfigError("n_head must divide d_model");
  if (dropout_attn < 0.0 || dropout_attn >= 1.0 || dropout_ffn < 0.0 || dropout_ffn >= 1.0)
    throw ConfigError("dropout rates must be in [0,1)");
  if (init_eta < 0.0 || init_delta < 0.0)
    throw ConfigError("init eta/delta must be nonnegative");
}

Tensor init_projection(std::int64_t d, double eta, double delta, Rng& rng) {
  if (d < 1) throw ConfigError("init_projection needs d >= 1");
  const double bound = std::sqrt(3.0 / static_cast<double>(d));
  Tensor w({d, d});
  for (std::int64_t i = 0; i < d; ++i)
    for (std::int64_t j = 0; j < d; ++j)
      w.at(i, j) = eta * rng.uniform(-bound, bound) + (i == j ? delta : 0.0);
  return w;
}

Tensor init_projection(std::int64_t d, double eta, double delta, std::uint64_t seed) {
  Rng rng(seed);
  return init_projection(d, eta, delta, rng);
}

Tensor xavier_uniform(std::int64_t fan_in, std::int64_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return rng.uniform_tensor({fan_in, fan_out}, -bound, bound);
}

Qkv project_qkv(Var y, Var wq, Var wk, Var wv) {
  return Qkv{matmul(y, wq), matmul(y, wk), matmul(y, wv)};
}

namespace {

double inv_len(Var q) { return 1.0 / static_cast<double>(q.tape->value(q).rows()); }

}  // namespace

Var attn_fourier(Var q, Var k, Var v, bool normalize_qk, double eps) {
  if (normalize_qk) {
    q = layer_norm_plain(q, eps);
    k = layer_norm_plain(k, eps);
  }
  Var scores = matmul(q, transpose(k));            // n x n kernel
  return matmul(scores, scale(v, inv_len(q)));     // combine, 1/n mesh weight
}

Var attn_galerkin(Var q, Var k, Var v, bool normalize_kv, double eps) {
  if (normalize_kv) {
    k = layer_norm_plain(k, eps);
    v = layer_norm_plain(v, eps);
  }
  Var ctx = scale(matmul(transpose(k), v), inv_len(q));  // d x d first
  return matmul(q, ctx);
}

Var attn_softmax(Var q, Var k, Var v) {
  const double d = static_cast<double>(q.tape->value(q).cols());
  Var scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(d));
  return matmul(softmax_rows(scores), v);
}

Var attn_linear_softmax(Var q, Var k, Var v) {
  Var ctx = matmul(transpose(softmax_cols(k)), v);  // d x d
  return matmul(softmax_rows(q), ctx);
}

std::uint64_t dot_product_macs(AttnVariant v, std::int64_t n, std::int64_t d) {
  const std::uint64_t un = static_cast<std::uint64_t>(n);
  const std::uint64_t ud = static_cast<std::uint64_t>(d);
  switch (v) {
    case AttnVariant::fourier:
    case AttnVariant::softmax:
      return 2 * un * un * ud;
    case AttnVariant::galerkin:
    case AttnVariant::linear_softmax:
      return 2 * un * ud * ud;
  }
  return 0;
}

EncoderLayer EncoderLayer::create(ParamStore& store, const AttentionConfig& cfg, Rng& rng,
                                  const std::string& prefix) {
  cfg.validate();
  EncoderLayer layer;
  layer.cfg = cfg;
  const std::int64_t w = cfg.head_width();
  const std::int64_t d = cfg.d_model;
  for (std::int64_t h = 0; h < cfg.n_head; ++h) {
    const std::string hp = prefix + ".h" + std::to_string(h);
    Head head;
    head.wq = store.add(hp + ".wq", init_projection(w, cfg.init_eta, cfg.init_delta, rng));
    head.wk = store.add(hp + ".wk", init_projection(w, cfg.init_eta, cfg.init_delta, rng));
    head.wv = store.add(hp + ".wv", init_projection(w, cfg.init_eta, cfg.init_delta, rng));
    if (cfg.ln_scheme == LnScheme::pre_dot) {
      head.ln1_gain = store.add(hp + ".ln1.g", Tensor::full({w}, 1.0));
      head.ln1_bias = store.add(hp + ".ln1.b", Tensor::zeros({w}));
      head.ln2_gain = store.add(hp + ".ln2.g", Tensor::full({w}, 1.0));
      head.ln2_bias = store.add(hp + ".ln2.b", Tensor::zeros({w}));
    }
    layer.heads.push_back(head);
  }
  const std::int64_t cat = d + cfg.coord_dim * cfg.n_head;
  layer.merge_w = store.add(prefix + ".merge.w", xavier_uniform(cat, d, rng));
  layer.merge_b = store.add(prefix + ".merge.b", Tensor::zeros({d}));
  const std::int64_t hidden = 4 * d;
  layer.ffn_w1 = store.add(prefix + ".ffn.w1", xavier_uniform(d, hidden, rng));
  layer.ffn_b1 = store.add(prefix + ".ffn.b1", Tensor::zeros({hidden}));
  layer.ffn_w2 = store.add(prefix + ".ffn.w2", xavier_uniform(hidden, d, rng));
  layer.ffn_b2 = store.add(prefix + ".ffn.b2", Tensor::zeros({d}));
  if (cfg.ln_scheme == LnScheme::regular) {
    layer.post_ln1_gain = store.add(prefix + ".post_ln1.g", Tensor::full({d}, 1.0));
    layer.post_ln1_bias = store.add(prefix + ".post_ln1.b", Tensor::zeros({d}));
    layer.post_ln2_gain = store.add(prefix + ".post_ln2.g", Tensor::full({d}, 1.0));
    layer.post_ln2_bias = store.add(prefix + ".post_ln2.b", Tensor::zeros({d}));
  }
  return layer;
}

namespace {

Var activation_apply(Var x, Activation a) {
  return a == Activation::silu ? silu(x) : relu(x);
}

}  // namespace

Var EncoderLayer::forward(Tape& tape, const std::vector<Var>& bound, Var features,
                          const Tensor& coords, Rng* dropout_rng, bool training) const {
  const std::int64_t n = tape.value(features).rows();
  if (tape.value(features).cols() != cfg.d_model)
    throw DimensionError("encoder layer feature width mismatch");
  if (coords.rows() != n || coords.cols() != cfg.coord_dim)
    throw DimensionError("encoder layer coordinate mismatch");
  const std::int64_t dh = cfg.head_dim();
  const bool use_drop = training && dropout_rng != nullptr;

  Var coords_var = tape.leaf(coords);
  auto p = [&](ParamRef r) { return bound[static_cast<std::size_t>(r.index)]; };

  Var merged;
  bool first = true;
  for (std::int64_t h = 0; h < cfg.n_head; ++h) {
    const Head& head = heads[static_cast<std::size_t>(h)];
    Var yh = concat_cols(slice_cols(features, h * dh, (h + 1) * dh), coords_var);
    Qkv qkv = project_qkv(yh, p(head.wq), p(head.wk), p(head.wv));
    Var q = qkv.q, k = qkv.k, v = qkv.v;
    if (cfg.ln_scheme == LnScheme::pre_dot) {
      if (cfg.variant == AttnVariant::fourier || cfg.variant == AttnVariant::softmax) {
        q = layer_norm(q, p(head.ln1_gain), p(head.ln1_bias), cfg.ln_eps);
        k = layer_norm(k, p(head.ln2_gain), p(head.ln2_bias), cfg.ln_eps);
      } else {
        k = layer_norm(k, p(head.ln1_gain), p(head.ln1_bias), cfg.ln_eps);
        v = layer_norm(v, p(head.ln2_gain), p(head.ln2_bias), cfg.ln_eps);
      }
    }
    Var z;
    const double invn = 1.0 / static_cast<double>(n);
    switch (cfg.variant) {
      case AttnVariant::fourier: {
        Var scores = scale(matmul(q, transpose(k)), invn);
        if (use_drop) scores = dropout(scores, cfg.dropout_attn, *dropout_rng, true);
        z = matmul(scores, v);
        break;
      }
      case AttnVariant::softmax: {
        const double dw = static_cast<double>(cfg.head_width());
        Var scores = softmax_rows(scale(matmul(q, transpose(k)), 1.0 / std::sqrt(dw)));
        if (use_drop) scores = dropout(scores, cfg.dropout_attn, *dropout_rng, true);
        z = matmul(scores, v);
        break;
      }
      case AttnVariant::galerkin: {
        Var ctx = scale(matmul(transpose(k), v), invn);
        if (use_drop) ctx = dropout(ctx, cfg.dropout_attn, *dropout_rng, true);
        z = matmul(q, ctx);
        break;
      }
      case AttnVariant::linear_softmax: {
        Var ctx = matmul(transpose(softmax_cols(k)), v);
        if (use_drop) ctx = dropout(ctx, cfg.dropout_attn, *dropout_rng, true);
        z = matmul(softmax_rows(q), ctx);
        break;
      }
    }
    merged = first ? z : concat_cols(merged, z);
    first = false;
  }

  Var attn_out = add_rowvec(matmul(merged, p(merge_w)), p(merge_b));
  Var ytilde = add(features, attn_out);

  Var ffn_in = ytilde;
  if (cfg.ln_scheme == LnScheme::regular)
    ffn_in = layer_norm(ffn_in, p(post_ln1_gain), p(post_ln1_bias), cfg.ln_eps);

  Var hidden = activation_apply(add_rowvec(matmul(ffn_in, p(ffn_w1)), p(ffn_b1)),
                                cfg.activation);
  if (use_drop) hidden = dropout(hidden, cfg.dropout_ffn, *dropout_rng, true);
  Var ffn_out = add_rowvec(matmul(hidden, p(ffn_w2)), p(ffn_b2));

  Var out = add(ytilde, ffn_out);
  if (cfg.ln_scheme == LnScheme::regular)
    out = layer_norm(out, p(post_ln2_gain), p(post_ln2_bias), cfg.ln_eps);
  return out;
}

}  // namespace gkt
