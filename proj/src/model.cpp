#include "gkt/model.hpp"

#include <cmath>

#include "gkt/fft.hpp"

namespace gkt {

DecoderKind decoder_from_string(const std::string& s) {
  if (s == "spectral-conv" || s == "spectral") return DecoderKind::spectral_conv;
  if (s == "pointwise-ffn" || s == "pointwise") return DecoderKind::pointwise_ffn;
  throw ConfigError("unknown decoder kind: " + s);
}

std::string to_string(DecoderKind d) {
  return d == DecoderKind::spectral_conv ? "spectral-conv" : "pointwise-ffn";
}

std::int64_t ModelConfig::n_m() const {
  const double raw = std::sqrt(static_cast<double>(n_f) * static_cast<double>(n_c));
  std::int64_t even = 2 * static_cast<std::int64_t>(std::llround(raw / 2.0));
  if (even < 4) even = 4;
  return even;
}

void ModelConfig::validate() const {
  if (n_layers < 1 || d_model < 1 || n_head < 1) throw ConfigError("model extents must be positive");
  if (d_model % n_head != 0) throw ConfigError("n_head must divide d_model");
  if (decoder == DecoderKind::spectral_conv) {
    if (problem == Problem::burgers1d) {
      if (!is_power_of_two(seq_n)) throw ConfigError("burgers resolution must be a power of two");
      if (n_modes > seq_n / 2) throw ConfigError("n_modes must be <= grid size / 2");
    } else {
      std::int64_t p = 1;
      while (p < n_f) p <<= 1;
      if (n_modes > p / 2) throw ConfigError("n_modes must be <= padded grid / 2");
    }
  }
  if (problem == Problem::darcy_inverse && decoder != DecoderKind::pointwise_ffn)
    throw ConfigError("darcy-inverse uses the pointwise decoder");
}

ModelConfig ModelConfig::paper_burgers() {
  ModelConfig c;
  c.problem = Problem::burgers1d;
  c.n_layers = 4;
  c.d_model = 96;
  c.n_head = 1;
  c.decoder = DecoderKind::spectral_conv;
  c.n_modes = 16;
  c.d_decoder = 48;
  c.seq_n = 512;
  return c;
}

ModelConfig ModelConfig::paper_darcy() {
  ModelConfig c;
  c.problem = Problem::darcy2d;
  c.n_layers = 6;
  c.d_model = 128;
  c.n_head = 4;
  c.decoder = DecoderKind::spectral_conv;
  c.n_modes = 12;
  c.d_decoder = 32;
  c.n_f = 141;
  c.n_c = 43;
  return c;
}

ModelConfig ModelConfig::paper_darcy_inverse() {
  ModelConfig c;
  c.problem = Problem::darcy_inverse;
  c.n_layers = 6;
  c.d_model = 192;
  c.n_head = 4;
  c.decoder = DecoderKind::pointwise_ffn;
  c.n_f = 141;
  c.n_c = 36;
  return c;
}

ModelConfig ModelConfig::desk_burgers() {
  ModelConfig c;
  c.problem = Problem::burgers1d;
  c.n_layers = 4;
  c.d_model = 32;
  c.n_head = 1;
  c.decoder = DecoderKind::spectral_conv;
  c.n_modes = 12;
  c.d_decoder = 20;
  c.extractor_hidden = 32;
  c.seq_n = 512;
  return c;
}

// ---------------------------------------------------------------------------
// normalizer
// ---------------------------------------------------------------------------

void GaussianNormalizer::fit(const std::vector<const Tensor*>& fields) {
  if (fields.empty()) throw ConfigError("normalizer fit needs at least one field");
  const Tensor& first = *fields.front();
  mean = Tensor::zeros(first.shape());
  std = Tensor::zeros(first.shape());
  const double count = static_cast<double>(fields.size());
  for (const Tensor* f : fields) {
    if (!f->same_shape(first)) throw DimensionError("normalizer fit shape mismatch");
    for (std::int64_t i = 0; i < f->numel(); ++i) mean[i] += (*f)[i];
  }
  for (std::int64_t i = 0; i < mean.numel(); ++i) mean[i] /= count;
  for (const Tensor* f : fields)
    for (std::int64_t i = 0; i < f->numel(); ++i) {
      const double d = (*f)[i] - mean[i];
      std[i] += d * d;
    }
  for (std::int64_t i = 0; i < std.numel(); ++i) std[i] = std::sqrt(std[i] / count);
  fitted = true;
}

Tensor GaussianNormalizer::apply(const Tensor& x) const {
  if (!fitted) return x;
  Tensor out = x;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = (x[i] - mean[i]) / (std[i] + eps);
  return out;
}

Tensor GaussianNormalizer::invert(const Tensor& x) const {
  if (!fitted) return x;
  Tensor out = x;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = mean[i] + (std[i] + eps) * x[i];
  return out;
}

Var GaussianNormalizer::apply(Var x) const {
  if (!fitted) return x;
  Tensor neg_mean = mean, inv_std = std;
  const auto& shape = x.tape->value(x).shape();
  for (std::int64_t i = 0; i < neg_mean.numel(); ++i) {
    neg_mean[i] = -neg_mean[i];
    inv_std[i] = 1.0 / (std[i] + eps);
  }
  return mul_const(add_const(x, neg_mean.reshaped(shape)), inv_std.reshaped(shape));
}

Var GaussianNormalizer::invert(Var x) const {
  if (!fitted) return x;
  Tensor scale_t = std;
  const auto& shape = x.tape->value(x).shape();
  for (std::int64_t i = 0; i < scale_t.numel(); ++i) scale_t[i] = std[i] + eps;
  return add_const(mul_const(x, scale_t.reshaped(shape)), mean.reshaped(shape));
}

// ---------------------------------------------------------------------------
// submodules
// ---------------------------------------------------------------------------

namespace {

Var act_of(Var x, Activation a) { return a == Activation::silu ? silu(x) : relu(x); }

Tensor conv_kernel_init(std::int64_t co, std::int64_t ci, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>((ci + co) * 9));
  return rng.uniform_tensor({co, ci, 3, 3}, -bound, bound);
}

Tensor spectral_weight_init_1d(std::int64_t modes, std::int64_t ci, std::int64_t co, Rng& rng) {
  const double s = 1.0 / static_cast<double>(ci);
  return rng.uniform_tensor({modes, ci, co, 2}, 0.0, s);
}

Tensor spectral_weight_init_2d(std::int64_t mx, std::int64_t my, std::int64_t ci,
                               std::int64_t co, Rng& rng) {
  const double s = 1.0 / static_cast<double>(ci);
  return rng.uniform_tensor({mx, my, ci, co, 2}, 0.0, s);
}

}  // namespace

FfnExtractor FfnExtractor::create(ParamStore& store, std::int64_t c_in, std::int64_t hidden,
                                  std::int64_t d_model, Activation act, Rng& rng,
                                  const std::string& prefix) {
  FfnExtractor e;
  e.act = act;
  e.w1 = store.add(prefix + ".w1", xavier_uniform(c_in, hidden, rng));
  e.b1 = store.add(prefix + ".b1", Tensor::zeros({hidden}));
  e.w2 = store.add(prefix + ".w2", xavier_uniform(hidden, d_model, rng));
  e.b2 = store.add(prefix + ".b2", Tensor::zeros({d_model}));
  return e;
}

Var FfnExtractor::forward(Tape& tape, const std::vector<Var>& bound, Var x) const {
  auto p = [&](ParamRef r) { return bound[static_cast<std::size_t>(r.index)]; };
  (void)tape;
  Var h = act_of(add_rowvec(matmul(x, p(w1)), p(b1)), act);
  return add_rowvec(matmul(h, p(w2)), p(b2));
}

CinnDown CinnDown::create(ParamStore& store, std::int64_t c_in, std::int64_t d_model,
                          std::int64_t n_f, std::int64_t n_m, std::int64_t n_c,
                          Activation act, Rng& rng, const std::string& prefix) {
  CinnDown d;
  d.act = act;
  d.n_f = n_f;
  d.n_m = n_m;
  d.n_c = n_c;
  d.conv0_k = store.add(prefix + ".conv0.k", conv_kernel_init(d_model, c_in, rng));
  d.conv0_b = store.add(prefix + ".conv0.b", Tensor::zeros({d_model}));
  for (int i = 0; i < 3; ++i) {
    d.block_k[i] = store.add(prefix + ".block" + std::to_string(i) + ".k",
                             conv_kernel_init(d_model, d_model, rng));
    d.block_b[i] = store.add(prefix + ".block" + std::to_string(i) + ".b",
                             Tensor::zeros({d_model}));
  }
  return d;
}

Var CinnDown::forward(Tape& tape, const std::vector<Var>& bound, Var x) const {
  auto p = [&](ParamRef r) { return bound[static_cast<std::size_t>(r.index)]; };
  (void)tape;
  Var y = conv2d(x, p(conv0_k), p(conv0_b));
  y = bilinear_resize(y, n_m, n_m);
  for (int i = 0; i < 3; ++i)
    y = add(y, act_of(conv2d(y, p(block_k[i]), p(block_b[i])), act));
  return bilinear_resize(y, n_c, n_c);
}

CinnUp CinnUp::create(ParamStore& store, std::int64_t d_model, std::int64_t n_c,
                      std::int64_t n_m, std::int64_t n_f, Rng& rng,
                      const std::string& prefix) {
  CinnUp u;
  u.n_c = n_c;
  u.n_m = n_m;
  u.n_f = n_f;
  u.conv_k = store.add(prefix + ".conv.k", conv_kernel_init(d_model, d_model, rng));
  u.conv_b = store.add(prefix + ".conv.b", Tensor::zeros({d_model}));
  return u;
}

Var CinnUp::forward(Tape& tape, const std::vector<Var>& bound, Var x) const {
  auto p = [&](ParamRef r) { return bound[static_cast<std::size_t>(r.index)]; };
  (void)tape;
  Var y = bilinear_resize(x, n_m, n_m);
  y = conv2d(y, p(conv_k), p(conv_b));
  return bilinear_resize(y, n_f, n_f);
}

SpectralDecoder1d SpectralDecoder1d::create(ParamStore& store, std::int64_t d_in,
                                            std::int64_t d_dec, std::int64_t n_modes,
                                            Activation act, Rng& rng,
                                            const std::string& prefix) {
  SpectralDecoder1d s;
  s.act = act;
  s.n_modes = n_modes;
  s.trans_w = store.add(prefix + ".trans.w", xavier_uniform(d_in, d_dec, rng));
  s.trans_b = store.add(prefix + ".trans.b", Tensor::zeros({d_dec}));
  for (int i = 0; i < 2; ++i) {
    const std::string lp = prefix + ".sc" + std::to_string(i);
    s.sc_w[i] = store.add(lp + ".w", spectral_weight_init_1d(n_modes, d_dec, d_dec, rng));
    s.bypass_w[i] = store.add(lp + ".bypass.w", xavier_uniform(d_dec, d_dec, rng));
    s.bypass_b[i] = store.add(lp + ".bypass.b", Tensor::zeros({d_dec}));
  }
  s.head_w = store.add(prefix + ".head.w", xavier_uniform(d_dec, 1, rng));
  s.head_b = store.add(prefix + ".head.b", Tensor::zeros({1}));
  return s;
}

Var SpectralDecoder1d::forward(Tape& tape, const std::vector<Var>& bound, Var x) const {
  auto p = [&](ParamRef r) { return bound[static_cast<std::size_t>(r.index)]; };
  (void)tape;
  Var y = add_rowvec(matmul(x, p(trans_w)), p(trans_b));
  for (int i = 0; i < 2; ++i) {
    Var spec = spectral_conv1d(y, p(sc_w[i]));
    Var bypass = add_rowvec(matmul(y, p(bypass_w[i])), p(bypass_b[i]));
    y = act_of(add(spec, bypass), act);
  }
  return add_rowvec(matmul(y, p(head_w)), p(head_b));
}

SpectralDecoder2d SpectralDecoder2d::create(ParamStore& store, std::int64_t d_in,
                                            std::int64_t d_dec, std::int64_t n_modes,
                                            std::int64_t grid_n, Activation act, Rng& rng,
                                            const std::string& prefix) {
  SpectralDecoder2d s;
  s.act = act;
  s.n_modes = n_modes;
  s.grid_n = grid_n;
  s.trans_w = store.add(prefix + ".trans.w", xavier_uniform(d_in, d_dec, rng));
  s.trans_b = store.add(prefix + ".trans.b", Tensor::zeros({d_dec}));
  for (int i = 0; i < 2; ++i) {
    const std::string lp = prefix + ".sc" + std::to_string(i);
    s.sc_w[i] = store.add(lp + ".w", spectral_weight_init_2d(n_modes, n_modes, d_dec, d_dec, rng));
    s.bypass_w[i] = store.add(lp + ".bypass.w", xavier_uniform(d_dec, d_dec, rng));
    s.bypass_b[i] = store.add(lp + ".bypass.b", Tensor::zeros({d_dec}));
  }
  s.head_w = store.add(prefix + ".head.w", xavier_uniform(d_dec, 1, rng));
  s.head_b = store.add(prefix + ".head.b", Tensor::zeros({1}));
  return s;
}

Var SpectralDecoder2d::forward(Tape& tape, const std::vector<Var>& bound, Var x) const {
  auto p = [&](ParamRef r) { return bound[static_cast<std::size_t>(r.index)]; };
  const std::int64_t n = grid_n;
  const std::int64_t d_dec = tape.value(p(trans_w)).cols();
  std::int64_t pad = 1;
  while (pad < n) pad <<= 1;

  Var y = add_rowvec(matmul(x, p(trans_w)), p(trans_b));  // (n^2, d_dec)
  for (int i = 0; i < 2; ++i) {
    // channel-major grid for the spectral path
    Var grid = reshape(transpose(y), {d_dec, n, n});
    grid = pad2d(grid, pad, pad);
    Var spec = crop2d(spectral_conv2d(grid, p(sc_w[i])), n, n);
    Var spec_flat = transpose(reshape(spec, {d_dec, n * n}));
    Var bypass = add_rowvec(matmul(y, p(bypass_w[i])), p(bypass_b[i]));
    y = act_of(add(spec_flat, bypass), act);
  }
  return add_rowvec(matmul(y, p(head_w)), p(head_b));  // (n^2, 1)
}

PointwiseDecoder PointwiseDecoder::create(ParamStore& store, std::int64_t d_in,
                                          std::int64_t hidden, Activation act, Rng& rng,
                                          const std::string& prefix) {
  PointwiseDecoder d;
  d.act = act;
  d.w1 = store.add(prefix + ".w1", xavier_uniform(d_in, hidden, rng));
  d.b1 = store.add(prefix + ".b1", Tensor::zeros({hidden}));
  d.w2 = store.add(prefix + ".w2", xavier_uniform(hidden, 1, rng));
  d.b2 = store.add(prefix + ".b2", Tensor::zeros({1}));
  return d;
}

Var PointwiseDecoder::forward(Tape& tape, const std::vector<Var>& bound, Var x) const {
  auto p = [&](ParamRef r) { return bound[static_cast<std::size_t>(r.index)]; };
  (void)tape;
  Var h = act_of(add_rowvec(matmul(x, p(w1)), p(b1)), act);
  return add_rowvec(matmul(h, p(w2)), p(b2));
}

// ---------------------------------------------------------------------------
// model
// ---------------------------------------------------------------------------

OperatorModel::OperatorModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  Rng rng = Rng::substream(config_.seed, "model-init");

  AttentionConfig acfg;
  acfg.variant = config_.variant;
  acfg.ln_scheme = config_.ln_scheme;
  acfg.d_model = config_.d_model;
  acfg.n_head = config_.n_head;
  acfg.coord_dim = config_.coord_dim();
  acfg.init_eta = config_.init_eta;
  acfg.init_delta = config_.init_delta;
  acfg.dropout_attn = config_.dropout_attn;
  acfg.dropout_ffn = config_.dropout_ffn;
  acfg.ln_eps = config_.ln_eps;
  acfg.activation = config_.activation;

  switch (config_.problem) {
    case Problem::burgers1d:
      extractor_ = FfnExtractor::create(params_, 2, config_.extractor_hidden,
                                        config_.d_model, config_.activation, rng,
                                        "extractor");
      break;
    case Problem::darcy2d:
    case Problem::darcy_inverse:
      down_ = CinnDown::create(params_, 1, config_.d_model, config_.n_f, config_.n_m(),
                               config_.n_c, config_.activation, rng, "down");
      break;
  }
  for (std::int64_t l = 0; l < config_.n_layers; ++l)
    layers_.push_back(EncoderLayer::create(params_, acfg, rng, "enc" + std::to_string(l)));

  switch (config_.problem) {
    case Problem::burgers1d:
      dec1d_ = SpectralDecoder1d::create(params_, config_.d_model, config_.d_decoder,
                                         config_.n_modes, config_.activation, rng, "dec");
      break;
    case Problem::darcy2d:
      up_ = CinnUp::create(params_, config_.d_model, config_.n_c, config_.n_m(),
                           config_.n_f, rng, "up");
      dec2d_ = SpectralDecoder2d::create(params_, config_.d_model + 2, config_.d_decoder,
                                         config_.n_modes, config_.n_f, config_.activation,
                                         rng, "dec");
      break;
    case Problem::darcy_inverse:
      // rough targets call for ReLU next to the output
      dec_pw_ = PointwiseDecoder::create(params_, config_.d_model + 2, 2 * config_.d_model,
                                         Activation::relu, rng, "dec");
      break;
  }
}

Tensor OperatorModel::coords_for(const Grid& grid) const {
  if (grid.m == 1) {
    Tensor c({grid.n, 1});
    for (std::int64_t i = 0; i < grid.n; ++i) c.at(i, 0) = grid.point(i);
    return c;
  }
  Tensor c({grid.n * grid.n, 2});
  for (std::int64_t i = 0; i < grid.n; ++i)
    for (std::int64_t j = 0; j < grid.n; ++j) {
      c.at(i * grid.n + j, 0) = grid.point(j);  // x
      c.at(i * grid.n + j, 1) = grid.point(i);  // y
    }
  return c;
}

void OperatorModel::fit_normalizers(const std::vector<DataSample>& train) {
  if (config_.problem == Problem::burgers1d) return;  // unnormalized per setup
  std::vector<const Tensor*> inputs, targets;
  inputs.reserve(train.size());
  targets.reserve(train.size());
  for (const DataSample& s : train) {
    inputs.push_back(&s.input);
    targets.push_back(&s.target);
  }
  input_norm_.fit(inputs);
  target_norm_.fit(targets);
}

Var OperatorModel::forward(Tape& tape, const std::vector<Var>& bound,
                           const DataSample& sample, Rng* dropout_rng,
                           bool training) const {
  switch (config_.problem) {
    case Problem::burgers1d: {
      const std::int64_t n = sample.input.numel();
      if (n != config_.seq_n) throw DimensionError("burgers sample resolution mismatch");
      Tensor coords = coords_for(sample.input_grid);
      Tensor feat({n, 2});
      for (std::int64_t i = 0; i < n; ++i) {
        feat.at(i, 0) = sample.input[i];
        feat.at(i, 1) = coords.at(i, 0);
      }
      Var x = extractor_.forward(tape, bound, tape.leaf(std::move(feat)));
      for (const EncoderLayer& layer : layers_)
        x = layer.forward(tape, bound, x, coords, dropout_rng, training);
      Var pred = dec1d_.forward(tape, bound, x);  // (n,1)
      return reshape(pred, {n});
    }
    case Problem::darcy2d: {
      if (sample.input.rows() != config_.n_f) throw DimensionError("darcy grid mismatch");
      const std::int64_t nf = config_.n_f, nc = config_.n_c;
      Grid coarse{2, nc, Boundary::dirichlet};
      Tensor coarse_coords = coords_for(coarse);
      Tensor fine_coords = coords_for(sample.input_grid);

      Var a_norm = input_norm_.apply(tape.leaf(sample.input));
      Var grid_in = reshape(a_norm, {1, nf, nf});
      Var down = down_.forward(tape, bound, grid_in);              // (d, nc, nc)
      Var x = transpose(reshape(down, {config_.d_model, nc * nc}));  // (nc^2, d)
      for (const EncoderLayer& layer : layers_)
        x = layer.forward(tape, bound, x, coarse_coords, dropout_rng, training);
      Var upg = up_.forward(tape, bound, reshape(transpose(x), {config_.d_model, nc, nc}));
      Var flat = transpose(reshape(upg, {config_.d_model, nf * nf}));  // (nf^2, d)
      flat = concat_cols(flat, tape.leaf(fine_coords));
      Var dec = dec2d_.forward(tape, bound, flat);  // (nf^2, 1)
      Var field = mask_boundary2d(reshape(dec, {nf, nf}));
      return mask_boundary2d(target_norm_.invert(field));
    }
    case Problem::darcy_inverse: {
      if (sample.input.rows() != config_.n_f) throw DimensionError("inverse grid mismatch");
      const std::int64_t nf = config_.n_f, nc = config_.n_c;
      Grid coarse{2, nc, Boundary::dirichlet};
      Tensor coarse_coords = coords_for(coarse);

      Var u_norm = input_norm_.apply(tape.leaf(sample.input));
      Var down = down_.forward(tape, bound, reshape(u_norm, {1, nf, nf}));
      Var x = transpose(reshape(down, {config_.d_model, nc * nc}));
      for (const EncoderLayer& layer : layers_)
        x = layer.forward(tape, bound, x, coarse_coords, dropout_rng, training);
      x = concat_cols(x, tape.leaf(coarse_coords));
      Var dec = dec_pw_.forward(tape, bound, x);  // (nc^2, 1)
      return target_norm_.invert(reshape(dec, {nc, nc}));
    }
  }
  throw ConfigError("unreachable problem kind");
}

Tensor OperatorModel::predict(const DataSample& sample) const {
  Tape tape;
  std::vector<Var> bound = params_.bind(tape);
  Var out = forward(tape, bound, sample);
  return tape.value(out);
}

// ---------------------------------------------------------------------------
// loss / metric
// ---------------------------------------------------------------------------

LossConfig LossConfig::for_problem(Problem p, double h) {
  LossConfig c;
  switch (p) {
    case Problem::burgers1d:
      c.gamma = 0.1 * h;
      c.reg = RegKind::h1_seminorm;
      break;
    case Problem::darcy2d:
      c.gamma = 0.5 * h;
      c.reg = RegKind::darcy_flux;
      break;
    case Problem::darcy_inverse:
      c.gamma = 0.0;
      c.reg = RegKind::none;
      break;
  }
  return c;
}

Var operator_loss(Tape& tape, Var pred, const Tensor& target, const Tensor* coeff_a,
                  const Grid& grid, const LossConfig& cfg) {
  if (cfg.gamma < 0.0) throw ConfigError("negative regularizer strength");
  const Tensor& pv = tape.value(pred);
  if (!pv.same_shape(target)) throw DimensionError("loss shape mismatch");
  const double h = grid.h();
  const double hm = grid.m == 1 ? h : h * h;

  Tensor neg_target = target;
  for (std::int64_t i = 0; i < neg_target.numel(); ++i) neg_target[i] = -target[i];
  Var err = add_const(pred, neg_target);

  Var loss = scale(sum(mul(err, err)), hm);
  if (cfg.reg == RegKind::none || cfg.gamma == 0.0) return loss;

  if (cfg.reg == RegKind::h1_seminorm) {
    Var flat = err;
    if (pv.rank() != 1) flat = reshape(err, {pv.numel()});
    Var d = diff_central_periodic(flat, h);
    return add(loss, scale(scale(sum(mul(d, d)), hm), cfg.gamma));
  }

  // darcy flux: gamma * || a grad(err) ||^2 via the 5-point stencil
  if (coeff_a == nullptr) throw ConfigError("darcy flux regularizer needs the coefficient");
  if (!coeff_a->same_shape(target)) throw DimensionError("coefficient shape mismatch");
  Tensor a2 = *coeff_a;
  for (std::int64_t i = 0; i < a2.numel(); ++i) a2[i] = (*coeff_a)[i] * (*coeff_a)[i];
  Var ex = dx_central2d(err, h);
  Var ey = dy_central2d(err, h);
  Var integrand = add(mul_const(mul(ex, ex), a2), mul_const(mul(ey, ey), a2));
  return add(loss, scale(scale(sum(integrand), hm), cfg.gamma));
}

double relative_l2(const Tensor& pred, const Tensor& target) {
  if (!pred.same_shape(target)) throw DimensionError("relative_l2 shape mismatch");
  double num = 0.0, den = 0.0;
  for (std::int64_t i = 0; i < pred.numel(); ++i) {
    const double d = pred[i] - target[i];
    num += d * d;
    den += target[i] * target[i];
  }
  if (den == 0.0) throw NumericalError("relative_l2 undefined for zero target");
  return std::sqrt(num / den);
}

}  // namespace gkt
