#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "gkt/rng.hpp"
#include "gkt/tensor.hpp"

namespace gkt {

class Tape;

/// Lightweight handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::int32_t id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

/// Define-by-run reverse-mode tape. Nodes are appended in creation order;
/// backward() visits them in strict reverse creation order. A tape is
/// single-writer: one forward/backward pass at a time.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::int32_t node_id)>;

  Var leaf(Tensor value);
  Var record(Tensor value, BackwardFn fn);

  const Tensor& value(Var v) const;
  const Tensor& value(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)].value; }

  /// Gradient of a node (zeros if backward has not reached it).
  const Tensor& grad(Var v);
  Tensor& grad_mut(std::int32_t id);
  bool grad_present(std::int32_t id) const;

  /// Seeds the scalar root with 1 and sweeps the tape in reverse.
  void backward(Var root);

  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;        // empty until first accumulation
    BackwardFn back;    // null for leaves
  };
  // deque: references to node values stay valid while the tape grows
  std::deque<Node> nodes_;
};

// ---- elementwise / arithmetic -------------------------------------------
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double c);
Var add_const(Var a, const Tensor& c);
Var mul_const(Var a, const Tensor& c);
Var add_rowvec(Var a, Var b);  // (n x d) + (d)
Var relu(Var a);
Var silu(Var a);

// ---- linear algebra ------------------------------------------------------
Var matmul(Var a, Var b);
Var transpose(Var a);
Var concat_cols(Var a, Var b);
Var slice_cols(Var a, std::int64_t j0, std::int64_t j1);
Var reshape(Var a, std::vector<std::int64_t> shape);

// ---- reductions ----------------------------------------------------------
Var sum(Var a);
Var mean(Var a);
Var dot_with(Var a, const Tensor& w);  // scalar readout sum_i a_i w_i

// ---- normalizations ------------------------------------------------------
/// Row-wise zero-mean unit-variance (population variance over the d columns)
/// followed by the affine map gain * xhat + bias. d == 1 rows degenerate to
/// the bias row.
Var layer_norm(Var x, Var gain, Var bias, double eps);
Var layer_norm_plain(Var x, double eps);  // gain 1, bias 0, not learnable
Var softmax_rows(Var x);
Var softmax_cols(Var x);
Var dropout(Var x, double rate, Rng& rng, bool training);

// ---- structured ops ------------------------------------------------------
Var conv2d(Var x, Var kernel);              // (ci,H,W) * (co,ci,3,3), pad 1
Var conv2d(Var x, Var kernel, Var bias);    // + per-channel bias
Var bilinear_resize(Var x, std::int64_t out_h, std::int64_t out_w);  // align-corners
Var pad2d(Var x, std::int64_t out_h, std::int64_t out_w);   // zero pad bottom/right
Var crop2d(Var x, std::int64_t out_h, std::int64_t out_w);  // top-left corner
Var mask_boundary2d(Var x);  // zeroes the boundary ring of an (H,W) field

/// Unscaled forward DFT (inverse divides by n); real [n] or interleaved
/// [n,2] input, [n,2] output. Backward applies the adjoint transform.
Var fft_1d(Var x, bool inverse);

/// Spectral convolution: FFT along the sequence axis, multiply the lowest
/// `modes` frequencies by complex weights [modes, ci, co, 2], zero the rest,
/// inverse FFT (Hermitian completion keeps the output real).
Var spectral_conv1d(Var x, Var w);  // x: (n, ci), n power of two
Var spectral_conv2d(Var x, Var w);  // x: (ci, H, W), w: (mx, my, ci, co, 2)

// ---- finite differences (loss regularizers) ------------------------------
Var diff_central_periodic(Var x, double h);       // [n]
Var dx_central2d(Var x, double h);                // (H,W), zero-extended edges
Var dy_central2d(Var x, double h);

// ---- gradient checking ----------------------------------------------------
using MultiFn = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Central finite-difference check of a scalar-valued function against the
/// tape gradient. Returns max over checked coordinates of
/// |analytic - numeric| / (|analytic| + 1e-12). When max_coords_per_input is
/// positive, a deterministic stride subsample of coordinates is checked.
double grad_check_multi(const MultiFn& f, const std::vector<Tensor>& inputs,
                        double step, std::int64_t max_coords_per_input = -1);
double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x,
                  double step, std::int64_t max_coords = -1);

}  // namespace gkt
