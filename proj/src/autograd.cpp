#include "gkt/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "gkt/fft.hpp"
#include "gkt/flops.hpp"

namespace gkt {

namespace {

void require_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw ConfigError("vars live on different tapes");
}

void accumulate(Tensor& acc, const Tensor& delta) {
  for (std::int64_t i = 0; i < acc.numel(); ++i) acc[i] += delta[i];
}

}  // namespace

Var Tape::leaf(Tensor value) {
  value.check_finite("leaf");
  nodes_.push_back(Node{std::move(value), Tensor{}, nullptr});
  return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::record(Tensor value, BackwardFn fn) {
  value.check_finite("op output");
  nodes_.push_back(Node{std::move(value), Tensor{}, std::move(fn)});
  return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

const Tensor& Tape::value(Var v) const {
  if (v.tape != this) throw ConfigError("var does not belong to this tape");
  return nodes_[static_cast<std::size_t>(v.id)].value;
}

Tensor& Tape::grad_mut(std::int32_t id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.numel() == 0) n.grad = Tensor::zeros(n.value.shape());
  return n.grad;
}

bool Tape::grad_present(std::int32_t id) const {
  return nodes_[static_cast<std::size_t>(id)].grad.numel() != 0;
}

const Tensor& Tape::grad(Var v) {
  if (v.tape != this) throw ConfigError("var does not belong to this tape");
  return grad_mut(v.id);
}

void Tape::backward(Var root) {
  if (root.tape != this) throw ConfigError("root does not belong to this tape");
  if (value(root).numel() != 1) throw ConfigError("backward root must be scalar");
  grad_mut(root.id)[0] += 1.0;
  for (std::int32_t i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.back && n.grad.numel() != 0) n.back(*this, i);
  }
}

void Tape::clear() { nodes_.clear(); }

// --------------------------------------------------------------------------
// elementwise
// --------------------------------------------------------------------------

namespace {

template <typename Fwd, typename Bwd>
Var binary_same_shape(Var a, Var b, Fwd fwd, Bwd bwd, const char* name) {
  require_same_tape(a, b);
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (!av.same_shape(bv)) throw DimensionError(std::string(name) + " shape mismatch");
  Tensor out(av.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = fwd(av[i], bv[i]);
  auto ida = a.id, idb = b.id;
  return t.record(std::move(out), [ida, idb, bwd](Tape& tp, std::int32_t id) {
    const Tensor& g = tp.grad_mut(id);
    const Tensor& av2 = tp.value(ida);
    const Tensor& bv2 = tp.value(idb);
    Tensor& ga = tp.grad_mut(ida);
    Tensor& gb = tp.grad_mut(idb);
    for (std::int64_t i = 0; i < g.numel(); ++i) {
      auto [da, db] = bwd(av2[i], bv2[i], g[i]);
      ga[i] += da;
      gb[i] += db;
    }
  });
}

template <typename Fwd, typename Bwd>
Var unary(Var a, Fwd fwd, Bwd bwd) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  Tensor out(av.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = fwd(av[i]);
  auto ida = a.id;
  return t.record(std::move(out), [ida, bwd](Tape& tp, std::int32_t id) {
    const Tensor& g = tp.grad_mut(id);
    const Tensor& av2 = tp.value(ida);
    Tensor& ga = tp.grad_mut(ida);
    for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += bwd(av2[i], g[i]);
  });
}

}  // namespace

Var add(Var a, Var b) {
  return binary_same_shape(
      a, b, [](double x, double y) { return x + y; },
      [](double, double, double g) { return std::pair<double, double>(g, g); }, "add");
}

Var sub(Var a, Var b) {
  return binary_same_shape(
      a, b, [](double x, double y) { return x - y; },
      [](double, double, double g) { return std::pair<double, double>(g, -g); }, "sub");
}

Var mul(Var a, Var b) {
  return binary_same_shape(
      a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double g) { return std::pair<double, double>(g * y, g * x); },
      "mul");
}

Var neg(Var a) {
  return unary(a, [](double x) { return -x; }, [](double, double g) { return -g; });
}

Var scale(Var a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double, double g) { return c * g; });
}

Var add_const(Var a, const Tensor& c) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  if (!av.same_shape(c)) throw DimensionError("add_const shape mismatch");
  Tensor out(av.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] + c[i];
  auto ida = a.id;
  return t.record(std::move(out), [ida](Tape& tp, std::int32_t id) {
    accumulate(tp.grad_mut(ida), tp.grad_mut(id));
  });
}

Var mul_const(Var a, const Tensor& c) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  if (!av.same_shape(c)) throw DimensionError("mul_const shape mismatch");
  Tensor out(av.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] * c[i];
  auto ida = a.id;
  Tensor saved = c;
  return t.record(std::move(out), [ida, saved](Tape& tp, std::int32_t id) {
    const Tensor& g = tp.grad_mut(id);
    Tensor& ga = tp.grad_mut(ida);
    for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * saved[i];
  });
}

Var add_rowvec(Var a, Var b) {
  require_same_tape(a, b);
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (av.rank() != 2 || bv.numel() != av.cols()) throw DimensionError("add_rowvec mismatch");
  Tensor out(av.shape());
  const std::int64_t n = av.rows(), d = av.cols();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < d; ++j) out.at(i, j) = av.at(i, j) + bv[j];
  auto ida = a.id, idb = b.id;
  return t.record(std::move(out), [ida, idb, n, d](Tape& tp, std::int32_t id) {
    const Tensor& g = tp.grad_mut(id);
    Tensor& ga = tp.grad_mut(ida);
    Tensor& gb = tp.grad_mut(idb);
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < d; ++j) {
        ga.at(i, j) += g.at(i, j);
        gb[j] += g.at(i, j);
      }
  });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double g) { return x > 0.0 ? g : 0.0; });
}

Var silu(Var a) {
  return unary(a,
               [](double x) { return x / (1.0 + std::exp(-x)); },
               [](double x, double g) {
                 const double s = 1.0 / (1.0 + std::exp(-x));
                 return g * s * (1.0 + x * (1.0 - s));
               });
}

// --------------------------------------------------------------------------
// linear algebra
// --------------------------------------------------------------------------

namespace {

// C = A * B with A (n x k), B (k x m); counts n*k*m multiply-adds.
void matmul_into(const double* a, const double* b, double* c, std::int64_t n,
                 std::int64_t k, std::int64_t m, bool zero_first = true) {
  if (zero_first)
    for (std::int64_t i = 0; i < n * m; ++i) c[i] = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * m;
    for (std::int64_t l = 0; l < k; ++l) {
      const double av = arow[l];
      const double* brow = b + l * m;
      for (std::int64_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  flops::add_macs(static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(k) *
                  static_cast<std::uint64_t>(m));
}

// dA += dC * B^T, i.e. dA[i,l] += sum_j dC[i,j] B[l,j]
void matmul_bt_accum(const double* dc, const double* b, double* da, std::int64_t n,
                     std::int64_t k, std::int64_t m) {
  for (std::int64_t i = 0; i < n; ++i) {
    const double* dcrow = dc + i * m;
    double* darow = da + i * k;
    for (std::int64_t l = 0; l < k; ++l) {
      const double* brow = b + l * m;
      double s = 0.0;
      for (std::int64_t j = 0; j < m; ++j) s += dcrow[j] * brow[j];
      darow[l] += s;
    }
  }
  flops::add_macs(static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(k) *
                  static_cast<std::uint64_t>(m));
}

// dB += A^T * dC, i.e. dB[l,j] += sum_i A[i,l] dC[i,j]
void matmul_at_accum(const double* a, const double* dc, double* db, std::int64_t n,
                     std::int64_t k, std::int64_t m) {
  for (std::int64_t i = 0; i < n; ++i) {
    const double* arow = a + i * k;
    const double* dcrow = dc + i * m;
    for (std::int64_t l = 0; l < k; ++l) {
      const double av = arow[l];
      double* dbrow = db + l * m;
      for (std::int64_t j = 0; j < m; ++j) dbrow[j] += av * dcrow[j];
    }
  }
  flops::add_macs(static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(k) *
                  static_cast<std::uint64_t>(m));
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows())
    throw DimensionError("matmul shape mismatch " + av.shape_str() + " * " + bv.shape_str());
  const std::int64_t n = av.rows(), k = av.cols(), m = bv.cols();
  Tensor out({n, m});
  matmul_into(av.data(), bv.data(), out.data(), n, k, m);
  auto ida = a.id, idb = b.id;
  return t.record(std::move(out), [ida, idb, n, k, m](Tape& tp, std::int32_t id) {
    const Tensor& g = tp.grad_mut(id);
    matmul_bt_accum(g.data(), tp.value(idb).data(), tp.grad_mut(ida).data(), n, k, m);
    matmul_at_accum(tp.value(ida).data(), g.data(), tp.grad_mut(idb).data(), n, k, m);
  });
}

Var transpose(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  if (av.rank() != 2) throw DimensionError("transpose expects rank-2");
  const std::int64_t n = av.rows(), m = av.cols();
  Tensor out({m, n});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < m; ++j) out.at(j, i) = av.at(i, j);
  auto ida = a.id;
  return t.record(std::move(out), [ida, n, m](Tape& tp, std::int32_t id) {
    const Tensor& g = tp.grad_mut(id);
    Tensor& ga = tp.grad_mut(ida);
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < m; ++j) ga.at(i, j) += g.at(j, i);
  });
}

Var concat_cols(Var a, Var b) {
  require_same_tape(a, b);
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (av.rank() != 2 || bv.rank() != 2 || av.rows() != bv.rows())
    throw DimensionError("concat_cols row mismatch");
  const std::int64_t n = av.rows(), da = av.cols(), db = bv.cols();
  Tensor out({n, da + db});
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < da; ++j) out.at(i, j) = av.at(i, j);
    for (std::int64_t j = 0; j < db; ++j) out.at(i, da + j) = bv.at(i, j);
  }
  auto ida = a.id, idb = b.id;
  return t.record(std::move(out), [ida, idb, n, da, db](Tape& tp, std::int32_t id) {
    const Tensor& g = tp.grad_mut(id);
    Tensor& ga = tp.grad_mut(ida);
    Tensor& gb = tp.grad_mut(idb);
    for (std::int64_t i = 0; i < n; ++i) {
      for (std::int64_t j = 0; j < da; ++j) ga.at(i, j) += g.at(i, j);
      for (std::int64_t j = 0; j < db; ++j) gb.at(i, j) += g.at(i, da + j);
    }
  });
}

Var slice_cols(Var a, std::int64_t j0, std::int64_t j1) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  if (av.rank() != 2 || j0 < 0 || j1 > av.cols() || j0 >= j1)
    throw DimensionError("slice_cols bounds");
  const std::int64_t n = av.rows(), w = j1 - j0;
  Tensor out({n, w});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < w; ++j) out.at(i, j) = av.at(i, j0 + j);
  auto ida = a.id;
  return t.record(std::move(out), [ida, n, w, j0](Tape& tp, std::int32_t id) {
    const Tensor& g = tp.grad_mut(id);
    Tensor& ga = tp.grad_mut(ida);
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < w; ++j) ga.at(i, j0 + j) += g.at(i, j);
  });
}

Var reshape(Var a, std::vector<std::int64_t> shape) {
  Tape& t = *a.tape;
  Tensor out = t.value(a).reshaped(std::move(shape));
  auto ida = a.id;
  return t.record(std::move(out), [ida](Tape& tp, std::int32_t id) {
    const Tensor& g = tp.grad_mut(id);
    Tensor& ga = tp.grad_mut(ida);
    for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
  });
}

// --------------------------------------------------------------------------
// reductions
// --------------------------------------------------------------------------

Var sum(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  double s = 0.0;
  for (std::int64_t i = 0; i < av.numel(); ++i) s += av[i];
  auto ida = a.id;
  return t.record(Tensor({1}, {s}), [ida](Tape& tp, std::int32_t id) {
    const double g = tp.grad_mut(id)[0];
    Tensor& ga = tp.grad_mut(ida);
    for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
  });
}

Var mean(Var a) {
  const std::int64_t n = a.tape->value(a).numel();
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var dot_with(Var a, const Tensor& w) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  if (av.numel() != w.numel()) throw DimensionError("dot_with length mismatch");
  double s = 0.0;
  for (std::int64_t i = 0; i < av.numel(); ++i) s += av[i] * w[i];
  auto ida = a.id;
  Tensor saved = w;
  return t.record(Tensor({1}, {s}), [ida, saved](Tape& tp, std::int32_t id) {
    const double g = tp.grad_mut(id)[0];
    Tensor& ga = tp.grad_mut(ida);
    for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += g * saved[i];
  });
}

// --------------------------------------------------------------------------
// normalizations
// --------------------------------------------------------------------------

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  require_same_tape(x, gain);
  require_same_tape(x, bias);
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x);
  const Tensor& gv = t.value(gain);
  const Tensor& bv = t.value(bias);
  if (xv.rank() != 2) throw DimensionError("layer_norm expects rank-2 input");
  const std::int64_t n = xv.rows(), d = xv.cols();
  if (gv.numel() != d || bv.numel() != d) throw DimensionError("layer_norm affine size");
  if (eps < 0.0) throw ConfigError("layer_norm eps must be nonnegative");

  Tensor out({n, d});
  if (d == 1) {
    // zero variance by construction: normalized value is 0, only bias remains
    for (std::int64_t i = 0; i < n; ++i) out.at(i, 0) = bv[0];
    auto idb = bias.id;
    return t.record(std::move(out), [idb, n](Tape& tp, std::int32_t id) {
      const Tensor& g = tp.grad_mut(id);
      Tensor& gb = tp.grad_mut(idb);
      for (std::int64_t i = 0; i < n; ++i) gb[0] += g.at(i, 0);
    });
  }

  Tensor xhat({n, d});
  Tensor inv_std({n});
  for (std::int64_t i = 0; i < n; ++i) {
    double m = 0.0;
    for (std::int64_t j = 0; j < d; ++j) m += xv.at(i, j);
    m /= static_cast<double>(d);
    double var = 0.0;
    for (std::int64_t j = 0; j < d; ++j) {
      const double c = xv.at(i, j) - m;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (std::int64_t j = 0; j < d; ++j) {
      const double xh = (xv.at(i, j) - m) * is;
      xhat.at(i, j) = xh;
      out.at(i, j) = gv[j] * xh + bv[j];
    }
  }
  auto idx = x.id, idg = gain.id, idb = bias.id;
  return t.record(std::move(out),
                  [idx, idg, idb, n, d, xhat, inv_std](Tape& tp, std::int32_t id) {
    const Tensor& g = tp.grad_mut(id);
    const Tensor& gv2 = tp.value(idg);
    Tensor& gx = tp.grad_mut(idx);
    Tensor& gg = tp.grad_mut(idg);
    Tensor& gb = tp.grad_mut(idb);
    for (std::int64_t i = 0; i < n; ++i) {
      double mean_u = 0.0, mean_ux = 0.0;
      for (std::int64_t j = 0; j < d; ++j) {
        const double u = g.at(i, j) * gv2[j];
        mean_u += u;
        mean_ux += u * xhat.at(i, j);
        gg[j] += g.at(i, j) * xhat.at(i, j);
        gb[j] += g.at(i, j);
      }
      mean_u /= static_cast<double>(d);
      mean_ux /= static_cast<double>(d);
      for (std::int64_t j = 0; j < d; ++j) {
        const double u = g.at(i, j) * gv2[j];
        gx.at(i, j) += inv_std[i] * (u - mean_u - xhat.at(i, j) * mean_ux);
      }
    }
  });
}

Var layer_norm_plain(Var x, double eps) {
  Tape& t = *x.tape;
  const std::int64_t d = t.value(x).cols();
  Var gain = t.leaf(Tensor::full({d}, 1.0));
  Var bias = t.leaf(Tensor::zeros({d}));
  return layer_norm(x, gain, bias, eps);
}

namespace {

Var softmax_axis(Var x, bool rows) {
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x);
  if (xv.rank() != 2) throw DimensionError("softmax expects rank-2");
  const std::int64_t n = xv.rows(), m = xv.cols();
  Tensor out({n, m});
  const std::int64_t outer = rows ? n : m;
  const std::int64_t inner = rows ? m : n;
  auto get = [&](const Tensor& T, std::int64_t o, std::int64_t i) {
    return rows ? T.at(o, i) : T.at(i, o);
  };
  auto set = [&](Tensor& T, std::int64_t o, std::int64_t i, double v) {
    if (rows) T.at(o, i) = v; else T.at(i, o) = v;
  };
  for (std::int64_t o = 0; o < outer; ++o) {
    double mx = get(xv, o, 0);
    for (std::int64_t i = 1; i < inner; ++i) mx = std::max(mx, get(xv, o, i));
    double denom = 0.0;
    for (std::int64_t i = 0; i < inner; ++i) {
      const double e = std::exp(get(xv, o, i) - mx);
      set(out, o, i, e);
      denom += e;
    }
    for (std::int64_t i = 0; i < inner; ++i) set(out, o, i, get(out, o, i) / denom);
  }
  flops::add_exps(static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(m));
  auto idx = x.id;
  Tensor saved = out;
  return t.record(std::move(out),
                  [idx, saved, rows, outer, inner](Tape& tp, std::int32_t id) {
    const Tensor& g = tp.grad_mut(id);
    Tensor& gx = tp.grad_mut(idx);
    auto get = [&](const Tensor& T, std::int64_t o, std::int64_t i) {
      return rows ? T.at(o, i) : T.at(i, o);
    };
    for (std::int64_t o = 0; o < outer; ++o) {
      double dot = 0.0;
      for (std::int64_t i = 0; i < inner; ++i) dot += get(g, o, i) * get(saved, o, i);
      for (std::int64_t i = 0; i < inner; ++i) {
        const double d = get(saved, o, i) * (get(g, o, i) - dot);
        if (rows) gx.at(o, i) += d; else gx.at(i, o) += d;
      }
    }
  });
}

}  // namespace

Var softmax_rows(Var x) { return softmax_axis(x, true); }
Var softmax_cols(Var x) { return softmax_axis(x, false); }

Var dropout(Var x, double rate, Rng& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0,1)");
  if (!training || rate == 0.0) return x;
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x);
  Tensor mask(xv.shape());
  const double keep = 1.0 - rate;
  for (std::int64_t i = 0; i < mask.numel(); ++i)
    mask[i] = (rng.uniform() >= rate) ? 1.0 / keep : 0.0;
  return mul_const(x, mask);
}

// --------------------------------------------------------------------------
// structured ops
// --------------------------------------------------------------------------

Var conv2d(Var x, Var kernel) {
  require_same_tape(x, kernel);
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x);
  const Tensor& kv = t.value(kernel);
  if (xv.rank() != 3 || kv.rank() != 4) throw DimensionError("conv2d expects (ci,H,W), (co,ci,3,3)");
  if (kv.dim(2) != 3 || kv.dim(3) != 3) throw DimensionError("conv2d kernel must be 3x3");
  const std::int64_t ci = xv.dim(0), H = xv.dim(1), W = xv.dim(2), co = kv.dim(0);
  if (kv.dim(1) != ci) throw DimensionError("conv2d channel mismatch");

  Tensor out({co, H, W});
  for (std::int64_t oc = 0; oc < co; ++oc)
    for (std::int64_t c = 0; c < ci; ++c)
      for (std::int64_t i = 0; i < H; ++i)
        for (std::int64_t j = 0; j < W; ++j) {
          double s = out.at(oc, i, j);
          for (std::int64_t di = -1; di <= 1; ++di) {
            const std::int64_t ii = i + di;
            if (ii < 0 || ii >= H) continue;
            for (std::int64_t dj = -1; dj <= 1; ++dj) {
              const std::int64_t jj = j + dj;
              if (jj < 0 || jj >= W) continue;
              s += xv.at(c, ii, jj) * kv.data()[((oc * ci + c) * 3 + (di + 1)) * 3 + (dj + 1)];
            }
          }
          out.at(oc, i, j) = s;
        }
  flops::add_macs(static_cast<std::uint64_t>(co * ci * H * W * 9));

  auto idx = x.id, idk = kernel.id;
  return t.record(std::move(out), [idx, idk, ci, co, H, W](Tape& tp, std::int32_t id) {
    const Tensor& g = tp.grad_mut(id);
    const Tensor& xv2 = tp.value(idx);
    const Tensor& kv2 = tp.value(idk);
    Tensor& gx = tp.grad_mut(idx);
    Tensor& gk = tp.grad_mut(idk);
    for (std::int64_t oc = 0; oc < co; ++oc)
      for (std::int64_t c = 0; c < ci; ++c)
        for (std::int64_t i = 0; i < H; ++i)
          for (std::int64_t j = 0; j < W; ++j) {
            const double go = g.at(oc, i, j);
            if (go == 0.0) continue;
            for (std::int64_t di = -1; di <= 1; ++di) {
              const std::int64_t ii = i + di;
              if (ii < 0 || ii >= H) continue;
              for (std::int64_t dj = -1; dj <= 1; ++dj) {
                const std::int64_t jj = j + dj;
                if (jj < 0 || jj >= W) continue;
                const std::int64_t kidx = ((oc * ci + c) * 3 + (di + 1)) * 3 + (dj + 1);
                gx.at(c, ii, jj) += go * kv2.data()[kidx];
                gk.data()[kidx] += go * xv2.at(c, ii, jj);
              }
            }
          }
  });
}

Var conv2d(Var x, Var kernel, Var bias) {
  Var y = conv2d(x, kernel);
  Tape& t = *x.tape;
  const Tensor& yv = t.value(y);
  const Tensor& bv = t.value(bias);
  const std::int64_t co = yv.dim(0), H = yv.dim(1), W = yv.dim(2);
  if (bv.numel() != co) throw DimensionError("conv2d bias size");
  Tensor out = yv;
  for (std::int64_t oc = 0; oc < co; ++oc)
    for (std::int64_t i = 0; i < H * W; ++i) out.data()[oc * H * W + i] += bv[oc];
  auto idy = y.id, idb = bias.id;
  return t.record(std::move(out), [idy, idb, co, H, W](Tape& tp, std::int32_t id) {
    const Tensor& g = tp.grad_mut(id);
    Tensor& gy = tp.grad_mut(idy);
    Tensor& gb = tp.grad_mut(idb);
    for (std::int64_t oc = 0; oc < co; ++oc)
      for (std::int64_t i = 0; i < H * W; ++i) {
        gy.data()[oc * H * W + i] += g.data()[oc * H * W + i];
        gb[oc] += g.data()[oc * H * W + i];
      }
  });
}

namespace {

struct InterpAxis {
  std::vector<std::int64_t> i0;
  std::vector<double> w1;  // weight of i0+1
};

InterpAxis interp_axis(std::int64_t in, std::int64_t out) {
  if (in < 2 || out < 2) throw DimensionError("bilinear_resize extents must be >= 2");
  InterpAxis ax;
  ax.i0.resize(static_cast<std::size_t>(out));
  ax.w1.resize(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in - 1) / static_cast<double>(out - 1);
  for (std::int64_t i = 0; i < out; ++i) {
    double s = static_cast<double>(i) * scale;
    std::int64_t i0 = static_cast<std::int64_t>(std::floor(s));
    if (i0 >= in - 1) i0 = in - 2;
    ax.i0[static_cast<std::size_t>(i)] = i0;
    ax.w1[static_cast<std::size_t>(i)] = s - static_cast<double>(i0);
  }
  return ax;
}

}  // namespace

Var bilinear_resize(Var x, std::int64_t out_h, std::int64_t out_w) {
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x);
  if (xv.rank() != 3) throw DimensionError("bilinear_resize expects (c,H,W)");
  const std::int64_t c = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  const InterpAxis ay = interp_axis(H, out_h);
  const InterpAxis ax = interp_axis(W, out_w);
  Tensor out({c, out_h, out_w});
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t i = 0; i < out_h; ++i) {
      const std::int64_t i0 = ay.i0[static_cast<std::size_t>(i)];
      const double wy = ay.w1[static_cast<std::size_t>(i)];
      for (std::int64_t j = 0; j < out_w; ++j) {
        const std::int64_t j0 = ax.i0[static_cast<std::size_t>(j)];
        const double wx = ax.w1[static_cast<std::size_t>(j)];
        out.at(ch, i, j) = (1 - wy) * (1 - wx) * xv.at(ch, i0, j0) +
                           (1 - wy) * wx * xv.at(ch, i0, j0 + 1) +
                           wy * (1 - wx) * xv.at(ch, i0 + 1, j0) +
                           wy * wx * xv.at(ch, i0 + 1, j0 + 1);
      }
    }
  auto idx = x.id;
  return t.record(std::move(out), [idx, c, H, W, out_h, out_w](Tape& tp, std::int32_t id) {
    const Tensor& g = tp.grad_mut(id);
    Tensor& gx = tp.grad_mut(idx);
    const InterpAxis ay = interp_axis(H, out_h);
    const InterpAxis ax = interp_axis(W, out_w);
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t i = 0; i < out_h; ++i) {
        const std::int64_t i0 = ay.i0[static_cast<std::size_t>(i)];
        const double wy = ay.w1[static_cast<std::size_t>(i)];
        for (std::int64_t j = 0; j < out_w; ++j) {
          const std::int64_t j0 = ax.i0[static_cast<std::size_t>(j)];
          const double wx = ax.w1[static_cast<std::size_t>(j)];
          const double go = g.at(ch, i, j);
          gx.at(ch, i0, j0) += (1 - wy) * (1 - wx) * go;
          gx.at(ch, i0, j0 + 1) += (1 - wy) * wx * go;
          gx.at(ch, i0 + 1, j0) += wy * (1 - wx) * go;
          gx.at(ch, i0 + 1, j0 + 1) += wy * wx * go;
        }
      }
  });
}

Var pad2d(Var x, std::int64_t out_h, std::int64_t out_w) {
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x);
  if (xv.rank() != 3) throw DimensionError("pad2d expects (c,H,W)");
  const std::int64_t c = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  if (out_h < H || out_w < W) throw DimensionError("pad2d target smaller than input");
  Tensor out({c, out_h, out_w});
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t i = 0; i < H; ++i)
      for (std::int64_t j = 0; j < W; ++j) out.at(ch, i, j) = xv.at(ch, i, j);
  auto idx = x.id;
  return t.record(std::move(out), [idx, c, H, W](Tape& tp, std::int32_t id) {
    const Tensor& g = tp.grad_mut(id);
    Tensor& gx = tp.grad_mut(idx);
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t i = 0; i < H; ++i)
        for (std::int64_t j = 0; j < W; ++j) gx.at(ch, i, j) += g.at(ch, i, j);
  });
}

Var crop2d(Var x, std::int64_t out_h, std::int64_t out_w) {
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x);
  if (xv.rank() != 3) throw DimensionError("crop2d expects (c,H,W)");
  const std::int64_t c = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  if (out_h > H || out_w > W) throw DimensionError("crop2d target larger than input");
  Tensor out({c, out_h, out_w});
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t i = 0; i < out_h; ++i)
      for (std::int64_t j = 0; j < out_w; ++j) out.at(ch, i, j) = xv.at(ch, i, j);
  auto idx = x.id;
  return t.record(std::move(out), [idx, c, out_h, out_w](Tape& tp, std::int32_t id) {
    const Tensor& g = tp.grad_mut(id);
    Tensor& gx = tp.grad_mut(idx);
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t i = 0; i < out_h; ++i)
        for (std::int64_t j = 0; j < out_w; ++j) gx.at(ch, i, j) += g.at(ch, i, j);
  });
}

Var mask_boundary2d(Var x) {
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x);
  if (xv.rank() != 2) throw DimensionError("mask_boundary2d expects (H,W)");
  const std::int64_t H = xv.rows(), W = xv.cols();
  Tensor out({H, W});
  for (std::int64_t i = 1; i < H - 1; ++i)
    for (std::int64_t j = 1; j < W - 1; ++j) out.at(i, j) = xv.at(i, j);
  auto idx = x.id;
  return t.record(std::move(out), [idx, H, W](Tape& tp, std::int32_t id) {
    const Tensor& g = tp.grad_mut(id);
    Tensor& gx = tp.grad_mut(idx);
    for (std::int64_t i = 1; i < H - 1; ++i)
      for (std::int64_t j = 1; j < W - 1; ++j) gx.at(i, j) += g.at(i, j);
  });
}

// --------------------------------------------------------------------------
// FFT and spectral convolutions
// --------------------------------------------------------------------------

namespace {

std::vector<cdouble> tensor_to_complex(const Tensor& v) {
  if (v.rank() == 1) {
    std::vector<cdouble> a(static_cast<std::size_t>(v.numel()));
    for (std::int64_t i = 0; i < v.numel(); ++i) a[static_cast<std::size_t>(i)] = cdouble(v[i], 0.0);
    return a;
  }
  if (v.rank() == 2 && v.cols() == 2) {
    std::vector<cdouble> a(static_cast<std::size_t>(v.rows()));
    for (std::int64_t i = 0; i < v.rows(); ++i)
      a[static_cast<std::size_t>(i)] = cdouble(v.at(i, 0), v.at(i, 1));
    return a;
  }
  throw DimensionError("fft_1d expects [n] real or [n,2] complex input");
}

Tensor complex_to_tensor(const std::vector<cdouble>& a) {
  Tensor t({static_cast<std::int64_t>(a.size()), 2});
  for (std::size_t i = 0; i < a.size(); ++i) {
    t.at(static_cast<std::int64_t>(i), 0) = a[i].real();
    t.at(static_cast<std::int64_t>(i), 1) = a[i].imag();
  }
  return t;
}

}  // namespace

Var fft_1d(Var x, bool inverse) {
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x);
  std::vector<cdouble> a = tensor_to_complex(xv);
  const std::int64_t n = static_cast<std::int64_t>(a.size());
  if (!is_power_of_two(n))
    throw DimensionError("fft_1d length must be a power of two, got " + std::to_string(n));
  fft_inplace(a, inverse);
  const bool real_input = xv.rank() == 1;
  auto idx = x.id;
  return t.record(complex_to_tensor(a),
                  [idx, inverse, real_input, n](Tape& tp, std::int32_t id) {
    const Tensor& g = tp.grad_mut(id);
    std::vector<cdouble> gc(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i)
      gc[static_cast<std::size_t>(i)] = cdouble(g.at(i, 0), g.at(i, 1));
    // adjoint of the unscaled forward DFT is n * ifft; adjoint of the
    // inverse is fft / n
    fft_inplace(gc, !inverse);
    const double factor = inverse ? 1.0 / static_cast<double>(n) : static_cast<double>(n);
    Tensor& gx = tp.grad_mut(idx);
    if (real_input) {
      for (std::int64_t i = 0; i < n; ++i)
        gx[i] += factor * gc[static_cast<std::size_t>(i)].real();
    } else {
      for (std::int64_t i = 0; i < n; ++i) {
        gx.at(i, 0) += factor * gc[static_cast<std::size_t>(i)].real();
        gx.at(i, 1) += factor * gc[static_cast<std::size_t>(i)].imag();
      }
    }
  });
}

Var spectral_conv1d(Var x, Var w) {
  require_same_tape(x, w);
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x);
  const Tensor& wv = t.value(w);
  if (xv.rank() != 2 || wv.rank() != 4 || wv.dim(3) != 2)
    throw DimensionError("spectral_conv1d expects x (n,ci), w (modes,ci,co,2)");
  const std::int64_t n = xv.rows(), ci = xv.cols();
  const std::int64_t modes = wv.dim(0), co = wv.dim(2);
  if (wv.dim(1) != ci) throw DimensionError("spectral_conv1d channel mismatch");
  if (!is_power_of_two(n)) throw DimensionError("spectral_conv1d length must be a power of two");
  if (modes > n / 2) throw ConfigError("spectral_conv1d needs modes <= n/2");

  // X[k][c] for kept modes only
  std::vector<cdouble> X(static_cast<std::size_t>(modes * ci));
  {
    std::vector<double> col(static_cast<std::size_t>(n));
    for (std::int64_t c = 0; c < ci; ++c) {
      for (std::int64_t i = 0; i < n; ++i) col[static_cast<std::size_t>(i)] = xv.at(i, c);
      std::vector<cdouble> F = fft_real(col);
      for (std::int64_t k = 0; k < modes; ++k)
        X[static_cast<std::size_t>(k * ci + c)] = F[static_cast<std::size_t>(k)];
    }
  }
  auto wat = [&](const Tensor& W, std::int64_t k, std::int64_t a, std::int64_t b) {
    const std::int64_t base = ((k * ci + a) * co + b) * 2;
    return cdouble(W.data()[base], W.data()[base + 1]);
  };

  Tensor out({n, co});
  {
    std::vector<cdouble> Y(static_cast<std::size_t>(n));
    for (std::int64_t b = 0; b < co; ++b) {
      std::fill(Y.begin(), Y.end(), cdouble(0.0, 0.0));
      for (std::int64_t k = 0; k < modes; ++k) {
        cdouble z(0.0, 0.0);
        for (std::int64_t a = 0; a < ci; ++a)
          z += X[static_cast<std::size_t>(k * ci + a)] * wat(wv, k, a, b);
        Y[static_cast<std::size_t>(k)] = z;
        if (k > 0) Y[static_cast<std::size_t>(n - k)] = std::conj(z);
      }
      std::vector<double> y = ifft_real(Y);
      for (std::int64_t i = 0; i < n; ++i) out.at(i, b) = y[static_cast<std::size_t>(i)];
    }
  }
  flops::add_macs(static_cast<std::uint64_t>(4 * modes * ci * co));

  auto idx = x.id, idw = w.id;
  return t.record(std::move(out),
                  [idx, idw, n, ci, co, modes, X](Tape& tp, std::int32_t id) {
    const Tensor& g = tp.grad_mut(id);
    const Tensor& wv2 = tp.value(idw);
    Tensor& gx = tp.grad_mut(idx);
    Tensor& gw = tp.grad_mut(idw);
    auto wat2 = [&](std::int64_t k, std::int64_t a, std::int64_t b) {
      const std::int64_t base = ((k * ci + a) * co + b) * 2;
      return cdouble(wv2.data()[base], wv2.data()[base + 1]);
    };
    // gZ[k][b] = (c_k / n) * fft(G[:,b])_k
    std::vector<cdouble> gZ(static_cast<std::size_t>(modes * co));
    {
      std::vector<double> col(static_cast<std::size_t>(n));
      for (std::int64_t b = 0; b < co; ++b) {
        for (std::int64_t i = 0; i < n; ++i) col[static_cast<std::size_t>(i)] = g.at(i, b);
        std::vector<cdouble> F = fft_real(col);
        for (std::int64_t k = 0; k < modes; ++k) {
          const double ck = (k == 0) ? 1.0 : 2.0;
          gZ[static_cast<std::size_t>(k * co + b)] =
              F[static_cast<std::size_t>(k)] * (ck / static_cast<double>(n));
        }
      }
    }
    // gW = conj(X) * gZ; gX = conj(W) * gZ
    std::vector<cdouble> gX(static_cast<std::size_t>(modes * ci), cdouble(0.0, 0.0));
    for (std::int64_t k = 0; k < modes; ++k)
      for (std::int64_t b = 0; b < co; ++b) {
        const cdouble gz = gZ[static_cast<std::size_t>(k * co + b)];
        for (std::int64_t a = 0; a < ci; ++a) {
          const cdouble gwk = std::conj(X[static_cast<std::size_t>(k * ci + a)]) * gz;
          const std::int64_t base = ((k * ci + a) * co + b) * 2;
          gw.data()[base] += gwk.real();
          gw.data()[base + 1] += gwk.imag();
          gX[static_cast<std::size_t>(k * ci + a)] += std::conj(wat2(k, a, b)) * gz;
        }
      }
    // gx = Re(n * ifft(gX padded)); combined with the 1/n above this is a
    // plain inverse-transform synthesis of the kept modes
    std::vector<cdouble> pad(static_cast<std::size_t>(n));
    for (std::int64_t a = 0; a < ci; ++a) {
      std::fill(pad.begin(), pad.end(), cdouble(0.0, 0.0));
      for (std::int64_t k = 0; k < modes; ++k)
        pad[static_cast<std::size_t>(k)] = gX[static_cast<std::size_t>(k * ci + a)];
      fft_inplace(pad, true);
      for (std::int64_t i = 0; i < n; ++i)
        gx.at(i, a) += static_cast<double>(n) * pad[static_cast<std::size_t>(i)].real();
    }
  });
}

namespace {

// 2D FFT over an H x W complex grid, rows then columns.
void fft2_inplace(std::vector<cdouble>& a, std::int64_t H, std::int64_t W, bool inverse) {
  std::vector<cdouble> row(static_cast<std::size_t>(W));
  for (std::int64_t i = 0; i < H; ++i) {
    std::copy(a.begin() + i * W, a.begin() + (i + 1) * W, row.begin());
    fft_inplace(row, inverse);
    std::copy(row.begin(), row.end(), a.begin() + i * W);
  }
  std::vector<cdouble> colv(static_cast<std::size_t>(H));
  for (std::int64_t j = 0; j < W; ++j) {
    for (std::int64_t i = 0; i < H; ++i) colv[static_cast<std::size_t>(i)] = a[static_cast<std::size_t>(i * W + j)];
    fft_inplace(colv, inverse);
    for (std::int64_t i = 0; i < H; ++i) a[static_cast<std::size_t>(i * W + j)] = colv[static_cast<std::size_t>(i)];
  }
}

}  // namespace

Var spectral_conv2d(Var x, Var w) {
  require_same_tape(x, w);
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x);
  const Tensor& wv = t.value(w);
  if (xv.rank() != 3 || wv.rank() != 5 || wv.dim(4) != 2)
    throw DimensionError("spectral_conv2d expects x (ci,H,W), w (mx,my,ci,co,2)");
  const std::int64_t ci = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  const std::int64_t mx = wv.dim(0), my = wv.dim(1), co = wv.dim(3);
  if (wv.dim(2) != ci) throw DimensionError("spectral_conv2d channel mismatch");
  if (!is_power_of_two(H) || !is_power_of_two(W))
    throw DimensionError("spectral_conv2d extents must be powers of two");
  if (mx > H / 2 || my > W / 2) throw ConfigError("spectral_conv2d needs modes <= extent/2");

  const std::int64_t HW = H * W;
  // X[k1,k2,c] for kept corner modes
  std::vector<cdouble> X(static_cast<std::size_t>(mx * my * ci));
  {
    std::vector<cdouble> grid(static_cast<std::size_t>(HW));
    for (std::int64_t c = 0; c < ci; ++c) {
      for (std::int64_t i = 0; i < HW; ++i)
        grid[static_cast<std::size_t>(i)] = cdouble(xv.data()[c * HW + i], 0.0);
      fft2_inplace(grid, H, W, false);
      for (std::int64_t k1 = 0; k1 < mx; ++k1)
        for (std::int64_t k2 = 0; k2 < my; ++k2)
          X[static_cast<std::size_t>((k1 * my + k2) * ci + c)] =
              grid[static_cast<std::size_t>(k1 * W + k2)];
    }
  }
  auto wat = [&](const Tensor& WT, std::int64_t k1, std::int64_t k2, std::int64_t a, std::int64_t b) {
    const std::int64_t base = ((((k1 * my) + k2) * ci + a) * co + b) * 2;
    return cdouble(WT.data()[base], WT.data()[base + 1]);
  };

  Tensor out({co, H, W});
  {
    std::vector<cdouble> Y(static_cast<std::size_t>(HW));
    for (std::int64_t b = 0; b < co; ++b) {
      std::fill(Y.begin(), Y.end(), cdouble(0.0, 0.0));
      for (std::int64_t k1 = 0; k1 < mx; ++k1)
        for (std::int64_t k2 = 0; k2 < my; ++k2) {
          cdouble z(0.0, 0.0);
          for (std::int64_t a = 0; a < ci; ++a)
            z += X[static_cast<std::size_t>((k1 * my + k2) * ci + a)] * wat(wv, k1, k2, a, b);
          Y[static_cast<std::size_t>(k1 * W + k2)] += z;
          if (k1 != 0 || k2 != 0) {
            const std::int64_t c1 = (H - k1) % H, c2 = (W - k2) % W;
            Y[static_cast<std::size_t>(c1 * W + c2)] += std::conj(z);
          }
        }
      fft2_inplace(Y, H, W, true);
      for (std::int64_t i = 0; i < HW; ++i) out.data()[b * HW + i] = Y[static_cast<std::size_t>(i)].real();
    }
  }
  flops::add_macs(static_cast<std::uint64_t>(4 * mx * my * ci * co));

  auto idx = x.id, idw = w.id;
  return t.record(std::move(out),
                  [idx, idw, ci, co, H, W, mx, my, X](Tape& tp, std::int32_t id) {
    const Tensor& g = tp.grad_mut(id);
    const Tensor& wv2 = tp.value(idw);
    Tensor& gx = tp.grad_mut(idx);
    Tensor& gw = tp.grad_mut(idw);
    const std::int64_t HW = H * W;
    auto wat2 = [&](std::int64_t k1, std::int64_t k2, std::int64_t a, std::int64_t b) {
      const std::int64_t base = ((((k1 * my) + k2) * ci + a) * co + b) * 2;
      return cdouble(wv2.data()[base], wv2.data()[base + 1]);
    };
    std::vector<cdouble> gZ(static_cast<std::size_t>(mx * my * co));
    {
      std::vector<cdouble> grid(static_cast<std::size_t>(HW));
      for (std::int64_t b = 0; b < co; ++b) {
        for (std::int64_t i = 0; i < HW; ++i)
          grid[static_cast<std::size_t>(i)] = cdouble(g.data()[b * HW + i], 0.0);
        fft2_inplace(grid, H, W, false);
        for (std::int64_t k1 = 0; k1 < mx; ++k1)
          for (std::int64_t k2 = 0; k2 < my; ++k2) {
            const double ck = (k1 == 0 && k2 == 0) ? 1.0 : 2.0;
            gZ[static_cast<std::size_t>((k1 * my + k2) * co + b)] =
                grid[static_cast<std::size_t>(k1 * W + k2)] * (ck / static_cast<double>(HW));
          }
      }
    }
    std::vector<cdouble> gX(static_cast<std::size_t>(mx * my * ci), cdouble(0.0, 0.0));
    for (std::int64_t k1 = 0; k1 < mx; ++k1)
      for (std::int64_t k2 = 0; k2 < my; ++k2)
        for (std::int64_t b = 0; b < co; ++b) {
          const cdouble gz = gZ[static_cast<std::size_t>((k1 * my + k2) * co + b)];
          for (std::int64_t a = 0; a < ci; ++a) {
            const cdouble gwk =
                std::conj(X[static_cast<std::size_t>((k1 * my + k2) * ci + a)]) * gz;
            const std::int64_t base = ((((k1 * my) + k2) * ci + a) * co + b) * 2;
            gw.data()[base] += gwk.real();
            gw.data()[base + 1] += gwk.imag();
            gX[static_cast<std::size_t>((k1 * my + k2) * ci + a)] +=
                std::conj(wat2(k1, k2, a, b)) * gz;
          }
        }
    std::vector<cdouble> pad(static_cast<std::size_t>(HW));
    for (std::int64_t a = 0; a < ci; ++a) {
      std::fill(pad.begin(), pad.end(), cdouble(0.0, 0.0));
      for (std::int64_t k1 = 0; k1 < mx; ++k1)
        for (std::int64_t k2 = 0; k2 < my; ++k2)
          pad[static_cast<std::size_t>(k1 * W + k2)] =
              gX[static_cast<std::size_t>((k1 * my + k2) * ci + a)];
      fft2_inplace(pad, H, W, true);
      for (std::int64_t i = 0; i < HW; ++i)
        gx.data()[a * HW + i] += static_cast<double>(HW) * pad[static_cast<std::size_t>(i)].real();
    }
  });
}

// --------------------------------------------------------------------------
// finite differences
// --------------------------------------------------------------------------

Var diff_central_periodic(Var x, double h) {
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x);
  if (xv.rank() != 1) throw DimensionError("diff_central_periodic expects [n]");
  const std::int64_t n = xv.numel();
  const double c = 1.0 / (2.0 * h);
  Tensor out({n});
  for (std::int64_t i = 0; i < n; ++i)
    out[i] = c * (xv[(i + 1) % n] - xv[(i + n - 1) % n]);
  auto idx = x.id;
  return t.record(std::move(out), [idx, n, c](Tape& tp, std::int32_t id) {
    const Tensor& g = tp.grad_mut(id);
    Tensor& gx = tp.grad_mut(idx);
    for (std::int64_t i = 0; i < n; ++i)
      gx[i] += c * (g[(i + n - 1) % n] - g[(i + 1) % n]);
  });
}

namespace {

Var central2d(Var x, double h, bool along_cols) {
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x);
  if (xv.rank() != 2) throw DimensionError("central difference expects (H,W)");
  const std::int64_t H = xv.rows(), W = xv.cols();
  const double c = 1.0 / (2.0 * h);
  Tensor out({H, W});
  auto at = [&](std::int64_t i, std::int64_t j) -> double {
    if (i < 0 || i >= H || j < 0 || j >= W) return 0.0;  // zero extension
    return xv.at(i, j);
  };
  for (std::int64_t i = 0; i < H; ++i)
    for (std::int64_t j = 0; j < W; ++j)
      out.at(i, j) = along_cols ? c * (at(i, j + 1) - at(i, j - 1))
                                : c * (at(i + 1, j) - at(i - 1, j));
  auto idx = x.id;
  return t.record(std::move(out), [idx, H, W, c, along_cols](Tape& tp, std::int32_t id) {
    const Tensor& g = tp.grad_mut(id);
    Tensor& gx = tp.grad_mut(idx);
    auto gat = [&](std::int64_t i, std::int64_t j) -> double {
      if (i < 0 || i >= H || j < 0 || j >= W) return 0.0;
      return g.at(i, j);
    };
    for (std::int64_t i = 0; i < H; ++i)
      for (std::int64_t j = 0; j < W; ++j)
        gx.at(i, j) += along_cols ? c * (gat(i, j - 1) - gat(i, j + 1))
                                  : c * (gat(i - 1, j) - gat(i + 1, j));
  });
}

}  // namespace

Var dx_central2d(Var x, double h) { return central2d(x, h, true); }
Var dy_central2d(Var x, double h) { return central2d(x, h, false); }

// --------------------------------------------------------------------------
// gradient checking
// --------------------------------------------------------------------------

double grad_check_multi(const MultiFn& f, const std::vector<Tensor>& inputs,
                        double step, std::int64_t max_coords_per_input) {
  if (step <= 0.0) throw ConfigError("grad_check step must be positive");
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& in : inputs) vars.push_back(tape.leaf(in));
  Var out = f(tape, vars);
  if (tape.value(out).numel() != 1) throw ConfigError("grad_check target must be scalar");
  tape.backward(out);
  std::vector<Tensor> analytic;
  analytic.reserve(inputs.size());
  for (Var v : vars) analytic.push_back(tape.grad(v));

  auto eval_at = [&](const std::vector<Tensor>& pts) {
    Tape t2;
    std::vector<Var> vs;
    vs.reserve(pts.size());
    for (const Tensor& p : pts) vs.push_back(t2.leaf(p));
    Var o = f(t2, vs);
    const double val = t2.value(o)[0];
    if (!std::isfinite(val)) throw NumericalError("grad_check: non-finite objective");
    return val;
  };

  double worst = 0.0;
  std::vector<Tensor> probe = inputs;
  for (std::size_t vi = 0; vi < inputs.size(); ++vi) {
    const std::int64_t numel = inputs[vi].numel();
    std::int64_t stride = 1;
    if (max_coords_per_input > 0 && numel > max_coords_per_input)
      stride = (numel + max_coords_per_input - 1) / max_coords_per_input;
    for (std::int64_t i = 0; i < numel; i += stride) {
      const double orig = probe[vi][i];
      probe[vi][i] = orig + step;
      const double fp = eval_at(probe);
      probe[vi][i] = orig - step;
      const double fm = eval_at(probe);
      probe[vi][i] = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = analytic[vi][i];
      const double rel = std::fabs(a - numeric) / (std::fabs(a) + 1e-12);
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x,
                  double step, std::int64_t max_coords) {
  return grad_check_multi(
      [&f](Tape& t, const std::vector<Var>& vs) { return f(t, vs[0]); }, {x}, step,
      max_coords);
}

}  // namespace gkt
