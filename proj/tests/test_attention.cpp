#include <doctest.h>

#include <cmath>

#include "gkt/attention.hpp"
#include "gkt/flops.hpp"

using namespace gkt;

namespace {

double rel_err(const Tensor& a, const Tensor& b) {
  double num = 0, den = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

AttentionConfig small_cfg(AttnVariant v, LnScheme s, std::int64_t d_model,
                          std::int64_t n_head = 1) {
  AttentionConfig c;
  c.variant = v;
  c.ln_scheme = s;
  c.d_model = d_model;
  c.n_head = n_head;
  c.coord_dim = 1;
  return c;
}

Tensor coords_1d(std::int64_t n) {
  Tensor c({n, 1});
  for (std::int64_t i = 0; i < n; ++i) c.at(i, 0) = static_cast<double>(i) / n;
  return c;
}

}  // namespace

TEST_CASE("init_projection degenerate, bounds, determinism") {
  Tensor eye = init_projection(6, 0.0, 1.0, 42u);
  for (std::int64_t i = 0; i < 6; ++i)
    for (std::int64_t j = 0; j < 6; ++j)
      CHECK(eye.at(i, j) == doctest::Approx(i == j ? 1.0 : 0.0));

  const std::int64_t d = 16;
  const double eta = 1e-2, delta = 1e-2;
  Tensor w = init_projection(d, eta, delta, 7u);
  const double bound = eta * std::sqrt(3.0 / d);
  for (std::int64_t i = 0; i < d; ++i)
    for (std::int64_t j = 0; j < d; ++j) {
      if (i == j) {
        CHECK(w.at(i, j) >= delta - bound);
        CHECK(w.at(i, j) <= delta + bound);
      } else {
        CHECK(std::fabs(w.at(i, j)) <= bound);
      }
    }

  Tensor w2 = init_projection(d, eta, delta, 7u);
  for (std::int64_t i = 0; i < w.numel(); ++i) CHECK(w[i] == w2[i]);
}

TEST_CASE("project_qkv identity, annihilation, gradient") {
  Rng rng(5);
  Tensor y = rng.normal_tensor({6, 4});
  Tape t;
  Var yv = t.leaf(y);
  Var eye = t.leaf(Tensor::identity(4));
  Qkv qkv = project_qkv(yv, eye, eye, eye);
  CHECK(rel_err(t.value(qkv.q), y) < 1e-15);
  CHECK(rel_err(t.value(qkv.v), y) < 1e-15);

  Var zero = t.leaf(Tensor::zeros({6, 4}));
  Qkv z = project_qkv(zero, t.leaf(rng.normal_tensor({4, 4})),
                      t.leaf(rng.normal_tensor({4, 4})), t.leaf(rng.normal_tensor({4, 4})));
  for (std::int64_t i = 0; i < 24; ++i) CHECK(t.value(z.k)[i] == 0.0);

  Tensor wq = rng.normal_tensor({4, 4}), wk = rng.normal_tensor({4, 4}),
         wv = rng.normal_tensor({4, 4});
  Tensor rd = rng.normal_tensor({6, 4});
  auto f = [&](Tape& tp, const std::vector<Var>& vs) {
    Qkv p = project_qkv(vs[0], vs[1], vs[2], vs[3]);
    return dot_with(add(p.q, add(p.k, p.v)), rd);
  };
  CHECK(grad_check_multi(f, {y, wq, wk, wv}, 1e-5) < 1e-6);
}

TEST_CASE("attn_fourier identity algebra and rank-one case") {
  Tape t;
  Var i2 = t.leaf(Tensor::identity(2));
  const Tensor& z = t.value(attn_fourier(i2, i2, i2, false));
  CHECK(z.at(0, 0) == doctest::Approx(0.5));
  CHECK(z.at(0, 1) == doctest::Approx(0.0));
  CHECK(z.at(1, 1) == doctest::Approx(0.5));

  Var q = t.leaf(Tensor::row_matrix({{1}, {1}}));
  Var k = t.leaf(Tensor::row_matrix({{1}, {1}}));
  Var v = t.leaf(Tensor::row_matrix({{2}, {2}}));
  const Tensor& z2 = t.value(attn_fourier(q, k, v, false));
  CHECK(z2.at(0, 0) == doctest::Approx(2.0));
  CHECK(z2.at(1, 0) == doctest::Approx(2.0));
}

TEST_CASE("attn_galerkin orthonormal keys reproduce Q, zero values annihilate") {
  const std::int64_t n = 32, d = 4;
  Tensor kv({n, d});
  for (std::int64_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) / n;
    kv.at(i, 0) = 1.0;
    kv.at(i, 1) = std::sqrt(2.0) * std::cos(2 * 3.14159265358979323846 * x);
    kv.at(i, 2) = std::sqrt(2.0) * std::sin(2 * 3.14159265358979323846 * x);
    kv.at(i, 3) = std::sqrt(2.0) * std::cos(4 * 3.14159265358979323846 * x);
  }
  Rng rng(9);
  Tensor q = rng.normal_tensor({n, d});
  Tape t;
  const Tensor& z = t.value(attn_galerkin(t.leaf(q), t.leaf(kv), t.leaf(kv), false));
  CHECK(rel_err(z, q) < 1e-12);

  Var zv = attn_galerkin(t.leaf(q), t.leaf(kv), t.leaf(Tensor::zeros({n, d})), false);
  for (std::int64_t i = 0; i < n * d; ++i) CHECK(t.value(zv)[i] == 0.0);
}

TEST_CASE("fourier and galerkin agree (associativity) within 1e-12") {
  Rng rng(13);
  for (int trial = 0; trial < 8; ++trial) {
    const std::int64_t n = 8 + rng.index(249);
    const std::int64_t d = 2 + rng.index(15);
    Tensor q = rng.uniform_tensor({n, d}, -1, 1);
    Tensor k = rng.uniform_tensor({n, d}, -1, 1);
    Tensor v = rng.uniform_tensor({n, d}, -1, 1);
    Tape t;
    const Tensor& zf = t.value(attn_fourier(t.leaf(q), t.leaf(k), t.leaf(v), false));
    const Tensor& zg = t.value(attn_galerkin(t.leaf(q), t.leaf(k), t.leaf(v), false));
    CHECK(rel_err(zf, zg) < 1e-12);
  }
}

TEST_CASE("attn_softmax degenerate keys, single position, row sums") {
  Rng rng(17);
  const std::int64_t n = 8, d = 3;
  Tensor q = rng.normal_tensor({n, d});
  Tensor v = rng.normal_tensor({n, d});
  Tape t;
  const Tensor& z = t.value(attn_softmax(t.leaf(q), t.leaf(Tensor::zeros({n, d})), t.leaf(v)));
  for (std::int64_t j = 0; j < d; ++j) {
    double mean = 0;
    for (std::int64_t i = 0; i < n; ++i) mean += v.at(i, j) / n;
    for (std::int64_t i = 0; i < n; ++i) CHECK(z.at(i, j) == doctest::Approx(mean));
  }

  Tensor q1 = rng.normal_tensor({1, d}), k1 = rng.normal_tensor({1, d}),
         v1 = rng.normal_tensor({1, d});
  const Tensor& z1 = t.value(attn_softmax(t.leaf(q1), t.leaf(k1), t.leaf(v1)));
  CHECK(rel_err(z1, v1) < 1e-15);

  // row-stochastic weights: all-ones values map to all-ones output
  Tensor k16 = rng.normal_tensor({16, 4});
  Tensor q16 = rng.normal_tensor({16, 4});
  const Tensor& zs =
      t.value(attn_softmax(t.leaf(q16), t.leaf(k16), t.leaf(Tensor::full({16, 4}, 1.0))));
  for (std::int64_t i = 0; i < zs.numel(); ++i) CHECK(std::fabs(zs[i] - 1.0) < 1e-12);
}

TEST_CASE("attn_linear_softmax scalar case, column sums, gradient") {
  Tape t;
  Var q = t.leaf(Tensor::row_matrix({{0.7}}));
  Var k = t.leaf(Tensor::row_matrix({{-0.3}}));
  Var v = t.leaf(Tensor::row_matrix({{2.5}}));
  CHECK(t.value(attn_linear_softmax(q, k, v)).at(0, 0) == doctest::Approx(2.5));

  Rng rng(19);
  Tensor q2 = rng.uniform_tensor({16, 4}, -1, 1);
  Tensor k2 = rng.uniform_tensor({16, 4}, -1, 1);
  Tensor v2 = rng.uniform_tensor({16, 4}, -1, 1);
  Tensor w = rng.normal_tensor({16, 4});
  auto f = [&](Tape& tp, const std::vector<Var>& vs) {
    return dot_with(attn_linear_softmax(vs[0], vs[1], vs[2]), w);
  };
  CHECK(grad_check_multi(f, {q2, k2, v2}, 1e-5) < 1e-5);
}

TEST_CASE("permutation equivariance is exact on integer lattices") {
  Rng rng(23);
  const std::int64_t n = 16, d = 4;
  for (AttnVariant variant : {AttnVariant::fourier, AttnVariant::galerkin}) {
    Tensor q({n, d}), k({n, d}), v({n, d});
    for (std::int64_t i = 0; i < n * d; ++i) {
      q[i] = static_cast<double>(rng.index(7)) - 3.0;
      k[i] = static_cast<double>(rng.index(7)) - 3.0;
      v[i] = static_cast<double>(rng.index(7)) - 3.0;
    }
    std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    for (std::int64_t i = n - 1; i > 0; --i)
      std::swap(perm[static_cast<std::size_t>(i)],
                perm[static_cast<std::size_t>(rng.index(i + 1))]);

    auto permute_rows = [&](const Tensor& x) {
      Tensor y({n, d});
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < d; ++j)
          y.at(i, j) = x.at(perm[static_cast<std::size_t>(i)], j);
      return y;
    };

    Tape t;
    auto run = [&](const Tensor& qq, const Tensor& kk, const Tensor& vv) {
      return variant == AttnVariant::fourier
                 ? t.value(attn_fourier(t.leaf(qq), t.leaf(kk), t.leaf(vv), false))
                 : t.value(attn_galerkin(t.leaf(qq), t.leaf(kk), t.leaf(vv), false));
    };
    Tensor base = run(q, k, v);
    Tensor permuted = run(permute_rows(q), permute_rows(k), permute_rows(v));
    Tensor expected = permute_rows(base);
    for (std::int64_t i = 0; i < n * d; ++i) CHECK(permuted[i] == expected[i]);  // bitwise
  }
}

TEST_CASE("cost model: multiply-add counter matches the closed forms") {
  Rng rng(29);
  for (auto [n, d] : {std::pair<std::int64_t, std::int64_t>{64, 8}, {128, 16}}) {
    Tensor q = rng.normal_tensor({n, d}), k = rng.normal_tensor({n, d}),
           v = rng.normal_tensor({n, d});
    Tape t;
    Var qv = t.leaf(q), kv = t.leaf(k), vv = t.leaf(v);
    {
      flops::Scope s;
      attn_galerkin(qv, kv, vv, false);
      CHECK(s.macs() == dot_product_macs(AttnVariant::galerkin, n, d));
      CHECK(s.macs() == static_cast<std::uint64_t>(2 * n * d * d));
    }
    {
      flops::Scope s;
      attn_fourier(qv, kv, vv, false);
      CHECK(s.macs() == dot_product_macs(AttnVariant::fourier, n, d));
      CHECK(s.macs() == static_cast<std::uint64_t>(2) * n * n * d);
    }
  }
  CHECK(dot_product_macs(AttnVariant::galerkin, 64, 8) == 8192);
}

TEST_CASE("galerkin path peak buffer grows linearly, no n x n allocation") {
  AttentionConfig cfg = small_cfg(AttnVariant::galerkin, LnScheme::pre_dot, 16);
  Rng rng(31);
  ParamStore store;
  EncoderLayer layer = EncoderLayer::create(store, cfg, rng, "l");

  auto peak_for = [&](std::int64_t n) {
    Tensor feats = rng.normal_tensor({n, 16});
    Tensor coords = coords_1d(n);
    alloc_stats_reset();
    Tape t;
    std::vector<Var> bound = store.bind(t);
    layer.forward(t, bound, t.leaf(feats), coords);
    return std::pair<std::uint64_t, std::uint64_t>(alloc_stats().peak_bytes,
                                                   alloc_stats().max_single_bytes);
  };
  auto [p1, s1] = peak_for(512);
  auto [p2, s2] = peak_for(1024);
  CHECK(static_cast<double>(p2) < 2.5 * static_cast<double>(p1));
  CHECK(s2 < 1024ull * 1024ull * 8ull);  // never an n x n buffer
}

TEST_CASE("encoder layer: zero projections and FFN give a pure residual") {
  AttentionConfig cfg = small_cfg(AttnVariant::galerkin, LnScheme::pre_dot, 8);
  Rng rng(37);
  ParamStore store;
  EncoderLayer layer = EncoderLayer::create(store, cfg, rng, "l");
  for (std::int64_t i = 0; i < store.size(); ++i) {
    const std::string& name = store.name(i);
    if (name.find(".ln") == std::string::npos)
      store.value(i) = Tensor::zeros(store.value(i).shape());
  }
  Tensor feats = rng.normal_tensor({12, 8});
  Tensor coords = coords_1d(12);
  Tape t;
  std::vector<Var> bound = store.bind(t);
  Var out = layer.forward(t, bound, t.leaf(feats), coords);
  for (std::int64_t i = 0; i < feats.numel(); ++i) CHECK(t.value(out)[i] == feats[i]);
}

TEST_CASE("encoder layer determinism with identity-like init") {
  AttentionConfig cfg = small_cfg(AttnVariant::galerkin, LnScheme::pre_dot, 8);
  cfg.init_eta = 0.0;
  cfg.init_delta = 1.0;
  Rng rng(41);
  ParamStore store;
  EncoderLayer layer = EncoderLayer::create(store, cfg, rng, "l");
  Tensor feats = rng.normal_tensor({10, 8});
  Tensor coords = coords_1d(10);
  auto run = [&]() {
    Tape t;
    std::vector<Var> bound = store.bind(t);
    return t.value(layer.forward(t, bound, t.leaf(feats), coords));
  };
  Tensor a = run(), b = run();
  for (std::int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("coords pass through unchanged (attention acts on features only)") {
  AttentionConfig cfg = small_cfg(AttnVariant::fourier, LnScheme::regular, 8, 2);
  Rng rng(43);
  ParamStore store;
  EncoderLayer layer = EncoderLayer::create(store, cfg, rng, "l");
  Tensor coords = coords_1d(10);
  Tensor before = coords;
  Tape t;
  std::vector<Var> bound = store.bind(t);
  layer.forward(t, bound, t.leaf(rng.normal_tensor({10, 8})), coords);
  for (std::int64_t i = 0; i < coords.numel(); ++i) CHECK(coords[i] == before[i]);
}

TEST_CASE("4-layer encoder stack end-to-end gradient check") {
  AttentionConfig cfg = small_cfg(AttnVariant::galerkin, LnScheme::pre_dot, 32);
  Rng rng(47);
  ParamStore store;
  std::vector<EncoderLayer> layers;
  for (int l = 0; l < 4; ++l)
    layers.push_back(EncoderLayer::create(store, cfg, rng, "l" + std::to_string(l)));
  Tensor feats = rng.uniform_tensor({64, 32}, -1, 1);
  Tensor coords = coords_1d(64);
  Tensor rd = rng.normal_tensor({64, 32});
  auto f = [&](Tape& t, const std::vector<Var>& vs) {
    Var x = vs[0];
    std::vector<Var> bound = store.bind(t);
    for (const EncoderLayer& layer : layers) x = layer.forward(t, bound, x, coords);
    return dot_with(x, rd);
  };
  CHECK(grad_check_multi(f, {feats}, 1e-5, 192) < 1e-5);
}

TEST_CASE("every variant and scheme runs and differentiates at toy size") {
  Rng rng(53);
  Tensor coords = coords_1d(12);
  for (AttnVariant v : {AttnVariant::fourier, AttnVariant::galerkin, AttnVariant::softmax,
                        AttnVariant::linear_softmax}) {
    for (LnScheme s : {LnScheme::pre_dot, LnScheme::regular}) {
      AttentionConfig cfg = small_cfg(v, s, 8, 2);
      ParamStore store;
      EncoderLayer layer = EncoderLayer::create(store, cfg, rng, "l");
      Tensor feats = rng.uniform_tensor({12, 8}, -1, 1);
      Tensor rd = rng.normal_tensor({12, 8});
      auto f = [&](Tape& t, const std::vector<Var>& vs) {
        std::vector<Var> bound = store.bind(t);
        return dot_with(layer.forward(t, bound, vs[0], coords), rd);
      };
      CHECK(grad_check_multi(f, {feats}, 1e-5, 96) < 1e-5);
    }
  }
}

TEST_CASE("head-dim indivisibility raises a config error") {
  AttentionConfig cfg = small_cfg(AttnVariant::galerkin, LnScheme::pre_dot, 9, 2);
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
