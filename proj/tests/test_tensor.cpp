#include <doctest.h>

#include <cmath>

#include "gkt/autograd.hpp"
#include "gkt/fft.hpp"
#include "gkt/linalg.hpp"
#include "gkt/rng.hpp"
#include "gkt/tensor.hpp"

using namespace gkt;

namespace {

Tensor random_spd(std::int64_t d, Rng& rng) {
  Tensor a = rng.normal_tensor({d, d});
  Tensor m = matmul_plain(transpose_plain(a), a);
  for (std::int64_t i = 0; i < d; ++i) m.at(i, i) += 1.0;
  return m;
}

}  // namespace

TEST_CASE("matmul identity and hand-forced arithmetic") {
  Tape t;
  Var i2 = t.leaf(Tensor::identity(2));
  Var a = t.leaf(Tensor::row_matrix({{1, 2}, {3, 4}}));
  Var c = matmul(i2, a);
  CHECK(t.value(c).at(0, 0) == doctest::Approx(1));
  CHECK(t.value(c).at(1, 1) == doctest::Approx(4));

  Var b = t.leaf(Tensor::row_matrix({{5}, {6}}));
  Var d = matmul(a, b);
  CHECK(t.value(d).at(0, 0) == doctest::Approx(17));
  CHECK(t.value(d).at(1, 0) == doctest::Approx(39));

  CHECK_THROWS_AS(matmul(b, b), DimensionError);
}

TEST_CASE("matmul gradient vs central finite differences") {
  Rng rng(7);
  Tensor a = rng.uniform_tensor({8, 8}, -1, 1);
  Tensor b = rng.uniform_tensor({8, 8}, -1, 1);
  Tensor w = rng.normal_tensor({8, 8});
  auto f = [&](Tape& t, const std::vector<Var>& vs) {
    return dot_with(matmul(vs[0], vs[1]), w);
  };
  CHECK(grad_check_multi(f, {a, b}, 1e-5) < 1e-6);
}

TEST_CASE("layer_norm examples") {
  Tape t;
  Var x = t.leaf(Tensor::row_matrix({{1, 3}}));
  Var g = t.leaf(Tensor::full({2}, 1.0));
  Var b = t.leaf(Tensor::zeros({2}));
  Var y = layer_norm(x, g, b, 0.0);
  CHECK(t.value(y).at(0, 0) == doctest::Approx(-1.0));
  CHECK(t.value(y).at(0, 1) == doctest::Approx(1.0));

  // gain 0 annihilates everything but the bias
  Rng rng(3);
  Var x2 = t.leaf(rng.normal_tensor({4, 5}));
  Var g0 = t.leaf(Tensor::zeros({5}));
  Var b2 = t.leaf(Tensor::full({5}, 0.25));
  Var y2 = layer_norm(x2, g0, b2, 1e-5);
  for (std::int64_t i = 0; i < 4; ++i)
    for (std::int64_t j = 0; j < 5; ++j) CHECK(t.value(y2).at(i, j) == doctest::Approx(0.25));
}

TEST_CASE("layer_norm width-1 degenerate row returns bias") {
  Tape t;
  Var x = t.leaf(Tensor::row_matrix({{3.0}, {7.0}}));
  Var g = t.leaf(Tensor::full({1}, 2.0));
  Var b = t.leaf(Tensor::full({1}, 0.5));
  Var y = layer_norm(x, g, b, 0.0);
  CHECK(t.value(y).at(0, 0) == doctest::Approx(0.5));
  CHECK(t.value(y).at(1, 0) == doctest::Approx(0.5));
}

TEST_CASE("layer_norm gradient vs finite differences") {
  Rng rng(11);
  Tensor x = rng.uniform_tensor({16, 8}, -1, 1);
  Tensor g = rng.uniform_tensor({8}, 0.5, 1.5);
  Tensor b = rng.uniform_tensor({8}, -0.5, 0.5);
  Tensor w = rng.normal_tensor({16, 8});
  auto f = [&](Tape& t, const std::vector<Var>& vs) {
    return dot_with(layer_norm(vs[0], vs[1], vs[2], 1e-5), w);
  };
  CHECK(grad_check_multi(f, {x, g, b}, 1e-5) < 1e-6);
}

TEST_CASE("softmax_rows symmetry, overflow safety, row sums") {
  Tape t;
  Var a = t.leaf(Tensor::row_matrix({{0, 0}}));
  CHECK(t.value(softmax_rows(a)).at(0, 0) == doctest::Approx(0.5));

  Var big = t.leaf(Tensor::row_matrix({{1000, 0}}));
  const Tensor& sb = t.value(softmax_rows(big));
  CHECK(sb.at(0, 0) == doctest::Approx(1.0));
  CHECK(sb.at(0, 1) < 1e-300);

  Rng rng(5);
  Var r = t.leaf(rng.uniform_tensor({8, 8}, -3, 3));
  const Tensor& s = t.value(softmax_rows(r));
  for (std::int64_t i = 0; i < 8; ++i) {
    double sum = 0;
    for (std::int64_t j = 0; j < 8; ++j) sum += s.at(i, j);
    CHECK(std::fabs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("fft constant vector carries DC only") {
  const std::int64_t n = 8;
  Tape t;
  Var x = t.leaf(Tensor::full({n}, 2.5));
  const Tensor& X = t.value(fft_1d(x, false));
  CHECK(X.at(0, 0) == doctest::Approx(n * 2.5));
  for (std::int64_t k = 1; k < n; ++k) {
    CHECK(std::fabs(X.at(k, 0)) < 1e-12);
    CHECK(std::fabs(X.at(k, 1)) < 1e-12);
  }
}

TEST_CASE("fft round trip and Parseval") {
  Rng rng(17);
  for (std::int64_t n : {8, 64, 512}) {
    Tensor x = rng.normal_tensor({n});
    Tape t;
    Var xv = t.leaf(x);
    Var X = fft_1d(xv, false);
    Var back = fft_1d(X, true);
    const Tensor& b = t.value(back);
    double num = 0, den = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      num += (b.at(i, 0) - x[i]) * (b.at(i, 0) - x[i]) + b.at(i, 1) * b.at(i, 1);
      den += x[i] * x[i];
    }
    CHECK(std::sqrt(num / den) < 1e-12);

    double sum_x = 0, sum_X = 0;
    const Tensor& Xv = t.value(X);
    for (std::int64_t i = 0; i < n; ++i) {
      sum_x += x[i] * x[i];
      sum_X += Xv.at(i, 0) * Xv.at(i, 0) + Xv.at(i, 1) * Xv.at(i, 1);
    }
    CHECK(std::fabs(sum_x - sum_X / static_cast<double>(n)) < 1e-10 * sum_x);
  }
  CHECK_THROWS_AS((void)fft({cdouble(0, 0), cdouble(0, 0), cdouble(0, 0)}), DimensionError);
}

TEST_CASE("fft backward is the adjoint") {
  Rng rng(23);
  Tensor x = rng.normal_tensor({16});
  Tensor w = rng.normal_tensor({16, 2});
  auto f = [&](Tape& t, const std::vector<Var>& vs) {
    return dot_with(fft_1d(vs[0], false), w);
  };
  CHECK(grad_check_multi(f, {x}, 1e-6) < 1e-7);
  auto fi = [&](Tape& t, const std::vector<Var>& vs) {
    return dot_with(fft_1d(vs[0], true), w);
  };
  CHECK(grad_check_multi(fi, {x}, 1e-6) < 1e-7);
}

TEST_CASE("conv2d delta kernel and hand-counted padding") {
  Tape t;
  Rng rng(29);
  Tensor x = rng.normal_tensor({1, 4, 4});
  Tensor delta = Tensor::zeros({1, 1, 3, 3});
  delta.data()[4] = 1.0;  // center tap
  Var y = conv2d(t.leaf(x), t.leaf(delta));
  for (std::int64_t i = 0; i < 16; ++i) CHECK(t.value(y).data()[i] == doctest::Approx(x.data()[i]));

  // all-ones 1x2x2 input, all-ones kernel: every output is a 2x2 box sum
  Tensor ones = Tensor::full({1, 2, 2}, 1.0);
  Tensor kones = Tensor::full({1, 1, 3, 3}, 1.0);
  Var y2 = conv2d(t.leaf(ones), t.leaf(kones));
  for (std::int64_t i = 0; i < 4; ++i) CHECK(t.value(y2).data()[i] == doctest::Approx(4.0));

  CHECK_THROWS_AS(conv2d(t.leaf(Tensor::zeros({2, 4, 4})), t.leaf(Tensor::zeros({1, 3, 3, 3}))),
                  DimensionError);
}

TEST_CASE("conv2d gradient vs finite differences") {
  Rng rng(31);
  Tensor x = rng.uniform_tensor({2, 4, 4}, -1, 1);
  Tensor k = rng.uniform_tensor({2, 2, 3, 3}, -1, 1);
  Tensor w = rng.normal_tensor({2, 4, 4});
  auto f = [&](Tape& t, const std::vector<Var>& vs) {
    return dot_with(conv2d(vs[0], vs[1]), w);
  };
  CHECK(grad_check_multi(f, {x, k}, 1e-5) < 1e-6);
}

TEST_CASE("solve_spd identity, diagonal, random residual") {
  Tensor rhs = Tensor::row_matrix({{2}, {4}});
  CHECK(solve_spd(Tensor::identity(2), rhs).at(1, 0) == doctest::Approx(4));

  Tensor d = Tensor::row_matrix({{2, 0}, {0, 4}});
  Tensor x = solve_spd(d, rhs);
  CHECK(x.at(0, 0) == doctest::Approx(1));
  CHECK(x.at(1, 0) == doctest::Approx(1));

  Rng rng(37);
  for (std::int64_t dsz : {8, 64}) {
    Tensor m = random_spd(dsz, rng);
    Tensor b = rng.normal_tensor({dsz, 3});
    Tensor sol = solve_spd(m, b);
    Tensor back = matmul_plain(m, sol);
    double num = 0, den = 0;
    for (std::int64_t i = 0; i < b.numel(); ++i) {
      num += (back[i] - b[i]) * (back[i] - b[i]);
      den += b[i] * b[i];
    }
    CHECK(std::sqrt(num / den) < 1e-10);
  }

  Tensor notspd = Tensor::row_matrix({{1, 0}, {0, -1}});
  CHECK_THROWS_AS(solve_spd(notspd, rhs), NotSpdError);
}

TEST_CASE("svd_small identity rows, diagonal, reconstruction") {
  Tensor eye24({2, 4});
  eye24.at(0, 0) = 1;
  eye24.at(1, 1) = 1;
  SvdResult s1 = svd_small(eye24);
  CHECK(s1.sigma[0] == doctest::Approx(1));
  CHECK(s1.sigma[1] == doctest::Approx(1));

  Tensor diag({2, 4});
  diag.at(0, 0) = 3;
  diag.at(1, 1) = 2;
  SvdResult s2 = svd_small(diag);
  CHECK(s2.sigma[0] == doctest::Approx(3));
  CHECK(s2.sigma[1] == doctest::Approx(2));

  Rng rng(41);
  Tensor b = rng.normal_tensor({4, 8});
  SvdResult s3 = svd_small(b);
  Tensor rec({4, 8});
  for (std::int64_t i = 0; i < 4; ++i)
    for (std::int64_t j = 0; j < 8; ++j) {
      double v = 0;
      for (std::int64_t k = 0; k < 4; ++k)
        v += s3.u.at(i, k) * s3.sigma[static_cast<std::size_t>(k)] * s3.vt.at(k, j);
      rec.at(i, j) = v;
    }
  double num = 0, den = 0;
  for (std::int64_t i = 0; i < b.numel(); ++i) {
    num += (rec[i] - b[i]) * (rec[i] - b[i]);
    den += b[i] * b[i];
  }
  CHECK(std::sqrt(num / den) < 1e-9);
  CHECK(s3.sigma[0] >= s3.sigma[3]);
}

TEST_CASE("grad_check quadratic oracle") {
  Rng rng(43);
  Tensor x = rng.normal_tensor({6});
  auto f = [](Tape& t, Var v) { return sum(mul(v, v)); };
  CHECK(grad_check(f, x, 1e-5) < 1e-8);
}

TEST_CASE("grad_check layer_norm-then-sum oracle") {
  Rng rng(47);
  Tensor x = rng.uniform_tensor({6, 5}, -1, 1);
  Tensor w = rng.normal_tensor({6, 5});
  auto f = [&](Tape& t, Var v) { return dot_with(layer_norm_plain(v, 1e-5), w); };
  CHECK(grad_check(f, x, 1e-5) < 1e-6);
}

TEST_CASE("tape determinism through a composed graph") {
  Rng rng(53);
  Tensor x = rng.normal_tensor({8, 8});
  Tensor w = rng.normal_tensor({8, 8});
  auto run = [&]() {
    Tape t;
    Var v = t.leaf(x);
    Var wv = t.leaf(w);
    Var h = v;
    for (int i = 0; i < 4; ++i) h = silu(matmul(h, wv));
    Var loss = sum(mul(h, h));
    t.backward(loss);
    return std::pair<Tensor, Tensor>(t.grad(v), t.grad(wv));
  };
  auto [g1, gw1] = run();
  auto [g2, gw2] = run();
  for (std::int64_t i = 0; i < g1.numel(); ++i) CHECK(g1[i] == g2[i]);
  for (std::int64_t i = 0; i < gw1.numel(); ++i) CHECK(gw1[i] == gw2[i]);
}

TEST_CASE("property: backward matches finite differences over random small shapes") {
  Rng rng(59);
  for (int trial = 0; trial < 6; ++trial) {
    const std::int64_t n = 2 + rng.index(14);
    const std::int64_t d = 2 + rng.index(14);
    Tensor x = rng.uniform_tensor({n, d}, -1, 1);
    Tensor y = rng.uniform_tensor({n, d}, -1, 1);
    Tensor w = rng.normal_tensor({n, d});
    auto f = [&](Tape& t, const std::vector<Var>& vs) {
      Var h = add(mul(vs[0], vs[1]), silu(vs[0]));
      return dot_with(h, w);
    };
    CHECK(grad_check_multi(f, {x, y}, 1e-5) < 1e-5);
  }
}

TEST_CASE("non-finite op output raises") {
  Tape t;
  Tensor big = Tensor::full({2, 2}, 1e308);
  Var v = t.leaf(big);
  CHECK_THROWS_AS(mul(v, v), NumericalError);
}

TEST_CASE("allocation tracking observes tensor buffers") {
  alloc_stats_reset();
  {
    Tensor t({64, 64});
    CHECK(alloc_stats().current_bytes >= 64 * 64 * 8);
  }
  CHECK(alloc_stats().current_bytes == 0);
  CHECK(alloc_stats().peak_bytes >= 64 * 64 * 8);
}
