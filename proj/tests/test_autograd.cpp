#include <doctest.h>

#include <cmath>

#include "gkt/autograd.hpp"
#include "gkt/fft.hpp"
#include "gkt/rng.hpp"

using namespace gkt;

TEST_CASE("bilinear_resize identity, constants, linear ramps") {
  Rng rng(61);
  Tensor x = rng.normal_tensor({2, 5, 7});
  Tape t;
  const Tensor& same = t.value(bilinear_resize(t.leaf(x), 5, 7));
  for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(same[i] == doctest::Approx(x[i]));

  Tensor c = Tensor::full({1, 4, 4}, 3.25);
  const Tensor& cr = t.value(bilinear_resize(t.leaf(c), 9, 6));
  for (std::int64_t i = 0; i < cr.numel(); ++i) CHECK(cr[i] == doctest::Approx(3.25));

  // linear ramp 8 -> 5 reproduces the ramp exactly
  Tensor ramp({1, 8, 8});
  for (std::int64_t i = 0; i < 8; ++i)
    for (std::int64_t j = 0; j < 8; ++j)
      ramp.at(0, i, j) = static_cast<double>(i) / 7.0 + 2.0 * static_cast<double>(j) / 7.0;
  const Tensor& rr = t.value(bilinear_resize(t.leaf(ramp), 5, 5));
  for (std::int64_t i = 0; i < 5; ++i)
    for (std::int64_t j = 0; j < 5; ++j)
      CHECK(rr.at(0, i, j) ==
            doctest::Approx(static_cast<double>(i) / 4.0 + 2.0 * static_cast<double>(j) / 4.0)
                .epsilon(1e-12));

  CHECK_THROWS_AS(bilinear_resize(t.leaf(Tensor::zeros({1, 1, 4})), 3, 3), DimensionError);
}

TEST_CASE("bilinear_resize gradient") {
  Rng rng(67);
  Tensor x = rng.uniform_tensor({1, 5, 4}, -1, 1);
  Tensor w = rng.normal_tensor({1, 8, 9});
  auto f = [&](Tape& t, const std::vector<Var>& vs) {
    return dot_with(bilinear_resize(vs[0], 8, 9), w);
  };
  CHECK(grad_check_multi(f, {x}, 1e-5) < 1e-7);
}

TEST_CASE("spectral_conv1d keeps retained mode span and differentiates") {
  const std::int64_t n = 32, modes = 4;
  Rng rng(71);

  // single retained mode input stays within that mode's span
  Tensor x({n, 1});
  for (std::int64_t i = 0; i < n; ++i)
    x.at(i, 0) = std::cos(2.0 * 3.14159265358979323846 * 2.0 * i / n);
  Tensor w = rng.uniform_tensor({modes, 1, 1, 2}, -1, 1);
  Tape t;
  const Tensor& y = t.value(spectral_conv1d(t.leaf(x), t.leaf(w)));
  std::vector<cdouble> yc(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) yc[static_cast<std::size_t>(i)] = cdouble(y.at(i, 0), 0.0);
  fft_inplace(yc, false);
  for (std::int64_t k = 0; k <= n / 2; ++k) {
    if (k == 2) continue;
    CHECK(std::abs(yc[static_cast<std::size_t>(k)]) < 1e-10);
  }

  Tensor x2 = rng.uniform_tensor({n, 3}, -1, 1);
  Tensor w2 = rng.uniform_tensor({modes, 3, 2, 2}, -1, 1);
  Tensor rd = rng.normal_tensor({n, 2});
  auto f = [&](Tape& tp, const std::vector<Var>& vs) {
    return dot_with(spectral_conv1d(vs[0], vs[1]), rd);
  };
  CHECK(grad_check_multi(f, {x2, w2}, 1e-5) < 1e-5);
}

TEST_CASE("spectral_conv2d diagonality and gradient") {
  const std::int64_t n = 8, modes = 3;
  Rng rng(73);
  Tensor x = rng.uniform_tensor({2, n, n}, -1, 1);
  Tensor w = rng.uniform_tensor({modes, modes, 2, 2, 2}, -1, 1);
  Tensor rd = rng.normal_tensor({2, n, n});
  auto f = [&](Tape& tp, const std::vector<Var>& vs) {
    return dot_with(spectral_conv2d(vs[0], vs[1]), rd);
  };
  CHECK(grad_check_multi(f, {x, w}, 1e-5) < 1e-5);

  // constant input (only the (0,0) mode) produces a constant output
  Tensor cx = Tensor::full({1, n, n}, 1.0);
  Tensor cw = rng.uniform_tensor({modes, modes, 1, 1, 2}, -1, 1);
  Tape t;
  const Tensor& cy = t.value(spectral_conv2d(t.leaf(cx), t.leaf(cw)));
  for (std::int64_t i = 1; i < n * n; ++i) CHECK(cy[i] == doctest::Approx(cy[0]).epsilon(1e-10));
}

TEST_CASE("softmax_cols normalizes columns") {
  Rng rng(79);
  Tape t;
  const Tensor& s = t.value(softmax_cols(t.leaf(rng.uniform_tensor({9, 4}, -2, 2))));
  for (std::int64_t j = 0; j < 4; ++j) {
    double sum = 0;
    for (std::int64_t i = 0; i < 9; ++i) sum += s.at(i, j);
    CHECK(std::fabs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("slice/concat round trip with gradients") {
  Rng rng(83);
  Tensor x = rng.uniform_tensor({6, 7}, -1, 1);
  Tensor w = rng.normal_tensor({6, 7});
  auto f = [&](Tape& t, const std::vector<Var>& vs) {
    Var a = slice_cols(vs[0], 0, 3);
    Var b = slice_cols(vs[0], 3, 7);
    return dot_with(concat_cols(a, b), w);
  };
  CHECK(grad_check_multi(f, {x}, 1e-5) < 1e-7);
}

TEST_CASE("pad/crop/mask gradients") {
  Rng rng(89);
  Tensor x = rng.uniform_tensor({2, 3, 5}, -1, 1);
  Tensor w = rng.normal_tensor({2, 4, 8});
  auto f = [&](Tape& t, const std::vector<Var>& vs) {
    return dot_with(pad2d(vs[0], 4, 8), w);
  };
  CHECK(grad_check_multi(f, {x}, 1e-5) < 1e-7);

  Tensor y = rng.uniform_tensor({5, 6}, -1, 1);
  Tensor wy = rng.normal_tensor({5, 6});
  auto g = [&](Tape& t, const std::vector<Var>& vs) {
    return dot_with(mask_boundary2d(vs[0]), wy);
  };
  CHECK(grad_check_multi(g, {y}, 1e-5) < 1e-7);
}

TEST_CASE("central differences: periodic 1d and zero-extended 2d") {
  const std::int64_t n = 64;
  const double h = 1.0 / n;
  Tensor x({n});
  for (std::int64_t i = 0; i < n; ++i)
    x[i] = std::sin(2.0 * 3.14159265358979323846 * i * h);
  Tape t;
  const Tensor& d = t.value(diff_central_periodic(t.leaf(x), h));
  // discrete derivative of sin(2 pi x) is cos(2 pi x) * sin(2 pi h)/h / (2 pi h) ... check midpoint value
  const double factor = std::sin(2.0 * 3.14159265358979323846 * h) / h / (2.0 * 3.14159265358979323846);
  CHECK(d[0] == doctest::Approx(2.0 * 3.14159265358979323846 * factor).epsilon(1e-9));

  Rng rng(97);
  Tensor x2 = rng.uniform_tensor({6, 6}, -1, 1);
  Tensor w2 = rng.normal_tensor({6, 6});
  auto f = [&](Tape& tp, const std::vector<Var>& vs) {
    return dot_with(add(dx_central2d(vs[0], 0.2), dy_central2d(vs[0], 0.2)), w2);
  };
  CHECK(grad_check_multi(f, {x2}, 1e-5) < 1e-8);

  Tensor x1 = rng.uniform_tensor({16}, -1, 1);
  Tensor w1 = rng.normal_tensor({16});
  auto g = [&](Tape& tp, const std::vector<Var>& vs) {
    return dot_with(diff_central_periodic(vs[0], 0.0625), w1);
  };
  CHECK(grad_check_multi(g, {x1}, 1e-5) < 1e-8);
}

TEST_CASE("dropout scales kept entries and is off in eval") {
  Rng rng(101);
  Tensor x = Tensor::full({64, 4}, 1.0);
  Tape t;
  Var v = t.leaf(x);
  Rng drng(5);
  const Tensor& kept = t.value(dropout(v, 0.5, drng, true));
  for (std::int64_t i = 0; i < kept.numel(); ++i)
    CHECK((kept[i] == doctest::Approx(0.0) || kept[i] == doctest::Approx(2.0)));
  Rng drng2(5);
  Var same = dropout(v, 0.5, drng2, false);
  CHECK(same.id == v.id);  // pass-through in eval mode
  CHECK_THROWS_AS(dropout(v, 1.0, drng2, true), ConfigError);
}

TEST_CASE("relu and silu gradients away from the kink") {
  Rng rng(103);
  Tensor x({4, 4});
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const double mag = 0.3 + 0.7 * rng.uniform();
    x[i] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * mag;
  }
  Tensor w = rng.normal_tensor({4, 4});
  auto f = [&](Tape& t, const std::vector<Var>& vs) { return dot_with(relu(vs[0]), w); };
  CHECK(grad_check_multi(f, {x}, 1e-5) < 1e-8);
  auto g = [&](Tape& t, const std::vector<Var>& vs) { return dot_with(silu(vs[0]), w); };
  CHECK(grad_check_multi(g, {x}, 1e-5) < 1e-8);
}
