#include "gkt/fft.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace gkt {

bool is_power_of_two(std::int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

struct TwiddleTable {
  // w[s] holds the stage-s roots e^{-2*pi*i*j/(2^(s+1))}, j < 2^s.
  std::vector<std::vector<cdouble>> stages;
};

const TwiddleTable& twiddles_for(std::int64_t n) {
  static std::mutex mu;
  static std::map<std::int64_t, TwiddleTable> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  TwiddleTable table;
  for (std::int64_t len = 2; len <= n; len <<= 1) {
    std::int64_t half = len / 2;
    std::vector<cdouble> row(static_cast<std::size_t>(half));
    for (std::int64_t j = 0; j < half; ++j) {
      double ang = -kTwoPi * static_cast<double>(j) / static_cast<double>(len);
      row[static_cast<std::size_t>(j)] = cdouble(std::cos(ang), std::sin(ang));
    }
    table.stages.push_back(std::move(row));
  }
  return cache.emplace(n, std::move(table)).first->second;
}

}  // namespace

void fft_inplace(std::vector<cdouble>& a, bool inverse) {
  const std::int64_t n = static_cast<std::int64_t>(a.size());
  if (!is_power_of_two(n))
    throw DimensionError("fft length must be a power of two, got " + std::to_string(n));
  if (n == 1) return;

  // bit-reversal permutation
  for (std::int64_t i = 1, j = 0; i < n; ++i) {
    std::int64_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[static_cast<std::size_t>(i)], a[static_cast<std::size_t>(j)]);
  }

  const TwiddleTable& tw = twiddles_for(n);
  std::size_t stage = 0;
  for (std::int64_t len = 2; len <= n; len <<= 1, ++stage) {
    const std::int64_t half = len / 2;
    const std::vector<cdouble>& row = tw.stages[stage];
    for (std::int64_t i = 0; i < n; i += len) {
      cdouble* lo = a.data() + i;
      cdouble* hi = lo + half;
      for (std::int64_t j = 0; j < half; ++j) {
        cdouble w = inverse ? std::conj(row[static_cast<std::size_t>(j)])
                            : row[static_cast<std::size_t>(j)];
        cdouble u = lo[j];
        cdouble v = hi[j] * w;
        lo[j] = u + v;
        hi[j] = u - v;
      }
    }
  }

  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& z : a) z *= inv;
  }
}

std::vector<cdouble> fft(const std::vector<cdouble>& x, bool inverse) {
  std::vector<cdouble> a = x;
  fft_inplace(a, inverse);
  return a;
}

std::vector<cdouble> fft_real(const std::vector<double>& x) {
  std::vector<cdouble> a(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) a[i] = cdouble(x[i], 0.0);
  fft_inplace(a, false);
  return a;
}

std::vector<double> ifft_real(const std::vector<cdouble>& X) {
  std::vector<cdouble> a = X;
  fft_inplace(a, true);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i].real();
  return out;
}

ComplexTensor ComplexTensor::from_vector(const std::vector<cdouble>& v) {
  Tensor t({static_cast<std::int64_t>(v.size()), 2});
  for (std::size_t i = 0; i < v.size(); ++i) {
    t[static_cast<std::int64_t>(2 * i)] = v[i].real();
    t[static_cast<std::int64_t>(2 * i + 1)] = v[i].imag();
  }
  return ComplexTensor{std::move(t)};
}

std::vector<cdouble> ComplexTensor::to_vector() const {
  std::vector<cdouble> v(static_cast<std::size_t>(length()));
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = cdouble(interleaved[static_cast<std::int64_t>(2 * i)],
                   interleaved[static_cast<std::int64_t>(2 * i + 1)]);
  return v;
}

}  // namespace gkt
