#include "gkt/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace gkt {

namespace {
thread_local AllocStats g_alloc_stats;
}

AllocStats& alloc_stats() { return g_alloc_stats; }

void alloc_stats_reset() { g_alloc_stats = AllocStats{}; }

namespace detail {
void track_alloc(std::uint64_t bytes) {
  auto& s = g_alloc_stats;
  s.current_bytes += bytes;
  if (s.current_bytes > s.peak_bytes) s.peak_bytes = s.current_bytes;
  if (bytes > s.max_single_bytes) s.max_single_bytes = bytes;
  ++s.alloc_count;
}
void track_free(std::uint64_t bytes) {
  auto& s = g_alloc_stats;
  s.current_bytes -= (bytes <= s.current_bytes) ? bytes : s.current_bytes;
}
}  // namespace detail

std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (std::int64_t e : shape) {
    if (e <= 0) throw DimensionError("tensor extents must be positive");
    n *= e;
  }
  return n;
}

void Tensor::allocate() {
  numel_ = shape_numel(shape_);
  data_ = new double[static_cast<std::size_t>(numel_)];
  detail::track_alloc(static_cast<std::uint64_t>(numel_) * sizeof(double));
}

void Tensor::release() {
  if (data_ != nullptr) {
    detail::track_free(static_cast<std::uint64_t>(numel_) * sizeof(double));
    delete[] data_;
    data_ = nullptr;
  }
  numel_ = 0;
}

Tensor::Tensor(std::vector<std::int64_t> shape) : shape_(std::move(shape)) {
  allocate();
  std::memset(data_, 0, static_cast<std::size_t>(numel_) * sizeof(double));
}

Tensor::Tensor(std::vector<std::int64_t> shape, double fill) : shape_(std::move(shape)) {
  allocate();
  for (std::int64_t i = 0; i < numel_; ++i) data_[i] = fill;
}

Tensor::Tensor(std::vector<std::int64_t> shape, std::vector<double> values)
    : shape_(std::move(shape)) {
  allocate();
  if (static_cast<std::int64_t>(values.size()) != numel_)
    throw DimensionError("value count does not match shape");
  std::memcpy(data_, values.data(), static_cast<std::size_t>(numel_) * sizeof(double));
}

Tensor::Tensor(const Tensor& other) : shape_(other.shape_) {
  if (other.data_ == nullptr) return;
  allocate();
  std::memcpy(data_, other.data_, static_cast<std::size_t>(numel_) * sizeof(double));
}

Tensor::Tensor(Tensor&& other) noexcept
    : shape_(std::move(other.shape_)), numel_(other.numel_), data_(other.data_) {
  other.data_ = nullptr;
  other.numel_ = 0;
  other.shape_.clear();
}

Tensor& Tensor::operator=(const Tensor& other) {
  if (this == &other) return *this;
  release();
  shape_ = other.shape_;
  if (other.data_ != nullptr) {
    allocate();
    std::memcpy(data_, other.data_, static_cast<std::size_t>(numel_) * sizeof(double));
  }
  return *this;
}

Tensor& Tensor::operator=(Tensor&& other) noexcept {
  if (this == &other) return *this;
  release();
  shape_ = std::move(other.shape_);
  numel_ = other.numel_;
  data_ = other.data_;
  other.data_ = nullptr;
  other.numel_ = 0;
  other.shape_.clear();
  return *this;
}

Tensor::~Tensor() { release(); }

Tensor Tensor::identity(std::int64_t n) {
  Tensor t({n, n});
  for (std::int64_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

Tensor Tensor::row_matrix(std::initializer_list<std::initializer_list<double>> rows) {
  std::int64_t r = static_cast<std::int64_t>(rows.size());
  std::int64_t c = static_cast<std::int64_t>(rows.begin()->size());
  Tensor t({r, c});
  std::int64_t i = 0;
  for (const auto& row : rows) {
    if (static_cast<std::int64_t>(row.size()) != c)
      throw DimensionError("ragged row_matrix initializer");
    std::int64_t j = 0;
    for (double v : row) t.at(i, j++) = v;
    ++i;
  }
  return t;
}

Tensor Tensor::vector(std::vector<double> values) {
  std::int64_t n = static_cast<std::int64_t>(values.size());
  return Tensor({n}, std::move(values));
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << "x";
    os << shape_[i];
  }
  os << "]";
  return os.str();
}

bool Tensor::all_finite() const {
  for (std::int64_t i = 0; i < numel_; ++i)
    if (!std::isfinite(data_[i])) return false;
  return true;
}

void Tensor::check_finite(const char* context) const {
  if (!all_finite()) throw NumericalError(std::string("non-finite value in ") + context);
}

Tensor Tensor::reshaped(std::vector<std::int64_t> shape) const {
  if (shape_numel(shape) != numel_) throw DimensionError("reshape changes element count");
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

}  // namespace gkt
