#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace gkt {

struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};
struct NotSpdError : NumericalError {
  explicit NotSpdError(const std::string& msg) : NumericalError(msg) {}
};
struct InstabilityError : NumericalError {
  explicit InstabilityError(const std::string& msg) : NumericalError(msg) {}
};

/// Live accounting of tensor buffer bytes on the current thread. Used by the
/// benchmark harness to audit transient allocation growth (e.g. that the
/// Galerkin attention path never requests an n-by-n buffer).
struct AllocStats {
  std::uint64_t current_bytes = 0;
  std::uint64_t peak_bytes = 0;
  std::uint64_t max_single_bytes = 0;
  std::uint64_t alloc_count = 0;
};

AllocStats& alloc_stats();
void alloc_stats_reset();

namespace detail {
void track_alloc(std::uint64_t bytes);
void track_free(std::uint64_t bytes);
}  // namespace detail

/// Dense row-major tensor of 64-bit reals. Immutable by convention once an
/// op has produced it; copies are deep.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> shape);
  Tensor(std::vector<std::int64_t> shape, double fill);
  Tensor(std::vector<std::int64_t> shape, std::vector<double> values);

  Tensor(const Tensor& other);
  Tensor(Tensor&& other) noexcept;
  Tensor& operator=(const Tensor& other);
  Tensor& operator=(Tensor&& other) noexcept;
  ~Tensor();

  static Tensor zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<std::int64_t> shape, double v) { return Tensor(std::move(shape), v); }
  static Tensor identity(std::int64_t n);
  static Tensor row_matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::vector<double> values);

  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t numel() const { return numel_; }
  std::int64_t dim(std::int64_t i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::int64_t rows() const { return dim(0); }
  std::int64_t cols() const { return dim(1); }
  bool empty() const { return numel_ == 0; }

  double* data() { return data_; }
  const double* data() const { return data_; }

  double& operator[](std::int64_t i) { return data_[i]; }
  double operator[](std::int64_t i) const { return data_[i]; }

  double& at(std::int64_t i, std::int64_t j) { return data_[i * shape_[1] + j]; }
  double at(std::int64_t i, std::int64_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::int64_t i, std::int64_t j, std::int64_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const;

  /// Throws NumericalError if any entry is NaN or infinite.
  void check_finite(const char* context) const;
  bool all_finite() const;

  Tensor reshaped(std::vector<std::int64_t> shape) const;

 private:
  void allocate();
  void release();

  std::vector<std::int64_t> shape_;
  std::int64_t numel_ = 0;
  double* data_ = nullptr;
};

std::int64_t shape_numel(const std::vector<std::int64_t>& shape);

}  // namespace gkt
