#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ffc {

/// Dense row-major tensor of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return values_.size(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::vector<double>& storage() noexcept { return values_; }
  const std::vector<double>& storage() const noexcept { return values_; }

  /// Row-major view of the `index`-th slice along the leading axis.
  std::span<const double> slice(std::size_t index) const;
  std::span<double> slice(std::size_t index);
  /// Copy of one leading-axis slice as a tensor of rank - 1.
  Tensor at(std::size_t index) const;

  bool all_finite() const noexcept;
  /// Throws NumericalError naming `what` if any value is NaN or infinite.
  void require_finite(const std::string& what) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

std::size_t shape_product(std::span<const std::size_t> shape);
std::string shape_string(std::span<const std::size_t> shape);

/// Stacks same-shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> items);

}  // namespace ffc
