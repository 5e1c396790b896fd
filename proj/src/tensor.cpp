#include "ffc/tensor.hpp"

#include <cmath>
#include <sstream>

#include "ffc/error.hpp"

namespace ffc {

std::size_t shape_product(std::span<const std::size_t> shape) {
  std::size_t n = 1;
  for (auto d : shape) {
    if (d == 0) throw UsageError("tensor dimensions must be positive, got " + shape_string(shape));
    n *= d;
  }
  return n;
}

std::string shape_string(std::span<const std::size_t> shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(shape_product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_product(shape_) != values_.size()) {
    throw UsageError("tensor of shape " + shape_string(shape_) + " cannot hold " +
                     std::to_string(values_.size()) + " values");
  }
}

std::span<const double> Tensor::slice(std::size_t index) const {
  if (shape_.empty() || index >= shape_[0]) throw UsageError("tensor slice index out of range");
  const std::size_t stride = values_.size() / shape_[0];
  return std::span<const double>(values_).subspan(index * stride, stride);
}

std::span<double> Tensor::slice(std::size_t index) {
  if (shape_.empty() || index >= shape_[0]) throw UsageError("tensor slice index out of range");
  const std::size_t stride = values_.size() / shape_[0];
  return std::span<double>(values_).subspan(index * stride, stride);
}

Tensor Tensor::at(std::size_t index) const {
  auto s = slice(index);
  return Tensor({shape_.begin() + 1, shape_.end()}, std::vector<double>(s.begin(), s.end()));
}

bool Tensor::all_finite() const noexcept {
  for (double v : values_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::require_finite(const std::string& what) const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw NumericalError(what + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw UsageError("cannot stack an empty list of tensors");
  std::vector<std::size_t> shape{items.size()};
  shape.insert(shape.end(), items[0].shape().begin(), items[0].shape().end());
  std::vector<double> values;
  values.reserve(items.size() * items[0].size());
  for (const auto& t : items) {
    if (t.shape() != items[0].shape()) throw UsageError("cannot stack tensors of different shapes");
    values.insert(values.end(), t.values().begin(), t.values().end());
  }
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace ffc
