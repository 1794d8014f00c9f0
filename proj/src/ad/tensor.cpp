#include "flowleak/ad/tensor.hpp"

#include <cmath>
#include <utility>

#include "flowleak/common/error.hpp"
#include "flowleak/common/format.hpp"

namespace flowleak::ad {

std::size_t checked_numel(const std::vector<int>& shape) {
  if (shape.empty()) throw ShapeError("tensor: empty shape");
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 1) throw ShapeError("tensor: bad dimension in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor Tensor::zeros(const std::vector<int>& shape) { return full(shape, 0.0); }

Tensor Tensor::ones(const std::vector<int>& shape) { return full(shape, 1.0); }

Tensor Tensor::full(const std::vector<int>& shape, double value) {
  std::size_t n = checked_numel(shape);
  Tensor t;
  t.shape_ = shape;
  t.data_ = std::make_shared<std::vector<double>>(n, value);
  return t;
}

Tensor Tensor::scalar(double value) { return full({1}, value); }

Tensor Tensor::eye(int n) {
  Tensor t = zeros({n, n});
  auto d = t.mutable_data();
  for (int i = 0; i < n; ++i) d[static_cast<std::size_t>(i) * n + i] = 1.0;
  return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data) {
  std::size_t n = checked_numel(shape);
  if (n != data.size())
    throw ShapeError("tensor: shape " + shape_str(shape) + " wants " + std::to_string(n) +
                     " elements, got " + std::to_string(data.size()));
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<std::vector<double>>(std::move(data));
  return t;
}

Tensor Tensor::uniform(const std::vector<int>& shape, double lo, double hi, Rng& rng) {
  Tensor t = zeros(shape);
  for (double& v : *t.data_) v = rng.uniform(lo, hi);
  return t;
}

Tensor Tensor::normal(const std::vector<int>& shape, double mean, double std, Rng& rng) {
  Tensor t = zeros(shape);
  for (double& v : *t.data_) v = rng.normal(mean, std);
  return t;
}

double Tensor::item() const {
  if (!data_ || data_->size() != 1)
    throw ShapeError("item: tensor has shape " + shape_str(shape_) + ", expected one element");
  return (*data_)[0];
}

Tensor Tensor::clone() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = std::make_shared<std::vector<double>>(*data_);
  return t;
}

Tensor Tensor::detached() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = data_;
  return t;
}

bool Tensor::all_finite() const {
  for (double v : *data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor attach_node(Tensor t, std::shared_ptr<Node> n) {
  t.node_ = std::move(n);
  return t;
}

}  // namespace flowleak::ad
