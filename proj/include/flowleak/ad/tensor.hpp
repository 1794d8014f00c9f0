#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "flowleak/common/rng.hpp"

namespace flowleak::ad {

class Node;

// Validates that every dimension is >= 1 and returns the element count.
std::size_t checked_numel(const std::vector<int>& shape);

// Dense row-major tensor of doubles. Copies share the underlying buffer; ops
// never mutate their inputs, so sharing is safe. mutable_data() is for callers
// that exclusively own the buffer (optimizer state, image builders).
//
// A tensor optionally references the graph node that produced it; tensors
// without a node are constants as far as differentiation is concerned.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const std::vector<int>& shape);
  static Tensor ones(const std::vector<int>& shape);
  static Tensor full(const std::vector<int>& shape, double value);
  static Tensor scalar(double value);  // shape {1}
  static Tensor eye(int n);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data);
  static Tensor uniform(const std::vector<int>& shape, double lo, double hi, Rng& rng);
  static Tensor normal(const std::vector<int>& shape, double mean, double std, Rng& rng);

  bool defined() const { return data_ != nullptr; }
  const std::vector<int>& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t numel() const { return data_ ? data_->size() : 0; }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  // Value of a one-element tensor; ShapeError otherwise.
  double item() const;
  double at(std::size_t i) const { return (*data_)[i]; }

  std::span<const double> data() const { return {data_->data(), data_->size()}; }
  std::span<double> mutable_data() { return {data_->data(), data_->size()}; }

  Tensor clone() const;     // deep copy, no node
  Tensor detached() const;  // shared data, no node
  bool all_finite() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  bool on_graph() const { return node_ != nullptr; }

 private:
  std::vector<int> shape_;
  std::shared_ptr<std::vector<double>> data_;
  std::shared_ptr<Node> node_;

  friend Tensor attach_node(Tensor t, std::shared_ptr<Node> n);
};

// Internal: returns t with its producing node set.
Tensor attach_node(Tensor t, std::shared_ptr<Node> n);

}  // namespace flowleak::ad
