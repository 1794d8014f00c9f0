#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "flowleak/ad/tensor.hpp"

namespace flowleak::ad {

// Ordered collection of named tensors. Entry order is the canonical
// flattening order; names are unique.
class ParamSet {
 public:
  ParamSet() = default;

  void add(std::string name, Tensor t);            // duplicate name -> ValueError
  bool has(const std::string& name) const;
  const Tensor& get(const std::string& name) const;  // missing -> ValueError
  Tensor& get_mut(const std::string& name);

  std::size_t size() const { return entries_.size(); }
  const std::pair<std::string, Tensor>& entry(std::size_t i) const { return entries_[i]; }
  std::pair<std::string, Tensor>& entry(std::size_t i) { return entries_[i]; }
  std::size_t total_params() const;

  // Concatenation of every entry, row-major, in entry order. Differentiable
  // when entries are on a graph.
  Tensor flatten() const;
  // Rebuilds a set with this set's names and shapes from a flat vector;
  // differentiable when flat is on a graph. ShapeError on length mismatch.
  ParamSet unflatten(const Tensor& flat) const;

  bool same_structure(const ParamSet& o) const;
  ParamSet clone() const;  // deep-copies data, drops nodes

  std::vector<Tensor> tensors() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Re-registers every entry as a graph leaf (fresh watch of each tensor).
ParamSet watch_all(const ParamSet& ps);

}  // namespace flowleak::ad
