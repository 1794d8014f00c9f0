#include "flowleak/ad/paramset.hpp"

#include <utility>

#include "flowleak/ad/graph.hpp"
#include "flowleak/ad/ops.hpp"
#include "flowleak/common/error.hpp"

namespace flowleak::ad {

void ParamSet::add(std::string name, Tensor t) {
  if (!t.defined()) throw ValueError("paramset: undefined tensor for '" + name + "'");
  if (index_.count(name)) throw ValueError("paramset: duplicate name '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(t));
}

bool ParamSet::has(const std::string& name) const { return index_.count(name) != 0; }

const Tensor& ParamSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValueError("paramset: no entry named '" + name + "'");
  return entries_[it->second].second;
}

Tensor& ParamSet::get_mut(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValueError("paramset: no entry named '" + name + "'");
  return entries_[it->second].second;
}

std::size_t ParamSet::total_params() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.numel();
  return n;
}

Tensor ParamSet::flatten() const {
  if (entries_.empty()) throw ValueError("paramset: flatten of empty set");
  std::vector<Tensor> parts;
  parts.reserve(entries_.size());
  for (const auto& [_, t] : entries_)
    parts.push_back(reshape(t, {static_cast<int>(t.numel())}));
  return concat(parts);
}

ParamSet ParamSet::unflatten(const Tensor& flat) const {
  if (flat.ndim() != 1 || flat.numel() != total_params())
    throw ShapeError("paramset: unflatten expects a flat vector of length " +
                     std::to_string(total_params()) + ", got " + std::to_string(flat.numel()));
  ParamSet out;
  std::size_t off = 0;
  for (const auto& [name, t] : entries_) {
    Tensor piece = slice1d(flat, off, t.numel());
    out.add(name, reshape(piece, t.shape()));
    off += t.numel();
  }
  return out;
}

bool ParamSet::same_structure(const ParamSet& o) const {
  if (entries_.size() != o.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].first != o.entries_[i].first ||
        entries_[i].second.shape() != o.entries_[i].second.shape())
      return false;
  return true;
}

ParamSet ParamSet::clone() const {
  ParamSet out;
  for (const auto& [name, t] : entries_) out.add(name, t.clone());
  return out;
}

std::vector<Tensor> ParamSet::tensors() const {
  std::vector<Tensor> ts;
  ts.reserve(entries_.size());
  for (const auto& [_, t] : entries_) ts.push_back(t);
  return ts;
}

ParamSet watch_all(const ParamSet& ps) {
  ParamSet out;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& [name, t] = ps.entry(i);
    out.add(name, watch(t));
  }
  return out;
}

}  // namespace flowleak::ad
