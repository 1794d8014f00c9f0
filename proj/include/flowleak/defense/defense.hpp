#pragma once

#include <cstdint>
#include <string>

#include "flowleak/ad/tensor.hpp"
#include "flowleak/fl/fedavg.hpp"

namespace flowleak::defense {

enum class DefenseKind { none, gaussian_noise, clipping, sparsification };

std::string defense_kind_name(DefenseKind kind);
DefenseKind defense_kind_from_name(const std::string& name);  // unknown -> ParseError

// One client-side transformation of the transmitted weight update.
// `parameter` is the noise standard deviation, the clip bound, or the
// sparsity fraction depending on kind; `seed` feeds the noise draw only.
struct DefenseSpec {
  DefenseKind kind = DefenseKind::none;
  double parameter = 0.0;
  std::uint64_t seed = 0;
  // Sparsification normally zeroes the smallest `parameter` fraction of
  // entries. keep_mode flips that: keep only the largest fraction.
  bool keep_mode = false;

  void validate() const;
  // True when the transform provably returns its input unchanged, which
  // lets callers skip the re-embedding step and keep undefended runs
  // bit-identical to runs with the defense disabled.
  bool is_identity() const;
};

// Transforms one flat update vector. Pure given the spec (the noise
// draw is seeded by spec.seed alone).
ad::Tensor apply_defense(const ad::Tensor& delta, const DefenseSpec& spec);

// Adapts a spec into a per-transmission aggregation hook: noise seeds
// are re-mixed per (round, client) so every transmission draws a fresh
// vector while staying reproducible. Identity specs return an empty
// hook so the caller's exact no-transform path is used.
fl::UpdateTransform defense_transform(const DefenseSpec& spec);

}  // namespace flowleak::defense
