#include "flowleak/defense/defense.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "flowleak/common/error.hpp"
#include "flowleak/common/format.hpp"
#include "flowleak/common/rng.hpp"

namespace flowleak::defense {

std::string defense_kind_name(DefenseKind kind) {
  switch (kind) {
    case DefenseKind::none: return "none";
    case DefenseKind::gaussian_noise: return "gaussian_noise";
    case DefenseKind::clipping: return "clipping";
    case DefenseKind::sparsification: return "sparsification";
  }
  throw ValueError("defense: unknown kind value");
}

DefenseKind defense_kind_from_name(const std::string& name) {
  if (name == "none") return DefenseKind::none;
  if (name == "gaussian_noise") return DefenseKind::gaussian_noise;
  if (name == "clipping") return DefenseKind::clipping;
  if (name == "sparsification") return DefenseKind::sparsification;
  throw ParseError("defense: unknown kind '" + name + "'");
}

void DefenseSpec::validate() const {
  switch (kind) {
    case DefenseKind::none:
      return;
    case DefenseKind::gaussian_noise:
      if (!(parameter >= 0.0))
        throw ValueError("defense: noise std must be >= 0, got " + fmt_g(parameter));
      return;
    case DefenseKind::clipping:
      if (!(parameter > 0.0))
        throw ValueError("defense: clip bound must be > 0, got " + fmt_g(parameter));
      return;
    case DefenseKind::sparsification:
      if (!(parameter >= 0.0 && parameter <= 1.0))
        throw ValueError("defense: sparsity fraction must be in [0,1], got " + fmt_g(parameter));
      return;
  }
  throw ValueError("defense: unknown kind value");
}

bool DefenseSpec::is_identity() const {
  return kind == DefenseKind::none ||
         (kind == DefenseKind::gaussian_noise && parameter == 0.0);
}

namespace {

std::vector<double> flat_values(const ad::Tensor& delta) {
  if (delta.shape().size() != 1)
    throw ShapeError("defense: expected a flat update vector, got " + shape_str(delta.shape()));
  auto s = delta.data();
  for (double v : s)
    if (!std::isfinite(v)) throw ValueError("defense: update vector has non-finite entries");
  return std::vector<double>(s.begin(), s.end());
}

ad::Tensor from_values(const ad::Tensor& like, std::vector<double> vals) {
  return ad::Tensor::from_data(like.shape(), std::move(vals));
}

ad::Tensor add_noise(const ad::Tensor& delta, double std_dev, std::uint64_t seed) {
  std::vector<double> vals = flat_values(delta);
  Rng rng(seed);
  for (double& v : vals) v += std_dev * rng.normal();
  return from_values(delta, std::move(vals));
}

ad::Tensor clip(const ad::Tensor& delta, double bound) {
  std::vector<double> vals = flat_values(delta);
  for (double& v : vals) v = std::clamp(v, -bound, bound);
  return from_values(delta, std::move(vals));
}

ad::Tensor sparsify(const ad::Tensor& delta, double fraction, bool keep_mode) {
  std::vector<double> vals = flat_values(delta);
  const std::size_t n = vals.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    const double ai = std::fabs(vals[i]);
    const double aj = std::fabs(vals[j]);
    return ai != aj ? ai < aj : i < j;
  });
  std::size_t count = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
  count = std::min(count, n);
  // Drop mode zeroes the `count` smallest; keep mode retains only the
  // `count` largest.
  const std::size_t zeroed = keep_mode ? n - count : count;
  for (std::size_t k = 0; k < zeroed; ++k) vals[order[k]] = 0.0;
  return from_values(delta, std::move(vals));
}

}  // namespace

ad::Tensor apply_defense(const ad::Tensor& delta, const DefenseSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case DefenseKind::none:
      return delta;
    case DefenseKind::gaussian_noise:
      if (spec.parameter == 0.0) return delta;
      return add_noise(delta, spec.parameter, spec.seed);
    case DefenseKind::clipping:
      return clip(delta, spec.parameter);
    case DefenseKind::sparsification:
      return sparsify(delta, spec.parameter, spec.keep_mode);
  }
  throw ValueError("defense: unknown kind value");
}

fl::UpdateTransform defense_transform(const DefenseSpec& spec) {
  spec.validate();
  if (spec.is_identity()) return {};
  return [spec](const ad::Tensor& delta, int round, std::size_t client) {
    DefenseSpec per_tx = spec;
    per_tx.seed = mix_seed(spec.seed, static_cast<std::uint64_t>(round),
                           static_cast<std::uint64_t>(client));
    return apply_defense(delta, per_tx);
  };
}

}  // namespace flowleak::defense
