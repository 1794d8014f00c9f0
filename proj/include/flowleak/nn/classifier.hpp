#pragma once

#include <string>
#include <vector>

#include "flowleak/ad/paramset.hpp"
#include "flowleak/ad/tensor.hpp"
#include "flowleak/common/rng.hpp"

namespace flowleak::nn {

enum class ClassifierKind { mlp, convnet };

// Architecture description. For the MLP, hidden lists dense widths; for the
// convnet, hidden lists the two 3x3 conv channel counts ahead of the dense
// head. The id string round-trips so updates can carry their architecture.
struct ClassifierSpec {
  ClassifierKind kind = ClassifierKind::mlp;
  int in_c = 1;
  int in_h = 8;
  int in_w = 8;
  std::vector<int> hidden = {128, 64};
  int classes = 4;

  void validate() const;
  int input_dim() const { return in_c * in_h * in_w; }
  std::string id() const;
  static ClassifierSpec from_id(const std::string& id);
};

// Parameter shapes for the spec, zero-filled (used for structural checks).
ad::ParamSet classifier_param_structure(const ClassifierSpec& spec);
// Scaled-uniform init, +-1/sqrt(fan_in) per layer.
ad::ParamSet init_classifier(const ClassifierSpec& spec, Rng& rng);

// batch: (B, C, H, W) -> logits (B, classes). Differentiable with respect to
// params and batch when they are on a graph.
ad::Tensor forward_classifier(const ClassifierSpec& spec, const ad::ParamSet& params,
                              const ad::Tensor& batch);
// Activations feeding the final dense layer, (B, feature_dim).
ad::Tensor forward_features(const ClassifierSpec& spec, const ad::ParamSet& params,
                            const ad::Tensor& batch);
int feature_dim(const ClassifierSpec& spec);

// Mean negative log likelihood over the batch. Labels must lie in [0, classes).
ad::Tensor cross_entropy(const ad::Tensor& logits, const std::vector<int>& labels);
// Soft-label variant; targets is (B, classes), rows on the simplex.
ad::Tensor cross_entropy_soft(const ad::Tensor& logits, const ad::Tensor& targets);

// Fraction of argmax hits; ties resolve to the lowest class index.
double accuracy(const ClassifierSpec& spec, const ad::ParamSet& params,
                const std::vector<ad::Tensor>& images, const std::vector<int>& labels);

// Stacks (C, H, W) images into a (B, C, H, W) batch.
ad::Tensor stack_images(const std::vector<ad::Tensor>& images);

}  // namespace flowleak::nn
