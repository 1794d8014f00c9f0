#pragma once

#include <vector>

#include "flowleak/ad/graph.hpp"
#include "flowleak/ad/tensor.hpp"

namespace flowleak::ad {

struct GradOptions {
  // When set, the backward pass records onto the active graph, so the returned
  // gradients are themselves differentiable. Requires active recording.
  bool create_graph = false;
};

// Reverse-mode gradient of a scalar output with respect to each input tensor.
// Errors: non-scalar output, output or any input not on a graph, create_graph
// without active recording. Inputs on the graph but not reachable from the
// output get zero gradients.
std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& inputs,
                         const GradOptions& opts = {});

}  // namespace flowleak::ad
