#include "flowleak/ad/grad.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include "flowleak/ad/ops.hpp"
#include "flowleak/common/error.hpp"
#include "flowleak/common/format.hpp"

namespace flowleak::ad {

namespace {

// Every node reachable from `root` through input edges.
std::unordered_set<const Node*> reachable_set(const Node* root) {
  std::unordered_set<const Node*> seen;
  std::vector<const Node*> stack{root};
  seen.insert(root);
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    for (const auto& in : n->inputs) {
      if (!in) continue;
      if (seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  return seen;
}

std::vector<Tensor> run_backward(const Tensor& output, const std::vector<Tensor>& inputs) {
  auto reach = reachable_set(output.node().get());

  // Insertion ids give a topological order; process sinks first.
  std::vector<const Node*> order(reach.begin(), reach.end());
  std::sort(order.begin(), order.end(),
            [](const Node* a, const Node* b) { return a->id > b->id; });

  std::unordered_map<const Node*, Tensor> adj;
  adj.emplace(output.node().get(), Tensor::scalar(1.0));

  for (const Node* n : order) {
    auto it = adj.find(n);
    if (it == adj.end() || !n->backward) continue;
    std::vector<Tensor> gs = n->backward(it->second);
    if (gs.size() != n->inputs.size())
      throw GradError("grad: op '" + n->op + "' produced " + std::to_string(gs.size()) +
                      " adjoints for " + std::to_string(n->inputs.size()) + " inputs");
    for (std::size_t i = 0; i < gs.size(); ++i) {
      const auto& in = n->inputs[i];
      if (!in) continue;
      auto found = adj.find(in.get());
      if (found == adj.end())
        adj.emplace(in.get(), gs[i]);
      else
        found->second = add(found->second, gs[i]);
    }
  }

  std::vector<Tensor> result;
  result.reserve(inputs.size());
  for (const Tensor& in : inputs) {
    auto it = adj.find(in.node().get());
    if (it != adj.end() && reach.count(in.node().get()))
      result.push_back(it->second);
    else
      result.push_back(Tensor::zeros(in.shape()));
  }
  return result;
}

}  // namespace

std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& inputs,
                         const GradOptions& opts) {
  if (!output.defined() || output.numel() != 1)
    throw GradError("grad: output must be scalar, got shape " +
                    (output.defined() ? shape_str(output.shape()) : std::string("<undefined>")));
  if (!output.on_graph()) throw GradError("grad: output is not on a graph");
  for (std::size_t i = 0; i < inputs.size(); ++i)
    if (!inputs[i].on_graph())
      throw GradError("grad: input " + std::to_string(i) + " is not on a graph");
  if (opts.create_graph) {
    if (!recording_active())
      throw GradError("grad: create_graph requires an active recording graph");
    return run_backward(output, inputs);
  }
  NoRecord guard;
  return run_backward(output, inputs);
}

}  // namespace flowleak::ad
