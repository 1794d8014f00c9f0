#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "flowleak/ad/tensor.hpp"

namespace flowleak::ad {

// One recorded operation. inputs[i] is null when that slot held a constant (no
// gradient flows there). backward maps the adjoint of the output to adjoints
// of the inputs, slot by slot. Backward rules are themselves built from graph
// ops, so recording can stay active while they run; that is what makes second
// and higher order differentiation work.
struct Node {
  std::string op;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<std::vector<Tensor>(const Tensor&)> backward;  // null for leaves
  std::uint64_t id = 0;  // global creation index; inputs always have smaller ids
};

// Append-only op recorder. Insertion order is a topological order of the DAG,
// including when a backward pass is being recorded onto the same or a fresh
// graph (node ids are global, so cross-graph edges stay ordered). A graph and
// its tensors may move between threads but must not be shared mutably.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  std::size_t size() const { return nodes_.size(); }
  const std::vector<std::shared_ptr<Node>>& nodes() const { return nodes_; }

  void append(std::shared_ptr<Node> n) { nodes_.push_back(std::move(n)); }

 private:
  std::vector<std::shared_ptr<Node>> nodes_;
};

// Makes g the recording target for the current thread while alive. Contexts
// nest; the innermost graph receives the records.
class GraphContext {
 public:
  explicit GraphContext(Graph& g);
  ~GraphContext();
  GraphContext(const GraphContext&) = delete;
  GraphContext& operator=(const GraphContext&) = delete;
};

// Temporarily disables recording on this thread (data-only evaluation).
class NoRecord {
 public:
  NoRecord();
  ~NoRecord();
  NoRecord(const NoRecord&) = delete;
  NoRecord& operator=(const NoRecord&) = delete;
};

bool recording_active();
Graph* active_graph();

// Registers t's data as a differentiable leaf on the active graph and returns
// the leaf tensor. Any node t already carried is ignored. GradError when no
// graph is active.
Tensor watch(const Tensor& t);

// Appends an op record for `result` when recording is active and at least one
// input slot is differentiable; otherwise returns `result` unchanged. The
// backward rule must produce one adjoint per input, in slot order.
Tensor record_op(std::string op, Tensor result, const std::vector<Tensor>& inputs,
                 std::function<std::vector<Tensor>(const Tensor&)> backward);

}  // namespace flowleak::ad
