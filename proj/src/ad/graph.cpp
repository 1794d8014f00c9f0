#include "flowleak/ad/graph.hpp"

#include <atomic>

#include "flowleak/common/error.hpp"

namespace flowleak::ad {

namespace {

struct Tls {
  std::vector<Graph*> stack;
  int no_record = 0;
};

Tls& tls() {
  thread_local Tls t;
  return t;
}

// Global creation index. Shared across graphs so that cross-graph edges (a
// backward pass recorded onto a fresh graph) still order ancestors first.
std::atomic<std::uint64_t> g_next_id{1};

}  // namespace

GraphContext::GraphContext(Graph& g) { tls().stack.push_back(&g); }

GraphContext::~GraphContext() { tls().stack.pop_back(); }

NoRecord::NoRecord() { ++tls().no_record; }

NoRecord::~NoRecord() { --tls().no_record; }

bool recording_active() { return tls().no_record == 0 && !tls().stack.empty(); }

Graph* active_graph() { return tls().stack.empty() ? nullptr : tls().stack.back(); }

Tensor watch(const Tensor& t) {
  if (!t.defined()) throw ValueError("watch: undefined tensor");
  if (!recording_active()) throw GradError("watch: no active recording graph");
  auto node = std::make_shared<Node>();
  node->op = "leaf";
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  active_graph()->append(node);
  return attach_node(t.detached(), std::move(node));
}

Tensor record_op(std::string op, Tensor result, const std::vector<Tensor>& inputs,
                 std::function<std::vector<Tensor>(const Tensor&)> backward) {
  if (!recording_active()) return result;
  bool any = false;
  for (const Tensor& in : inputs)
    if (in.on_graph()) {
      any = true;
      break;
    }
  if (!any) return result;
  auto node = std::make_shared<Node>();
  node->op = std::move(op);
  node->inputs.reserve(inputs.size());
  for (const Tensor& in : inputs) node->inputs.push_back(in.node());
  node->backward = std::move(backward);
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  active_graph()->append(node);
  return attach_node(std::move(result), std::move(node));
}

}  // namespace flowleak::ad
