#pragma once

#include <string>
#include <vector>

#include "flowleak/ad/paramset.hpp"
#include "flowleak/ad/tensor.hpp"
#include "flowleak/common/rng.hpp"

namespace flowleak::nn {

// Velocity-field network over flattened images. Time conditioning is the
// fixed three-feature embedding [t, sin 2*pi*t, cos 2*pi*t] joined to the
// input through its own first-layer weights; output width equals dim.
struct FlowNetSpec {
  int dim = 64;
  int time_embed = 3;
  std::vector<int> hidden = {128, 128};

  void validate() const;
  std::string id() const;
  static FlowNetSpec from_id(const std::string& id);
};

ad::ParamSet flownet_param_structure(const FlowNetSpec& spec);
ad::ParamSet init_flownet(const FlowNetSpec& spec, Rng& rng);

// x: (dim) or (B, dim); one shared time t in [0, 1] (ValueError otherwise).
// Returns the same shape as x.
ad::Tensor forward_flow(const FlowNetSpec& spec, const ad::ParamSet& params, const ad::Tensor& x,
                        double t);
// Per-row times; ts.size() must equal the batch size.
ad::Tensor forward_flow_times(const FlowNetSpec& spec, const ad::ParamSet& params,
                              const ad::Tensor& x, const std::vector<double>& ts);

// Training provenance carried by checkpoints.
struct TrainMeta {
  std::uint64_t seed = 0;
  long steps = 0;
  std::string dataset_id;
};

// A trained vector field plus how it was produced.
struct FlowModel {
  FlowNetSpec spec;
  ad::ParamSet params;
  TrainMeta meta;
};

}  // namespace flowleak::nn
