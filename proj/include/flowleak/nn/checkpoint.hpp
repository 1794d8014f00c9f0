#pragma once

#include <string>

#include "flowleak/nn/classifier.hpp"
#include "flowleak/nn/flownet.hpp"

namespace flowleak::nn {

// Checkpoints are UTF-8 structured text with top-level keys
// {version, spec, params, meta}; params is an ordered array of
// {name, shape, data} entries, row-major, in canonical ParamSet order.
// Loading validates structural consistency against the stored spec.

void save_classifier_checkpoint(const std::string& path, const ClassifierSpec& spec,
                                const ad::ParamSet& params, const TrainMeta& meta);

struct ClassifierCheckpoint {
  ClassifierSpec spec;
  ad::ParamSet params;
  TrainMeta meta;
};
ClassifierCheckpoint load_classifier_checkpoint(const std::string& path);

void save_flow_checkpoint(const std::string& path, const FlowModel& model);
FlowModel load_flow_checkpoint(const std::string& path);

}  // namespace flowleak::nn
