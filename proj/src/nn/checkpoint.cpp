#include "flowleak/nn/checkpoint.hpp"

#include "flowleak/common/error.hpp"
#include "flowleak/nn/container.hpp"

namespace flowleak::nn {

using ad::ParamSet;
using ad::Tensor;
using json = nlohmann::json;

namespace {

json meta_to_json(const TrainMeta& meta) {
  return json{{"seed", meta.seed}, {"steps", meta.steps}, {"dataset", meta.dataset_id}};
}

TrainMeta meta_from_json(const json& j) {
  TrainMeta meta;
  meta.seed = j.value("seed", std::uint64_t(0));
  meta.steps = j.value("steps", 0L);
  meta.dataset_id = j.value("dataset", std::string());
  return meta;
}

}  // namespace

void save_classifier_checkpoint(const std::string& path, const ClassifierSpec& spec,
                                const ad::ParamSet& params, const TrainMeta& meta) {
  spec.validate();
  if (!params.same_structure(classifier_param_structure(spec)))
    throw ValueError("checkpoint: params do not match the classifier spec");
  json doc;
  doc["version"] = 1;
  doc["spec"] = json{{"type", "classifier"}, {"arch", spec.id()}};
  doc["params"] = params_to_json(params);
  doc["meta"] = meta_to_json(meta);
  write_json_doc(path, doc, "checkpoint");
}

ClassifierCheckpoint load_classifier_checkpoint(const std::string& path) {
  json doc = read_json_doc(path, "checkpoint");
  check_doc_version(doc, path, "checkpoint");
  const json& spec_j = doc.at("spec");
  if (spec_j.value("type", std::string()) != "classifier")
    throw ParseError("checkpoint " + path + ": not a classifier checkpoint");
  ClassifierCheckpoint ck;
  ck.spec = ClassifierSpec::from_id(spec_j.at("arch").get<std::string>());
  ck.params = params_from_json(doc.at("params"), classifier_param_structure(ck.spec), "checkpoint " + path);
  ck.meta = meta_from_json(doc.value("meta", json::object()));
  return ck;
}

void save_flow_checkpoint(const std::string& path, const FlowModel& model) {
  model.spec.validate();
  if (!model.params.same_structure(flownet_param_structure(model.spec)))
    throw ValueError("checkpoint: params do not match the flownet spec");
  json doc;
  doc["version"] = 1;
  doc["spec"] = json{{"type", "flownet"}, {"arch", model.spec.id()}};
  doc["params"] = params_to_json(model.params);
  doc["meta"] = meta_to_json(model.meta);
  write_json_doc(path, doc, "checkpoint");
}

FlowModel load_flow_checkpoint(const std::string& path) {
  json doc = read_json_doc(path, "checkpoint");
  check_doc_version(doc, path, "checkpoint");
  const json& spec_j = doc.at("spec");
  if (spec_j.value("type", std::string()) != "flownet")
    throw ParseError("checkpoint " + path + ": not a flownet checkpoint");
  FlowModel m;
  m.spec = FlowNetSpec::from_id(spec_j.at("arch").get<std::string>());
  m.params = params_from_json(doc.at("params"), flownet_param_structure(m.spec), "checkpoint " + path);
  m.meta = meta_from_json(doc.value("meta", json::object()));
  return m;
}

}  // namespace flowleak::nn
