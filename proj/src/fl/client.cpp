#include "flowleak/fl/client.hpp"

#include <cmath>
#include <numeric>

#include "flowleak/ad/grad.hpp"
#include "flowleak/ad/graph.hpp"
#include "flowleak/ad/ops.hpp"
#include "flowleak/common/error.hpp"
#include "flowleak/common/rng.hpp"
#include "flowleak/nn/container.hpp"
#include "flowleak/opt/optimizer.hpp"

namespace flowleak::fl {

using ad::ParamSet;
using ad::Tensor;
using json = nlohmann::json;

void ClientDataset::validate(int classes) const {
  if (images.empty()) throw ValueError("client dataset is empty");
  if (images.size() != labels.size())
    throw ValueError("client dataset: " + std::to_string(images.size()) + " images vs " +
                     std::to_string(labels.size()) + " labels");
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Tensor& img = images[i];
    if (img.shape().size() != 3)
      throw ShapeError("client dataset: image " + std::to_string(i) + " is not (C,H,W)");
    if (img.shape() != images[0].shape())
      throw ShapeError("client dataset: image " + std::to_string(i) +
                       " shape differs from image 0");
    for (double v : img.data())
      if (!(v >= 0.0 && v <= 1.0))
        throw ValueError("client dataset: image " + std::to_string(i) +
                         " has a pixel outside [0,1]");
    if (classes > 0 && (labels[i] < 0 || labels[i] >= classes))
      throw ValueError("client dataset: label " + std::to_string(labels[i]) +
                       " outside 0.." + std::to_string(classes - 1));
  }
}

void LocalTrainConfig::validate() const {
  if (epochs < 1) throw ValueError("local train: epochs must be >= 1");
  if (batch_size < 1) throw ValueError("local train: batch size must be >= 1");
  // lr == 0 is legal: it freezes the weights, which is useful as a null case.
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ValueError("local train: lr must be finite and >= 0");
  if (optimizer != "sgd" && optimizer != "adam")
    throw ValueError("local train: unknown optimizer '" + optimizer + "'");
  if (step_budget < 0) throw ValueError("local train: step budget must be >= 0");
}

long LocalTrainConfig::full_steps(std::size_t n) const {
  const long per_epoch = (static_cast<long>(n) + batch_size - 1) / batch_size;
  return static_cast<long>(epochs) * per_epoch;
}

LocalTrainResult local_train(const nn::ClassifierSpec& spec, const ad::ParamSet& params,
                             const ClientDataset& data, const LocalTrainConfig& cfg) {
  cfg.validate();
  data.validate(spec.classes);

  LocalTrainResult res;
  ParamSet cur = params.clone();
  auto optimizer = opt::make_optimizer(cfg.optimizer, cfg.lr);
  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(cfg.shuffle_seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);

    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      if (cfg.step_budget > 0 && res.steps >= cfg.step_budget) {
        res.wT = std::move(cur);
        return res;
      }
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      std::vector<Tensor> batch_imgs;
      std::vector<int> batch_labels;
      for (std::size_t k = start; k < stop; ++k) {
        batch_imgs.push_back(data.images[order[k]]);
        batch_labels.push_back(data.labels[order[k]]);
      }
      Tensor batch = nn::stack_images(batch_imgs);

      std::vector<Tensor> grads;
      double loss_val = 0.0;
      {
        ad::Graph graph;
        ad::GraphContext ctx(graph);
        ParamSet wp = ad::watch_all(cur);
        Tensor loss = nn::cross_entropy(nn::forward_classifier(spec, wp, batch), batch_labels);
        loss_val = loss.item();
        if (!std::isfinite(loss_val))
          throw ValueError("local train: non-finite loss at step " + std::to_string(res.steps));
        grads = ad::grad(loss, wp.tensors());
      }
      std::vector<Tensor> holders = cur.tensors();
      optimizer->step(holders, grads);
      res.losses.push_back(loss_val);
      ++res.steps;
    }
  }
  res.wT = std::move(cur);
  return res;
}

void ClientUpdate::validate() const {
  spec.validate();
  config.validate();
  if (n < 1) throw ValueError("client update: sample count must be >= 1");
  if (loss_id != "cross_entropy") throw ValueError("client update: unknown loss '" + loss_id + "'");
  const ParamSet structure = nn::classifier_param_structure(spec);
  if (!w0.same_structure(structure) || !wT.same_structure(structure))
    throw ShapeError("client update: weights do not match the declared architecture");
}

Tensor weight_update(const ClientUpdate& u) {
  if (!u.w0.same_structure(u.wT))
    throw ShapeError("weight update: w0 and wT structures differ");
  Tensor a = u.wT.flatten();
  Tensor b = u.w0.flatten();
  return ad::sub(a, b);
}

namespace {

json config_to_json(const LocalTrainConfig& cfg) {
  return json{{"epochs", cfg.epochs},           {"batch_size", cfg.batch_size},
              {"optimizer", cfg.optimizer},     {"lr", cfg.lr},
              {"shuffle_seed", cfg.shuffle_seed}, {"step_budget", cfg.step_budget}};
}

LocalTrainConfig config_from_json(const json& j) {
  LocalTrainConfig cfg;
  cfg.epochs = j.value("epochs", 1);
  cfg.batch_size = j.value("batch_size", 1);
  cfg.optimizer = j.value("optimizer", std::string("sgd"));
  cfg.lr = j.value("lr", 0.01);
  cfg.shuffle_seed = j.value("shuffle_seed", std::uint64_t(0));
  cfg.step_budget = j.value("step_budget", 0L);
  return cfg;
}

}  // namespace

void save_client_update(const std::string& path, const ClientUpdate& u) {
  u.validate();
  json doc;
  doc["version"] = 1;
  doc["spec"] = json{{"type", "client_update"}, {"arch", u.spec.id()}, {"loss", u.loss_id}};
  doc["w0"] = nn::params_to_json(u.w0);
  doc["wT"] = nn::params_to_json(u.wT);
  doc["n"] = u.n;
  doc["config"] = config_to_json(u.config);
  nn::write_json_doc(path, doc, "client update");
}

ClientUpdate load_client_update(const std::string& path) {
  json doc = nn::read_json_doc(path, "client update");
  nn::check_doc_version(doc, path, "client update");
  const json& spec_j = doc.at("spec");
  if (spec_j.value("type", std::string()) != "client_update")
    throw ParseError("client update " + path + ": wrong document type");
  ClientUpdate u;
  u.spec = nn::ClassifierSpec::from_id(spec_j.at("arch").get<std::string>());
  u.loss_id = spec_j.value("loss", std::string("cross_entropy"));
  const ParamSet structure = nn::classifier_param_structure(u.spec);
  u.w0 = nn::params_from_json(doc.at("w0"), structure, "client update " + path);
  u.wT = nn::params_from_json(doc.at("wT"), structure, "client update " + path);
  u.n = doc.value("n", 0L);
  u.config = config_from_json(doc.value("config", json::object()));
  u.validate();
  return u;
}

}  // namespace flowleak::fl
