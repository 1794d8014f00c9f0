#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowleak/ad/paramset.hpp"
#include "flowleak/ad/tensor.hpp"
#include "flowleak/nn/classifier.hpp"

namespace flowleak::fl {

// One client's private samples: images are (C,H,W) with pixels in [0,1].
struct ClientDataset {
  std::vector<ad::Tensor> images;
  std::vector<int> labels;

  std::size_t size() const { return images.size(); }
  // classes > 0 additionally checks label range.
  void validate(int classes = 0) const;
};

struct LocalTrainConfig {
  int epochs = 1;
  int batch_size = 1;
  std::string optimizer = "sgd";  // "sgd" or "adam"
  double lr = 0.01;
  std::uint64_t shuffle_seed = 0;
  // 0 means run the full epoch loop; otherwise stop after this many
  // optimizer steps (models update exchanges cut off mid-epoch).
  long step_budget = 0;

  void validate() const;
  // Steps a full (unbudgeted) run takes: epochs * ceil(N / batch_size).
  long full_steps(std::size_t n) const;
};

struct LocalTrainResult {
  ad::ParamSet wT;
  long steps = 0;
  std::vector<double> losses;  // one entry per optimizer step
};

// Runs local training from `params` (left untouched) and returns the final
// weights. Batch order is a fresh seeded shuffle per epoch; the last batch of
// an epoch may be short. A non-finite loss raises ValueError naming the step.
LocalTrainResult local_train(const nn::ClassifierSpec& spec, const ad::ParamSet& params,
                             const ClientDataset& data, const LocalTrainConfig& cfg);

// What the server (and hence the attacker) observes from one client round.
struct ClientUpdate {
  nn::ClassifierSpec spec;
  std::string loss_id = "cross_entropy";
  ad::ParamSet w0;
  ad::ParamSet wT;
  long n = 0;  // client sample count
  LocalTrainConfig config;

  void validate() const;
};

// flatten(wT) - flatten(w0); ShapeError when the sets disagree.
ad::Tensor weight_update(const ClientUpdate& u);

void save_client_update(const std::string& path, const ClientUpdate& u);
ClientUpdate load_client_update(const std::string& path);

}  // namespace flowleak::fl
