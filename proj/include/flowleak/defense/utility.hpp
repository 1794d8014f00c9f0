#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowleak/attack/attack.hpp"
#include "flowleak/defense/defense.hpp"
#include "flowleak/fl/fedavg.hpp"

namespace flowleak::defense {

// Fixed federated setting reused across the noise levels of a sweep, so the
// only thing that varies between rows is the defense strength.
struct UtilitySetup {
  nn::ClassifierSpec spec;
  std::vector<fl::ClientDataset> clients;
  fl::ClientDataset eval_set;
  fl::LocalTrainConfig local;
  int rounds = 1;
  int attack_round = 0;
  std::size_t attack_client = 0;
  attack::AttackConfig attack_cfg;  // lambda must be 0: no prior in this probe
  std::uint64_t seed = 0;
};

struct UtilityRow {
  std::string defense;
  double parameter = 0.0;
  std::uint64_t seed = 0;
  double model_accuracy = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  double mse = 0.0;
};

// For each noise std: trains under that defense, attacks the captured
// update of the chosen round and client, and reports final evaluation
// accuracy next to reconstruction quality. A zero std takes the exact
// no-transform path, so that row equals the undefended run bit for bit.
std::vector<UtilityRow> defense_utility_sweep(const UtilitySetup& setup,
                                              const std::vector<double>& noise_stds);

void write_utility_csv(const std::string& path, const std::vector<UtilityRow>& rows);

}  // namespace flowleak::defense
