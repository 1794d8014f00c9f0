#pragma once

#include <functional>
#include <vector>

#include "flowleak/fl/client.hpp"

namespace flowleak::fl {

struct RoundSnapshot {
  int round = 0;  // 0 is the untrained starting point
  ad::ParamSet global;
  double eval_accuracy = 0.0;
};

// Optional transform of a client's flat weight update before aggregation,
// keyed by round and client index so seeded noise stays deterministic per
// transmission.
using UpdateTransform =
    std::function<ad::Tensor(const ad::Tensor&, int round, std::size_t client)>;

// FedAvg for `rounds` global rounds: every client trains locally from the
// current global weights, then the server takes the sample-count-weighted
// mean of the client results. Per-round shuffle seeds are derived from
// cfg.shuffle_seed, the round, and the client index. Returns rounds + 1
// snapshots, the first being the initial weights, each scored on eval_set.
std::vector<RoundSnapshot> run_global_rounds(const nn::ClassifierSpec& spec,
                                             const ad::ParamSet& init,
                                             const std::vector<ClientDataset>& clients,
                                             const LocalTrainConfig& cfg, int rounds,
                                             const ClientDataset& eval_set,
                                             const UpdateTransform& transform = {});

// Reconstructs what `client` transmitted starting from the weights after
// `round` completed global rounds (history[round].global): local training
// re-runs with the same derived shuffle seed, and the transform sees the
// same (round + 1, client) key the aggregation used. Everything is seeded,
// so this equals the transmission byte for byte without storing it.
// The returned update has wT folded to w0 + transformed delta, which is
// exactly the attacker's observation.
ClientUpdate transmitted_update(const nn::ClassifierSpec& spec,
                                const std::vector<RoundSnapshot>& history,
                                const std::vector<ClientDataset>& clients,
                                const LocalTrainConfig& cfg, int round, std::size_t client,
                                const UpdateTransform& transform = {});

}  // namespace flowleak::fl
