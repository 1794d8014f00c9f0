#include "flowleak/fl/fedavg.hpp"

#include "flowleak/ad/ops.hpp"
#include "flowleak/common/error.hpp"
#include "flowleak/common/rng.hpp"

namespace flowleak::fl {

using ad::ParamSet;
using ad::Tensor;

std::vector<RoundSnapshot> run_global_rounds(const nn::ClassifierSpec& spec,
                                             const ad::ParamSet& init,
                                             const std::vector<ClientDataset>& clients,
                                             const LocalTrainConfig& cfg, int rounds,
                                             const ClientDataset& eval_set,
                                             const UpdateTransform& transform) {
  if (clients.empty()) throw ValueError("global rounds: need at least one client");
  if (rounds < 0) throw ValueError("global rounds: rounds must be >= 0");
  cfg.validate();
  eval_set.validate(spec.classes);
  for (const ClientDataset& c : clients) c.validate(spec.classes);

  std::vector<RoundSnapshot> history;
  ParamSet global = init.clone();
  history.push_back({0, global.clone(),
                     nn::accuracy(spec, global, eval_set.images, eval_set.labels)});

  for (int round = 1; round <= rounds; ++round) {
    Tensor base = global.flatten();
    std::vector<double> acc(base.numel(), 0.0);
    double total_n = 0.0;

    for (std::size_t ci = 0; ci < clients.size(); ++ci) {
      // The per-round seed is shared by all clients so identical clients
      // produce identical local results; each client shuffles its own indices.
      LocalTrainConfig client_cfg = cfg;
      client_cfg.shuffle_seed = mix_seed(cfg.shuffle_seed, static_cast<std::uint64_t>(round));
      LocalTrainResult local = local_train(spec, global, clients[ci], client_cfg);

      Tensor effective = local.wT.flatten();
      if (transform) {
        Tensor delta = transform(ad::sub(effective, base), round, ci);
        if (delta.numel() != base.numel())
          throw ShapeError("global rounds: transform changed the update length");
        effective = ad::add(base, delta);
      }

      const double weight = static_cast<double>(clients[ci].size());
      auto e = effective.data();
      for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += weight * e[j];
      total_n += weight;
    }

    for (double& v : acc) v /= total_n;
    const int flat_len = static_cast<int>(acc.size());
    global = init.unflatten(Tensor::from_data({flat_len}, std::move(acc)));
    history.push_back({round, global.clone(),
                       nn::accuracy(spec, global, eval_set.images, eval_set.labels)});
  }
  return history;
}

ClientUpdate transmitted_update(const nn::ClassifierSpec& spec,
                                const std::vector<RoundSnapshot>& history,
                                const std::vector<ClientDataset>& clients,
                                const LocalTrainConfig& cfg, int round, std::size_t client,
                                const UpdateTransform& transform) {
  if (round < 0 || static_cast<std::size_t>(round) >= history.size())
    throw ValueError("transmitted update: round " + std::to_string(round) +
                     " outside the recorded history");
  if (client >= clients.size())
    throw ValueError("transmitted update: no client " + std::to_string(client));

  const ParamSet& global = history[static_cast<std::size_t>(round)].global;
  LocalTrainConfig client_cfg = cfg;
  client_cfg.shuffle_seed = mix_seed(cfg.shuffle_seed, static_cast<std::uint64_t>(round + 1));
  LocalTrainResult local = local_train(spec, global, clients[client], client_cfg);

  ClientUpdate u;
  u.spec = spec;
  u.w0 = global.clone();
  u.wT = std::move(local.wT);
  u.n = static_cast<long>(clients[client].size());
  u.config = client_cfg;
  if (transform) {
    Tensor base = u.w0.flatten();
    Tensor delta = transform(ad::sub(u.wT.flatten(), base), round + 1, client);
    if (delta.numel() != base.numel())
      throw ShapeError("transmitted update: transform changed the update length");
    u.wT = u.w0.unflatten(ad::add(base, delta));
  }
  return u;
}

}  // namespace flowleak::fl
