#include "flowleak/defense/utility.hpp"

#include <fstream>

#include "flowleak/common/error.hpp"
#include "flowleak/common/format.hpp"
#include "flowleak/common/rng.hpp"
#include "flowleak/nn/classifier.hpp"

namespace flowleak::defense {

std::vector<UtilityRow> defense_utility_sweep(const UtilitySetup& setup,
                                              const std::vector<double>& noise_stds) {
  if (noise_stds.empty()) throw ValueError("utility sweep: need at least one noise std");
  if (setup.attack_cfg.lambda != 0.0)
    throw ValueError("utility sweep: runs without a flow prior, set lambda to 0");
  if (setup.attack_client >= setup.clients.size())
    throw ValueError("utility sweep: no client " + std::to_string(setup.attack_client));

  std::vector<UtilityRow> rows;
  for (double std_dev : noise_stds) {
    DefenseSpec spec;
    spec.kind = DefenseKind::gaussian_noise;
    spec.parameter = std_dev;
    spec.seed = mix_seed(setup.seed, 4);
    spec.validate();
    fl::UpdateTransform transform = defense_transform(spec);

    Rng winit(mix_seed(setup.seed, 2));
    ad::ParamSet w0 = nn::init_classifier(setup.spec, winit);
    fl::LocalTrainConfig local = setup.local;
    local.shuffle_seed = mix_seed(setup.seed, 3);

    std::vector<fl::RoundSnapshot> history = fl::run_global_rounds(
        setup.spec, w0, setup.clients, local, setup.rounds, setup.eval_set, transform);
    fl::ClientUpdate captured =
        fl::transmitted_update(setup.spec, history, setup.clients, local, setup.attack_round,
                               setup.attack_client, transform);

    attack::AttackConfig acfg = setup.attack_cfg;
    acfg.seed = mix_seed(setup.seed, 6);
    const fl::ClientDataset& victim = setup.clients[setup.attack_client];
    attack::ReconstructionResult result =
        attack::run_attack(captured, nullptr, acfg, victim.labels, victim.images);

    UtilityRow row;
    row.defense = defense_kind_name(spec.kind);
    row.parameter = std_dev;
    row.seed = setup.seed;
    row.model_accuracy = history.back().eval_accuracy;
    for (const auto& p : result.panels) {
      row.psnr += p.psnr;
      row.ssim += p.ssim;
      row.mse += p.mse;
    }
    const double n = static_cast<double>(result.panels.size());
    row.psnr /= n;
    row.ssim /= n;
    row.mse /= n;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_utility_csv(const std::string& path, const std::vector<UtilityRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("utility csv: cannot write " + path);
  out << "defense,parameter,seed,model_accuracy,psnr,ssim,mse\n";
  for (const UtilityRow& r : rows)
    out << r.defense << ',' << fmt_g(r.parameter) << ',' << r.seed << ','
        << fmt_g(r.model_accuracy) << ',' << fmt_g(r.psnr) << ',' << fmt_g(r.ssim) << ','
        << fmt_g(r.mse) << '\n';
  if (!out) throw IoError("utility csv: write failed for " + path);
}

}  // namespace flowleak::defense
