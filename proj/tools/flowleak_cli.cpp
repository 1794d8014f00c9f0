#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flowleak/common/error.hpp"
#include "flowleak/common/format.hpp"
#include "flowleak/common/rng.hpp"
#include "flowleak/data/imageio.hpp"
#include "flowleak/exp/config.hpp"
#include "flowleak/exp/experiment.hpp"
#include "flowleak/fl/fedavg.hpp"
#include "flowleak/flow/flow.hpp"
#include "flowleak/nn/checkpoint.hpp"

namespace fs = std::filesystem;
using namespace flowleak;

namespace {

exp::ExperimentConfig load_config(const std::string& path, bool has_seed,
                                  std::uint64_t seed_override) {
  exp::KvConfig kv = exp::KvConfig::load(path);
  if (has_seed) kv.values["seed"] = std::to_string(seed_override);
  return exp::ExperimentConfig::from_kv(kv);
}

int cmd_gen_data(const exp::ExperimentConfig& cfg) {
  if (cfg.dataset_kind != "shapes")
    throw ValueError("gen-data only generates the shapes dataset; kind is " + cfg.dataset_kind);
  fl::ClientDataset d = exp::build_dataset(cfg, cfg.seed);
  const std::string dir = (fs::path(cfg.out_dir) / "data").string();
  data::save_dataset(dir, d, data::ImageFormat::pgm);
  std::printf("wrote %zu images (%d classes, %dx%d) to %s\n", d.size(), cfg.dataset_classes,
              cfg.dataset_size, cfg.dataset_size, dir.c_str());
  return 0;
}

int cmd_train_fl(const exp::ExperimentConfig& cfg) {
  fl::ClientDataset all = exp::build_dataset(cfg, cfg.seed);
  const std::size_t per_client = cfg.images_per_client
                                     ? cfg.images_per_client
                                     : static_cast<std::size_t>(cfg.local.batch_size);
  std::vector<fl::ClientDataset> clients =
      exp::partition_clients(all, cfg.fl_clients, per_client);

  const exp::SeedPlan plan = exp::seed_plan(cfg.seed);
  Rng winit(plan.weights);
  ad::ParamSet w0 = nn::init_classifier(cfg.model, winit);
  fl::LocalTrainConfig local = cfg.local;
  local.shuffle_seed = plan.shuffle;
  defense::DefenseSpec dspec = cfg.defense;
  dspec.seed = plan.defense;
  fl::UpdateTransform transform = defense::defense_transform(dspec);

  std::vector<fl::RoundSnapshot> history = fl::run_global_rounds(
      cfg.model, w0, clients, local, cfg.fl_rounds, all, transform);

  fs::create_directories(cfg.out_dir);
  const std::string rounds_path = (fs::path(cfg.out_dir) / "rounds.csv").string();
  {
    std::FILE* f = std::fopen(rounds_path.c_str(), "wb");
    if (!f) throw IoError("train-fl: cannot write " + rounds_path);
    std::fputs("round,eval_accuracy\n", f);
    for (const auto& snap : history)
      std::fprintf(f, "%d,%s\n", snap.round, fmt_g(snap.eval_accuracy).c_str());
    std::fclose(f);
  }

  nn::TrainMeta meta;
  meta.seed = cfg.seed;
  meta.steps = cfg.fl_rounds;
  meta.dataset_id = cfg.dataset_kind + "_n" + std::to_string(all.size());
  const std::string ckpt = (fs::path(cfg.out_dir) / "classifier_final.json").string();
  nn::save_classifier_checkpoint(ckpt, cfg.model, history.back().global, meta);

  fl::ClientUpdate captured = fl::transmitted_update(
      cfg.model, history, clients, local, cfg.attack_round, cfg.attack_client, transform);
  const std::string upd = (fs::path(cfg.out_dir) / "update.json").string();
  fl::save_client_update(upd, captured);

  std::printf("trained %d rounds, final accuracy %s\n", cfg.fl_rounds,
              fmt_g(history.back().eval_accuracy).c_str());
  std::printf("wrote %s, %s, %s\n", rounds_path.c_str(), ckpt.c_str(), upd.c_str());
  return 0;
}

int cmd_train_flow(const exp::ExperimentConfig& cfg) {
  fl::ClientDataset all = exp::build_dataset(cfg, cfg.seed);
  nn::FlowModel model = exp::train_flow_prior(cfg, all, cfg.seed);
  fs::create_directories(cfg.out_dir);
  const std::string path =
      (fs::path(cfg.out_dir) / ("flow_s" + std::to_string(cfg.seed) + ".json")).string();
  nn::save_flow_checkpoint(path, model);
  std::printf("trained flow prior for %ld steps, wrote %s\n", cfg.flow_train.steps,
              path.c_str());
  return 0;
}

int cmd_probe_flow(const exp::ExperimentConfig& cfg) {
  fl::ClientDataset all = exp::build_dataset(cfg, cfg.seed);
  nn::FlowModel model = exp::train_flow_prior(cfg, all, cfg.seed);
  flow::MsfProbeResult probe = flow::msf_probe(model, all.images, cfg.probe_levels,
                                               cfg.probe_times, mix_seed(cfg.seed, 7));
  fs::create_directories(cfg.out_dir);
  const std::string path = (fs::path(cfg.out_dir) / "msf.csv").string();
  flow::write_msf_csv(path, probe);
  std::printf("probed %zu noise levels x %zu times, wrote %s\n", probe.levels.size(),
              probe.times.size(), path.c_str());
  return 0;
}

int report_outcome(const exp::RunRecord& record) {
  for (const auto& t : record.timings)
    std::printf("  %-10s %8.2fs\n", t.stage.c_str(), t.seconds);
  for (const std::string& e : record.errors) std::printf("cell failed: %s\n", e.c_str());
  std::printf("%zu rows, %zu artifacts, config %s\n", record.rows.size(),
              record.artifacts.size(), exp::hash_hex(record.config_hash).c_str());
  return record.errors.empty() ? 0 : 1;
}

int cmd_attack(const exp::ExperimentConfig& cfg) {
  if (!cfg.sweep.batch_sizes.empty() || !cfg.sweep.rounds.empty() ||
      !cfg.sweep.defense_params.empty() || !cfg.sweep.lambdas.empty())
    throw ValueError("attack runs the base cell only; use the sweep command for axes");
  return report_outcome(exp::run_experiment(cfg));
}

int cmd_sweep(const exp::ExperimentConfig& cfg) {
  return report_outcome(exp::run_experiment(cfg));
}

int cmd_report(const exp::ExperimentConfig& cfg, const std::vector<std::string>& run_dirs) {
  std::vector<exp::ReportRow> rows = exp::aggregate_runs(run_dirs);
  fs::create_directories(cfg.out_dir);
  const std::string path = (fs::path(cfg.out_dir) / "report.csv").string();
  exp::write_report_csv(path, rows);
  std::printf("aggregated %zu run directories into %zu cells, wrote %s\n", run_dirs.size(),
              rows.size(), path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated gradient-leakage laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed_override = 0;
  std::vector<std::string> run_dirs;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key = value configuration file")->required();
    sub->add_option("--seed", seed_override, "override the config seed");
    return sub;
  };

  add_common(app.add_subcommand("gen-data", "generate the shapes dataset as image files"));
  add_common(app.add_subcommand("train-fl", "run federated rounds and capture an update"));
  add_common(app.add_subcommand("train-flow", "train the flow prior and checkpoint it"));
  add_common(app.add_subcommand("probe-flow", "map field magnitude against noise level"));
  add_common(app.add_subcommand("attack", "reconstruct training data from one update"));
  add_common(app.add_subcommand("sweep", "run the full sweep grid"));
  CLI::App* report = add_common(
      app.add_subcommand("report", "aggregate run directories into a summary table"));
  report->add_option("dirs", run_dirs, "run directories holding metrics.csv")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    CLI::App* sub = app.get_subcommands().front();
    const bool has_seed = sub->count("--seed") > 0;
    const exp::ExperimentConfig cfg = load_config(config_path, has_seed, seed_override);
    const std::string name = sub->get_name();
    if (name == "gen-data") return cmd_gen_data(cfg);
    if (name == "train-fl") return cmd_train_fl(cfg);
    if (name == "train-flow") return cmd_train_flow(cfg);
    if (name == "probe-flow") return cmd_probe_flow(cfg);
    if (name == "attack") return cmd_attack(cfg);
    if (name == "sweep") return cmd_sweep(cfg);
    if (name == "report") return cmd_report(cfg, run_dirs);
    std::fprintf(stderr, "error: unhandled subcommand %s\n", name.c_str());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
