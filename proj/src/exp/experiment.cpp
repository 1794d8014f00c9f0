#include "flowleak/exp/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "flowleak/attack/attack.hpp"
#include "flowleak/common/error.hpp"
#include "flowleak/common/format.hpp"
#include "flowleak/common/rng.hpp"
#include "flowleak/data/dataset.hpp"
#include "flowleak/data/imageio.hpp"
#include "flowleak/defense/defense.hpp"
#include "flowleak/fl/fedavg.hpp"
#include "flowleak/metrics/metrics.hpp"
#include "flowleak/nn/checkpoint.hpp"

namespace fs = std::filesystem;

namespace flowleak::exp {

namespace {

constexpr const char* kMetricsHeader =
    "experiment,seed,round,batch_size,defense,defense_param,lambda,iterations,stop_reason,"
    "psnr,ssim,mse,tv,fmse,alpha_final";

constexpr const char* kStageNames[] = {"dataset", "train-fl", "train-flow", "attack",
                                       "evaluate"};
constexpr std::size_t kStages = 5;

double now_minus(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

struct CellOutcome {
  MetricRow row;
  std::vector<std::string> artifacts;
  std::string error;  // empty on success
  double stage_seconds[kStages] = {0, 0, 0, 0, 0};
};

// Trains at most once per run seed; cells that share a seed share the model.
class FlowCache {
 public:
  FlowCache(const ExperimentConfig& cfg) : cfg_(cfg) {}

  // Returns the model plus the training time this call actually spent.
  std::pair<const nn::FlowModel*, double> get(std::uint64_t run_seed,
                                              const fl::ClientDataset& all,
                                              std::vector<std::string>* artifacts) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = models_.find(run_seed);
    if (it != models_.end()) return {&it->second, 0.0};
    const auto start = std::chrono::steady_clock::now();
    nn::FlowModel model = train_flow_prior(cfg_, all, run_seed);
    const double secs = now_minus(start);
    const std::string path =
        (fs::path(cfg_.out_dir) / ("flow_s" + std::to_string(run_seed) + ".json")).string();
    nn::save_flow_checkpoint(path, model);
    if (artifacts) artifacts->push_back(path);
    auto [pos, fresh] = models_.emplace(run_seed, std::move(model));
    (void)fresh;
    return {&pos->second, secs};
  }

 private:
  const ExperimentConfig& cfg_;
  std::mutex mu_;
  std::map<std::uint64_t, nn::FlowModel> models_;
};

double mean_or_nan(const std::vector<metrics::MetricPanel>& panels, double metrics::MetricPanel::*field,
                   bool selected) {
  if (!selected || panels.empty()) return std::numeric_limits<double>::quiet_NaN();
  double acc = 0.0;
  for (const auto& p : panels) acc += p.*field;
  return acc / static_cast<double>(panels.size());
}

CellOutcome run_cell(const ExperimentConfig& base, const Cell& cell, std::uint64_t run_seed,
                     FlowCache& flows) {
  CellOutcome out;
  out.row.experiment = base.experiment;
  out.row.seed = run_seed;
  out.row.round = cell.round;
  out.row.batch_size = cell.batch_size;
  out.row.defense = defense::defense_kind_name(base.defense.kind);
  out.row.defense_param = cell.defense_param;
  out.row.lambda = cell.lambda;
  const std::string cell_tag = cell.id + "_s" + std::to_string(run_seed);

  try {
    ExperimentConfig cfg = base;
    cfg.local.batch_size = cell.batch_size;
    cfg.attack_round = cell.round;
    cfg.defense.parameter = cell.defense_param;
    cfg.attack.lambda = cell.lambda;
    cfg.defense.validate();
    cfg.attack.validate();

    const SeedPlan plan = seed_plan(run_seed);
    auto start = std::chrono::steady_clock::now();
    fl::ClientDataset all = build_dataset(cfg, run_seed);
    out.stage_seconds[0] = now_minus(start);

    start = std::chrono::steady_clock::now();
    const std::size_t per_client = cfg.images_per_client
                                       ? cfg.images_per_client
                                       : static_cast<std::size_t>(cfg.local.batch_size);
    std::vector<fl::ClientDataset> clients =
        partition_clients(all, cfg.fl_clients, per_client);

    Rng winit(plan.weights);
    ad::ParamSet w0 = nn::init_classifier(cfg.model, winit);
    fl::LocalTrainConfig local = cfg.local;
    local.shuffle_seed = plan.shuffle;
    defense::DefenseSpec dspec = cfg.defense;
    dspec.seed = plan.defense;
    fl::UpdateTransform transform = defense::defense_transform(dspec);

    // Rounds beyond the attacked one cannot change the captured update.
    std::vector<fl::RoundSnapshot> history = fl::run_global_rounds(
        cfg.model, w0, clients, local, cfg.attack_round, all, transform);
    fl::ClientUpdate captured = fl::transmitted_update(
        cfg.model, history, clients, local, cfg.attack_round, cfg.attack_client, transform);
    out.stage_seconds[1] = now_minus(start);

    const nn::FlowModel* prior = nullptr;
    if (cfg.flow_enabled || cfg.attack.lambda > 0) {
      auto [model, secs] = flows.get(run_seed, all, &out.artifacts);
      out.stage_seconds[2] = secs;
      if (cfg.attack.lambda > 0) prior = model;
    }

    start = std::chrono::steady_clock::now();
    attack::AttackConfig acfg = cfg.attack;
    acfg.seed = plan.attack;
    const fl::ClientDataset& victim = clients[cfg.attack_client];
    attack::ReconstructionResult result =
        attack::run_attack(captured, prior, acfg, victim.labels, victim.images);
    out.stage_seconds[3] = now_minus(start);

    start = std::chrono::steady_clock::now();
    const fs::path cell_dir = fs::path(cfg.out_dir) / "cells" / cell_tag;
    fs::create_directories(cell_dir);
    auto emit = [&](const std::string& name) {
      out.artifacts.push_back((cell_dir / name).string());
      return out.artifacts.back();
    };
    fl::save_client_update(emit("update.json"), captured);
    attack::write_trace_csv(emit("trace.csv"), result.trace);
    attack::write_attack_summary(emit("summary.json"), result);
    const bool color = cfg.image_shape()[0] == 3;
    for (std::size_t t = 0; t < result.recon.size(); ++t) {
      const std::string name = "recon_" + std::to_string(t) + (color ? ".ppm" : ".pgm");
      if (color)
        data::write_ppm(emit(name), result.recon[t]);
      else
        data::write_pgm(emit(name), result.recon[t]);
    }

    auto selected = [&](const char* m) {
      return std::find(cfg.metric_select.begin(), cfg.metric_select.end(), m) !=
             cfg.metric_select.end();
    };
    out.row.iterations = result.iterations;
    out.row.stop_reason = result.stop_reason;
    out.row.psnr = mean_or_nan(result.panels, &metrics::MetricPanel::psnr, selected("psnr"));
    out.row.ssim = mean_or_nan(result.panels, &metrics::MetricPanel::ssim, selected("ssim"));
    out.row.mse = mean_or_nan(result.panels, &metrics::MetricPanel::mse, selected("mse"));
    out.row.tv = mean_or_nan(result.panels, &metrics::MetricPanel::tv, selected("tv"));
    out.row.fmse = mean_or_nan(result.panels, &metrics::MetricPanel::fmse, selected("fmse"));
    out.row.alpha_final = result.alpha;
    out.stage_seconds[4] = now_minus(start);
  } catch (const std::exception& e) {
    out.error = cell_tag + ": " + e.what();
    out.row.stop_reason = "error";
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.row.psnr = out.row.ssim = out.row.mse = out.row.tv = out.row.fmse = nan;
    out.row.alpha_final = nan;
  }
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(line);
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

}  // namespace

std::vector<Cell> enumerate_cells(const ExperimentConfig& cfg) {
  const std::vector<long> batches =
      cfg.sweep.batch_sizes.empty() ? std::vector<long>{cfg.local.batch_size}
                                    : cfg.sweep.batch_sizes;
  const std::vector<long> rounds =
      cfg.sweep.rounds.empty() ? std::vector<long>{cfg.attack_round} : cfg.sweep.rounds;
  const std::vector<double> dparams = cfg.sweep.defense_params.empty()
                                          ? std::vector<double>{cfg.defense.parameter}
                                          : cfg.sweep.defense_params;
  const std::vector<double> lambdas =
      cfg.sweep.lambdas.empty() ? std::vector<double>{cfg.attack.lambda} : cfg.sweep.lambdas;

  std::vector<Cell> cells;
  for (long b : batches)
    for (long r : rounds)
      for (double d : dparams)
        for (double l : lambdas) {
          Cell c;
          c.batch_size = static_cast<int>(b);
          c.round = static_cast<int>(r);
          c.defense_param = d;
          c.lambda = l;
          c.id = "b" + std::to_string(b) + "_r" + std::to_string(r) + "_d" + fmt_g(d) + "_l" +
                 fmt_g(l);
          cells.push_back(std::move(c));
        }
  return cells;
}

SeedPlan seed_plan(std::uint64_t run_seed) {
  return {mix_seed(run_seed, 1), mix_seed(run_seed, 2), mix_seed(run_seed, 3),
          mix_seed(run_seed, 4), mix_seed(run_seed, 5), mix_seed(run_seed, 6)};
}

fl::ClientDataset build_dataset(const ExperimentConfig& cfg, std::uint64_t run_seed) {
  fl::ClientDataset all;
  if (cfg.dataset_kind == "shapes") {
    all = data::gen_shapes_dataset(cfg.dataset_n, cfg.dataset_size, cfg.dataset_classes,
                                   seed_plan(run_seed).dataset);
  } else {
    data::ImageFormat format = data::ImageFormat::cifar10;
    if (cfg.dataset_kind == "pgm-dir") format = data::ImageFormat::pgm;
    if (cfg.dataset_kind == "ppm-dir") format = data::ImageFormat::ppm;
    all = data::load_images(cfg.dataset_path, format);
    const std::vector<int> want = cfg.image_shape();
    for (const ad::Tensor& img : all.images)
      if (img.shape() != want)
        throw ShapeError("dataset: image shape " + shape_str(img.shape()) +
                         " does not match configured " + shape_str(want));
  }
  all.validate(cfg.dataset_classes);
  return all;
}

std::vector<fl::ClientDataset> partition_clients(const fl::ClientDataset& all, int clients,
                                                 std::size_t per_client) {
  if (per_client == 0) throw ValueError("partition: per-client size must be positive");
  if (static_cast<std::size_t>(clients) * per_client > all.size())
    throw ValueError("partition: need " + std::to_string(clients * per_client) +
                     " images, dataset has " + std::to_string(all.size()));
  std::vector<fl::ClientDataset> out(clients);
  for (int c = 0; c < clients; ++c)
    for (std::size_t i = 0; i < per_client; ++i) {
      const std::size_t k = static_cast<std::size_t>(c) * per_client + i;
      out[c].images.push_back(all.images[k]);
      out[c].labels.push_back(all.labels[k]);
    }
  return out;
}

nn::FlowModel train_flow_prior(const ExperimentConfig& cfg, const fl::ClientDataset& all,
                               std::uint64_t run_seed) {
  flow::FlowTrainConfig tcfg = cfg.flow_train;
  tcfg.seed = seed_plan(run_seed).flow;
  tcfg.dataset_id = cfg.dataset_kind + "_n" + std::to_string(all.size());
  flow::FlowTrainResult r = flow::fm_train(cfg.flow, all.images, tcfg);
  return std::move(r.model);
}

RunRecord run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);

  RunRecord record;
  record.config_hash = cfg.config_hash();
  const std::string config_path = (fs::path(cfg.out_dir) / "config.kv").string();
  cfg.to_kv().save(config_path);

  const std::vector<Cell> cells = enumerate_cells(cfg);
  const int seeds = cfg.sweep.seeds_per_cell;
  const std::size_t tasks = cells.size() * static_cast<std::size_t>(seeds);
  std::vector<CellOutcome> slots(tasks);
  FlowCache flows(cfg);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks) return;
      const Cell& cell = cells[i / seeds];
      const std::uint64_t run_seed = cfg.seed + i % seeds;
      slots[i] = run_cell(cfg, cell, run_seed, flows);
    }
  };
  const std::size_t nworkers =
      std::min<std::size_t>(static_cast<std::size_t>(cfg.workers), std::max<std::size_t>(tasks, 1));
  if (nworkers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < nworkers; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  // Sequential fold in (cell, seed) order regardless of worker scheduling.
  double stage_totals[kStages] = {0, 0, 0, 0, 0};
  record.artifacts.push_back(config_path);
  for (const CellOutcome& o : slots) {
    for (std::size_t s = 0; s < kStages; ++s) stage_totals[s] += o.stage_seconds[s];
    record.artifacts.insert(record.artifacts.end(), o.artifacts.begin(), o.artifacts.end());
    record.rows.push_back(o.row);
    if (!o.error.empty()) record.errors.push_back(o.error);
  }
  for (std::size_t s = 0; s < kStages; ++s)
    record.timings.push_back({kStageNames[s], stage_totals[s]});

  const std::string metrics_path = (fs::path(cfg.out_dir) / "metrics.csv").string();
  write_metrics_csv(metrics_path, record.rows);
  record.artifacts.push_back(metrics_path);
  return record;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("metrics csv: cannot write " + path);
  out << kMetricsHeader << "\n";
  for (const MetricRow& r : rows)
    out << r.experiment << ',' << r.seed << ',' << r.round << ',' << r.batch_size << ','
        << r.defense << ',' << fmt_g(r.defense_param) << ',' << fmt_g(r.lambda) << ','
        << r.iterations << ',' << r.stop_reason << ',' << fmt_g(r.psnr) << ','
        << fmt_g(r.ssim) << ',' << fmt_g(r.mse) << ',' << fmt_g(r.tv) << ','
        << fmt_g(r.fmse) << ',' << fmt_g(r.alpha_final) << '\n';
  if (!out) throw IoError("metrics csv: write failed for " + path);
}

std::vector<MetricRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("metrics csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty metrics file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetricsHeader) throw ParseError(path + ": unexpected metrics header");
  std::vector<MetricRow> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 15)
      throw ParseError(path + " row " + std::to_string(rows.size() + 1) + ": expected 15 fields");
    MetricRow r;
    r.experiment = f[0];
    r.seed = std::stoull(f[1]);
    r.round = std::stoi(f[2]);
    r.batch_size = std::stoi(f[3]);
    r.defense = f[4];
    r.defense_param = std::stod(f[5]);
    r.lambda = std::stod(f[6]);
    r.iterations = std::stol(f[7]);
    r.stop_reason = f[8];
    r.psnr = std::stod(f[9]);
    r.ssim = std::stod(f[10]);
    r.mse = std::stod(f[11]);
    r.tv = std::stod(f[12]);
    r.fmse = std::stod(f[13]);
    r.alpha_final = std::stod(f[14]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<ReportRow> aggregate_runs(const std::vector<std::string>& run_dirs) {
  struct Acc {
    ReportRow row;
    double sums[5] = {0, 0, 0, 0, 0};
  };
  std::vector<Acc> groups;  // insertion order keeps reports readable

  for (const std::string& dir : run_dirs) {
    const std::string path = (fs::path(dir) / "metrics.csv").string();
    for (const MetricRow& r : read_metrics_csv(path)) {
      if (r.stop_reason == "error") continue;
      auto match = [&](const Acc& a) {
        return a.row.experiment == r.experiment && a.row.round == r.round &&
               a.row.batch_size == r.batch_size && a.row.defense == r.defense &&
               a.row.defense_param == r.defense_param && a.row.lambda == r.lambda;
      };
      auto it = std::find_if(groups.begin(), groups.end(), match);
      if (it == groups.end()) {
        Acc a;
        a.row.experiment = r.experiment;
        a.row.round = r.round;
        a.row.batch_size = r.batch_size;
        a.row.defense = r.defense;
        a.row.defense_param = r.defense_param;
        a.row.lambda = r.lambda;
        groups.push_back(std::move(a));
        it = std::prev(groups.end());
      }
      it->row.seeds += 1;
      const double vals[5] = {r.psnr, r.ssim, r.mse, r.tv, r.fmse};
      for (int i = 0; i < 5; ++i) it->sums[i] += vals[i];
    }
  }

  std::vector<ReportRow> out;
  for (Acc& a : groups) {
    const double n = static_cast<double>(a.row.seeds);
    a.row.psnr = a.sums[0] / n;
    a.row.ssim = a.sums[1] / n;
    a.row.mse = a.sums[2] / n;
    a.row.tv = a.sums[3] / n;
    a.row.fmse = a.sums[4] / n;
    out.push_back(a.row);
  }
  return out;
}

void write_report_csv(const std::string& path, const std::vector<ReportRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("report csv: cannot write " + path);
  out << "experiment,round,batch_size,defense,defense_param,lambda,seeds,psnr,ssim,mse,tv,"
         "fmse\n";
  for (const ReportRow& r : rows)
    out << r.experiment << ',' << r.round << ',' << r.batch_size << ',' << r.defense << ','
        << fmt_g(r.defense_param) << ',' << fmt_g(r.lambda) << ',' << r.seeds << ','
        << fmt_g(r.psnr) << ',' << fmt_g(r.ssim) << ',' << fmt_g(r.mse) << ',' << fmt_g(r.tv)
        << ',' << fmt_g(r.fmse) << '\n';
  if (!out) throw IoError("report csv: write failed for " + path);
}

}  // namespace flowleak::exp
