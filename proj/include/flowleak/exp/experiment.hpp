#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flowleak/exp/config.hpp"
#include "flowleak/fl/client.hpp"
#include "flowleak/nn/flownet.hpp"

namespace flowleak::exp {

// One metrics.csv row. Deselected metrics stay NaN and print as nan.
struct MetricRow {
  std::string experiment;
  std::uint64_t seed = 0;
  int round = 0;
  int batch_size = 0;
  std::string defense;
  double defense_param = 0.0;
  double lambda = 0.0;
  long iterations = 0;
  std::string stop_reason;
  double psnr = 0.0;
  double ssim = 0.0;
  double mse = 0.0;
  double tv = 0.0;
  double fmse = 0.0;
  double alpha_final = 0.0;
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct RunRecord {
  std::uint64_t config_hash = 0;
  std::vector<StageTiming> timings;   // summed over cells, stage order fixed
  std::vector<std::string> artifacts; // paths written, in (cell, seed) order
  std::vector<MetricRow> rows;        // one per (cell, seed), same order
  std::vector<std::string> errors;    // failed cells, "cell_s<seed>: reason"
};

// One point of the sweep grid. Inactive axes pin their base-config value.
struct Cell {
  int batch_size = 0;
  int round = 0;
  double defense_param = 0.0;
  double lambda = 0.0;
  std::string id;  // "b<B>_r<R>_d<param>_l<lambda>"
};

std::vector<Cell> enumerate_cells(const ExperimentConfig& cfg);

// Derived seeds for the independent random streams of one (cell, seed) run.
struct SeedPlan {
  std::uint64_t dataset;
  std::uint64_t weights;
  std::uint64_t shuffle;
  std::uint64_t defense;
  std::uint64_t flow;
  std::uint64_t attack;
};
SeedPlan seed_plan(std::uint64_t run_seed);

// Loads or generates the configured dataset for one run seed.
fl::ClientDataset build_dataset(const ExperimentConfig& cfg, std::uint64_t run_seed);

// Splits the first clients * per_client images into per-client datasets.
std::vector<fl::ClientDataset> partition_clients(const fl::ClientDataset& all, int clients,
                                                 std::size_t per_client);

// Trains the flow prior for one run seed on the full dataset.
nn::FlowModel train_flow_prior(const ExperimentConfig& cfg, const fl::ClientDataset& all,
                               std::uint64_t run_seed);

// Stages train-fl -> train-flow -> defense -> attack -> evaluate for every
// (cell, seed) pair, writing the run directory and metrics.csv. A failing
// cell contributes an error entry and a stop_reason=error row; the other
// cells still run. Rows land in (cell, seed) order no matter how many
// workers raced, so reruns are byte-identical.
RunRecord run_experiment(const ExperimentConfig& cfg);

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_metrics_csv(const std::string& path);

// Mean metrics per cell over seeds, aggregated across run directories.
struct ReportRow {
  std::string experiment;
  int round = 0;
  int batch_size = 0;
  std::string defense;
  double defense_param = 0.0;
  double lambda = 0.0;
  long seeds = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  double mse = 0.0;
  double tv = 0.0;
  double fmse = 0.0;
};
std::vector<ReportRow> aggregate_runs(const std::vector<std::string>& run_dirs);
void write_report_csv(const std::string& path, const std::vector<ReportRow>& rows);

}  // namespace flowleak::exp
