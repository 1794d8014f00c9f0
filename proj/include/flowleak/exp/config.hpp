#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "flowleak/attack/attack.hpp"
#include "flowleak/defense/defense.hpp"
#include "flowleak/fl/client.hpp"
#include "flowleak/flow/flow.hpp"
#include "flowleak/nn/classifier.hpp"
#include "flowleak/nn/flownet.hpp"

namespace flowleak::exp {

// Flat key = value configuration text. Keys are dotted identifiers; '#'
// starts a comment; duplicate keys are rejected. Keys serialize sorted, so
// the hash is stable under any reordering of the source lines.
struct KvConfig {
  std::map<std::string, std::string> values;

  static KvConfig parse(const std::string& text);
  static KvConfig load(const std::string& path);
  std::string serialize() const;
  void save(const std::string& path) const;
  std::uint64_t hash() const;  // FNV-1a over the serialized form
};

std::string hash_hex(std::uint64_t hash);

// Typed access that tracks which keys were read; finish() turns leftovers
// into errors so config typos cannot silently disable anything.
class KvReader {
 public:
  explicit KvReader(const KvConfig& cfg) : cfg_(cfg) {}

  bool has(const std::string& key) const { return cfg_.values.count(key) != 0; }
  std::string str(const std::string& key);  // required
  std::string str_or(const std::string& key, const std::string& fallback);
  long integer(const std::string& key);
  long integer_or(const std::string& key, long fallback);
  std::uint64_t uint64(const std::string& key);
  double number_or(const std::string& key, double fallback);
  bool flag_or(const std::string& key, bool fallback);
  std::vector<long> int_list_or(const std::string& key, std::vector<long> fallback);
  std::vector<double> num_list_or(const std::string& key, std::vector<double> fallback);
  std::vector<std::string> str_list_or(const std::string& key,
                                       std::vector<std::string> fallback);
  void finish() const;  // unknown keys -> ParseError

 private:
  std::string raw(const std::string& key);
  const KvConfig& cfg_;
  std::set<std::string> used_;
};

struct SweepAxes {
  std::vector<long> batch_sizes;       // empty axis = pinned to the base value
  std::vector<long> rounds;
  std::vector<double> defense_params;
  std::vector<double> lambdas;
  int seeds_per_cell = 1;
};

// Everything one experiment needs, resolved from flat keys. The canonical
// form (to_kv) carries every field including defaults, so the stored copy
// of a run's config is self-contained and its hash covers all knobs.
struct ExperimentConfig {
  std::string experiment = "exp";
  std::uint64_t seed = 0;
  std::string out_dir;

  std::string dataset_kind = "shapes";  // shapes | pgm-dir | ppm-dir | cifar10
  std::string dataset_path;             // loaded kinds only
  std::size_t dataset_n = 64;
  int dataset_size = 8;
  int dataset_classes = 4;

  nn::ClassifierSpec model;  // input dims derived from the dataset

  int fl_clients = 1;
  int fl_rounds = 1;
  fl::LocalTrainConfig local;
  std::size_t images_per_client = 0;  // 0: one batch of images per client

  bool flow_enabled = false;  // force the prior stage even at lambda 0
  nn::FlowNetSpec flow;       // dim derived from the dataset
  flow::FlowTrainConfig flow_train;

  defense::DefenseSpec defense;

  attack::AttackConfig attack;
  int attack_round = 0;  // update sent from the weights after this many rounds
  std::size_t attack_client = 0;

  std::vector<double> probe_levels = {0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<double> probe_times = {0.0, 0.5, 1.0};

  std::vector<std::string> metric_select = {"psnr", "ssim", "mse", "tv", "fmse"};

  SweepAxes sweep;
  int workers = 1;

  static ExperimentConfig from_kv(const KvConfig& kv);
  static ExperimentConfig load(const std::string& path);
  KvConfig to_kv() const;
  void validate() const;
  std::uint64_t config_hash() const { return to_kv().hash(); }

  // (channels, height, width) of one dataset image.
  std::vector<int> image_shape() const;
};

}  // namespace flowleak::exp
