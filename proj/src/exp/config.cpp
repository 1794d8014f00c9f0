#include "flowleak/exp/config.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "flowleak/common/error.hpp"
#include "flowleak/common/format.hpp"

namespace flowleak::exp {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool valid_key(const std::string& k) {
  if (k.empty() || !(std::isalpha(static_cast<unsigned char>(k[0])) || k[0] == '_')) return false;
  for (char c : k)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.')) return false;
  return true;
}

std::vector<std::string> split_list(const std::string& value, const std::string& key) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(value);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ParseError("config key '" + key + "': empty list element");
    out.push_back(item);
  }
  if (out.empty()) throw ParseError("config key '" + key + "': empty list");
  return out;
}

long parse_long(const std::string& value, const std::string& key) {
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(value, &used);
  } catch (const std::exception&) {
    throw ParseError("config key '" + key + "': '" + value + "' is not an integer");
  }
  if (used != value.size())
    throw ParseError("config key '" + key + "': '" + value + "' is not an integer");
  return v;
}

double parse_double(const std::string& value, const std::string& key) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    throw ParseError("config key '" + key + "': '" + value + "' is not a number");
  }
  if (used != value.size())
    throw ParseError("config key '" + key + "': '" + value + "' is not a number");
  return v;
}

std::string join_longs(const std::vector<long>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += fmt_g(v[i]);
  }
  return s;
}

std::string join_strings(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += v[i];
  }
  return s;
}

std::vector<int> to_ints(const std::vector<long>& v) {
  std::vector<int> out;
  out.reserve(v.size());
  for (long x : v) out.push_back(static_cast<int>(x));
  return out;
}

std::vector<long> to_longs(const std::vector<int>& v) { return {v.begin(), v.end()}; }

}  // namespace

KvConfig KvConfig::parse(const std::string& text) {
  KvConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line " + std::to_string(lineno) + ": missing '=' in '" + line +
                       "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!valid_key(key))
      throw ParseError("config line " + std::to_string(lineno) + ": bad key '" + key + "'");
    if (!cfg.values.emplace(key, value).second)
      throw ParseError("config line " + std::to_string(lineno) + ": duplicate key '" + key +
                       "'");
  }
  return cfg;
}

KvConfig KvConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string KvConfig::serialize() const {
  std::string out;
  for (const auto& [k, v] : values) out += k + " = " + v + "\n";
  return out;
}

void KvConfig::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("config: cannot write " + path);
  out << serialize();
  if (!out) throw IoError("config: write failed for " + path);
}

std::uint64_t KvConfig::hash() const {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : serialize()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

std::string KvReader::raw(const std::string& key) {
  auto it = cfg_.values.find(key);
  if (it == cfg_.values.end()) throw ParseError("config: missing required key '" + key + "'");
  used_.insert(key);
  return it->second;
}

std::string KvReader::str(const std::string& key) { return raw(key); }

std::string KvReader::str_or(const std::string& key, const std::string& fallback) {
  return has(key) ? raw(key) : fallback;
}

long KvReader::integer(const std::string& key) { return parse_long(raw(key), key); }

long KvReader::integer_or(const std::string& key, long fallback) {
  return has(key) ? integer(key) : fallback;
}

std::uint64_t KvReader::uint64(const std::string& key) {
  const std::string v = raw(key);
  std::size_t used = 0;
  std::uint64_t out = 0;
  try {
    out = std::stoull(v, &used);
  } catch (const std::exception&) {
    throw ParseError("config key '" + key + "': '" + v + "' is not an unsigned integer");
  }
  if (used != v.size() || v[0] == '-')
    throw ParseError("config key '" + key + "': '" + v + "' is not an unsigned integer");
  return out;
}

double KvReader::number_or(const std::string& key, double fallback) {
  return has(key) ? parse_double(raw(key), key) : fallback;
}

bool KvReader::flag_or(const std::string& key, bool fallback) {
  if (!has(key)) return fallback;
  const std::string v = raw(key);
  if (v == "true") return true;
  if (v == "false") return false;
  throw ParseError("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<long> KvReader::int_list_or(const std::string& key, std::vector<long> fallback) {
  if (!has(key)) return fallback;
  std::vector<long> out;
  for (const std::string& item : split_list(raw(key), key)) out.push_back(parse_long(item, key));
  return out;
}

std::vector<double> KvReader::num_list_or(const std::string& key, std::vector<double> fallback) {
  if (!has(key)) return fallback;
  std::vector<double> out;
  for (const std::string& item : split_list(raw(key), key))
    out.push_back(parse_double(item, key));
  return out;
}

std::vector<std::string> KvReader::str_list_or(const std::string& key,
                                               std::vector<std::string> fallback) {
  if (!has(key)) return fallback;
  return split_list(raw(key), key);
}

void KvReader::finish() const {
  std::vector<std::string> unknown;
  for (const auto& [k, v] : cfg_.values)
    if (!used_.count(k)) unknown.push_back(k);
  if (unknown.empty()) return;
  std::string msg = "config: unknown key";
  if (unknown.size() > 1) msg += "s";
  for (const std::string& k : unknown) msg += " '" + k + "'";
  throw ParseError(msg);
}

ExperimentConfig ExperimentConfig::from_kv(const KvConfig& kv) {
  KvReader r(kv);
  ExperimentConfig c;

  c.experiment = r.str_or("experiment", c.experiment);
  c.seed = r.uint64("seed");  // mandatory: every run must be replayable
  c.out_dir = r.str("out_dir");
  c.workers = static_cast<int>(r.integer_or("workers", c.workers));

  c.dataset_kind = r.str_or("dataset.kind", c.dataset_kind);
  c.dataset_path = r.str_or("dataset.path", c.dataset_path);
  c.dataset_n = static_cast<std::size_t>(r.integer_or("dataset.n", long(c.dataset_n)));
  c.dataset_size = static_cast<int>(r.integer_or("dataset.size", c.dataset_size));
  c.dataset_classes = static_cast<int>(r.integer_or("dataset.classes", c.dataset_classes));

  const std::string mk = r.str_or("model.kind", "mlp");
  if (mk == "mlp")
    c.model.kind = nn::ClassifierKind::mlp;
  else if (mk == "convnet")
    c.model.kind = nn::ClassifierKind::convnet;
  else
    throw ParseError("config key 'model.kind': unknown classifier '" + mk + "'");
  c.model.hidden = to_ints(r.int_list_or("model.hidden", to_longs(c.model.hidden)));
  c.model.classes = c.dataset_classes;
  const std::vector<int> img = c.image_shape();
  c.model.in_c = img[0];
  c.model.in_h = img[1];
  c.model.in_w = img[2];

  c.fl_clients = static_cast<int>(r.integer_or("fl.clients", c.fl_clients));
  c.fl_rounds = static_cast<int>(r.integer_or("fl.rounds", c.fl_rounds));
  c.local.epochs = static_cast<int>(r.integer_or("fl.epochs", c.local.epochs));
  c.local.batch_size = static_cast<int>(r.integer_or("fl.batch_size", c.local.batch_size));
  c.local.optimizer = r.str_or("fl.optimizer", c.local.optimizer);
  c.local.lr = r.number_or("fl.lr", c.local.lr);
  c.images_per_client =
      static_cast<std::size_t>(r.integer_or("fl.images_per_client", long(c.images_per_client)));

  c.flow_enabled = r.flag_or("flow.enabled", c.flow_enabled);
  c.flow.hidden = to_ints(r.int_list_or("flow.hidden", to_longs(c.flow.hidden)));
  c.flow.dim = img[0] * img[1] * img[2];
  c.flow_train.steps = r.integer_or("flow.steps", c.flow_train.steps);
  c.flow_train.batch_size = static_cast<int>(r.integer_or("flow.batch_size",
                                                          c.flow_train.batch_size));
  c.flow_train.lr = r.number_or("flow.lr", c.flow_train.lr);

  c.defense.kind = defense::defense_kind_from_name(r.str_or("defense.kind", "none"));
  c.defense.parameter = r.number_or("defense.parameter", c.defense.parameter);
  c.defense.keep_mode = r.flag_or("defense.keep_mode", c.defense.keep_mode);

  c.attack.max_iters = r.integer_or("attack.max_iters", c.attack.max_iters);
  c.attack.lr = r.number_or("attack.lr", c.attack.lr);
  c.attack.lambda = r.number_or("attack.lambda", c.attack.lambda);
  c.attack.sigma_tv = r.number_or("attack.sigma_tv", c.attack.sigma_tv);
  c.attack.tau = r.number_or("attack.tau", c.attack.tau);
  c.attack.alpha_init = r.number_or("attack.alpha_init", c.attack.alpha_init);
  c.attack.labels_known = r.flag_or("attack.labels_known", c.attack.labels_known);
  c.attack.trace_every = r.integer_or("attack.trace_every", c.attack.trace_every);
  c.attack_round = static_cast<int>(r.integer_or("attack.round", c.attack_round));
  c.attack_client =
      static_cast<std::size_t>(r.integer_or("attack.client", long(c.attack_client)));

  c.probe_levels = r.num_list_or("probe.levels", c.probe_levels);
  c.probe_times = r.num_list_or("probe.times", c.probe_times);
  c.metric_select = r.str_list_or("metrics.select", c.metric_select);

  c.sweep.batch_sizes = r.int_list_or("sweep.batch_size", {});
  c.sweep.rounds = r.int_list_or("sweep.round", {});
  c.sweep.defense_params = r.num_list_or("sweep.defense_param", {});
  c.sweep.lambdas = r.num_list_or("sweep.lambda", {});
  c.sweep.seeds_per_cell = static_cast<int>(r.integer_or("sweep.seeds", 1));

  r.finish();
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  return from_kv(KvConfig::load(path));
}

KvConfig ExperimentConfig::to_kv() const {
  KvConfig kv;
  auto& v = kv.values;
  v["experiment"] = experiment;
  v["seed"] = std::to_string(seed);
  v["out_dir"] = out_dir;
  v["workers"] = std::to_string(workers);
  v["dataset.kind"] = dataset_kind;
  if (!dataset_path.empty()) v["dataset.path"] = dataset_path;
  v["dataset.n"] = std::to_string(dataset_n);
  v["dataset.size"] = std::to_string(dataset_size);
  v["dataset.classes"] = std::to_string(dataset_classes);
  v["model.kind"] = model.kind == nn::ClassifierKind::mlp ? "mlp" : "convnet";
  v["model.hidden"] = join_longs(to_longs(model.hidden));
  v["fl.clients"] = std::to_string(fl_clients);
  v["fl.rounds"] = std::to_string(fl_rounds);
  v["fl.epochs"] = std::to_string(local.epochs);
  v["fl.batch_size"] = std::to_string(local.batch_size);
  v["fl.optimizer"] = local.optimizer;
  v["fl.lr"] = fmt_g(local.lr);
  v["fl.images_per_client"] = std::to_string(images_per_client);
  v["flow.enabled"] = flow_enabled ? "true" : "false";
  v["flow.hidden"] = join_longs(to_longs(flow.hidden));
  v["flow.steps"] = std::to_string(flow_train.steps);
  v["flow.batch_size"] = std::to_string(flow_train.batch_size);
  v["flow.lr"] = fmt_g(flow_train.lr);
  v["defense.kind"] = defense::defense_kind_name(defense.kind);
  v["defense.parameter"] = fmt_g(defense.parameter);
  v["defense.keep_mode"] = defense.keep_mode ? "true" : "false";
  v["attack.max_iters"] = std::to_string(attack.max_iters);
  v["attack.lr"] = fmt_g(attack.lr);
  v["attack.lambda"] = fmt_g(attack.lambda);
  v["attack.sigma_tv"] = fmt_g(attack.sigma_tv);
  v["attack.tau"] = fmt_g(attack.tau);
  v["attack.alpha_init"] = fmt_g(attack.alpha_init);
  v["attack.labels_known"] = attack.labels_known ? "true" : "false";
  v["attack.trace_every"] = std::to_string(attack.trace_every);
  v["attack.round"] = std::to_string(attack_round);
  v["attack.client"] = std::to_string(attack_client);
  v["probe.levels"] = join_doubles(probe_levels);
  v["probe.times"] = join_doubles(probe_times);
  v["metrics.select"] = join_strings(metric_select);
  if (!sweep.batch_sizes.empty()) v["sweep.batch_size"] = join_longs(sweep.batch_sizes);
  if (!sweep.rounds.empty()) v["sweep.round"] = join_longs(sweep.rounds);
  if (!sweep.defense_params.empty())
    v["sweep.defense_param"] = join_doubles(sweep.defense_params);
  if (!sweep.lambdas.empty()) v["sweep.lambda"] = join_doubles(sweep.lambdas);
  v["sweep.seeds"] = std::to_string(sweep.seeds_per_cell);
  return kv;
}

std::vector<int> ExperimentConfig::image_shape() const {
  if (dataset_kind == "shapes" || dataset_kind == "pgm-dir")
    return {1, dataset_size, dataset_size};
  if (dataset_kind == "ppm-dir") return {3, dataset_size, dataset_size};
  if (dataset_kind == "cifar10") return {3, 32, 32};
  throw ParseError("config key 'dataset.kind': unknown dataset '" + dataset_kind + "'");
}

void ExperimentConfig::validate() const {
  image_shape();  // rejects unknown kinds
  if (out_dir.empty()) throw ValueError("config: out_dir must not be empty");
  if (dataset_kind == "shapes") {
    if (dataset_n == 0) throw ValueError("config: dataset.n must be positive");
    if (dataset_size < 8) throw ValueError("config: dataset.size must be >= 8");
    if (dataset_classes < 2 || dataset_classes > 10)
      throw ValueError("config: dataset.classes must lie in [2, 10]");
  } else {
    if (dataset_path.empty())
      throw ValueError("config: dataset.path is required for kind " + dataset_kind);
    if (!std::filesystem::exists(dataset_path))
      throw ValueError("config: dataset.path does not exist: " + dataset_path);
    if (dataset_kind == "cifar10" && dataset_classes != 10)
      throw ValueError("config: cifar10 batches always carry 10 classes");
  }
  model.validate();
  flow.validate();
  flow_train.validate();
  defense.validate();
  attack.validate();
  local.validate();
  if (fl_clients < 1) throw ValueError("config: fl.clients must be >= 1");
  if (fl_rounds < 1) throw ValueError("config: fl.rounds must be >= 1");
  if (workers < 1) throw ValueError("config: workers must be >= 1");
  if (sweep.seeds_per_cell < 1) throw ValueError("config: sweep.seeds must be >= 1");

  auto check_round = [&](long r) {
    if (r < 0 || r >= fl_rounds)
      throw ValueError("config: attacked round " + std::to_string(r) +
                       " needs fl.rounds > that round");
  };
  check_round(attack_round);
  for (long r : sweep.rounds) check_round(r);
  for (long b : sweep.batch_sizes)
    if (b < 1) throw ValueError("config: sweep.batch_size entries must be >= 1");
  for (double l : sweep.lambdas)
    if (l < 0) throw ValueError("config: sweep.lambda entries must be >= 0");
  if (!sweep.defense_params.empty() && defense.kind == defense::DefenseKind::none)
    throw ValueError("config: sweep.defense_param needs a defense.kind");

  static const std::set<std::string> known_metrics = {"psnr", "ssim", "mse", "tv", "fmse"};
  if (metric_select.empty()) throw ValueError("config: metrics.select must not be empty");
  for (const std::string& m : metric_select)
    if (!known_metrics.count(m)) throw ValueError("config: unknown metric '" + m + "'");

  const std::size_t per_client =
      images_per_client ? images_per_client : static_cast<std::size_t>(local.batch_size);
  std::size_t largest = per_client;
  if (images_per_client == 0)
    for (long b : sweep.batch_sizes) largest = std::max(largest, static_cast<std::size_t>(b));
  if (dataset_kind == "shapes" &&
      static_cast<std::size_t>(fl_clients) * largest > dataset_n)
    throw ValueError("config: dataset.n too small for fl.clients * images per client");
}

}  // namespace flowleak::exp
