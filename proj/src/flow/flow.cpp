#include "flowleak/flow/flow.hpp"

#include <cmath>
#include <fstream>

#include "flowleak/ad/grad.hpp"
#include "flowleak/ad/graph.hpp"
#include "flowleak/ad/ops.hpp"
#include "flowleak/common/error.hpp"
#include "flowleak/common/format.hpp"
#include "flowleak/common/rng.hpp"
#include "flowleak/opt/optimizer.hpp"

namespace flowleak::flow {

using ad::ParamSet;
using ad::Tensor;

Tensor to_model_range(const Tensor& x) { return ad::cadd(ad::cmul(x, 2.0), -1.0); }
Tensor from_model_range(const Tensor& x) { return ad::cmul(ad::cadd(x, 1.0), 0.5); }

void FlowTrainConfig::validate() const {
  if (steps < 1) throw ValueError("flow train: steps must be >= 1");
  if (batch_size < 1) throw ValueError("flow train: batch size must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ValueError("flow train: lr must be finite and >= 0");
}

namespace {

// Rows of the dataset in model range, one flat row per image.
std::vector<std::vector<double>> dataset_rows(const std::vector<Tensor>& images, int dim) {
  if (images.empty()) throw ValueError("flow train: empty image set");
  std::vector<std::vector<double>> rows;
  rows.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Tensor& img = images[i];
    if (static_cast<int>(img.numel()) != dim)
      throw ShapeError("flow train: image " + std::to_string(i) + " has " +
                       std::to_string(img.numel()) + " values, field dim is " +
                       std::to_string(dim));
    std::vector<double> row(img.data().begin(), img.data().end());
    for (double& v : row) {
      if (!(v >= 0.0 && v <= 1.0))
        throw ValueError("flow train: image " + std::to_string(i) + " has a value outside [0,1]");
      v = 2.0 * v - 1.0;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

Tensor rows_tensor(const std::vector<std::vector<double>>& rows, int dim) {
  std::vector<double> flat;
  flat.reserve(rows.size() * static_cast<std::size_t>(dim));
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return Tensor::from_data({static_cast<int>(rows.size()), dim}, std::move(flat));
}

Tensor normal_rows(int n, int dim, Rng& rng) {
  std::vector<double> flat(static_cast<std::size_t>(n) * dim);
  for (double& v : flat) v = rng.normal();
  return Tensor::from_data({n, dim}, std::move(flat));
}

}  // namespace

Tensor fm_step_loss(const nn::FlowNetSpec& spec, const ParamSet& params,
                    const Tensor& x1m_rows, const Tensor& x0_rows,
                    const std::vector<double>& ts) {
  if (x1m_rows.shape() != x0_rows.shape() || x1m_rows.shape().size() != 2)
    throw ShapeError("flow loss: endpoint row blocks must share a (B,dim) shape");
  const int b = x1m_rows.shape()[0];
  const int d = x1m_rows.shape()[1];
  if (static_cast<int>(ts.size()) != b)
    throw ShapeError("flow loss: " + std::to_string(ts.size()) + " times for " +
                     std::to_string(b) + " rows");

  std::vector<double> xt(static_cast<std::size_t>(b) * d);
  std::vector<double> u(static_cast<std::size_t>(b) * d);
  auto x1 = x1m_rows.data();
  auto x0 = x0_rows.data();
  for (int i = 0; i < b; ++i) {
    const double t = ts[i];
    for (int j = 0; j < d; ++j) {
      const std::size_t idx = static_cast<std::size_t>(i) * d + j;
      xt[idx] = (1.0 - t) * x0[idx] + t * x1[idx];
      u[idx] = x1[idx] - x0[idx];
    }
  }
  Tensor xt_rows = Tensor::from_data({b, d}, std::move(xt));
  Tensor target = Tensor::from_data({b, d}, std::move(u));
  Tensor v = nn::forward_flow_times(spec, params, xt_rows, ts);
  Tensor diff = ad::sub(v, target);
  return ad::mean(ad::mul(diff, diff));
}

FlowTrainResult fm_train(const nn::FlowNetSpec& spec, const std::vector<Tensor>& images,
                         const FlowTrainConfig& cfg) {
  spec.validate();
  cfg.validate();
  const auto rows = dataset_rows(images, spec.dim);

  FlowTrainResult res;
  res.model.spec = spec;
  res.model.meta.seed = cfg.seed;
  res.model.meta.steps = cfg.steps;
  res.model.meta.dataset_id = cfg.dataset_id;

  Rng init_rng(mix_seed(cfg.seed, 0));
  res.model.params = nn::init_flownet(spec, init_rng);
  ParamSet& params = res.model.params;
  opt::Adam optimizer(opt::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  Rng rng(mix_seed(cfg.seed, 1));

  const int b = cfg.batch_size;
  for (long step = 0; step < cfg.steps; ++step) {
    std::vector<std::vector<double>> batch;
    batch.reserve(b);
    for (int i = 0; i < b; ++i)
      batch.push_back(rows[static_cast<std::size_t>(rng.below(rows.size()))]);
    Tensor x1m = rows_tensor(batch, spec.dim);
    Tensor x0 = normal_rows(b, spec.dim, rng);
    std::vector<double> ts(b);
    for (double& t : ts) t = rng.uniform01();

    std::vector<Tensor> grads;
    double loss_val = 0.0;
    {
      ad::Graph graph;
      ad::GraphContext ctx(graph);
      ParamSet wp = ad::watch_all(params);
      Tensor loss = fm_step_loss(spec, wp, x1m, x0, ts);
      loss_val = loss.item();
      if (!std::isfinite(loss_val))
        throw ValueError("flow train: non-finite loss at step " + std::to_string(step));
      grads = ad::grad(loss, wp.tensors());
    }
    std::vector<Tensor> holders = params.tensors();
    optimizer.step(holders, grads);
    res.losses.push_back(loss_val);
  }
  return res;
}

Tensor fm_sample_states(const nn::FlowModel& model, int n, int k_ode, std::uint64_t seed) {
  if (n < 1) throw ValueError("flow sample: n must be >= 1");
  if (k_ode < 1) throw ValueError("flow sample: integration steps must be >= 1");
  Rng rng(seed);
  Tensor x = normal_rows(n, model.spec.dim, rng);
  const double h = 1.0 / k_ode;
  for (int k = 0; k < k_ode; ++k) {
    const double t = static_cast<double>(k) / k_ode;
    Tensor v = nn::forward_flow(model.spec, model.params, x, t);
    x = ad::add(x, ad::cmul(v, h));
    if (!x.all_finite())
      throw ValueError("flow sample: non-finite state at integration step " + std::to_string(k));
  }
  return x;
}

Tensor fm_sample(const nn::FlowModel& model, int n, int k_ode, std::uint64_t seed) {
  return from_model_range(fm_sample_states(model, n, k_ode, seed));
}

MsfProbeResult msf_probe(const nn::FlowModel& model, const std::vector<Tensor>& images,
                         const std::vector<double>& levels, const std::vector<double>& times,
                         std::uint64_t seed) {
  if (images.empty()) throw ValueError("field probe: empty image set");
  if (times.empty()) throw ValueError("field probe: no times given");
  bool has0 = false, has1 = false;
  for (double p : levels) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValueError("field probe: blend weight outside [0,1]");
    if (p == 0.0) has0 = true;
    if (p == 1.0) has1 = true;
  }
  if (!has0 || !has1) throw ValueError("field probe: blend weights must include 0 and 1");

  const int d = model.spec.dim;
  const auto rows = dataset_rows(images, d);
  Rng rng(seed);
  // One noise draw per image, shared across every blend level.
  std::vector<std::vector<double>> eps(rows.size(), std::vector<double>(d));
  for (auto& e : eps)
    for (double& v : e) v = rng.normal();

  MsfProbeResult res;
  res.levels = levels;
  res.times = times;
  res.raw.assign(levels.size(), std::vector<double>(times.size(), 0.0));

  for (std::size_t li = 0; li < levels.size(); ++li) {
    const double p = levels[li];
    std::vector<std::vector<double>> blended(rows.size(), std::vector<double>(d));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (int j = 0; j < d; ++j) blended[i][j] = (1.0 - p) * rows[i][j] + p * eps[i][j];
    Tensor x = rows_tensor(blended, d);
    for (std::size_t ti = 0; ti < times.size(); ++ti) {
      Tensor v = nn::forward_flow(model.spec, model.params, x, times[ti]);
      double total = 0.0;
      for (double val : v.data()) total += val * val;
      res.raw[li][ti] = total / static_cast<double>(v.numel());
    }
  }

  std::size_t one_idx = 0;
  for (std::size_t li = 0; li < levels.size(); ++li)
    if (levels[li] == 1.0) one_idx = li;
  res.normalized.assign(levels.size(), std::vector<double>(times.size(), 0.0));
  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    const double base = res.raw[one_idx][ti];
    if (base == 0.0)
      throw ValueError("field probe: zero response at full noise, cannot normalize");
    for (std::size_t li = 0; li < levels.size(); ++li)
      res.normalized[li][ti] = res.raw[li][ti] / base;
  }
  return res;
}

void write_msf_csv(const std::string& path, const MsfProbeResult& result) {
  std::ofstream out(path);
  if (!out) throw IoError("field probe: cannot write " + path);
  out << "noise_level,t,msf_raw,msf_normalized\n";
  for (std::size_t li = 0; li < result.levels.size(); ++li)
    for (std::size_t ti = 0; ti < result.times.size(); ++ti)
      out << fmt_g(result.levels[li]) << ',' << fmt_g(result.times[ti]) << ','
          << fmt_g(result.raw[li][ti]) << ',' << fmt_g(result.normalized[li][ti]) << '\n';
  if (!out) throw IoError("field probe: write failed for " + path);
}

double pseudo_time(long i, long k) {
  if (k < 1) throw ValueError("pseudo time: total iterations must be >= 1");
  if (i < 0 || i > k)
    throw ValueError("pseudo time: iteration " + std::to_string(i) + " outside 0.." +
                     std::to_string(k));
  return static_cast<double>(i) / static_cast<double>(k);
}

Tensor flow_reg(const nn::FlowModel& model, const Tensor& x, long i, long k) {
  const double t = pseudo_time(i, k);
  const int d = model.spec.dim;
  if (x.numel() == 0 || x.numel() % static_cast<std::size_t>(d) != 0)
    throw ShapeError("flow reg: input size " + std::to_string(x.numel()) +
                     " is not a multiple of field dim " + std::to_string(d));
  const int rows = static_cast<int>(x.numel() / static_cast<std::size_t>(d));
  Tensor xm = to_model_range(ad::reshape(x, {rows, d}));
  Tensor v = nn::forward_flow(model.spec, model.params, xm, t);
  return ad::mean(ad::mul(v, v));
}

namespace {

// fixed_t < 0 sweeps t_i = i/steps; otherwise every step uses fixed_t.
DescentProbeResult run_descent_probe(const nn::FlowModel& model, const Tensor& image,
                                     double blend, int steps, double lr, double fixed_t,
                                     std::uint64_t seed) {
  if (!(blend >= 0.0 && blend <= 1.0)) throw ValueError("descent probe: blend outside [0,1]");
  if (steps < 1) throw ValueError("descent probe: steps must be >= 1");
  const int d = model.spec.dim;
  if (static_cast<int>(image.numel()) != d)
    throw ShapeError("descent probe: image size does not match field dim");

  Rng rng(seed);
  std::vector<double> cur(static_cast<std::size_t>(d));
  auto img = image.data();
  for (int j = 0; j < d; ++j) {
    const double m = 2.0 * img[j] - 1.0;
    cur[j] = (1.0 - blend) * m + blend * rng.normal();
  }

  const double probe_times[] = {0.0, 0.25, 0.5, 0.75, 1.0};
  auto msf_mean = [&](const std::vector<double>& state) {
    Tensor x = Tensor::from_data({1, d}, std::vector<double>(state));
    double total = 0.0;
    for (double pt : probe_times) {
      Tensor v = nn::forward_flow(model.spec, model.params, x, pt);
      for (double val : v.data()) total += val * val;
    }
    return total / (static_cast<double>(d) * std::size(probe_times));
  };
  auto mse_to_clean = [&](const std::vector<double>& state) {
    double total = 0.0;
    for (int j = 0; j < d; ++j) {
      const double px = (state[j] + 1.0) / 2.0;
      total += (px - img[j]) * (px - img[j]);
    }
    return total / d;
  };

  DescentProbeResult res;
  res.msf_before = msf_mean(cur);
  res.mse_before = mse_to_clean(cur);

  for (int s = 0; s < steps; ++s) {
    const double t = fixed_t < 0.0 ? static_cast<double>(s) / steps : fixed_t;
    ad::Graph graph;
    ad::GraphContext ctx(graph);
    Tensor x = ad::watch(Tensor::from_data({1, d}, std::vector<double>(cur)));
    Tensor v = nn::forward_flow(model.spec, model.params, x, t);
    Tensor obj = ad::mean(ad::mul(v, v));
    Tensor g = ad::grad(obj, {x})[0];
    for (int j = 0; j < d; ++j) cur[j] -= lr * g.at(static_cast<std::size_t>(j));
  }

  res.msf_after = msf_mean(cur);
  res.mse_after = mse_to_clean(cur);
  return res;
}

}  // namespace

DescentProbeResult flow_descent_probe(const nn::FlowModel& model, const Tensor& image,
                                      double blend, int steps, double lr, std::uint64_t seed) {
  return run_descent_probe(model, image, blend, steps, lr, -1.0, seed);
}

DescentProbeResult flow_descent_probe_at(const nn::FlowModel& model, const Tensor& image,
                                         double blend, int steps, double lr, double t,
                                         std::uint64_t seed) {
  if (!(t >= 0.0 && t <= 1.0)) throw ValueError("descent probe: time outside [0,1]");
  return run_descent_probe(model, image, blend, steps, lr, t, seed);
}

double flow_lipschitz_estimate(const nn::FlowModel& model, const std::vector<Tensor>& images,
                               int pairs, double max_dist, double t, std::uint64_t seed) {
  if (pairs < 1) throw ValueError("field ratio probe: pairs must be >= 1");
  if (!(max_dist > 0.0)) throw ValueError("field ratio probe: max distance must be > 0");
  const int d = model.spec.dim;
  const auto rows = dataset_rows(images, d);
  Rng rng(seed);

  double worst = 0.0;
  for (int p = 0; p < pairs; ++p) {
    const auto& base = rows[static_cast<std::size_t>(rng.below(rows.size()))];
    std::vector<double> dir(static_cast<std::size_t>(d));
    double norm = 0.0;
    for (double& v : dir) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    const double dist = max_dist * rng.uniform01();
    std::vector<double> flat(base.begin(), base.end());
    flat.insert(flat.end(), base.begin(), base.end());
    for (int j = 0; j < d; ++j) flat[static_cast<std::size_t>(d + j)] += dist * dir[j] / norm;
    Tensor x = Tensor::from_data({2, d}, std::move(flat));
    Tensor v = nn::forward_flow(model.spec, model.params, x, t);
    double dv = 0.0;
    for (int j = 0; j < d; ++j) {
      const double delta = v.at(static_cast<std::size_t>(j)) - v.at(static_cast<std::size_t>(d + j));
      dv += delta * delta;
    }
    if (dist > 0.0) worst = std::max(worst, std::sqrt(dv) / dist);
  }
  return worst;
}

}  // namespace flowleak::flow
