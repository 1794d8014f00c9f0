#include "flowleak/attack/attack.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <numeric>
#include <utility>

#include "flowleak/ad/grad.hpp"
#include "flowleak/ad/graph.hpp"
#include "flowleak/ad/ops.hpp"
#include "flowleak/common/error.hpp"
#include "flowleak/common/format.hpp"
#include "flowleak/common/rng.hpp"
#include "flowleak/flow/flow.hpp"
#include "flowleak/nn/container.hpp"
#include "flowleak/opt/optimizer.hpp"
#include "json.hpp"

namespace flowleak::attack {

void AttackConfig::validate() const {
  if (max_iters < 0) throw ValueError("attack: iteration budget must be >= 0");
  if (!(lr > 0.0)) throw ValueError("attack: lr must be > 0, got " + fmt_g(lr));
  if (!(lambda >= 0.0)) throw ValueError("attack: flow weight must be >= 0, got " + fmt_g(lambda));
  if (!(sigma_tv >= 0.0))
    throw ValueError("attack: smoothness weight must be >= 0, got " + fmt_g(sigma_tv));
  if (!(tau > 0.0)) throw ValueError("attack: recovery threshold must be > 0, got " + fmt_g(tau));
  if (!(alpha_init >= 0.0 && alpha_init <= 1.0))
    throw ValueError("attack: alpha init must be in [0,1], got " + fmt_g(alpha_init));
  if (trace_every < 1) throw ValueError("attack: trace interval must be >= 1");
}

ad::ParamSet surrogate_weights(const ad::ParamSet& w0, const ad::ParamSet& wT,
                               const ad::Tensor& alpha) {
  if (!w0.same_structure(wT))
    throw ShapeError("surrogate: start and end weights have different structure");
  if (alpha.numel() != 1) throw ShapeError("surrogate: alpha must be scalar");
  ad::Tensor rest = ad::sub(ad::Tensor::scalar(1.0), alpha);
  ad::ParamSet out;
  for (std::size_t i = 0; i < w0.size(); ++i) {
    const auto& [name, start] = w0.entry(i);
    out.add(name, ad::add(ad::smul(alpha, start), ad::smul(rest, wT.entry(i).second)));
  }
  return out;
}

namespace {

double plain_sqnorm(const ad::Tensor& t) {
  double acc = 0.0;
  for (double v : t.data()) acc += v * v;
  return acc;
}

// Shared tail of both similarity losses: flatten the create-graph
// gradient at w_hat and score its direction against -delta_w.
ad::Tensor cosine_mismatch(const ad::ParamSet& w_hat, const ad::Tensor& delta_w,
                           const ad::Tensor& ce) {
  const double target_sqnorm = plain_sqnorm(delta_w);
  if (target_sqnorm == 0.0)
    throw ValueError("sim loss: zero update vector, nothing to match");

  std::vector<ad::Tensor> grads = ad::grad(ce, w_hat.tensors(), {/*create_graph=*/true});
  std::vector<ad::Tensor> parts;
  parts.reserve(grads.size());
  for (auto& g : grads) parts.push_back(ad::reshape(g, {static_cast<int>(g.numel())}));
  ad::Tensor g_flat = ad::concat(parts);
  if (g_flat.numel() != delta_w.numel())
    throw ShapeError("sim loss: gradient length " + std::to_string(g_flat.numel()) +
                     " does not match update length " + std::to_string(delta_w.numel()));

  ad::Tensor g_sq = ad::sqnorm(g_flat);
  if (g_sq.item() == 0.0)
    throw ValueError("sim loss: zero loss gradient at the surrogate point");

  ad::Tensor target = ad::cmul(delta_w, -1.0);
  ad::Tensor denom = ad::cmul(ad::sqrt(g_sq), std::sqrt(target_sqnorm));
  ad::Tensor cos = ad::div(ad::dot(target, g_flat), denom);
  return ad::cadd(ad::neg(cos), 1.0);
}

}  // namespace

ad::Tensor sim_loss(const nn::ClassifierSpec& spec, const ad::ParamSet& w_hat,
                    const ad::Tensor& delta_w, const ad::Tensor& x_hat,
                    const std::vector<int>& labels) {
  ad::Tensor ce = nn::cross_entropy(nn::forward_classifier(spec, w_hat, x_hat), labels);
  return cosine_mismatch(w_hat, delta_w, ce);
}

ad::Tensor sim_loss_soft(const nn::ClassifierSpec& spec, const ad::ParamSet& w_hat,
                         const ad::Tensor& delta_w, const ad::Tensor& x_hat,
                         const ad::Tensor& targets) {
  ad::Tensor ce = nn::cross_entropy_soft(nn::forward_classifier(spec, w_hat, x_hat), targets);
  return cosine_mismatch(w_hat, delta_w, ce);
}

ad::Tensor batch_tv_term(const ad::Tensor& batch) {
  const auto& s = batch.shape();
  if (s.size() != 4)
    throw ShapeError("tv: expected (B,C,H,W) batch, got " + shape_str(batch.shape()));
  const int bsz = s[0];
  const std::size_t image = batch.numel() / static_cast<std::size_t>(bsz);
  ad::Tensor flat = ad::reshape(batch, {static_cast<int>(batch.numel())});
  ad::Tensor acc = ad::Tensor::scalar(0.0);
  for (int b = 0; b < bsz; ++b) {
    ad::Tensor img = ad::reshape(ad::slice1d(flat, b * image, image), {s[1], s[2], s[3]});
    acc = ad::add(acc, metrics::tv_term(img));
  }
  return ad::cmul(acc, 1.0 / static_cast<double>(bsz));
}

namespace {

LossBreakdown breakdown_from_sim(ad::Tensor sim, const ad::Tensor& x_hat, long iteration,
                                 const nn::FlowModel* flow, const AttackConfig& cfg) {
  LossBreakdown parts;
  parts.sim = std::move(sim);
  parts.total = parts.sim;
  if (cfg.lambda > 0.0) {
    if (!flow) throw ValueError("attack: flow weight is set but no flow model was given");
    parts.flow = flow::flow_reg(*flow, x_hat, iteration, std::max<long>(cfg.max_iters, 1));
    parts.total = ad::add(parts.total, ad::cmul(parts.flow, cfg.lambda));
  }
  if (cfg.sigma_tv > 0.0) {
    parts.tv = batch_tv_term(x_hat);
    parts.total = ad::add(parts.total, ad::cmul(parts.tv, cfg.sigma_tv));
  }
  return parts;
}

}  // namespace

LossBreakdown loss_breakdown(const nn::ClassifierSpec& spec, const ad::ParamSet& w_hat,
                             const ad::Tensor& delta_w, const ad::Tensor& x_hat,
                             const std::vector<int>& labels, long iteration,
                             const nn::FlowModel* flow, const AttackConfig& cfg) {
  return breakdown_from_sim(sim_loss(spec, w_hat, delta_w, x_hat, labels), x_hat, iteration, flow,
                            cfg);
}

ad::Tensor total_loss(const nn::ClassifierSpec& spec, const ad::ParamSet& w_hat,
                      const ad::Tensor& delta_w, const ad::Tensor& x_hat,
                      const std::vector<int>& labels, long iteration,
                      const nn::FlowModel* flow, const AttackConfig& cfg) {
  return loss_breakdown(spec, w_hat, delta_w, x_hat, labels, iteration, flow, cfg).total;
}

namespace {

std::string trace_tail(const std::vector<TraceRow>& trace, const TraceRow& current) {
  std::string s = "i=" + std::to_string(current.iteration) + " sim=" + fmt_g(current.sim) +
                  " total=" + fmt_g(current.total);
  if (!trace.empty()) {
    const TraceRow& prev = trace.back();
    s += "; last recorded i=" + std::to_string(prev.iteration) + " total=" + fmt_g(prev.total);
  }
  return s;
}

ReconstructionResult run_loop(const fl::ClientUpdate& update, const nn::FlowModel* flow,
                              const AttackConfig& cfg, const std::vector<int>& labels,
                              const std::vector<ad::Tensor>& ground_truth, bool naive) {
  cfg.validate();
  update.validate();
  const nn::ClassifierSpec& spec = update.spec;
  if (labels.empty()) throw ValueError("attack: need at least one label to size the batch");
  for (int y : labels)
    if (y < 0 || y >= spec.classes)
      throw ValueError("attack: label " + std::to_string(y) + " outside 0.." +
                       std::to_string(spec.classes - 1));
  if (!ground_truth.empty() && ground_truth.size() != labels.size())
    throw ShapeError("attack: " + std::to_string(ground_truth.size()) +
                     " ground-truth images for batch " + std::to_string(labels.size()));
  if (cfg.lambda > 0.0) {
    if (!flow) throw ValueError("attack: flow weight is set but no flow model was given");
    const int pixels = spec.in_c * spec.in_h * spec.in_w;
    if (flow->spec.dim != pixels)
      throw ShapeError("attack: flow model dimension " + std::to_string(flow->spec.dim) +
                       " does not match image size " + std::to_string(pixels));
  }

  const ad::Tensor delta = fl::weight_update(update);
  if (plain_sqnorm(delta) == 0.0)
    throw ValueError("attack: degenerate update, wT equals w0");

  const int bsz = static_cast<int>(labels.size());
  Rng rng(cfg.seed);
  ad::Tensor x = ad::Tensor::uniform({bsz, spec.in_c, spec.in_h, spec.in_w}, 0.25, 0.75, rng);
  ad::Tensor alpha = ad::Tensor::scalar(cfg.alpha_init);
  ad::Tensor soft_logits;
  const bool soft = !cfg.labels_known;
  if (soft) soft_logits = ad::Tensor::zeros({bsz, spec.classes});

  std::vector<ad::Tensor> params{x};
  if (!naive) params.push_back(alpha);
  if (soft) params.push_back(soft_logits);
  opt::AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  opt::Adam adam(adam_cfg);

  ReconstructionResult res;
  res.stop_reason = "budget";
  res.iterations = cfg.max_iters;
  bool have_last = false;
  TraceRow last;

  for (long i = 0; i < cfg.max_iters; ++i) {
    std::vector<ad::Tensor> grads;
    TraceRow row;
    {
      ad::Graph graph;
      ad::GraphContext ctx(graph);
      ad::Tensor xw = ad::watch(x);
      ad::Tensor aw;
      ad::Tensor zw;
      ad::ParamSet w_hat;
      if (naive) {
        w_hat = ad::watch_all(update.w0);
      } else {
        aw = ad::watch(alpha);
        w_hat = surrogate_weights(update.w0, update.wT, aw);
      }
      LossBreakdown parts;
      if (soft) {
        zw = ad::watch(soft_logits);
        ad::Tensor targets = ad::exp(ad::log_softmax(zw));
        parts = breakdown_from_sim(sim_loss_soft(spec, w_hat, delta, xw, targets), xw, i, flow,
                                   cfg);
      } else {
        parts = breakdown_from_sim(sim_loss(spec, w_hat, delta, xw, labels), xw, i, flow, cfg);
      }

      row.iteration = i;
      row.sim = parts.sim.item();
      row.flow = parts.flow.defined() ? parts.flow.item() : 0.0;
      row.tv = parts.tv.defined() ? parts.tv.item() : 0.0;
      row.total = parts.total.item();
      row.alpha = naive ? 1.0 : alpha.item();
      if (!std::isfinite(row.total) || !std::isfinite(row.sim))
        throw ValueError("attack: non-finite loss at iteration " + std::to_string(i) + " (" +
                         trace_tail(res.trace, row) + ")");

      if (row.sim < cfg.tau) {
        res.trace.push_back(row);
        res.stop_reason = "threshold";
        res.iterations = i;
        have_last = false;
        break;
      }
      if (i % cfg.trace_every == 0) res.trace.push_back(row);
      last = row;
      have_last = true;

      std::vector<ad::Tensor> watched{xw};
      if (!naive) watched.push_back(aw);
      if (soft) watched.push_back(zw);
      grads = ad::grad(parts.total, watched);
    }
    adam.step(params, grads);
    auto xm = x.mutable_data();
    for (auto& v : xm) v = std::clamp(v, 0.0, 1.0);
    if (!naive) {
      auto am = alpha.mutable_data();
      am[0] = std::clamp(am[0], 0.0, 1.0);
    }
  }
  if (have_last && (res.trace.empty() || res.trace.back().iteration != last.iteration))
    res.trace.push_back(last);

  res.alpha = naive ? 1.0 : alpha.item();
  auto xd = x.data();
  const std::size_t image = static_cast<std::size_t>(spec.in_c) * spec.in_h * spec.in_w;
  for (int b = 0; b < bsz; ++b) {
    std::vector<double> vals(xd.begin() + b * image, xd.begin() + (b + 1) * image);
    res.recon.push_back(
        ad::Tensor::from_data({spec.in_c, spec.in_h, spec.in_w}, std::move(vals)));
  }

  if (!ground_truth.empty()) {
    res.assignment = match_reconstructions(res.recon, ground_truth);
    for (std::size_t t = 0; t < ground_truth.size(); ++t)
      res.panels.push_back(metrics::compute_panel(spec, update.wT, res.recon[res.assignment[t]],
                                                  ground_truth[t]));
  }
  return res;
}

}  // namespace

ReconstructionResult run_attack(const fl::ClientUpdate& update, const nn::FlowModel* flow,
                                const AttackConfig& cfg, const std::vector<int>& labels,
                                const std::vector<ad::Tensor>& ground_truth) {
  return run_loop(update, flow, cfg, labels, ground_truth, /*naive=*/false);
}

ReconstructionResult naive_attack(const fl::ClientUpdate& update, const nn::FlowModel* flow,
                                  const AttackConfig& cfg, const std::vector<int>& labels,
                                  const std::vector<ad::Tensor>& ground_truth) {
  return run_loop(update, flow, cfg, labels, ground_truth, /*naive=*/true);
}

std::vector<std::size_t> match_reconstructions(const std::vector<ad::Tensor>& recons,
                                               const std::vector<ad::Tensor>& targets) {
  if (recons.size() != targets.size())
    throw ValueError("match: " + std::to_string(recons.size()) + " reconstructions vs " +
                     std::to_string(targets.size()) + " targets");
  if (recons.empty()) throw ValueError("match: nothing to match");
  const std::size_t n = recons.size();
  std::vector<std::vector<double>> cost(n, std::vector<double>(n));
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t r = 0; r < n; ++r) cost[t][r] = metrics::mse(recons[r], targets[t]);

  if (n <= 8) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::vector<std::size_t> best = perm;
    double best_cost = std::numeric_limits<double>::infinity();
    do {
      double c = 0.0;
      for (std::size_t t = 0; t < n; ++t) c += cost[t][perm[t]];
      if (c < best_cost) {
        best_cost = c;
        best = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
  }

  // Greedy: repeatedly take the globally cheapest unassigned pair.
  std::vector<std::size_t> out(n, n);
  std::vector<bool> t_done(n, false), r_done(n, false);
  for (std::size_t step = 0; step < n; ++step) {
    double best_cost = std::numeric_limits<double>::infinity();
    std::size_t bt = n, br = n;
    for (std::size_t t = 0; t < n; ++t) {
      if (t_done[t]) continue;
      for (std::size_t r = 0; r < n; ++r) {
        if (r_done[r]) continue;
        if (cost[t][r] < best_cost) {
          best_cost = cost[t][r];
          bt = t;
          br = r;
        }
      }
    }
    out[bt] = br;
    t_done[bt] = true;
    r_done[br] = true;
  }
  return out;
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
  std::ofstream out(path);
  if (!out) throw IoError("attack trace: cannot write " + path);
  out << "iteration,sim_loss,flow_loss,tv,total,alpha\n";
  for (const TraceRow& r : trace)
    out << r.iteration << ',' << fmt_g(r.sim) << ',' << fmt_g(r.flow) << ',' << fmt_g(r.tv)
        << ',' << fmt_g(r.total) << ',' << fmt_g(r.alpha) << '\n';
  if (!out) throw IoError("attack trace: write failed for " + path);
}

void write_attack_summary(const std::string& path, const ReconstructionResult& result) {
  nlohmann::json doc;
  doc["version"] = 1;
  doc["spec"] = {{"type", "attack_summary"}};
  doc["alpha"] = result.alpha;
  doc["iterations"] = result.iterations;
  doc["stop_reason"] = result.stop_reason;
  doc["assignment"] = result.assignment;
  nlohmann::json panels = nlohmann::json::array();
  for (const auto& p : result.panels)
    panels.push_back({{"psnr", p.psnr},
                      {"ssim", p.ssim},
                      {"mse", p.mse},
                      {"tv", p.tv},
                      {"fmse", p.fmse}});
  doc["panels"] = panels;
  nn::write_json_doc(path, doc, "attack summary");
}

}  // namespace flowleak::attack
