#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowleak/ad/paramset.hpp"
#include "flowleak/ad/tensor.hpp"
#include "flowleak/fl/client.hpp"
#include "flowleak/metrics/metrics.hpp"
#include "flowleak/nn/classifier.hpp"
#include "flowleak/nn/flownet.hpp"

namespace flowleak::attack {

// Attacker-side optimization settings. `lambda` weights the flow-prior
// term, `sigma_tv` the smoothness term; the run stops once the matching
// loss falls below `tau` or after `max_iters` steps, whichever first.
struct AttackConfig {
  long max_iters = 30000;
  double lr = 0.01;
  double lambda = 1.4e-5;
  double sigma_tv = 0.1;
  double tau = 1e-3;
  double alpha_init = 0.5;
  // When false the true labels are withheld from the optimizer and
  // softmax-relaxed dummy labels are optimized jointly instead.
  bool labels_known = true;
  std::uint64_t seed = 0;
  long trace_every = 100;

  void validate() const;
};

struct TraceRow {
  long iteration = 0;
  double sim = 0.0;
  double flow = 0.0;
  double tv = 0.0;
  double total = 0.0;
  double alpha = 0.0;
};

struct ReconstructionResult {
  std::vector<ad::Tensor> recon;  // (C,H,W) images in [0,1], one per batch slot
  double alpha = 1.0;
  long iterations = 0;
  std::string stop_reason;  // "threshold" or "budget"
  std::vector<TraceRow> trace;
  // Filled only when ground truth was supplied.
  std::vector<std::size_t> assignment;       // target index -> recon index
  std::vector<metrics::MetricPanel> panels;  // per target, against its match
};

// alpha*w0 + (1-alpha)*wT elementwise; alpha is a scalar tensor so the
// result stays differentiable with respect to it.
ad::ParamSet surrogate_weights(const ad::ParamSet& w0, const ad::ParamSet& wT,
                               const ad::Tensor& alpha);

// 1 - cos(-delta_w, gradient of the classification loss at w_hat on the
// dummy batch). w_hat entries must be on the active graph; the result
// is differentiable with respect to x_hat and, through w_hat, alpha.
// Zero-norm update or gradient raises ValueError.
ad::Tensor sim_loss(const nn::ClassifierSpec& spec, const ad::ParamSet& w_hat,
                    const ad::Tensor& delta_w, const ad::Tensor& x_hat,
                    const std::vector<int>& labels);
// Soft-label variant; targets is (B, classes) with rows on the simplex.
ad::Tensor sim_loss_soft(const nn::ClassifierSpec& spec, const ad::ParamSet& w_hat,
                         const ad::Tensor& delta_w, const ad::Tensor& x_hat,
                         const ad::Tensor& targets);

// Mean per-image total variation of a (B,C,H,W) batch, graph-recorded.
ad::Tensor batch_tv_term(const ad::Tensor& batch);

struct LossBreakdown {
  ad::Tensor sim;
  ad::Tensor flow;  // undefined when the flow weight is 0
  ad::Tensor tv;    // undefined when the smoothness weight is 0
  ad::Tensor total;
};

// sim + lambda*flow_reg(x_hat at iteration i) + sigma_tv*TV(x_hat).
// `flow` may be null when cfg.lambda == 0; with both weights zero the
// total aliases the matching loss exactly.
LossBreakdown loss_breakdown(const nn::ClassifierSpec& spec, const ad::ParamSet& w_hat,
                             const ad::Tensor& delta_w, const ad::Tensor& x_hat,
                             const std::vector<int>& labels, long iteration,
                             const nn::FlowModel* flow, const AttackConfig& cfg);
ad::Tensor total_loss(const nn::ClassifierSpec& spec, const ad::ParamSet& w_hat,
                      const ad::Tensor& delta_w, const ad::Tensor& x_hat,
                      const std::vector<int>& labels, long iteration,
                      const nn::FlowModel* flow, const AttackConfig& cfg);

// Joint Adam optimization of the dummy batch and the interpolation
// coefficient against the observed update. `labels` sizes the batch and,
// when cfg.labels_known, feeds the optimizer. Ground truth never reaches
// the optimizer; it is only scored against the final images.
ReconstructionResult run_attack(const fl::ClientUpdate& update, const nn::FlowModel* flow,
                                const AttackConfig& cfg, const std::vector<int>& labels,
                                const std::vector<ad::Tensor>& ground_truth = {});

// Baseline with the evaluation point frozen at w0 (alpha pinned to 1);
// only the images are optimized.
ReconstructionResult naive_attack(const fl::ClientUpdate& update, const nn::FlowModel* flow,
                                  const AttackConfig& cfg, const std::vector<int>& labels,
                                  const std::vector<ad::Tensor>& ground_truth = {});

// Minimum-total-MSE bijection from targets to reconstructions: exact
// search for up to 8 images, greedy beyond. Returns the recon index
// chosen for each target.
std::vector<std::size_t> match_reconstructions(const std::vector<ad::Tensor>& recons,
                                               const std::vector<ad::Tensor>& targets);

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace);
void write_attack_summary(const std::string& path, const ReconstructionResult& result);

}  // namespace flowleak::attack
