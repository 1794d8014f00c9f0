#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowleak/ad/tensor.hpp"
#include "flowleak/nn/flownet.hpp"

namespace flowleak::flow {

// The vector-field model lives on [-1,1]-centered data; images in [0,1] are
// mapped with 2x-1 on the way in and (x+1)/2 on the way out. to_model_range
// is differentiable when x is on a graph.
ad::Tensor to_model_range(const ad::Tensor& x);
ad::Tensor from_model_range(const ad::Tensor& x);

struct FlowTrainConfig {
  long steps = 2000;
  int batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::string dataset_id;

  void validate() const;
};

struct FlowTrainResult {
  nn::FlowModel model;
  std::vector<double> losses;  // one entry per step
};

// Mean squared residual between the field at blended points and the straight
// transport direction: rows of x1m (model range) and x0 are paired with ts.
// Differentiable with respect to whatever is on the active graph (training
// watches params).
ad::Tensor fm_step_loss(const nn::FlowNetSpec& spec, const ad::ParamSet& params,
                        const ad::Tensor& x1m_rows, const ad::Tensor& x0_rows,
                        const std::vector<double>& ts);

// Trains a field to carry unit-Gaussian draws onto the dataset along straight
// paths. Images may be any shape with numel == spec.dim, values in [0,1].
// A non-finite loss raises ValueError naming the step.
FlowTrainResult fm_train(const nn::FlowNetSpec& spec, const std::vector<ad::Tensor>& images,
                         const FlowTrainConfig& cfg);

// Explicit Euler integration of the field from unit-Gaussian starting points,
// n rows at a time, k_ode steps of size 1/k_ode. States are model-range;
// fm_sample maps the terminal states back to image range (unclamped).
ad::Tensor fm_sample_states(const nn::FlowModel& model, int n, int k_ode, std::uint64_t seed);
ad::Tensor fm_sample(const nn::FlowModel& model, int n, int k_ode, std::uint64_t seed);

struct MsfProbeResult {
  std::vector<double> levels;  // noise blend weights, must include 0 and 1
  std::vector<double> times;
  std::vector<std::vector<double>> raw;         // [level][time]
  std::vector<std::vector<double>> normalized;  // raw / raw at level 1, same t
};

// Mean squared field magnitude on noise-corrupted data: each image (mapped to
// model range) is blended with a unit-Gaussian draw, x_p = (1-p)x + p*eps,
// sharing eps across levels so curves are comparable. Raising the blend
// weight moves points off the data; the probe reports how strongly the field
// responds. Errors when the level-1 row is zero (normalization undefined).
MsfProbeResult msf_probe(const nn::FlowModel& model, const std::vector<ad::Tensor>& images,
                         const std::vector<double>& levels, const std::vector<double>& times,
                         std::uint64_t seed);

void write_msf_csv(const std::string& path, const MsfProbeResult& result);

// i/k with bounds checking: 0 <= i <= k, k >= 1.
double pseudo_time(long i, long k);

// Mean squared field magnitude at the iteration-scheduled time, taking x in
// image range [0,1] (any shape with numel divisible by model dim).
// Differentiable with respect to x.
ad::Tensor flow_reg(const nn::FlowModel& model, const ad::Tensor& x, long i, long k);

struct DescentProbeResult {
  double msf_before = 0.0;
  double msf_after = 0.0;
  double mse_before = 0.0;
  double mse_after = 0.0;
};

// Blends an image with noise, then runs plain gradient descent on the field
// magnitude alone. flow_descent_probe sweeps the time like the attack
// regularizer does (t_i = i/steps); flow_descent_probe_at holds it fixed.
// Both report the mean squared field magnitude averaged over the standard
// probe times {0, 0.25, 0.5, 0.75, 1} plus pixel MSE to the clean image,
// before and after.
DescentProbeResult flow_descent_probe(const nn::FlowModel& model, const ad::Tensor& image,
                                      double blend, int steps, double lr, std::uint64_t seed);
DescentProbeResult flow_descent_probe_at(const nn::FlowModel& model, const ad::Tensor& image,
                                         double blend, int steps, double lr, double t,
                                         std::uint64_t seed);

// Max ratio of field change to input change over random short displacements
// around the given images (model range), at time t.
double flow_lipschitz_estimate(const nn::FlowModel& model, const std::vector<ad::Tensor>& images,
                               int pairs, double max_dist, double t, std::uint64_t seed);

}  // namespace flowleak::flow
