#pragma once

#include <memory>
#include <string>
#include <vector>

#include "flowleak/ad/tensor.hpp"

namespace flowleak::opt {

// First-order optimizers over lists of parameter tensors. step() writes the
// updated values into the parameter buffers in place; gradients are read-only
// and must match the parameters pairwise in count and shape. Callers pass
// plain (non-recorded) tensors; stepping is never part of a gradient graph.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(std::vector<ad::Tensor>& params,
                    const std::vector<ad::Tensor>& grads) = 0;
  virtual double lr() const = 0;
};

class Sgd final : public Optimizer {
 public:
  explicit Sgd(double lr);
  void step(std::vector<ad::Tensor>& params,
            const std::vector<ad::Tensor>& grads) override;
  double lr() const override { return lr_; }

 private:
  double lr_;
};

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam final : public Optimizer {
 public:
  explicit Adam(AdamConfig cfg);
  explicit Adam(double lr) : Adam(AdamConfig{lr, 0.9, 0.999, 1e-8}) {}
  void step(std::vector<ad::Tensor>& params,
            const std::vector<ad::Tensor>& grads) override;
  double lr() const override { return cfg_.lr; }

 private:
  AdamConfig cfg_;
  long step_count_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

// kind is "sgd" or "adam" (Adam with default moments and the given lr).
std::unique_ptr<Optimizer> make_optimizer(const std::string& kind, double lr);

}  // namespace flowleak::opt
