#include "flowleak/opt/optimizer.hpp"

#include <cmath>

#include "flowleak/common/error.hpp"
#include "flowleak/common/format.hpp"

namespace flowleak::opt {

namespace {

void check_pairs(const std::vector<ad::Tensor>& params,
                 const std::vector<ad::Tensor>& grads) {
  if (params.size() != grads.size())
    throw ValueError("optimizer step: " + std::to_string(params.size()) + " params vs " +
                     std::to_string(grads.size()) + " grads");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!params[i].same_shape(grads[i]))
      throw ShapeError("optimizer step: param " + std::to_string(i) + " shape " +
                       shape_str(params[i].shape()) + " vs grad " +
                       shape_str(grads[i].shape()));
}

}  // namespace

Sgd::Sgd(double lr) : lr_(lr) {
  if (lr < 0.0 || !std::isfinite(lr)) throw ValueError("sgd lr must be finite and >= 0");
}

void Sgd::step(std::vector<ad::Tensor>& params, const std::vector<ad::Tensor>& grads) {
  check_pairs(params, grads);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].mutable_data();
    auto g = grads[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr_ * g[j];
  }
}

Adam::Adam(AdamConfig cfg) : cfg_(cfg) {
  if (cfg.lr < 0.0 || !std::isfinite(cfg.lr)) throw ValueError("adam lr must be finite and >= 0");
  if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0) throw ValueError("adam beta1 must be in [0,1)");
  if (cfg.beta2 < 0.0 || cfg.beta2 >= 1.0) throw ValueError("adam beta2 must be in [0,1)");
  if (cfg.eps <= 0.0) throw ValueError("adam eps must be > 0");
}

void Adam::step(std::vector<ad::Tensor>& params, const std::vector<ad::Tensor>& grads) {
  check_pairs(params, grads);
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i].numel(), 0.0);
      v_[i].assign(params[i].numel(), 0.0);
    }
  } else if (m_.size() != params.size()) {
    throw ValueError("adam step: param count changed mid-run");
  }

  ++step_count_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (m_[i].size() != params[i].numel())
      throw ValueError("adam step: param " + std::to_string(i) + " size changed mid-run");
    auto p = params[i].mutable_data();
    auto g = grads[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g[j];
      v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double mhat = m_[i][j] / bc1;
      const double vhat = v_[i][j] / bc2;
      p[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

std::unique_ptr<Optimizer> make_optimizer(const std::string& kind, double lr) {
  if (kind == "sgd") return std::make_unique<Sgd>(lr);
  if (kind == "adam") {
    AdamConfig cfg;
    cfg.lr = lr;
    return std::make_unique<Adam>(cfg);
  }
  throw ValueError("unknown optimizer kind: " + kind);
}

}  // namespace flowleak::opt
