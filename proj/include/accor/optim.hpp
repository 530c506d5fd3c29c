#pragma once

// First-order optimizers over complex parameters. Real and imaginary parts
// are updated as independent real variables using the split-real gradient.

#include "accor/ctensor.hpp"

#include <cmath>

namespace accor {

enum class OptimizerKind { adam, sgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double momentum = 0.9;
};

class Optimizer {
 public:
  Optimizer(std::vector<Tensor> params, OptimizerConfig config) : params_(std::move(params)), config_(config) {
    for (const auto& p : params_) {
      if (!p.is_leaf() || !p.requires_grad()) throw UsageError("optimizer parameters must be leaves requiring grad");
      first_.emplace_back(p.numel());
      second_.emplace_back(config_.kind == OptimizerKind::adam ? p.numel() : 0);
    }
  }

  const OptimizerConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  std::size_t steps() const { return steps_; }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  /// One update from the gradients currently stored on the parameters.
  void step() {
    ++steps_;
    const double lr = config_.learning_rate;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      const auto g = p.grad();
      if (g.empty()) continue;
      auto w = p.mutable_data();
      auto& m = first_[i];
      if (config_.kind == OptimizerKind::sgd) {
        // v <- mu v + g ; w <- w - lr v
        for (std::size_t k = 0; k < w.size(); ++k) {
          m[k] = config_.momentum * m[k] + g[k];
          w[k] -= lr * m[k];
        }
        continue;
      }
      auto& v = second_[i];
      auto part = [&](double grad, double& mk, double& vk) {
        mk = config_.beta1 * mk + (1.0 - config_.beta1) * grad;
        vk = config_.beta2 * vk + (1.0 - config_.beta2) * grad * grad;
        return lr * (mk / bc1) / (std::sqrt(vk / bc2) + config_.epsilon);
      };
      for (std::size_t k = 0; k < w.size(); ++k) {
        double mr = m[k].real(), mi = m[k].imag(), vr = v[k].real(), vi = v[k].imag();
        const double dr = part(g[k].real(), mr, vr);
        const double di = part(g[k].imag(), mi, vi);
        m[k] = {mr, mi};
        v[k] = {vr, vi};
        w[k] -= Complex{dr, di};
      }
    }
  }

 private:
  std::vector<Tensor> params_;
  OptimizerConfig config_;
  std::vector<std::vector<Complex>> first_, second_;
  std::size_t steps_ = 0;
};

}  // namespace accor
