#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "evacast/tensor.hpp"

namespace evacast {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moment buffers for one parameter; shapes always match the parameter.
struct AdamSlot {
  std::vector<double> m;
  std::vector<double> v;
};

// ADAM with bias correction over a named parameter list. Parameters whose
// gradient is absent or exactly zero are left untouched for that step
// (moments included), so a zero-gradient step is the identity regardless of
// optimizer state.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}

  void add_param(std::string name, Tensor param) {
    if (!param.requires_grad())
      throw std::logic_error("adam: parameter '" + name + "' does not require grad");
    slots_.push_back(AdamSlot{std::vector<double>(param.size(), 0.0),
                              std::vector<double>(param.size(), 0.0)});
    params_.emplace_back(std::move(name), std::move(param));
  }

  void add_params(const std::vector<std::pair<std::string, Tensor>>& named) {
    for (const auto& [name, t] : named) add_param(name, t);
  }

  std::size_t step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }
  std::size_t param_count() const { return params_.size(); }
  const std::pair<std::string, Tensor>& param(std::size_t i) const { return params_[i]; }
  const AdamSlot& slot(std::size_t i) const { return slots_[i]; }

  void restore_state(std::size_t step, std::vector<AdamSlot> slots) {
    if (slots.size() != params_.size())
      throw std::invalid_argument("adam: restored state has wrong parameter count");
    for (std::size_t i = 0; i < slots.size(); ++i)
      if (slots[i].m.size() != params_[i].second.size() ||
          slots[i].v.size() != params_[i].second.size())
        throw std::invalid_argument("adam: restored moments do not match parameter '" +
                                    params_[i].first + "'");
    step_ = step;
    slots_ = std::move(slots);
  }

  void zero_grad() {
    for (auto& [name, p] : params_) p.zero_grad();
  }

  void step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& [name, p] = params_[i];
      if (!p.has_grad()) continue;
      const std::vector<double>& g = p.grad();
      bool all_zero = true;
      for (const double gv : g) {
        if (std::isnan(gv) || std::isinf(gv))
          throw std::runtime_error("adam: non-finite gradient for parameter '" + name + "'");
        if (gv != 0.0) all_zero = false;
      }
      if (all_zero) continue;
      AdamSlot& s = slots_[i];
      std::vector<double>& w = p.mutable_values();
      for (std::size_t k = 0; k < w.size(); ++k) {
        s.m[k] = cfg_.beta1 * s.m[k] + (1.0 - cfg_.beta1) * g[k];
        s.v[k] = cfg_.beta2 * s.v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
        const double mhat = s.m[k] / bc1;
        const double vhat = s.v[k] / bc2;
        w[k] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::size_t step_ = 0;
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<AdamSlot> slots_;
};

}  // namespace evacast
