#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "evacast/tensor.hpp"

namespace evacast {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
};

// Compares reverse-mode gradients against central finite differences.
// loss_fn must rebuild its computation from the given parameter tensors on
// every call; the checker perturbs parameter values in place.
//
// Relative error per coordinate: |analytic - numeric| /
// max(|analytic|, |numeric|, 1e-8).
inline GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                                  std::vector<std::pair<std::string, Tensor>> params,
                                  double eps = 1e-5) {
  for (auto& [name, p] : params) p.zero_grad();
  Tensor loss = loss_fn();
  if (loss.size() != 1) throw std::logic_error("grad_check: loss must be scalar");
  if (!std::isfinite(loss.value()))
    throw std::runtime_error("grad_check: non-finite loss at the evaluation point");
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& [name, p] : params)
    analytic.push_back(p.has_grad() ? p.grad() : std::vector<double>(p.size(), 0.0));

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& [name, p] = params[pi];
    std::vector<double>& w = p.mutable_values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double orig = w[k];
      w[k] = orig + eps;
      const double fplus = loss_fn().value();
      w[k] = orig - eps;
      const double fminus = loss_fn().value();
      w[k] = orig;
      if (!std::isfinite(fplus) || !std::isfinite(fminus))
        throw std::runtime_error("grad_check: non-finite evaluation near parameter '" + name +
                                 "'");
      const double numeric = (fplus - fminus) / (2.0 * eps);
      const double a = analytic[pi][k];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      const double rel = std::fabs(a - numeric) / denom;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = name;
        report.worst_index = k;
      }
    }
  }
  return report;
}

}  // namespace evacast
