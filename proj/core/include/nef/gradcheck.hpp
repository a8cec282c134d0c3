#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nef/errors.hpp"
#include "nef/tensor.hpp"

namespace nef {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::int64_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// Compares analytic gradients against central finite differences, always in
// 64-bit. `objective` must be a pure function of the parameter list (fix any
// noise before calling). Step size is relative: h = h_rel * max(1, |theta|).
// The relative error for one entry is |ad - fd| / max(|ad|, |fd|, floor).
inline GradCheckReport grad_check(
    const std::function<double(const std::vector<Tensor<double>>&)>& objective,
    const std::function<std::vector<Tensor<double>>(const std::vector<Tensor<double>>&)>&
        analytic_grad,
    std::vector<Tensor<double>> params, double h_rel = 1e-5, double floor = 1e-6) {
  std::vector<Tensor<double>> grads = analytic_grad(params);
  if (grads.size() != params.size())
    throw DimensionError("grad_check: gradient count does not match parameter count");
  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!grads[p].same_shape(params[p]))
      throw DimensionError("grad_check: gradient shape mismatch at parameter " +
                           std::to_string(p));
    for (std::int64_t i = 0; i < params[p].size(); ++i) {
      double theta = params[p].data[static_cast<std::size_t>(i)];
      double h = h_rel * std::max(1.0, std::abs(theta));
      params[p].data[static_cast<std::size_t>(i)] = theta + h;
      double f_plus = objective(params);
      params[p].data[static_cast<std::size_t>(i)] = theta - h;
      double f_minus = objective(params);
      params[p].data[static_cast<std::size_t>(i)] = theta;
      if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
        throw NumericError("grad_check: non-finite objective at parameter " +
                           std::to_string(p) + " entry " + std::to_string(i));
      double fd = (f_plus - f_minus) / (2.0 * h);
      double ad = grads[p].data[static_cast<std::size_t>(i)];
      double rel = std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), floor});
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = p;
        report.worst_index = i;
        report.analytic_at_worst = ad;
        report.numeric_at_worst = fd;
      }
    }
  }
  return report;
}

}  // namespace nef
