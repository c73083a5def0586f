#include "loralab/grad.hpp"

#include <cmath>

namespace loralab {

GradRecord value_and_grad(const DiffObjective& objective, const Vector& params) {
  if (params.size() != objective.param_count())
    throw ContractViolation("value_and_grad: parameter vector size mismatch");
  GradRecord rec = objective.eval_with_grad(params);
  if (!std::isfinite(rec.value))
    throw NumericalError("value_and_grad: non-finite objective value");
  if (rec.gradient.size() != objective.param_count())
    throw ContractViolation("value_and_grad: gradient length mismatch");
  if (!rec.gradient.allFinite())
    throw NumericalError("value_and_grad: non-finite gradient entry");
  return rec;
}

Vector finite_difference_gradient(const DiffObjective& objective, const Vector& params,
                                  double step) {
  Vector grad(params.size());
  Vector probe = params;
  for (Index i = 0; i < params.size(); ++i) {
    probe[i] = params[i] + step;
    double up = objective.eval(probe);
    probe[i] = params[i] - step;
    double down = objective.eval(probe);
    probe[i] = params[i];
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

double max_relative_gradient_error(const Vector& analytic, const Vector& numeric,
                                   double floor) {
  if (analytic.size() != numeric.size())
    throw ContractViolation("max_relative_gradient_error: size mismatch");
  double worst = 0.0;
  for (Index i = 0; i < analytic.size(); ++i) {
    double scale = std::max(std::abs(analytic[i]), std::abs(numeric[i]));
    if (scale <= floor) continue;
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
  }
  return worst;
}

}  // namespace loralab
