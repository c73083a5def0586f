#pragma once

#include "loralab/linalg.hpp"

namespace loralab {

struct GradRecord {
  double value = 0.0;
  Vector gradient;
};

/// Contract shared by every differentiable objective in the lab:
/// eval(p) and eval_with_grad(p).value follow the identical computation
/// path, so the two values agree bitwise.
class DiffObjective {
 public:
  virtual ~DiffObjective() = default;
  virtual Index param_count() const = 0;
  virtual double eval(const Vector& params) const = 0;
  virtual GradRecord eval_with_grad(const Vector& params) const = 0;
};

/// Evaluates the objective and its gradient, validating finiteness of both.
GradRecord value_and_grad(const DiffObjective& objective, const Vector& params);

/// Central differences over eval() only; the comparison baseline for
/// gradient verification.
Vector finite_difference_gradient(const DiffObjective& objective, const Vector& params,
                                  double step = 1e-4);

/// Worst componentwise relative error between two gradients, ignoring
/// components where both magnitudes are at or below `floor`.
double max_relative_gradient_error(const Vector& analytic, const Vector& numeric,
                                   double floor = 1e-8);

}  // namespace loralab
