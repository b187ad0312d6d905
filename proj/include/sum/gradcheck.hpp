#pragma once

#include <string>

#include "sum/linalg.hpp"
#include "sum/model.hpp"

namespace sum {

/// Central finite differences of model.loss with per-coordinate step
/// h_j = step_scale * (1 + |theta_j|). Touches only loss(), never
/// loss_grad(), so it is an independent oracle for the analytic gradient.
Vector finite_difference_gradient(const ModelInterface& model, const Slice& x,
                                  double y, const Vector& theta,
                                  double step_scale = 1e-6);

struct GradCheckResult {
    bool ok = false;
    double max_rel_err = 0.0;
    std::string worst_block;
};

/// Compares loss_grad against finite differences block by block. The
/// per-block error is ||analytic - fd||_inf / max(||analytic||_inf,
/// ||fd||_inf, floor); blocks whose scale is below the floor are compared
/// absolutely.
GradCheckResult check_gradient(const ModelInterface& model, const Slice& x,
                               double y, const Vector& theta,
                               double rel_tol = 1e-4, double step_scale = 1e-6,
                               double floor = 1e-6);

}  // namespace sum
