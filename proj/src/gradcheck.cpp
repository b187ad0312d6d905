#include "sum/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "sum/errors.hpp"

namespace sum {

Vector finite_difference_gradient(const ModelInterface& model, const Slice& x,
                                  double y, const Vector& theta,
                                  double step_scale) {
    Vector grad(theta.size());
    Vector probe = theta;
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
        const double h = step_scale * (1.0 + std::abs(theta[j]));
        const double saved = theta[j];
        probe[j] = saved + h;
        const double up = model.loss(x, y, probe);
        probe[j] = saved - h;
        const double down = model.loss(x, y, probe);
        probe[j] = saved;
        grad[j] = (up - down) / (2.0 * h);
    }
    return grad;
}

GradCheckResult check_gradient(const ModelInterface& model, const Slice& x,
                               double y, const Vector& theta, double rel_tol,
                               double step_scale, double floor) {
    const Vector analytic = model.loss_grad(x, y, theta);
    const Vector fd = finite_difference_gradient(model, x, y, theta, step_scale);
    if (analytic.size() != fd.size()) {
        throw ShapeError("gradcheck", "gradient length does not match parameter length");
    }
    const auto schema = model.schema();

    GradCheckResult result;
    result.ok = true;
    for (std::size_t b = 0; b < schema->block_count(); ++b) {
        const auto& spec = schema->block(b);
        double diff = 0.0, scale = 0.0;
        for (std::size_t j = spec.offset; j < spec.offset + spec.size(); ++j) {
            const auto i = static_cast<Eigen::Index>(j);
            diff = std::max(diff, std::abs(analytic[i] - fd[i]));
            scale = std::max({scale, std::abs(analytic[i]), std::abs(fd[i])});
        }
        const double rel = diff / std::max(scale, floor);
        if (rel > result.max_rel_err) {
            result.max_rel_err = rel;
            result.worst_block = spec.name;
        }
        if (rel > rel_tol) result.ok = false;
    }
    return result;
}

}  // namespace sum
