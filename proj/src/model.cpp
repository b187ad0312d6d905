#include "sum/model.hpp"

#include "sum/errors.hpp"

namespace sum {

Vector ModelInterface::hessian_vector(const Slice&, double, const Vector&,
                                      const Vector&) const {
    throw NumericError("model", "model does not provide an analytic Hessian-vector product");
}

Vector ModelInterface::init_params(Rng& rng) const {
    const std::size_t n = schema()->size();
    Vector theta(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        theta[i] = 0.1 * rng.next_normal();
    }
    return theta;
}

}  // namespace sum
