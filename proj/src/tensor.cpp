#include "sum/tensor.hpp"

#include <cmath>
#include <string>

#include "sum/errors.hpp"

namespace sum {

namespace {
constexpr const char* kComponent = "tensor-core";
}

DenseTensor3::DenseTensor3(std::size_t d1, std::size_t d2, std::size_t d3)
    : dims_{d1, d2, d3}, values_(d1 * d2 * d3, 0.0) {}

DenseTensor3::DenseTensor3(std::size_t d1, std::size_t d2, std::size_t d3,
                           std::vector<double> values)
    : dims_{d1, d2, d3}, values_(std::move(values)) {
    if (values_.size() != d1 * d2 * d3) {
        throw ShapeError(kComponent,
                         "tensor value count " + std::to_string(values_.size()) +
                             " does not match dims " + std::to_string(d1) + "x" +
                             std::to_string(d2) + "x" + std::to_string(d3));
    }
}

Vector DenseTensor3::slice1(std::size_t j, std::size_t k) const {
    Vector out(static_cast<Eigen::Index>(dims_[0]));
    for (std::size_t i = 0; i < dims_[0]; ++i) out[static_cast<Eigen::Index>(i)] = at(i, j, k);
    return out;
}

bool DenseTensor3::all_finite() const {
    for (double v : values_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void CPFactors::validate() const {
    const auto k = A.cols();
    if (B.cols() != k) {
        throw ShapeError(kComponent, "temporal factor column count mismatch");
    }
    for (const Matrix& c : C) {
        if (c.cols() != k) {
            throw ShapeError(kComponent, "per-scale factor column count mismatch");
        }
        if (c.rows() != C.front().rows()) {
            throw ShapeError(kComponent, "per-scale factor row count mismatch");
        }
    }
}

void DegenerateCPFactors::validate() const {
    const auto k = a.size();
    if (mode == DegenerationMode::FullDegenerate) {
        if (b.size() != k) {
            throw ShapeError(kComponent, "degenerate temporal factor length mismatch");
        }
    } else {
        if (B.cols() != k) {
            throw ShapeError(kComponent, "retained temporal factor column count mismatch");
        }
    }
    for (const Matrix& c : C) {
        if (c.cols() != k) {
            throw ShapeError(kComponent, "per-scale factor column count mismatch");
        }
        if (c.rows() != C.front().rows()) {
            throw ShapeError(kComponent, "per-scale factor row count mismatch");
        }
    }
}

DenseTensor3 cp_reconstruct(const CPFactors& factors, std::size_t scale) {
    factors.validate();
    if (scale >= factors.scales()) {
        throw ShapeError(kComponent, "scale index " + std::to_string(scale) +
                                         " out of range (L = " +
                                         std::to_string(factors.scales()) + ")");
    }
    const Matrix& C = factors.C[scale];
    const std::size_t N = static_cast<std::size_t>(C.rows());
    const std::size_t T = static_cast<std::size_t>(factors.B.rows());
    const std::size_t S = static_cast<std::size_t>(factors.A.rows());
    const std::size_t K = factors.rank();

    DenseTensor3 out(N, T, S);
    Vector weights(static_cast<Eigen::Index>(K));
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t s = 0; s < S; ++s) {
            weights = factors.A.row(static_cast<Eigen::Index>(s))
                          .cwiseProduct(factors.B.row(static_cast<Eigen::Index>(t)))
                          .transpose();
            const Vector column = C * weights;
            for (std::size_t n = 0; n < N; ++n) {
                out.at(n, t, s) = column[static_cast<Eigen::Index>(n)];
            }
        }
    }
    if (!out.all_finite()) {
        throw NumericError(kComponent, "CP reconstruction produced non-finite entries");
    }
    return out;
}

Vector cp_reconstruct_degenerate(const DegenerateCPFactors& factors,
                                 std::size_t scale, std::size_t t) {
    factors.validate();
    if (scale >= factors.scales()) {
        throw ShapeError(kComponent, "scale index " + std::to_string(scale) +
                                         " out of range (L = " +
                                         std::to_string(factors.scales()) + ")");
    }
    const Matrix& C = factors.C[scale];
    Vector weights;
    if (factors.mode == DegenerationMode::FullDegenerate) {
        weights = factors.a.cwiseProduct(factors.b);
    } else {
        if (t >= static_cast<std::size_t>(factors.B.rows())) {
            throw ShapeError(kComponent, "time index " + std::to_string(t) +
                                             " out of range for retained temporal factor");
        }
        weights = factors.a.cwiseProduct(
            factors.B.row(static_cast<Eigen::Index>(t)).transpose());
    }
    return C * weights;
}

double frobenius_sq_diff(const DenseTensor3& x, const DenseTensor3& y) {
    if (!x.same_dims(y)) {
        throw ShapeError(kComponent, "tensor dims mismatch in frobenius_sq_diff");
    }
    double acc = 0.0;
    const auto& xv = x.values();
    const auto& yv = y.values();
    for (std::size_t i = 0; i < xv.size(); ++i) {
        const double d = xv[i] - yv[i];
        acc += d * d;
    }
    return acc;
}

double frobenius_sq_diff(const Vector& x, const Vector& y) {
    if (x.size() != y.size()) {
        throw ShapeError(kComponent, "vector length mismatch in frobenius_sq_diff");
    }
    return (x - y).squaredNorm();
}

}  // namespace sum
