#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "sum/linalg.hpp"

namespace sum {

/// Dense rank-3 tensor. Storage is row-major with the first dimension
/// slowest: entry (i, j, k) lives at ((i * d2) + j) * d3 + k.
///
/// Predictor tensors use the fixed axis order (N, T, S): slice
/// (:, t, s) is the predictor vector of task s at time t.
class DenseTensor3 {
public:
    DenseTensor3() = default;
    DenseTensor3(std::size_t d1, std::size_t d2, std::size_t d3);
    DenseTensor3(std::size_t d1, std::size_t d2, std::size_t d3,
                 std::vector<double> values);

    std::size_t d1() const noexcept { return dims_[0]; }
    std::size_t d2() const noexcept { return dims_[1]; }
    std::size_t d3() const noexcept { return dims_[2]; }
    std::array<std::size_t, 3> dims() const noexcept { return dims_; }
    std::size_t size() const noexcept { return values_.size(); }

    double& at(std::size_t i, std::size_t j, std::size_t k) {
        return values_[(i * dims_[1] + j) * dims_[2] + k];
    }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return values_[(i * dims_[1] + j) * dims_[2] + k];
    }

    const std::vector<double>& values() const noexcept { return values_; }
    std::vector<double>& values() noexcept { return values_; }

    /// Copy of slice (:, j, k) along the first axis.
    Vector slice1(std::size_t j, std::size_t k) const;

    bool all_finite() const;
    bool same_dims(const DenseTensor3& other) const { return dims_ == other.dims_; }

private:
    std::array<std::size_t, 3> dims_{0, 0, 0};
    std::vector<double> values_;
};

/// Full CP factor set: spatial A (S x K), temporal B (T x K), and one
/// per-scale C^(l) (N x K). All matrices share column count K.
struct CPFactors {
    Matrix A;                // S x K
    Matrix B;                // T x K
    std::vector<Matrix> C;   // L entries, each N x K

    std::size_t rank() const { return static_cast<std::size_t>(A.cols()); }
    std::size_t scales() const { return C.size(); }
    void validate() const;
};

enum class DegenerationMode {
    FullDegenerate,    // both A and B collapsed to vectors a, b
    TemporalRetained,  // only A collapsed; B kept as a T x K matrix
};

/// Degenerate CP factors: the spatial factor is always a vector a of
/// length K; the temporal factor is either a vector b (FullDegenerate,
/// field `b`) or a T x K matrix (TemporalRetained, field `B`). Only the
/// field selected by `mode` participates in any computation.
struct DegenerateCPFactors {
    DegenerationMode mode = DegenerationMode::FullDegenerate;
    Vector a;                // K
    Vector b;                // K, FullDegenerate only
    Matrix B;                // T x K, TemporalRetained only
    std::vector<Matrix> C;   // L entries, each N x K

    std::size_t rank() const { return static_cast<std::size_t>(a.size()); }
    std::size_t scales() const { return C.size(); }
    void validate() const;
};

/// CP reconstruction of scale `l`: tensor (N, T, S) with entry
/// (n, t, s) = sum_k A(s,k) * B(t,k) * C^(l)(n,k).
DenseTensor3 cp_reconstruct(const CPFactors& factors, std::size_t scale);

/// Degenerate reconstruction of slice (:, t, s) for scale `l`.
/// FullDegenerate: sum_k a_k * b_k * C^(l)(:,k), the same vector for every
/// (t, s); `t` is ignored. TemporalRetained: sum_k a_k * B(t,k) * C^(l)(:,k).
Vector cp_reconstruct_degenerate(const DegenerateCPFactors& factors,
                                 std::size_t scale, std::size_t t);

/// Sum of squared entrywise differences.
double frobenius_sq_diff(const DenseTensor3& x, const DenseTensor3& y);
double frobenius_sq_diff(const Vector& x, const Vector& y);

}  // namespace sum
