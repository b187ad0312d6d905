#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sum/linalg.hpp"
#include "sum/param_vector.hpp"
#include "sum/rng.hpp"

namespace sum {

/// One predictor observation: per-scale feature vectors (each length N)
/// and the absolute time index it was taken at. The time index matters
/// only to models that retain a temporal factor matrix.
struct Slice {
    std::vector<Vector> scales;
    std::size_t t = 0;
};

/// One station's time series: predictor slices and scalar responses,
/// index-aligned. Slices carry absolute time indices so a series cut from
/// a test split keeps its position in the full timeline.
struct TaskSeries {
    std::string id;
    std::vector<Slice> x;
    Vector y;

    std::size_t length() const { return x.size(); }
};

/// Differentiable prediction model over a flat parameter vector.
///
/// Contract: loss_grad must match central finite differences of loss
/// within relative 1e-4 (enforced by the gradient-check harness, which
/// every implementation is run through in the test suite). All methods
/// are pure; implementations hold no mutable state.
class ModelInterface {
public:
    virtual ~ModelInterface() = default;

    virtual std::shared_ptr<const ParamSchema> schema() const = 0;

    virtual double predict(const Slice& x, const Vector& theta) const = 0;
    virtual double loss(const Slice& x, double y, const Vector& theta) const = 0;
    virtual Vector loss_grad(const Slice& x, double y, const Vector& theta) const = 0;

    /// Analytic Hessian-vector product of the loss, when the model can
    /// supply one. The trainer falls back to a central-difference product
    /// otherwise.
    virtual bool has_analytic_hvp() const { return false; }
    virtual Vector hessian_vector(const Slice& /*x*/, double /*y*/,
                                  const Vector& /*theta*/, const Vector& /*v*/) const;

    /// Parameter initialization: independent N(0, 0.1) draws per
    /// coordinate. Models may override individual blocks afterwards.
    virtual Vector init_params(Rng& rng) const;
};

}  // namespace sum
