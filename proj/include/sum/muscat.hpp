#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sum/model.hpp"
#include "sum/tensor.hpp"
#include "sum/trainer.hpp"

namespace sum {

/// Problem dimensions and penalty weights of the multi-scale ensemble
/// model. T is the temporal-factor row count and is used only in
/// TemporalRetained mode.
struct MuscatHyper {
    double lambda_cp = 0.0;     // weight of the per-slice CP-fit penalty
    double beta_simplex = 0.0;  // weight of the squared-scale-weight simplex penalty
    std::size_t K = 1;          // latent rank
    std::size_t L = 1;          // number of scales
    std::size_t N = 1;          // predictor variables per scale
    std::size_t T = 1;          // temporal rows (TemporalRetained only)
    DegenerationMode mode = DegenerationMode::FullDegenerate;

    void validate() const;
};

/// Full trainable parameter bundle: degenerate CP factors (a, b or B,
/// C^(1..L)), scale weights k (pre-squaring; the effective weight of
/// scale l is k_l^2), and per-scale spatial/temporal prediction weights
/// (each N x K; column k belongs to latent factor k).
struct MuscatParams {
    DegenerateCPFactors factors;
    Vector k;                          // length L
    std::vector<Matrix> w_spatial;     // L entries, N x K
    std::vector<Matrix> v_temporal;    // L entries, N x K

    DegenerationMode mode() const { return factors.mode; }
    void validate(const MuscatHyper& hyper) const;

    /// Zero-valued bundle with the shapes implied by hyper.
    static MuscatParams zeros(const MuscatHyper& hyper);
};

/// Parameter block layout: (a, b-or-B, C^(1)..C^(L), k, W^(1)..W^(L),
/// V^(1)..V^(L)), matrices row-major.
std::shared_ptr<const ParamSchema> muscat_schema(const MuscatHyper& hyper);

Vector muscat_pack(const MuscatParams& params, const MuscatHyper& hyper);
MuscatParams muscat_unpack(const Vector& flat, const MuscatHyper& hyper);

/// Prediction: sum over scales of k_l^2 * x^(l)' [W^(l) a + V^(l) b_t],
/// where b_t is the degenerate temporal vector b (FullDegenerate) or row
/// t of B (TemporalRetained).
double muscat_predict(const std::vector<Vector>& x_scales, std::size_t t,
                      const MuscatParams& params);

/// Loss: 0.5 (yhat - y)^2
///       + (lambda_cp / 2) * sum_l |x^(l) - degenerate reconstruction|^2
///       + beta_simplex * (1 - sum_l k_l^2)^2.
double muscat_loss(const std::vector<Vector>& x_scales, std::size_t t, double y,
                   const MuscatParams& params, const MuscatHyper& hyper);

/// Analytic gradient of muscat_loss with respect to every block. In
/// TemporalRetained mode only row t of B receives gradient.
MuscatParams muscat_grad(const std::vector<Vector>& x_scales, std::size_t t,
                         double y, const MuscatParams& params,
                         const MuscatHyper& hyper);

struct ScaleWeights {
    Vector alpha;  // k_l^2 per scale
    double total = 0.0;
};

/// Reporting utility: the effective scale weights k_l^2 and their sum.
/// The simplex condition (sum == 1) is encouraged by the beta penalty but
/// never enforced.
ScaleWeights effective_scale_weights(const MuscatParams& params);

/// Ablation preset: alpha = 0 (no inner split) and lambda_graph = 0
/// reduce the general-training loop to plain joint SGD over tasks.
GeneralTrainConfig baseline_joint_config();

/// ModelInterface adapter over the flat parameter layout.
/// init_params draws N(0, 0.1) everywhere, then sets every k_l to
/// 1/sqrt(L) so the simplex penalty starts at zero.
class MuscatModel final : public ModelInterface {
public:
    explicit MuscatModel(MuscatHyper hyper);

    const MuscatHyper& hyper() const { return hyper_; }
    std::shared_ptr<const ParamSchema> schema() const override { return schema_; }

    double predict(const Slice& x, const Vector& theta) const override;
    double loss(const Slice& x, double y, const Vector& theta) const override;
    Vector loss_grad(const Slice& x, double y, const Vector& theta) const override;
    Vector init_params(Rng& rng) const override;

private:
    MuscatHyper hyper_;
    std::shared_ptr<const ParamSchema> schema_;
};

/// Affine model over the concatenated scale slices:
/// yhat = sum_l w^(l)' x^(l) + bias, with squared-error loss. Supplies an
/// analytic Hessian-vector product (the loss is quadratic in theta).
class LinearBaselineModel final : public ModelInterface {
public:
    LinearBaselineModel(std::size_t n, std::size_t l);

    std::shared_ptr<const ParamSchema> schema() const override { return schema_; }

    double predict(const Slice& x, const Vector& theta) const override;
    double loss(const Slice& x, double y, const Vector& theta) const override;
    Vector loss_grad(const Slice& x, double y, const Vector& theta) const override;
    bool has_analytic_hvp() const override { return true; }
    Vector hessian_vector(const Slice& x, double y, const Vector& theta,
                          const Vector& v) const override;

private:
    std::size_t n_;
    std::size_t l_;
    std::shared_ptr<const ParamSchema> schema_;
};

/// Named model registry: "sum-muscat" (FullDegenerate), "sum-muscat-temporal"
/// (TemporalRetained), "linear-baseline". K, lambda_cp, and beta_simplex
/// apply to the tensor-factor models only.
std::unique_ptr<ModelInterface> make_model(const std::string& name, std::size_t n,
                                           std::size_t l, std::size_t t,
                                           std::size_t k, double lambda_cp,
                                           double beta_simplex);

}  // namespace sum
