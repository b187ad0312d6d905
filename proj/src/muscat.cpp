#include "sum/muscat.hpp"

#include <cmath>

#include "sum/errors.hpp"

namespace sum {

namespace {

constexpr const char* kComponent = "muscat-model";

void check_slices(const std::vector<Vector>& x_scales, const MuscatHyper& hyper) {
    if (x_scales.size() != hyper.L) {
        throw ShapeError(kComponent, "expected " + std::to_string(hyper.L) +
                                         " scale slices, got " +
                                         std::to_string(x_scales.size()));
    }
    for (const Vector& x : x_scales) {
        if (static_cast<std::size_t>(x.size()) != hyper.N) {
            throw ShapeError(kComponent, "scale slice length " + std::to_string(x.size()) +
                                             " does not match N = " + std::to_string(hyper.N));
        }
    }
}

/// Active temporal vector: b in FullDegenerate mode, row t of B otherwise.
Vector temporal_vector(const MuscatParams& params, std::size_t t) {
    if (params.mode() == DegenerationMode::FullDegenerate) {
        return params.factors.b;
    }
    if (t >= static_cast<std::size_t>(params.factors.B.rows())) {
        throw ShapeError(kComponent, "time index " + std::to_string(t) +
                                         " out of range for temporal factor with " +
                                         std::to_string(params.factors.B.rows()) + " rows");
    }
    return params.factors.B.row(static_cast<Eigen::Index>(t)).transpose();
}

}  // namespace

void MuscatHyper::validate() const {
    if (K == 0 || L == 0 || N == 0) {
        throw ParamError(kComponent, "K, L, and N must all be >= 1");
    }
    if (mode == DegenerationMode::TemporalRetained && T == 0) {
        throw ParamError(kComponent, "T must be >= 1 in TemporalRetained mode");
    }
    if (lambda_cp < 0.0 || beta_simplex < 0.0) {
        throw ParamError(kComponent, "penalty weights must be >= 0");
    }
}

void MuscatParams::validate(const MuscatHyper& hyper) const {
    const auto K = static_cast<Eigen::Index>(hyper.K);
    const auto N = static_cast<Eigen::Index>(hyper.N);
    if (factors.mode != hyper.mode) {
        throw ShapeError(kComponent, "parameter degeneration mode does not match hyper");
    }
    if (factors.a.size() != K) {
        throw ShapeError(kComponent, "factor a has wrong length");
    }
    if (hyper.mode == DegenerationMode::FullDegenerate) {
        if (factors.b.size() != K) {
            throw ShapeError(kComponent, "factor b has wrong length");
        }
    } else if (factors.B.rows() != static_cast<Eigen::Index>(hyper.T) ||
               factors.B.cols() != K) {
        throw ShapeError(kComponent, "factor B has wrong shape");
    }
    if (factors.C.size() != hyper.L || w_spatial.size() != hyper.L ||
        v_temporal.size() != hyper.L) {
        throw ShapeError(kComponent, "per-scale block count does not match L");
    }
    for (std::size_t l = 0; l < hyper.L; ++l) {
        if (factors.C[l].rows() != N || factors.C[l].cols() != K ||
            w_spatial[l].rows() != N || w_spatial[l].cols() != K ||
            v_temporal[l].rows() != N || v_temporal[l].cols() != K) {
            throw ShapeError(kComponent, "per-scale block shape mismatch at scale " +
                                             std::to_string(l));
        }
    }
    if (k.size() != static_cast<Eigen::Index>(hyper.L)) {
        throw ShapeError(kComponent, "scale weight vector has wrong length");
    }
}

MuscatParams MuscatParams::zeros(const MuscatHyper& hyper) {
    hyper.validate();
    MuscatParams p;
    p.factors.mode = hyper.mode;
    p.factors.a = Vector::Zero(static_cast<Eigen::Index>(hyper.K));
    if (hyper.mode == DegenerationMode::FullDegenerate) {
        p.factors.b = Vector::Zero(static_cast<Eigen::Index>(hyper.K));
    } else {
        p.factors.B = Matrix::Zero(static_cast<Eigen::Index>(hyper.T),
                                   static_cast<Eigen::Index>(hyper.K));
    }
    p.factors.C.assign(hyper.L, Matrix::Zero(static_cast<Eigen::Index>(hyper.N),
                                             static_cast<Eigen::Index>(hyper.K)));
    p.k = Vector::Zero(static_cast<Eigen::Index>(hyper.L));
    p.w_spatial.assign(hyper.L, Matrix::Zero(static_cast<Eigen::Index>(hyper.N),
                                             static_cast<Eigen::Index>(hyper.K)));
    p.v_temporal = p.w_spatial;
    return p;
}

std::shared_ptr<const ParamSchema> muscat_schema(const MuscatHyper& hyper) {
    hyper.validate();
    auto schema = std::make_shared<ParamSchema>();
    schema->add("a", hyper.K);
    if (hyper.mode == DegenerationMode::FullDegenerate) {
        schema->add("b", hyper.K);
    } else {
        schema->add("B", hyper.T, hyper.K);
    }
    for (std::size_t l = 0; l < hyper.L; ++l) {
        schema->add("C" + std::to_string(l + 1), hyper.N, hyper.K);
    }
    schema->add("k", hyper.L);
    for (std::size_t l = 0; l < hyper.L; ++l) {
        schema->add("W" + std::to_string(l + 1), hyper.N, hyper.K);
    }
    for (std::size_t l = 0; l < hyper.L; ++l) {
        schema->add("V" + std::to_string(l + 1), hyper.N, hyper.K);
    }
    return schema;
}

Vector muscat_pack(const MuscatParams& params, const MuscatHyper& hyper) {
    params.validate(hyper);
    std::vector<Matrix> blocks;
    blocks.reserve(2 + 3 * hyper.L + 1);
    blocks.emplace_back(params.factors.a);
    if (hyper.mode == DegenerationMode::FullDegenerate) {
        blocks.emplace_back(params.factors.b);
    } else {
        blocks.emplace_back(params.factors.B);
    }
    for (const Matrix& c : params.factors.C) blocks.emplace_back(c);
    blocks.emplace_back(params.k);
    for (const Matrix& w : params.w_spatial) blocks.emplace_back(w);
    for (const Matrix& v : params.v_temporal) blocks.emplace_back(v);
    return vectorize(*muscat_schema(hyper), blocks);
}

MuscatParams muscat_unpack(const Vector& flat, const MuscatHyper& hyper) {
    auto blocks = devectorize(*muscat_schema(hyper), flat);
    MuscatParams p;
    p.factors.mode = hyper.mode;
    std::size_t i = 0;
    p.factors.a = blocks[i++].col(0);
    if (hyper.mode == DegenerationMode::FullDegenerate) {
        p.factors.b = blocks[i++].col(0);
    } else {
        p.factors.B = std::move(blocks[i++]);
    }
    p.factors.C.reserve(hyper.L);
    for (std::size_t l = 0; l < hyper.L; ++l) p.factors.C.push_back(std::move(blocks[i++]));
    p.k = blocks[i++].col(0);
    p.w_spatial.reserve(hyper.L);
    for (std::size_t l = 0; l < hyper.L; ++l) p.w_spatial.push_back(std::move(blocks[i++]));
    p.v_temporal.reserve(hyper.L);
    for (std::size_t l = 0; l < hyper.L; ++l) p.v_temporal.push_back(std::move(blocks[i++]));
    return p;
}

double muscat_predict(const std::vector<Vector>& x_scales, std::size_t t,
                      const MuscatParams& params) {
    const Vector bt = temporal_vector(params, t);
    double yhat = 0.0;
    for (std::size_t l = 0; l < params.factors.C.size(); ++l) {
        if (x_scales.size() <= l ||
            x_scales[l].size() != params.w_spatial[l].rows()) {
            throw ShapeError(kComponent, "predictor slices do not match parameter shapes");
        }
        const Vector ensemble =
            params.w_spatial[l] * params.factors.a + params.v_temporal[l] * bt;
        const double kl = params.k[static_cast<Eigen::Index>(l)];
        yhat += kl * kl * x_scales[l].dot(ensemble);
    }
    return yhat;
}

double muscat_loss(const std::vector<Vector>& x_scales, std::size_t t, double y,
                   const MuscatParams& params, const MuscatHyper& hyper) {
    check_slices(x_scales, hyper);
    params.validate(hyper);
    const double e = muscat_predict(x_scales, t, params) - y;
    double loss = 0.5 * e * e;
    if (hyper.lambda_cp != 0.0) {
        for (std::size_t l = 0; l < hyper.L; ++l) {
            const Vector recon = cp_reconstruct_degenerate(params.factors, l, t);
            loss += 0.5 * hyper.lambda_cp * (x_scales[l] - recon).squaredNorm();
        }
    }
    if (hyper.beta_simplex != 0.0) {
        const double gap = 1.0 - params.k.squaredNorm();
        loss += hyper.beta_simplex * gap * gap;
    }
    return loss;
}

MuscatParams muscat_grad(const std::vector<Vector>& x_scales, std::size_t t,
                         double y, const MuscatParams& params,
                         const MuscatHyper& hyper) {
    check_slices(x_scales, hyper);
    params.validate(hyper);

    const Vector bt = temporal_vector(params, t);
    const Vector& a = params.factors.a;

    MuscatParams grad = MuscatParams::zeros(hyper);
    Vector grad_bt = Vector::Zero(static_cast<Eigen::Index>(hyper.K));

    const double e = muscat_predict(x_scales, t, params) - y;
    const double ksq_gap = 1.0 - params.k.squaredNorm();

    for (std::size_t l = 0; l < hyper.L; ++l) {
        const auto li = static_cast<Eigen::Index>(l);
        const Vector& x = x_scales[l];
        const double kl = params.k[li];
        const double alpha_l = kl * kl;

        const Vector ensemble = params.w_spatial[l] * a + params.v_temporal[l] * bt;

        // Prediction term: 0.5 (yhat - y)^2 with yhat = sum_l k_l^2 x'u_l.
        grad.k[li] = e * 2.0 * kl * x.dot(ensemble);
        grad.w_spatial[l] = (e * alpha_l) * (x * a.transpose());
        grad.v_temporal[l] = (e * alpha_l) * (x * bt.transpose());
        grad.factors.a += (e * alpha_l) * (params.w_spatial[l].transpose() * x);
        grad_bt += (e * alpha_l) * (params.v_temporal[l].transpose() * x);

        // CP-fit term: (lambda/2) |x - C (a .* b_t)|^2.
        if (hyper.lambda_cp != 0.0) {
            const Vector h = a.cwiseProduct(bt);
            const Vector d = x - params.factors.C[l] * h;
            const Vector q = params.factors.C[l].transpose() * d;
            grad.factors.C[l] = (-hyper.lambda_cp) * (d * h.transpose());
            grad.factors.a += (-hyper.lambda_cp) * q.cwiseProduct(bt);
            grad_bt += (-hyper.lambda_cp) * q.cwiseProduct(a);
        }
    }

    // Simplex term: beta (1 - sum k^2)^2.
    if (hyper.beta_simplex != 0.0) {
        grad.k += (-4.0 * hyper.beta_simplex * ksq_gap) * params.k;
    }

    if (hyper.mode == DegenerationMode::FullDegenerate) {
        grad.factors.b = grad_bt;
    } else {
        grad.factors.B.row(static_cast<Eigen::Index>(t)) = grad_bt.transpose();
    }

    // Reject non-finite results with the offending block named.
    const Vector flat = muscat_pack(grad, hyper);
    for (Eigen::Index j = 0; j < flat.size(); ++j) {
        if (!std::isfinite(flat[j])) {
            throw NumericError(kComponent,
                               "non-finite gradient in block '" +
                                   muscat_schema(hyper)->block_of(static_cast<std::size_t>(j)) +
                                   "'");
        }
    }
    return grad;
}

ScaleWeights effective_scale_weights(const MuscatParams& params) {
    ScaleWeights w;
    w.alpha = params.k.cwiseProduct(params.k);
    w.total = w.alpha.sum();
    return w;
}

GeneralTrainConfig baseline_joint_config() {
    GeneralTrainConfig cfg;
    cfg.alpha = 0.0;
    cfg.lambda_graph = 0.0;
    return cfg;
}

MuscatModel::MuscatModel(MuscatHyper hyper) : hyper_(hyper) {
    hyper_.validate();
    schema_ = muscat_schema(hyper_);
}

double MuscatModel::predict(const Slice& x, const Vector& theta) const {
    check_slices(x.scales, hyper_);
    return muscat_predict(x.scales, x.t, muscat_unpack(theta, hyper_));
}

double MuscatModel::loss(const Slice& x, double y, const Vector& theta) const {
    return muscat_loss(x.scales, x.t, y, muscat_unpack(theta, hyper_), hyper_);
}

Vector MuscatModel::loss_grad(const Slice& x, double y, const Vector& theta) const {
    return muscat_pack(muscat_grad(x.scales, x.t, y, muscat_unpack(theta, hyper_), hyper_),
                       hyper_);
}

Vector MuscatModel::init_params(Rng& rng) const {
    Vector theta = ModelInterface::init_params(rng);
    const auto& k_block = schema_->block(schema_->index_of("k"));
    const double kl = 1.0 / std::sqrt(static_cast<double>(hyper_.L));
    for (std::size_t j = 0; j < k_block.size(); ++j) {
        theta[static_cast<Eigen::Index>(k_block.offset + j)] = kl;
    }
    return theta;
}

LinearBaselineModel::LinearBaselineModel(std::size_t n, std::size_t l)
    : n_(n), l_(l) {
    if (n == 0 || l == 0) {
        throw ParamError(kComponent, "linear baseline needs N >= 1 and L >= 1");
    }
    auto schema = std::make_shared<ParamSchema>();
    for (std::size_t i = 0; i < l; ++i) {
        schema->add("w" + std::to_string(i + 1), n);
    }
    schema->add("bias", 1);
    schema_ = std::move(schema);
}

double LinearBaselineModel::predict(const Slice& x, const Vector& theta) const {
    if (x.scales.size() != l_) {
        throw ShapeError(kComponent, "expected " + std::to_string(l_) + " scale slices");
    }
    double yhat = theta[theta.size() - 1];
    for (std::size_t l = 0; l < l_; ++l) {
        if (static_cast<std::size_t>(x.scales[l].size()) != n_) {
            throw ShapeError(kComponent, "scale slice length mismatch");
        }
        yhat += x.scales[l].dot(
            theta.segment(static_cast<Eigen::Index>(l * n_), static_cast<Eigen::Index>(n_)));
    }
    return yhat;
}

double LinearBaselineModel::loss(const Slice& x, double y, const Vector& theta) const {
    const double e = predict(x, theta) - y;
    return e * e;
}

Vector LinearBaselineModel::loss_grad(const Slice& x, double y,
                                      const Vector& theta) const {
    const double e = predict(x, theta) - y;
    Vector grad(theta.size());
    for (std::size_t l = 0; l < l_; ++l) {
        grad.segment(static_cast<Eigen::Index>(l * n_), static_cast<Eigen::Index>(n_)) =
            2.0 * e * x.scales[l];
    }
    grad[grad.size() - 1] = 2.0 * e;
    return grad;
}

Vector LinearBaselineModel::hessian_vector(const Slice& x, double /*y*/,
                                           const Vector& theta,
                                           const Vector& v) const {
    // loss = (z'theta - y)^2 with z = (x^(1), ..., x^(L), 1), so H = 2 z z'.
    Vector z(theta.size());
    for (std::size_t l = 0; l < l_; ++l) {
        z.segment(static_cast<Eigen::Index>(l * n_), static_cast<Eigen::Index>(n_)) =
            x.scales[l];
    }
    z[z.size() - 1] = 1.0;
    return 2.0 * z.dot(v) * z;
}

std::unique_ptr<ModelInterface> make_model(const std::string& name, std::size_t n,
                                           std::size_t l, std::size_t t,
                                           std::size_t k, double lambda_cp,
                                           double beta_simplex) {
    if (name == "sum-muscat" || name == "sum-muscat-temporal") {
        MuscatHyper hyper;
        hyper.N = n;
        hyper.L = l;
        hyper.T = t;
        hyper.K = k;
        hyper.lambda_cp = lambda_cp;
        hyper.beta_simplex = beta_simplex;
        hyper.mode = name == "sum-muscat" ? DegenerationMode::FullDegenerate
                                          : DegenerationMode::TemporalRetained;
        return std::make_unique<MuscatModel>(hyper);
    }
    if (name == "linear-baseline") {
        return std::make_unique<LinearBaselineModel>(n, l);
    }
    throw ValidationError(kComponent, "unknown model '" + name + "'");
}

}  // namespace sum
