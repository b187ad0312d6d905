#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "sum/graph.hpp"
#include "sum/model.hpp"

namespace sum {

/// Distribution of the random time index drawn per task per outer
/// iteration. GeometricRecency(rho) puts probability proportional to
/// rho^(T-1-t) on index t, so recent times are more likely.
struct TimeDist {
    enum class Kind { Uniform, GeometricRecency };
    Kind kind = Kind::Uniform;
    double rho = 0.5;  // GeometricRecency only; must be in (0, 1)

    static TimeDist uniform() { return {}; }
    static TimeDist geometric_recency(double rho) {
        return {Kind::GeometricRecency, rho};
    }
};

/// How the outer gradient treats the dependence of the per-task split
/// parameters on the shared point. FirstOrder approximates d(theta_i)/
/// d(theta*) by the identity; FullSecondOrder applies (I - alpha H_i)
/// via Hessian-vector products.
enum class MetaGrad { FirstOrder, FullSecondOrder };

struct GeneralTrainConfig {
    double alpha = 0.01;         // inner split step size
    double beta_outer = 0.01;    // outer update step size
    double lambda_graph = 0.0;   // Laplacian regularizer weight
    std::optional<double> omega; // kernel bandwidth; empty -> median heuristic
    TimeDist time_dist;
    MetaGrad meta_grad = MetaGrad::FirstOrder;
    std::size_t max_outer_iters = 1000;
    double converge_tol = 1e-6;
    std::uint64_t seed = 0;
    std::size_t batch = 1;       // samples per task per outer iteration
    std::size_t threads = 1;

    void validate() const;
};

struct TaskTrainConfig {
    double gamma = 0.01;      // fine-tune step size
    std::size_t x_updates = 1;  // gradient descents per time step
    std::size_t ft_len = 1;     // fine-tuning window length

    void validate() const;
};

struct TrainState {
    Vector theta_star;
    std::size_t iter = 0;
    std::vector<double> loss_history;  // summed task loss + regularizer, per iteration
};

struct TrainReport {
    std::size_t iterations = 0;
    double final_loss = 0.0;  // last objective value; 0.0 when no iteration ran
    double wall_seconds = 0.0;
    bool converged = false;
};

/// Draws a time index in [0, T) from the configured distribution.
std::size_t sample_time_index(const TimeDist& dist, std::size_t T, Rng& rng);

/// One-step split from the shared point:
/// theta_i = theta_star - alpha * loss_grad(x, y, theta_star).
Vector inner_update(const Vector& theta_star, const ModelInterface& model,
                    const Slice& x, double y, double alpha);

/// One outer iteration: per-task inner splits, task-parameter matrix,
/// Laplacian-regularized total gradient, and the shared-point update.
/// Appends the objective value to state.loss_history and bumps state.iter.
///
/// Per-task work is keyed by (cfg.seed, task index, state.iter) and reduced
/// in ascending task order, so the result is bit-identical for any thread
/// count. The regularizer enters the objective once per outer step.
void outer_step(TrainState& state, const ModelInterface& model,
                std::span<const TaskSeries> tasks, const TaskGraph& graph,
                const GeneralTrainConfig& cfg);

/// Runs outer steps until the relative objective change stays below
/// converge_tol for 5 consecutive iterations or max_outer_iters is hit.
/// Throws DivergenceError when the objective exceeds 1e12 or goes
/// non-finite.
std::pair<ParamVector, TrainReport> train_general(std::span<const TaskSeries> tasks,
                                                  const ModelInterface& model,
                                                  const TaskGraph& graph,
                                                  const GeneralTrainConfig& cfg);

/// Gradient descent over the window [begin, end) of one task's series:
/// for each time step, x_updates descents of step gamma. Returns the
/// adjusted parameters; the input is not modified.
Vector fine_tune_window(const Vector& theta, const ModelInterface& model,
                        const TaskSeries& task, std::size_t begin, std::size_t end,
                        const TaskTrainConfig& cfg);

struct FineTuneResult {
    Vector theta;
    double prediction = 0.0;
};

/// Task-specific phase: fine-tunes on the ft_len steps immediately before
/// t0, then predicts at t0. Requires t0 >= ft_len and t0 < series length.
FineTuneResult train_task_specific(const Vector& theta_star,
                                   const ModelInterface& model,
                                   const TaskSeries& task, std::size_t t0,
                                   const TaskTrainConfig& cfg);

}  // namespace sum
