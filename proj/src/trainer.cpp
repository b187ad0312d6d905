#include "sum/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <mutex>
#include <string>
#include <thread>

#include "sum/errors.hpp"

namespace sum {

namespace {

constexpr const char* kComponent = "sum-trainer";

// Stream-family tags; keep initialization draws disjoint from per-task draws.
constexpr std::uint64_t kInitTag = 0x1217a6ULL;
constexpr std::uint64_t kTaskTag = 0x7a58ULL;

void require_finite_grad(const Vector& g, const ParamSchema& schema,
                         const char* where) {
    for (Eigen::Index j = 0; j < g.size(); ++j) {
        if (!std::isfinite(g[j])) {
            throw NumericError(kComponent,
                               std::string(where) + ": non-finite gradient in block '" +
                                   schema.block_of(static_cast<std::size_t>(j)) + "'");
        }
    }
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers, contiguous
/// chunks. fn must only write to its own slot; reductions happen after.
void parallel_for_tasks(std::size_t n, std::size_t threads,
                        const std::function<void(std::size_t)>& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> workers;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t w = 0; w < threads; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        workers.emplace_back([&, begin, end] {
            try {
                for (std::size_t i = begin; i < end; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : workers) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

/// Mean loss gradient over a batch of samples from one task.
Vector mean_loss_grad(const ModelInterface& model, const TaskSeries& task,
                      const std::vector<std::size_t>& times, const Vector& theta) {
    Vector acc = Vector::Zero(theta.size());
    for (std::size_t t : times) acc += model.loss_grad(task.x[t], task.y[static_cast<Eigen::Index>(t)], theta);
    return acc / static_cast<double>(times.size());
}

double mean_loss(const ModelInterface& model, const TaskSeries& task,
                 const std::vector<std::size_t>& times, const Vector& theta) {
    double acc = 0.0;
    for (std::size_t t : times) acc += model.loss(task.x[t], task.y[static_cast<Eigen::Index>(t)], theta);
    return acc / static_cast<double>(times.size());
}

/// Hessian-vector product of the mean task loss at theta, in direction v.
/// Uses the model's analytic product when available, otherwise a central
/// difference of the gradient with step 1e-5 * (1 + |theta|_inf).
Vector hessian_vector_product(const ModelInterface& model, const TaskSeries& task,
                              const std::vector<std::size_t>& times,
                              const Vector& theta, const Vector& v) {
    if (model.has_analytic_hvp()) {
        Vector acc = Vector::Zero(theta.size());
        for (std::size_t t : times) {
            acc += model.hessian_vector(task.x[t], task.y[static_cast<Eigen::Index>(t)], theta, v);
        }
        return acc / static_cast<double>(times.size());
    }
    const double eps = 1e-5 * (1.0 + theta.lpNorm<Eigen::Infinity>());
    const Vector up = mean_loss_grad(model, task, times, theta + eps * v);
    const Vector down = mean_loss_grad(model, task, times, theta - eps * v);
    return (up - down) / (2.0 * eps);
}

}  // namespace

void GeneralTrainConfig::validate() const {
    if (alpha < 0.0 || beta_outer < 0.0) {
        throw ParamError(kComponent, "step sizes alpha and beta_outer must be >= 0");
    }
    if (lambda_graph < 0.0) {
        throw ParamError(kComponent, "lambda_graph must be >= 0");
    }
    if (omega && !(*omega > 0.0)) {
        throw ParamError(kComponent, "omega must be positive when given");
    }
    if (time_dist.kind == TimeDist::Kind::GeometricRecency &&
        !(time_dist.rho > 0.0 && time_dist.rho < 1.0)) {
        throw ParamError(kComponent, "GeometricRecency rho must lie in (0, 1)");
    }
    if (batch == 0) {
        throw ParamError(kComponent, "batch must be >= 1");
    }
    if (!(converge_tol >= 0.0)) {
        throw ParamError(kComponent, "converge_tol must be >= 0");
    }
}

void TaskTrainConfig::validate() const {
    if (gamma < 0.0) {
        throw ParamError(kComponent, "gamma must be >= 0");
    }
}

std::size_t sample_time_index(const TimeDist& dist, std::size_t T, Rng& rng) {
    if (T == 0) {
        throw ParamError(kComponent, "cannot sample a time index from an empty series");
    }
    if (T == 1) {
        rng.next_u64();  // keep stream position independent of T
        return 0;
    }
    if (dist.kind == TimeDist::Kind::Uniform) {
        return rng.next_index(T);
    }
    const double rho = dist.rho;
    // Weight of index t is rho^(T-1-t); walk the CDF from the heaviest
    // (most recent) index down.
    const double total = (1.0 - std::pow(rho, static_cast<double>(T))) / (1.0 - rho);
    const double u = rng.next_double() * total;
    double acc = 0.0;
    double w = 1.0;
    for (std::size_t back = 0; back < T; ++back) {
        acc += w;
        if (u < acc) return T - 1 - back;
        w *= rho;
    }
    return 0;
}

Vector inner_update(const Vector& theta_star, const ModelInterface& model,
                    const Slice& x, double y, double alpha) {
    const Vector g = model.loss_grad(x, y, theta_star);
    require_finite_grad(g, *model.schema(), "inner_update");
    return theta_star - alpha * g;
}

void outer_step(TrainState& state, const ModelInterface& model,
                std::span<const TaskSeries> tasks, const TaskGraph& graph,
                const GeneralTrainConfig& cfg) {
    const std::size_t S = tasks.size();
    if (S != graph.size()) {
        throw ShapeError(kComponent, "task count " + std::to_string(S) +
                                         " does not match graph size " +
                                         std::to_string(graph.size()));
    }
    const auto schema = model.schema();
    const Eigen::Index P = static_cast<Eigen::Index>(schema->size());
    if (state.theta_star.size() != P) {
        throw ShapeError(kComponent, "theta_star length does not match model schema");
    }
    const bool second_order = cfg.meta_grad == MetaGrad::FullSecondOrder;
    const Vector& theta_star = state.theta_star;

    struct TaskSlot {
        std::vector<std::size_t> times;
        Vector theta_i;
        Vector chained_loss_grad;
        double loss = 0.0;
    };
    std::vector<TaskSlot> slots(S);

    parallel_for_tasks(S, cfg.threads, [&](std::size_t i) {
        TaskSlot& slot = slots[i];
        const TaskSeries& task = tasks[i];
        Rng rng(mix_seed(cfg.seed, kTaskTag, i, state.iter));
        slot.times.resize(cfg.batch);
        for (std::size_t b = 0; b < cfg.batch; ++b) {
            slot.times[b] = sample_time_index(cfg.time_dist, task.length(), rng);
        }
        const Vector g0 = mean_loss_grad(model, task, slot.times, theta_star);
        require_finite_grad(g0, *schema, "outer_step(split)");
        slot.theta_i = theta_star - cfg.alpha * g0;

        const Vector g1 = mean_loss_grad(model, task, slot.times, slot.theta_i);
        require_finite_grad(g1, *schema, "outer_step(task gradient)");
        slot.loss = mean_loss(model, task, slot.times, slot.theta_i);
        slot.chained_loss_grad =
            second_order
                ? Vector(g1 - cfg.alpha * hessian_vector_product(model, task, slot.times,
                                                                 theta_star, g1))
                : g1;
    });

    Matrix W(P, static_cast<Eigen::Index>(S));
    for (std::size_t i = 0; i < S; ++i) {
        W.col(static_cast<Eigen::Index>(i)) = slots[i].theta_i;
    }

    double objective = 0.0;
    for (std::size_t i = 0; i < S; ++i) objective += slots[i].loss;
    if (cfg.lambda_graph > 0.0) {
        objective += cfg.lambda_graph * laplacian_trace(W, graph);
    }

    Vector total = Vector::Zero(P);
    for (std::size_t i = 0; i < S; ++i) total += slots[i].chained_loss_grad;

    if (cfg.lambda_graph > 0.0) {
        const Matrix reg_grad = laplacian_trace_grad(W, graph);
        std::vector<Vector> chained_reg(S);
        parallel_for_tasks(S, cfg.threads, [&](std::size_t i) {
            const Vector col = reg_grad.col(static_cast<Eigen::Index>(i));
            chained_reg[i] =
                second_order
                    ? Vector(col - cfg.alpha * hessian_vector_product(
                                       model, tasks[i], slots[i].times, theta_star, col))
                    : col;
        });
        for (std::size_t i = 0; i < S; ++i) total += cfg.lambda_graph * chained_reg[i];
    }
    require_finite_grad(total, *schema, "outer_step(total)");

    state.theta_star = theta_star - cfg.beta_outer * total;
    state.loss_history.push_back(objective);
    state.iter += 1;
}

std::pair<ParamVector, TrainReport> train_general(std::span<const TaskSeries> tasks,
                                                  const ModelInterface& model,
                                                  const TaskGraph& graph,
                                                  const GeneralTrainConfig& cfg) {
    cfg.validate();
    if (tasks.empty()) {
        throw ParamError(kComponent, "no tasks to train on");
    }
    for (const TaskSeries& t : tasks) {
        if (t.length() == 0 || t.length() != static_cast<std::size_t>(t.y.size())) {
            throw ShapeError(kComponent, "task '" + t.id + "' has an empty or ragged series");
        }
    }

    const auto start = std::chrono::steady_clock::now();
    Rng init_rng(mix_seed(cfg.seed, kInitTag));
    TrainState state;
    state.theta_star = model.init_params(init_rng);

    std::size_t consecutive = 0;
    bool converged = false;
    for (std::size_t iter = 0; iter < cfg.max_outer_iters; ++iter) {
        outer_step(state, model, tasks, graph, cfg);
        const double current = state.loss_history.back();
        if (!std::isfinite(current) || current > 1e12) {
            throw DivergenceError(kComponent, "objective diverged at iteration " +
                                                  std::to_string(state.iter - 1));
        }
        if (state.loss_history.size() >= 2) {
            const double prev = state.loss_history[state.loss_history.size() - 2];
            if (std::abs(current - prev) <= cfg.converge_tol * (1.0 + std::abs(prev))) {
                if (++consecutive >= 5) {
                    converged = true;
                    break;
                }
            } else {
                consecutive = 0;
            }
        }
    }

    TrainReport report;
    report.iterations = state.iter;
    report.final_loss = state.loss_history.empty() ? 0.0 : state.loss_history.back();
    report.converged = converged;
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {ParamVector{model.schema(), std::move(state.theta_star)}, report};
}

Vector fine_tune_window(const Vector& theta, const ModelInterface& model,
                        const TaskSeries& task, std::size_t begin, std::size_t end,
                        const TaskTrainConfig& cfg) {
    cfg.validate();
    if (end > task.length() || begin > end) {
        throw ParamError(kComponent, "fine-tuning window [" + std::to_string(begin) + ", " +
                                         std::to_string(end) + ") outside series of length " +
                                         std::to_string(task.length()));
    }
    Vector current = theta;
    for (std::size_t t = begin; t < end; ++t) {
        for (std::size_t u = 0; u < cfg.x_updates; ++u) {
            const Vector g =
                model.loss_grad(task.x[t], task.y[static_cast<Eigen::Index>(t)], current);
            require_finite_grad(g, *model.schema(), "fine_tune");
            current -= cfg.gamma * g;
        }
    }
    return current;
}

FineTuneResult train_task_specific(const Vector& theta_star,
                                   const ModelInterface& model,
                                   const TaskSeries& task, std::size_t t0,
                                   const TaskTrainConfig& cfg) {
    cfg.validate();
    if (t0 >= task.length()) {
        throw ParamError(kComponent, "prediction time " + std::to_string(t0) +
                                         " outside series of length " +
                                         std::to_string(task.length()));
    }
    if (cfg.ft_len > t0) {
        throw ParamError(kComponent, "fine-tuning window of length " +
                                         std::to_string(cfg.ft_len) +
                                         " exceeds available history before t0 = " +
                                         std::to_string(t0));
    }
    FineTuneResult result;
    result.theta = fine_tune_window(theta_star, model, task, t0 - cfg.ft_len, t0, cfg);
    result.prediction = model.predict(task.x[t0], result.theta);
    return result;
}

}  // namespace sum
