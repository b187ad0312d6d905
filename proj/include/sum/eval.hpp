#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sum/dataset.hpp"
#include "sum/trainer.hpp"

namespace sum {

/// Mean absolute error. Lengths must match and be >= 1.
double mae(const Vector& pred, const Vector& truth);

struct CurvePoint {
    double deleted_fraction = 0.0;
    double mae = 0.0;
};
using Curve = std::vector<CurvePoint>;

struct ReportRow {
    std::string experiment;
    std::string model;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string metric;
    double value = 0.0;
    double wall_time_s = 0.0;
};

/// Collected experiment output: flat metric rows plus named MAE-vs-deletion
/// curves. Metric values must be finite; curve fractions strictly increase.
struct RunReport {
    std::vector<ReportRow> rows;
    std::map<std::string, Curve> curves;

    void add_row(ReportRow row);
    void add_curve(const std::string& name, Curve curve);
};

struct TepResult {
    std::optional<std::size_t> tep_index;
    double delta = 0.05;
};

/// Task Efficient Point: the smallest deletion index whose MAE exceeds
/// (1 + delta) times the no-deletion MAE; absent when never exceeded.
TepResult detect_tep(const Curve& curve, double delta = 0.05);

struct UsageRow {
    std::string id;
    double c1 = 0.0;
    double c2 = 0.0;
    bool retained = true;
};

/// One row per station; retained reflects deletions strictly before the
/// TEP index. Requires a present TEP.
std::vector<UsageRow> export_task_usage(const CokrigeSchedule& schedule,
                                        const TepResult& tep,
                                        const StationSet& stations);

/// Builds the task graph over the dataset's stations (bandwidth from
/// cfg.omega or the median heuristic) and runs general training on the
/// per-station series.
struct GeneralRun {
    ParamVector theta;
    TrainReport report;
    double omega_used = 0.0;
};
GeneralRun run_general_training(const Dataset& train, const ModelInterface& model,
                                const GeneralTrainConfig& cfg);

/// MAE of theta's predictions over one series.
double series_mae(const ModelInterface& model, const Vector& theta,
                  const TaskSeries& series);

/// Per-station comparison of the frozen shared parameters against
/// parameters fine-tuned on the tail of that station's training series.
struct TaskEvalResult {
    std::string id;
    double mae_global = 0.0;
    double mae_finetuned = 0.0;
};
std::vector<TaskEvalResult> evaluate_stations(const ModelInterface& model,
                                              const Vector& theta_star,
                                              const std::vector<TaskSeries>& train_series,
                                              const std::vector<TaskSeries>& test_series,
                                              const TaskTrainConfig& tcfg);

struct SweepOptions {
    double train_ratio = 0.8;
};

/// Group-deletion sweep. For each deletion count g = 0..G-1 the shared
/// parameters are retrained from scratch on the stations that remain (the
/// task graph is rebuilt over those stations only, same seed every g);
/// every station is then fine-tuned on its own train tail and scored on
/// its test split.
struct SweepResult {
    Curve all_stations;                         // G points, fractions g/G
    Curve deleted_only;                         // G-1 points, starts at g = 1
    std::vector<std::vector<double>> per_station_mae;  // G x S
};
SweepResult cokrige_sweep(const Dataset& dataset, const CokrigeSchedule& schedule,
                          const ModelInterface& model,
                          const GeneralTrainConfig& general_cfg,
                          const TaskTrainConfig& task_cfg,
                          const SweepOptions& options = {});

// --- report serialization ---------------------------------------------

void write_report_csv(const std::filesystem::path& file,
                      const std::vector<ReportRow>& rows);
std::vector<ReportRow> read_report_csv(const std::filesystem::path& file);

void write_curve_csv(const std::filesystem::path& file, const Curve& curve);
Curve read_curve_csv(const std::filesystem::path& file);

void write_usage_csv(const std::filesystem::path& file,
                     const std::vector<UsageRow>& rows);

/// Minimal polyline chart (800x600 viewBox, labeled axes, one polyline per
/// named curve).
void write_svg_chart(const std::filesystem::path& file,
                     const std::map<std::string, Curve>& curves,
                     const std::string& title, const std::string& x_label,
                     const std::string& y_label);

}  // namespace sum
