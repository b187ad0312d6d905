#include "sum/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "sum/errors.hpp"
#include "sum/textio.hpp"

namespace sum {

namespace {

constexpr const char* kComponent = "eval";

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

std::ofstream open_for_write(const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) {
        throw IoError(kComponent, "cannot open '" + file.string() + "' for writing");
    }
    return out;
}

std::ifstream open_for_read(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) {
        throw IoError(kComponent, "cannot open '" + file.string() + "'");
    }
    return in;
}

}  // namespace

double mae(const Vector& pred, const Vector& truth) {
    if (pred.size() != truth.size()) {
        throw ParamError(kComponent, "mae: length mismatch (" + std::to_string(pred.size()) +
                                         " vs " + std::to_string(truth.size()) + ")");
    }
    if (pred.size() == 0) {
        throw ParamError(kComponent, "mae: empty input");
    }
    return (pred - truth).cwiseAbs().mean();
}

void RunReport::add_row(ReportRow row) {
    if (!std::isfinite(row.value)) {
        throw ValidationError(kComponent, "report metric '" + row.metric + "' is not finite");
    }
    rows.push_back(std::move(row));
}

void RunReport::add_curve(const std::string& name, Curve curve) {
    double prev = -1.0;
    for (const CurvePoint& p : curve) {
        if (!(p.deleted_fraction > prev)) {
            throw ValidationError(kComponent,
                                  "curve '" + name + "' fractions must strictly increase");
        }
        if (p.deleted_fraction < 0.0 || p.deleted_fraction > 1.0 || !std::isfinite(p.mae)) {
            throw ValidationError(kComponent, "curve '" + name + "' has an invalid point");
        }
        prev = p.deleted_fraction;
    }
    curves[name] = std::move(curve);
}

TepResult detect_tep(const Curve& curve, double delta) {
    if (curve.size() < 2) {
        throw ParamError(kComponent, "TEP detection needs a curve with at least 2 points");
    }
    if (!(delta > 0.0)) {
        throw ParamError(kComponent, "TEP delta must be positive");
    }
    for (const CurvePoint& p : curve) {
        if (!std::isfinite(p.mae)) {
            throw ParamError(kComponent, "TEP detection on a non-finite curve");
        }
    }
    TepResult result;
    result.delta = delta;
    const double threshold = (1.0 + delta) * curve.front().mae;
    for (std::size_t g = 0; g < curve.size(); ++g) {
        if (curve[g].mae > threshold) {
            result.tep_index = g;
            break;
        }
    }
    return result;
}

std::vector<UsageRow> export_task_usage(const CokrigeSchedule& schedule,
                                        const TepResult& tep,
                                        const StationSet& stations) {
    if (!tep.tep_index) {
        throw ParamError(kComponent, "task-usage export requires a detected TEP");
    }
    std::unordered_set<std::string> deleted;
    for (std::size_t j = 0; j < *tep.tep_index && j < schedule.deletion_order.size(); ++j) {
        for (const std::string& id : schedule.groups[schedule.deletion_order[j]]) {
            deleted.insert(id);
        }
    }
    std::vector<UsageRow> rows;
    rows.reserve(stations.size());
    for (const Station& s : stations.stations) {
        rows.push_back({s.id, s.c1, s.c2, deleted.count(s.id) == 0});
    }
    return rows;
}

GeneralRun run_general_training(const Dataset& train, const ModelInterface& model,
                                const GeneralTrainConfig& cfg) {
    const Matrix distances = distance_matrix(train.stations);
    const double omega = cfg.omega ? *cfg.omega : median_offdiagonal_distance(distances);
    const TaskGraph graph = gaussian_adjacency(distances, omega);
    const auto series = task_series(train);
    auto [theta, report] = train_general(series, model, graph, cfg);
    return {std::move(theta), report, omega};
}

double series_mae(const ModelInterface& model, const Vector& theta,
                  const TaskSeries& series) {
    Vector pred(static_cast<Eigen::Index>(series.length()));
    for (std::size_t t = 0; t < series.length(); ++t) {
        pred[static_cast<Eigen::Index>(t)] = model.predict(series.x[t], theta);
    }
    return mae(pred, series.y);
}

std::vector<TaskEvalResult> evaluate_stations(const ModelInterface& model,
                                              const Vector& theta_star,
                                              const std::vector<TaskSeries>& train_series,
                                              const std::vector<TaskSeries>& test_series,
                                              const TaskTrainConfig& tcfg) {
    if (train_series.size() != test_series.size()) {
        throw ShapeError(kComponent, "train/test series count mismatch");
    }
    std::vector<TaskEvalResult> results;
    results.reserve(train_series.size());
    for (std::size_t s = 0; s < train_series.size(); ++s) {
        const std::size_t train_len = train_series[s].length();
        if (tcfg.ft_len > train_len) {
            throw ParamError(kComponent, "ft_len " + std::to_string(tcfg.ft_len) +
                                             " exceeds train length " +
                                             std::to_string(train_len));
        }
        TaskEvalResult r;
        r.id = train_series[s].id;
        r.mae_global = series_mae(model, theta_star, test_series[s]);
        const Vector theta_ft = fine_tune_window(theta_star, model, train_series[s],
                                                 train_len - tcfg.ft_len, train_len, tcfg);
        r.mae_finetuned = series_mae(model, theta_ft, test_series[s]);
        results.push_back(std::move(r));
    }
    return results;
}

SweepResult cokrige_sweep(const Dataset& dataset, const CokrigeSchedule& schedule,
                          const ModelInterface& model,
                          const GeneralTrainConfig& general_cfg,
                          const TaskTrainConfig& task_cfg,
                          const SweepOptions& options) {
    dataset.validate();
    const std::size_t S = dataset.task_count();
    std::unordered_map<std::string, std::size_t> index_of;
    for (std::size_t s = 0; s < S; ++s) {
        index_of[dataset.stations.stations[s].id] = s;
    }
    std::size_t covered = 0;
    for (const auto& group : schedule.groups) {
        for (const std::string& id : group) {
            if (!index_of.count(id)) {
                throw ValidationError(kComponent,
                                      "schedule names unknown station '" + id + "'");
            }
            ++covered;
        }
    }
    if (covered != S) {
        throw ValidationError(kComponent, "schedule does not partition the station set");
    }
    const std::size_t G = schedule.group_count();
    if (G == 0 || schedule.deletion_order.size() != G) {
        throw ValidationError(kComponent, "schedule deletion order is not a permutation");
    }

    auto [train, test] = split_train_test(dataset, options.train_ratio);
    const std::size_t train_len = train.times();
    if (task_cfg.ft_len > train_len) {
        throw ParamError(kComponent, "ft_len exceeds the training split length");
    }
    const auto train_series = task_series(train);
    const auto test_series = task_series(test, train_len);

    const Matrix all_distances = distance_matrix(dataset.stations);
    const double omega = general_cfg.omega
                             ? *general_cfg.omega
                             : median_offdiagonal_distance(all_distances);

    SweepResult result;
    std::vector<bool> deleted(S, false);
    for (std::size_t g = 0; g < G; ++g) {
        if (g > 0) {
            for (const std::string& id : schedule.groups[schedule.deletion_order[g - 1]]) {
                deleted[index_of.at(id)] = true;
            }
        }
        std::vector<std::size_t> remaining;
        for (std::size_t s = 0; s < S; ++s) {
            if (!deleted[s]) remaining.push_back(s);
        }

        const StationSet sub_stations = dataset.stations.subset(remaining);
        const TaskGraph graph =
            gaussian_adjacency(distance_matrix(sub_stations), omega);
        std::vector<TaskSeries> sub_series;
        sub_series.reserve(remaining.size());
        for (std::size_t s : remaining) sub_series.push_back(train_series[s]);

        Vector theta_star;
        try {
            theta_star = train_general(sub_series, model, graph, general_cfg).first.values;
        } catch (const Error& e) {
            throw DivergenceError(kComponent, "deletion step " + std::to_string(g) + ": " +
                                                  e.what());
        }

        std::vector<double> station_mae(S, 0.0);
        double sum_all = 0.0, sum_deleted = 0.0;
        std::size_t n_deleted = 0;
        for (std::size_t s = 0; s < S; ++s) {
            const Vector theta_ft =
                fine_tune_window(theta_star, model, train_series[s],
                                 train_len - task_cfg.ft_len, train_len, task_cfg);
            station_mae[s] = series_mae(model, theta_ft, test_series[s]);
            sum_all += station_mae[s];
            if (deleted[s]) {
                sum_deleted += station_mae[s];
                ++n_deleted;
            }
        }
        const double fraction = static_cast<double>(g) / static_cast<double>(G);
        result.all_stations.push_back({fraction, sum_all / static_cast<double>(S)});
        if (n_deleted > 0) {
            result.deleted_only.push_back(
                {fraction, sum_deleted / static_cast<double>(n_deleted)});
        }
        result.per_station_mae.push_back(std::move(station_mae));
    }
    return result;
}

void write_report_csv(const std::filesystem::path& file,
                      const std::vector<ReportRow>& rows) {
    auto out = open_for_write(file);
    out << "experiment,model,config_hash,seed,metric,value,wall_time_s\n";
    for (const ReportRow& r : rows) {
        out << r.experiment << ',' << r.model << ',' << r.config_hash << ',' << r.seed
            << ',' << r.metric << ',' << format_double(r.value) << ','
            << format_double(r.wall_time_s) << '\n';
    }
}

std::vector<ReportRow> read_report_csv(const std::filesystem::path& file) {
    auto in = open_for_read(file);
    std::string line;
    if (!std::getline(in, line) ||
        line != "experiment,model,config_hash,seed,metric,value,wall_time_s") {
        throw FormatError(kComponent, "'" + file.string() + "' missing report header");
    }
    std::vector<ReportRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_fields(line);
        if (f.size() != 7) {
            throw FormatError(kComponent, "'" + file.string() + "' malformed report row");
        }
        ReportRow r;
        r.experiment = std::string(f[0]);
        r.model = std::string(f[1]);
        r.config_hash = std::string(f[2]);
        r.seed = static_cast<std::uint64_t>(parse_double(f[3], kComponent));
        r.metric = std::string(f[4]);
        r.value = parse_double(f[5], kComponent);
        r.wall_time_s = parse_double(f[6], kComponent);
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_curve_csv(const std::filesystem::path& file, const Curve& curve) {
    auto out = open_for_write(file);
    out << "deleted_fraction,mae\n";
    for (const CurvePoint& p : curve) {
        out << format_double(p.deleted_fraction) << ',' << format_double(p.mae) << '\n';
    }
}

Curve read_curve_csv(const std::filesystem::path& file) {
    auto in = open_for_read(file);
    std::string line;
    if (!std::getline(in, line) || line != "deleted_fraction,mae") {
        throw FormatError(kComponent, "'" + file.string() + "' missing curve header");
    }
    Curve curve;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_fields(line);
        if (f.size() != 2) {
            throw FormatError(kComponent, "'" + file.string() + "' malformed curve row");
        }
        curve.push_back({parse_double(f[0], kComponent), parse_double(f[1], kComponent)});
    }
    return curve;
}

void write_usage_csv(const std::filesystem::path& file,
                     const std::vector<UsageRow>& rows) {
    auto out = open_for_write(file);
    out << "id,c1,c2,retained\n";
    for (const UsageRow& r : rows) {
        out << r.id << ',' << format_double(r.c1) << ',' << format_double(r.c2) << ','
            << (r.retained ? '1' : '0') << '\n';
    }
}

void write_svg_chart(const std::filesystem::path& file,
                     const std::map<std::string, Curve>& curves,
                     const std::string& title, const std::string& x_label,
                     const std::string& y_label) {
    constexpr double kWidth = 800.0, kHeight = 600.0;
    constexpr double kLeft = 80.0, kRight = 40.0, kTop = 60.0, kBottom = 70.0;
    const double plot_w = kWidth - kLeft - kRight;
    const double plot_h = kHeight - kTop - kBottom;

    double x_min = 0.0, x_max = 1.0, y_max = 0.0;
    bool any = false;
    for (const auto& [name, curve] : curves) {
        for (const CurvePoint& p : curve) {
            if (!any) {
                x_min = x_max = p.deleted_fraction;
                any = true;
            }
            x_min = std::min(x_min, p.deleted_fraction);
            x_max = std::max(x_max, p.deleted_fraction);
            y_max = std::max(y_max, p.mae);
        }
    }
    if (!any) {
        throw ParamError(kComponent, "cannot plot an empty curve set");
    }
    if (x_max <= x_min) x_max = x_min + 1.0;
    if (y_max <= 0.0) y_max = 1.0;
    y_max *= 1.05;  // headroom above the tallest point

    const auto sx = [&](double x) {
        return kLeft + (x - x_min) / (x_max - x_min) * plot_w;
    };
    const auto sy = [&](double y) { return kTop + (1.0 - y / y_max) * plot_h; };

    static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b"};

    auto out = open_for_write(file);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 600\">\n";
    out << "<rect width=\"800\" height=\"600\" fill=\"white\"/>\n";
    out << "<text x=\"400\" y=\"30\" text-anchor=\"middle\" font-size=\"20\">" << title
        << "</text>\n";
    // axes
    out << "<line x1=\"" << format_double_fixed(kLeft, 1) << "\" y1=\""
        << format_double_fixed(kTop, 1) << "\" x2=\"" << format_double_fixed(kLeft, 1)
        << "\" y2=\"" << format_double_fixed(kTop + plot_h, 1)
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << format_double_fixed(kLeft, 1) << "\" y1=\""
        << format_double_fixed(kTop + plot_h, 1) << "\" x2=\""
        << format_double_fixed(kLeft + plot_w, 1) << "\" y2=\""
        << format_double_fixed(kTop + plot_h, 1) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << format_double_fixed(kLeft + plot_w / 2, 1)
        << "\" y=\"585\" text-anchor=\"middle\" font-size=\"14\">" << x_label
        << "</text>\n";
    out << "<text x=\"20\" y=\"" << format_double_fixed(kTop + plot_h / 2, 1)
        << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 20 "
        << format_double_fixed(kTop + plot_h / 2, 1) << ")\">" << y_label << "</text>\n";
    // ticks
    for (int i = 0; i <= 5; ++i) {
        const double fx = x_min + (x_max - x_min) * i / 5.0;
        const double px = sx(fx);
        out << "<line x1=\"" << format_double_fixed(px, 1) << "\" y1=\""
            << format_double_fixed(kTop + plot_h, 1) << "\" x2=\""
            << format_double_fixed(px, 1) << "\" y2=\""
            << format_double_fixed(kTop + plot_h + 6, 1) << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << format_double_fixed(px, 1) << "\" y=\""
            << format_double_fixed(kTop + plot_h + 22, 1)
            << "\" text-anchor=\"middle\" font-size=\"12\">" << format_double_fixed(fx, 2)
            << "</text>\n";
        const double fy = y_max * i / 5.0;
        const double py = sy(fy);
        out << "<line x1=\"" << format_double_fixed(kLeft - 6, 1) << "\" y1=\""
            << format_double_fixed(py, 1) << "\" x2=\"" << format_double_fixed(kLeft, 1)
            << "\" y2=\"" << format_double_fixed(py, 1) << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << format_double_fixed(kLeft - 10, 1) << "\" y=\""
            << format_double_fixed(py + 4, 1)
            << "\" text-anchor=\"end\" font-size=\"12\">" << format_double_fixed(fy, 4)
            << "</text>\n";
    }
    // curves + legend
    std::size_t color_index = 0;
    double legend_y = kTop + 10.0;
    for (const auto& [name, curve] : curves) {
        const char* color = kColors[color_index % 6];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (const CurvePoint& p : curve) {
            out << format_double_fixed(sx(p.deleted_fraction), 1) << ','
                << format_double_fixed(sy(p.mae), 1) << ' ';
        }
        out << "\"/>\n";
        out << "<text x=\"" << format_double_fixed(kLeft + plot_w - 10, 1) << "\" y=\""
            << format_double_fixed(legend_y, 1) << "\" text-anchor=\"end\" font-size=\"12\" fill=\""
            << color << "\">" << name << "</text>\n";
        legend_y += 18.0;
        ++color_index;
    }
    out << "</svg>\n";
}

}  // namespace sum
