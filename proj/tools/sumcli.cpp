// Command-line front end: dataset generation, general and task-specific
// training, prediction, the coKriging deletion sweep, and report merging.
//
// Exit codes: 0 success, 1 usage error, 2 validation error, 3 numeric or
// divergence error.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sum/dataset.hpp"
#include "sum/errors.hpp"
#include "sum/eval.hpp"
#include "sum/muscat.hpp"
#include "sum/textio.hpp"
#include "sum/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kComponent = "eval-cli";

struct CliOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::size_t threads = 1;
    bool timing = false;        // when off, wall_time_s is written as 0 so
                                // reruns are byte-identical
    bool finetune = false;      // predict: fine-tune per station first
    bool deleted_only = false;  // cokrige: report the deleted-station curve
    std::vector<std::string> report_inputs;
};

struct Experiment {
    json raw;
    std::string hash;

    std::string name = "experiment";
    std::optional<std::string> dataset_path;
    std::optional<sum::SyntheticConfig> synthetic;
    double train_ratio = 0.8;

    std::string model_name = "sum-muscat";
    std::size_t model_k = 2;
    double lambda_cp = 0.0;
    double beta_simplex = 0.0;

    sum::GeneralTrainConfig general;
    sum::TaskTrainConfig task;

    std::size_t cokrige_groups = 10;
    std::size_t cokrige_repeats = 10;
    double cokrige_delta = 0.05;
    std::uint64_t cokrige_seed = 0;

    fs::path out_dir = "out";
};

json load_json(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw sum::IoError(kComponent, "cannot open config '" + path.string() + "'");
    }
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        throw sum::FormatError(kComponent, "config '" + path.string() + "': " + e.what());
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw sum::FormatError(kComponent, std::string("config field '") + key + "': " + e.what());
    }
}

sum::SyntheticConfig parse_synthetic(const json& j) {
    sum::SyntheticConfig cfg;
    cfg.S = get_or<std::size_t>(j, "S", 1);
    cfg.T = get_or<std::size_t>(j, "T", 1);
    cfg.N = get_or<std::size_t>(j, "N", 1);
    cfg.L = get_or<std::size_t>(j, "L", 1);
    cfg.K_true = get_or<std::size_t>(j, "K_true", 1);
    cfg.noise_sigma = get_or<double>(j, "noise_sigma", 0.0);
    cfg.hetero_sigma = get_or<double>(j, "hetero_sigma", 0.0);
    cfg.x_noise_sigma = get_or<double>(j, "x_noise_sigma", 0.0);
    cfg.seed = get_or<std::uint64_t>(j, "seed", 0);
    if (j.contains("spatial")) {
        const json& sp = j.at("spatial");
        if (sp.is_string() && sp.get<std::string>() == "iid") {
            cfg.spatial_corr = sum::SpatialCorrSpec::iid();
        } else if (sp.is_object() && sp.contains("clustered")) {
            cfg.spatial_corr =
                sum::SpatialCorrSpec::clustered(sp.at("clustered").get<std::size_t>());
        } else {
            throw sum::FormatError(kComponent,
                                   "dataset.synthetic.spatial must be \"iid\" or "
                                   "{\"clustered\": n}");
        }
    }
    return cfg;
}

sum::GeneralTrainConfig parse_general(const json& j) {
    sum::GeneralTrainConfig cfg;
    cfg.alpha = get_or<double>(j, "alpha", cfg.alpha);
    cfg.beta_outer = get_or<double>(j, "beta_outer", cfg.beta_outer);
    cfg.lambda_graph = get_or<double>(j, "lambda_graph", cfg.lambda_graph);
    if (j.contains("omega") && !j.at("omega").is_null()) {
        cfg.omega = j.at("omega").get<double>();
    }
    if (j.contains("time_dist")) {
        const json& td = j.at("time_dist");
        if (td.is_string() && td.get<std::string>() == "uniform") {
            cfg.time_dist = sum::TimeDist::uniform();
        } else if (td.is_object() && td.contains("geometric_recency")) {
            cfg.time_dist = sum::TimeDist::geometric_recency(
                td.at("geometric_recency").get<double>());
        } else {
            throw sum::FormatError(kComponent,
                                   "general.time_dist must be \"uniform\" or "
                                   "{\"geometric_recency\": rho}");
        }
    }
    if (j.contains("meta_grad")) {
        const std::string mg = j.at("meta_grad").get<std::string>();
        if (mg == "first_order") {
            cfg.meta_grad = sum::MetaGrad::FirstOrder;
        } else if (mg == "full_second_order") {
            cfg.meta_grad = sum::MetaGrad::FullSecondOrder;
        } else {
            throw sum::FormatError(kComponent, "unknown meta_grad '" + mg + "'");
        }
    }
    cfg.max_outer_iters = get_or<std::size_t>(j, "max_outer_iters", cfg.max_outer_iters);
    cfg.converge_tol = get_or<double>(j, "converge_tol", cfg.converge_tol);
    cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);
    cfg.batch = get_or<std::size_t>(j, "batch", cfg.batch);
    return cfg;
}

Experiment parse_experiment(const CliOptions& cli) {
    if (cli.config_path.empty()) {
        throw sum::ValidationError(kComponent, "this subcommand requires --config");
    }
    Experiment exp;
    exp.raw = load_json(cli.config_path);
    exp.hash = sum::hex64(sum::fnv1a64(exp.raw.dump()));

    const json& root = exp.raw;
    if (root.contains("dataset")) {
        const json& d = root.at("dataset");
        if (d.contains("path")) exp.dataset_path = d.at("path").get<std::string>();
        if (d.contains("synthetic")) exp.synthetic = parse_synthetic(d.at("synthetic"));
        exp.train_ratio = get_or<double>(d, "train_ratio", exp.train_ratio);
    }
    if (root.contains("model")) {
        const json& m = root.at("model");
        exp.model_name = get_or<std::string>(m, "name", exp.model_name);
        exp.model_k = get_or<std::size_t>(m, "K", exp.model_k);
        exp.lambda_cp = get_or<double>(m, "lambda_cp", exp.lambda_cp);
        exp.beta_simplex = get_or<double>(m, "beta_simplex", exp.beta_simplex);
    }
    if (root.contains("general")) exp.general = parse_general(root.at("general"));
    if (root.contains("task")) {
        const json& t = root.at("task");
        exp.task.gamma = get_or<double>(t, "gamma", exp.task.gamma);
        exp.task.x_updates = get_or<std::size_t>(t, "x_updates", exp.task.x_updates);
        exp.task.ft_len = get_or<std::size_t>(t, "ft_len", exp.task.ft_len);
    }
    if (root.contains("cokrige")) {
        const json& c = root.at("cokrige");
        exp.cokrige_groups = get_or<std::size_t>(c, "groups", exp.cokrige_groups);
        exp.cokrige_repeats = get_or<std::size_t>(c, "repeats", exp.cokrige_repeats);
        exp.cokrige_delta = get_or<double>(c, "delta", exp.cokrige_delta);
        exp.cokrige_seed = get_or<std::uint64_t>(c, "seed", exp.cokrige_seed);
    }
    if (root.contains("output")) {
        const json& o = root.at("output");
        exp.out_dir = get_or<std::string>(o, "dir", exp.out_dir.string());
        exp.name = get_or<std::string>(o, "experiment", exp.name);
    }

    if (cli.seed) {
        exp.general.seed = *cli.seed;
        exp.cokrige_seed = *cli.seed;
        if (exp.synthetic) exp.synthetic->seed = *cli.seed;
    }
    if (cli.out_dir) exp.out_dir = *cli.out_dir;
    exp.general.threads = cli.threads;
    return exp;
}

sum::Dataset load_experiment_dataset(const Experiment& exp) {
    if (exp.dataset_path) return sum::load_dataset(*exp.dataset_path);
    if (exp.synthetic) return sum::generate_synthetic(*exp.synthetic);
    throw sum::ValidationError(kComponent,
                               "config needs dataset.path or dataset.synthetic");
}

std::unique_ptr<sum::ModelInterface> build_model(const Experiment& exp,
                                                 const sum::Dataset& full) {
    return sum::make_model(exp.model_name, full.predictors(), full.scales(), full.times(),
                           exp.model_k, exp.lambda_cp, exp.beta_simplex);
}

void ensure_out_dir(const Experiment& exp) {
    std::error_code ec;
    fs::create_directories(exp.out_dir, ec);
    if (ec) {
        throw sum::IoError(kComponent,
                           "cannot create output directory '" + exp.out_dir.string() + "'");
    }
}

void save_theta(const sum::Vector& theta, const fs::path& file) {
    std::vector<double> values(theta.data(), theta.data() + theta.size());
    sum::save_tensor(
        sum::DenseTensor3(static_cast<std::size_t>(theta.size()), 1, 1, std::move(values)),
        file);
}

sum::Vector load_theta(const fs::path& file) {
    const sum::DenseTensor3 t = sum::load_tensor(file);
    sum::Vector theta(static_cast<Eigen::Index>(t.size()));
    for (std::size_t i = 0; i < t.size(); ++i) {
        theta[static_cast<Eigen::Index>(i)] = t.values()[i];
    }
    return theta;
}

sum::ReportRow make_row(const Experiment& exp, const std::string& metric, double value,
                        double wall, bool timing) {
    sum::ReportRow row;
    row.experiment = exp.name;
    row.model = exp.model_name;
    row.config_hash = exp.hash;
    row.seed = exp.general.seed;
    row.metric = metric;
    row.value = value;
    row.wall_time_s = timing ? wall : 0.0;
    return row;
}

int cmd_generate(const CliOptions& cli) {
    const Experiment exp = parse_experiment(cli);
    if (!exp.synthetic) {
        throw sum::ValidationError(kComponent, "generate requires dataset.synthetic");
    }
    if (!exp.dataset_path) {
        throw sum::ValidationError(kComponent,
                                   "generate requires dataset.path (the target directory)");
    }
    const sum::Dataset ds = sum::generate_synthetic(*exp.synthetic);
    sum::save_dataset(ds, *exp.dataset_path);
    std::cout << "wrote dataset (" << ds.scales() << " scales, T=" << ds.times()
              << ", S=" << ds.task_count() << ") to " << *exp.dataset_path << "\n";
    return 0;
}

int cmd_train_general(const CliOptions& cli) {
    const Experiment exp = parse_experiment(cli);
    ensure_out_dir(exp);
    const sum::Dataset full = load_experiment_dataset(exp);
    const auto model = build_model(exp, full);
    auto [train, test] = sum::split_train_test(full, exp.train_ratio);
    const sum::GeneralRun run = sum::run_general_training(train, *model, exp.general);

    save_theta(run.theta.values, exp.out_dir / "theta.f64");
    std::vector<sum::ReportRow> rows;
    rows.push_back(make_row(exp, "final_train_loss", run.report.final_loss,
                            run.report.wall_seconds, cli.timing));
    rows.push_back(make_row(exp, "iterations", static_cast<double>(run.report.iterations),
                            run.report.wall_seconds, cli.timing));
    rows.push_back(make_row(exp, "converged", run.report.converged ? 1.0 : 0.0,
                            run.report.wall_seconds, cli.timing));
    rows.push_back(make_row(exp, "omega_used", run.omega_used, 0.0, cli.timing));
    sum::write_report_csv(exp.out_dir / "general_report.csv", rows);

    std::cout << "general training: " << run.report.iterations
              << " iterations, final loss " << sum::format_double(run.report.final_loss)
              << (run.report.converged ? " (converged)" : "") << "\n";
    return 0;
}

int cmd_train_task(const CliOptions& cli) {
    const Experiment exp = parse_experiment(cli);
    ensure_out_dir(exp);
    const sum::Dataset full = load_experiment_dataset(exp);
    const auto model = build_model(exp, full);
    auto [train, test] = sum::split_train_test(full, exp.train_ratio);
    const sum::Vector theta = load_theta(exp.out_dir / "theta.f64");

    const auto train_series = sum::task_series(train);
    const auto test_series = sum::task_series(test, train.times());
    const auto results =
        sum::evaluate_stations(*model, theta, train_series, test_series, exp.task);

    std::vector<sum::ReportRow> rows;
    double sum_global = 0.0, sum_ft = 0.0;
    for (const auto& r : results) {
        rows.push_back(make_row(exp, "mae_global_" + r.id, r.mae_global, 0.0, cli.timing));
        rows.push_back(
            make_row(exp, "mae_finetuned_" + r.id, r.mae_finetuned, 0.0, cli.timing));
        sum_global += r.mae_global;
        sum_ft += r.mae_finetuned;
    }
    const double n = static_cast<double>(results.size());
    rows.push_back(make_row(exp, "mae_global_mean", sum_global / n, 0.0, cli.timing));
    rows.push_back(make_row(exp, "mae_finetuned_mean", sum_ft / n, 0.0, cli.timing));
    sum::write_report_csv(exp.out_dir / "task_report.csv", rows);

    std::cout << "task-specific training: mean test MAE "
              << sum::format_double(sum_ft / n) << " (global "
              << sum::format_double(sum_global / n) << ")\n";
    return 0;
}

int cmd_predict(const CliOptions& cli) {
    const Experiment exp = parse_experiment(cli);
    ensure_out_dir(exp);
    const sum::Dataset full = load_experiment_dataset(exp);
    const auto model = build_model(exp, full);
    auto [train, test] = sum::split_train_test(full, exp.train_ratio);
    const sum::Vector theta = load_theta(exp.out_dir / "theta.f64");

    const auto train_series = sum::task_series(train);
    const auto test_series = sum::task_series(test, train.times());

    std::ofstream out(exp.out_dir / "predictions.csv", std::ios::binary);
    if (!out) {
        throw sum::IoError(kComponent, "cannot open predictions.csv for writing");
    }
    out << "station,t,y_true,y_pred\n";
    for (std::size_t s = 0; s < test_series.size(); ++s) {
        sum::Vector theta_s = theta;
        if (cli.finetune) {
            const std::size_t len = train_series[s].length();
            if (exp.task.ft_len > len) {
                throw sum::ParamError(kComponent, "ft_len exceeds the training split length");
            }
            theta_s = sum::fine_tune_window(theta, *model, train_series[s],
                                            len - exp.task.ft_len, len, exp.task);
        }
        const auto& series = test_series[s];
        for (std::size_t t = 0; t < series.length(); ++t) {
            const double pred = model->predict(series.x[t], theta_s);
            out << series.id << ',' << series.x[t].t << ','
                << sum::format_double(series.y[static_cast<Eigen::Index>(t)]) << ','
                << sum::format_double(pred) << '\n';
        }
    }
    std::cout << "wrote predictions for " << test_series.size() << " stations\n";
    return 0;
}

int cmd_cokrige(const CliOptions& cli) {
    const Experiment exp = parse_experiment(cli);
    ensure_out_dir(exp);
    const sum::Dataset full = load_experiment_dataset(exp);
    const auto model = build_model(exp, full);

    const std::size_t repeats = std::max<std::size_t>(1, exp.cokrige_repeats);
    std::vector<sum::SweepResult> sweeps;
    sweeps.reserve(repeats);
    sum::CokrigeSchedule first_schedule;
    for (std::size_t r = 0; r < repeats; ++r) {
        sum::CokrigeSchedule schedule = sum::make_cokrige_schedule(
            full.stations, exp.cokrige_groups, sum::mix_seed(exp.cokrige_seed, r));
        if (r == 0) first_schedule = schedule;
        sum::GeneralTrainConfig gcfg = exp.general;
        gcfg.seed = sum::mix_seed(exp.general.seed, r);
        sum::SweepOptions options;
        options.train_ratio = exp.train_ratio;
        sweeps.push_back(
            sum::cokrige_sweep(full, schedule, *model, gcfg, exp.task, options));
    }

    const auto average = [&](bool deleted_only) {
        sum::Curve mean_curve;
        const sum::Curve& proto =
            deleted_only ? sweeps.front().deleted_only : sweeps.front().all_stations;
        for (std::size_t i = 0; i < proto.size(); ++i) {
            double acc = 0.0;
            for (const auto& sw : sweeps) {
                acc += (deleted_only ? sw.deleted_only : sw.all_stations)[i].mae;
            }
            mean_curve.push_back({proto[i].deleted_fraction,
                                  acc / static_cast<double>(sweeps.size())});
        }
        return mean_curve;
    };
    const sum::Curve mean_all = average(false);
    const sum::Curve mean_deleted = average(true);
    const sum::Curve& reported = cli.deleted_only ? mean_deleted : mean_all;

    sum::write_curve_csv(exp.out_dir / "cokrige_curve.csv", reported);
    sum::write_curve_csv(exp.out_dir / "cokrige_curve_all.csv", mean_all);
    if (!mean_deleted.empty()) {
        sum::write_curve_csv(exp.out_dir / "cokrige_curve_deleted.csv", mean_deleted);
    }

    std::vector<sum::ReportRow> rows;
    for (std::size_t i = 0; i < mean_all.size(); ++i) {
        const std::string tag = sum::format_double_fixed(mean_all[i].deleted_fraction, 4);
        rows.push_back(make_row(exp, "mae_frac_" + tag + "_mean", mean_all[i].mae, 0.0,
                                cli.timing));
        double var = 0.0;
        for (const auto& sw : sweeps) {
            const double d = sw.all_stations[i].mae - mean_all[i].mae;
            var += d * d;
        }
        const double std_repeats =
            sweeps.size() > 1 ? std::sqrt(var / static_cast<double>(sweeps.size() - 1)) : 0.0;
        rows.push_back(
            make_row(exp, "mae_frac_" + tag + "_std_repeats", std_repeats, 0.0, cli.timing));
        // Spread across stations, averaged over repeats.
        double mean_station_std = 0.0;
        for (const auto& sw : sweeps) {
            const auto& per = sw.per_station_mae[i];
            double m = 0.0;
            for (double v : per) m += v;
            m /= static_cast<double>(per.size());
            double sv = 0.0;
            for (double v : per) sv += (v - m) * (v - m);
            mean_station_std += per.size() > 1
                                    ? std::sqrt(sv / static_cast<double>(per.size() - 1))
                                    : 0.0;
        }
        mean_station_std /= static_cast<double>(sweeps.size());
        rows.push_back(make_row(exp, "mae_frac_" + tag + "_std_stations", mean_station_std,
                                0.0, cli.timing));
    }

    const sum::TepResult tep = sum::detect_tep(reported, exp.cokrige_delta);
    if (tep.tep_index) {
        rows.push_back(make_row(exp, "tep_index", static_cast<double>(*tep.tep_index), 0.0,
                                cli.timing));
        const auto usage = sum::export_task_usage(first_schedule, tep, full.stations);
        sum::write_usage_csv(exp.out_dir / "task_usage.csv", usage);
    } else {
        rows.push_back(make_row(exp, "tep_index", -1.0, 0.0, cli.timing));
    }
    sum::write_report_csv(exp.out_dir / "cokrige_report.csv", rows);

    std::map<std::string, sum::Curve> chart;
    chart["all stations"] = mean_all;
    if (!mean_deleted.empty()) chart["deleted stations"] = mean_deleted;
    sum::write_svg_chart(exp.out_dir / "cokrige_curve.svg", chart,
                         "MAE vs deleted fraction (" + exp.model_name + ")",
                         "deleted fraction", "MAE");

    std::cout << "cokrige sweep: " << mean_all.size() << " deletion levels, "
              << repeats << " repeats";
    if (tep.tep_index) std::cout << ", TEP at index " << *tep.tep_index;
    std::cout << "\n";
    return 0;
}

int cmd_report(const CliOptions& cli) {
    if (cli.report_inputs.empty()) {
        throw sum::ValidationError(kComponent, "report requires at least one input CSV");
    }
    const fs::path out_dir = cli.out_dir ? fs::path(*cli.out_dir) : fs::path("out");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
        throw sum::IoError(kComponent,
                           "cannot create output directory '" + out_dir.string() + "'");
    }

    std::vector<sum::ReportRow> merged;
    std::map<std::string, sum::Curve> curves;
    for (const std::string& input : cli.report_inputs) {
        // Peek at the header to decide the file kind.
        std::ifstream probe(input, std::ios::binary);
        if (!probe) {
            throw sum::IoError(kComponent, "cannot open '" + input + "'");
        }
        std::string header;
        std::getline(probe, header);
        probe.close();
        if (header == "deleted_fraction,mae") {
            curves[fs::path(input).stem().string()] = sum::read_curve_csv(input);
        } else {
            const auto rows = sum::read_report_csv(input);
            merged.insert(merged.end(), rows.begin(), rows.end());
        }
    }
    sum::write_report_csv(out_dir / "merged_report.csv", merged);
    if (!curves.empty()) {
        sum::write_svg_chart(out_dir / "mae_vs_deletion.svg", curves,
                             "MAE vs deleted fraction", "deleted fraction", "MAE");
    }
    std::cout << "merged " << merged.size() << " rows and " << curves.size()
              << " curves\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SUM two-step training for spatiotemporal multi-task prediction"};
    app.require_subcommand(1);

    CliOptions cli;
    app.add_option("--config", cli.config_path, "experiment config JSON");
    app.add_option("--seed", cli.seed, "master seed override");
    app.add_option("--out", cli.out_dir, "output directory override");
    app.add_option("--threads", cli.threads, "worker threads for general training");
    app.add_flag("--timing", cli.timing, "record wall times in report rows");

    auto* generate = app.add_subcommand("generate", "write a synthetic dataset directory");
    auto* train_general =
        app.add_subcommand("train-general", "general training over all stations");
    auto* train_task =
        app.add_subcommand("train-task", "per-station fine-tuning and evaluation");
    auto* predict = app.add_subcommand("predict", "predict the test split");
    predict->add_flag("--finetune", cli.finetune, "fine-tune per station before predicting");
    auto* cokrige =
        app.add_subcommand("cokrige", "group-deletion sweep with TEP detection");
    cokrige->add_flag("--deleted-only", cli.deleted_only,
                      "report MAE over deleted stations only");
    auto* report = app.add_subcommand("report", "merge report CSVs and plot curves");
    report->add_option("inputs", cli.report_inputs, "report or curve CSV files");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            return app.exit(e);
        }
        std::cerr << "[eval-cli] " << e.what() << "\n\n" << app.help() << std::flush;
        return 1;
    }

    try {
        if (generate->parsed()) return cmd_generate(cli);
        if (train_general->parsed()) return cmd_train_general(cli);
        if (train_task->parsed()) return cmd_train_task(cli);
        if (predict->parsed()) return cmd_predict(cli);
        if (cokrige->parsed()) return cmd_cokrige(cli);
        if (report->parsed()) return cmd_report(cli);
        std::cerr << app.help();
        return 1;
    } catch (const sum::NumericError& e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const sum::Error& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "[eval-cli] " << e.what() << "\n";
        return 2;
    }
}
