#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sum/graph.hpp"
#include "sum/model.hpp"
#include "sum/muscat.hpp"
#include "sum/tensor.hpp"

namespace sum {

struct DatasetMeta {
    std::size_t L = 1;
    std::optional<std::size_t> K_true;
    std::optional<double> noise_sigma;
    std::optional<double> hetero_sigma;
    std::optional<std::uint64_t> seed;
};

/// Experiment inputs: L predictor tensors of shape (N, T, S), the response
/// tensor (1, T, S), and the station set aligned to the third axis.
struct Dataset {
    std::vector<DenseTensor3> X;
    DenseTensor3 Y;
    StationSet stations;
    DatasetMeta meta;

    std::size_t scales() const { return X.size(); }
    std::size_t predictors() const { return X.empty() ? 0 : X.front().d1(); }
    std::size_t times() const { return Y.d2(); }
    std::size_t task_count() const { return Y.d3(); }

    void validate() const;
};

struct SpatialCorrSpec {
    enum class Kind { IID, Clustered };
    Kind kind = Kind::IID;
    std::size_t n_clusters = 1;

    static SpatialCorrSpec iid() { return {}; }
    static SpatialCorrSpec clustered(std::size_t n) {
        return {Kind::Clustered, n};
    }
};

struct SyntheticConfig {
    std::size_t S = 1, T = 1, N = 1, L = 1, K_true = 1;
    double noise_sigma = 0.0;    // response noise std
    double hetero_sigma = 0.0;   // per-task parameter perturbation std
    double x_noise_sigma = 0.0;  // optional predictor noise std
    SpatialCorrSpec spatial_corr;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Ground truth behind a synthetic dataset: the shared prediction
/// parameters (flat, muscat layout) and the per-station offsets.
struct SyntheticTruth {
    MuscatHyper hyper;
    Vector global_theta;
    std::vector<Vector> station_delta;  // S entries; theta_s = global + delta_s
};

/// Draws CP-structured predictor tensors and responses from the
/// multi-scale ensemble prediction form with per-task parameter
/// perturbations. Fully determined by cfg.seed; the response noise is
/// drawn last, so datasets differing only in noise_sigma share everything
/// else bit-exactly.
Dataset generate_synthetic(const SyntheticConfig& cfg);
std::pair<Dataset, SyntheticTruth> generate_synthetic_with_truth(const SyntheticConfig& cfg);

/// Time split: train takes indices [0, floor(ratio * T)), test the rest.
/// Both sides keep every station. Throws if either side would be empty.
std::pair<Dataset, Dataset> split_train_test(const Dataset& dataset, double ratio);

/// Random near-equal partition of the stations into G groups plus a random
/// deletion order over the groups, both determined by `seed`.
struct CokrigeSchedule {
    std::vector<std::vector<std::string>> groups;  // station ids per group
    std::vector<std::size_t> deletion_order;       // permutation of group indices
    std::uint64_t seed = 0;

    std::size_t group_count() const { return groups.size(); }
};

CokrigeSchedule make_cokrige_schedule(const StationSet& stations, std::size_t G,
                                      std::uint64_t seed);

/// Dataset directory layout: stations.csv, targets.f64, scale_<l>.f64
/// (l = 1..L), meta.json. Tensor files carry the magic "SUMTENS1", three
/// little-endian u64 dims, then the payload as little-endian f64.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

void save_tensor(const DenseTensor3& tensor, const std::filesystem::path& file);
DenseTensor3 load_tensor(const std::filesystem::path& file);

void save_stations_csv(const StationSet& stations, const std::filesystem::path& file);
StationSet load_stations_csv(const std::filesystem::path& file);

/// Per-station series extracted from the tensors. `time_offset` shifts the
/// absolute time index carried by each slice; pass the train length when
/// extracting from a test split so temporal-factor rows stay aligned.
std::vector<TaskSeries> task_series(const Dataset& dataset, std::size_t time_offset = 0);

}  // namespace sum
