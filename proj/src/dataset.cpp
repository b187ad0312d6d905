#include "sum/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sum/errors.hpp"
#include "sum/rng.hpp"
#include "sum/textio.hpp"

namespace sum {

namespace {

constexpr const char* kComponent = "data";
constexpr char kTensorMagic[8] = {'S', 'U', 'M', 'T', 'E', 'N', 'S', '1'};

void write_u64_le(std::ostream& out, std::uint64_t v) {
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(bytes, 8);
}

std::uint64_t read_u64_le(std::istream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return v;
}

std::string station_id(std::size_t index, std::size_t total) {
    std::size_t width = 3;
    for (std::size_t n = total; n > 1000; n /= 10) ++width;
    std::string digits = std::to_string(index);
    return "st" + std::string(width > digits.size() ? width - digits.size() : 0, '0') + digits;
}

const char* coord_system_name(CoordSystem cs) {
    return cs == CoordSystem::LatLonDegrees ? "latlon_degrees" : "planar_units";
}

CoordSystem coord_system_from_name(std::string_view name) {
    if (name == "latlon_degrees") return CoordSystem::LatLonDegrees;
    if (name == "planar_units") return CoordSystem::PlanarUnits;
    throw FormatError(kComponent, "unknown coordinate system '" + std::string(name) + "'");
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
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

}  // namespace

void Dataset::validate() const {
    if (X.empty()) {
        throw ValidationError(kComponent, "dataset has no predictor scales");
    }
    const auto dims = X.front().dims();
    for (const DenseTensor3& x : X) {
        if (x.dims() != dims) {
            throw ShapeError(kComponent, "predictor scales disagree on dimensions");
        }
        if (!x.all_finite()) {
            throw ValidationError(kComponent, "predictor tensor has non-finite entries");
        }
    }
    if (Y.d1() != 1 || Y.d2() != dims[1] || Y.d3() != dims[2]) {
        throw ShapeError(kComponent, "response tensor does not match predictor (T, S)");
    }
    if (!Y.all_finite()) {
        throw ValidationError(kComponent, "response tensor has non-finite entries");
    }
    if (stations.size() != dims[2]) {
        throw ShapeError(kComponent, "station count " + std::to_string(stations.size()) +
                                         " does not match task axis " +
                                         std::to_string(dims[2]));
    }
    stations.validate();
    if (meta.L != X.size()) {
        throw ValidationError(kComponent, "meta.L does not match the number of scales");
    }
}

void SyntheticConfig::validate() const {
    if (S == 0 || T == 0 || N == 0 || L == 0 || K_true == 0) {
        throw ParamError(kComponent, "all synthetic dimensions must be >= 1");
    }
    if (noise_sigma < 0.0 || hetero_sigma < 0.0 || x_noise_sigma < 0.0) {
        throw ParamError(kComponent, "noise levels must be >= 0");
    }
    if (spatial_corr.kind == SpatialCorrSpec::Kind::Clustered &&
        (spatial_corr.n_clusters == 0 || spatial_corr.n_clusters > S)) {
        throw ParamError(kComponent, "n_clusters must lie in [1, S]");
    }
}

std::pair<Dataset, SyntheticTruth> generate_synthetic_with_truth(const SyntheticConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);

    // 1. Station geography (planar coordinates in [0, 100]^2).
    const bool clustered = cfg.spatial_corr.kind == SpatialCorrSpec::Kind::Clustered;
    const std::size_t n_clusters = clustered ? cfg.spatial_corr.n_clusters : 1;
    std::vector<std::pair<double, double>> centers(n_clusters);
    for (auto& c : centers) {
        c.first = 100.0 * rng.next_double();
        c.second = 100.0 * rng.next_double();
    }
    std::vector<std::size_t> cluster_of(cfg.S);
    StationSet stations;
    stations.coord_system = CoordSystem::PlanarUnits;
    stations.stations.reserve(cfg.S);
    for (std::size_t s = 0; s < cfg.S; ++s) {
        Station st;
        st.id = station_id(s, cfg.S);
        if (clustered) {
            cluster_of[s] = s % n_clusters;
            st.c1 = centers[cluster_of[s]].first + 3.0 * rng.next_normal();
            st.c2 = centers[cluster_of[s]].second + 3.0 * rng.next_normal();
        } else {
            cluster_of[s] = 0;
            st.c1 = 100.0 * rng.next_double();
            st.c2 = 100.0 * rng.next_double();
        }
        stations.stations.push_back(std::move(st));
    }

    // 2. Ground-truth CP factors and the predictor tensors.
    const auto draw_matrix = [&rng](std::size_t rows, std::size_t cols) {
        Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.next_normal();
        }
        return m;
    };
    CPFactors cp;
    cp.A = draw_matrix(cfg.S, cfg.K_true);
    cp.B = draw_matrix(cfg.T, cfg.K_true);
    for (std::size_t l = 0; l < cfg.L; ++l) cp.C.push_back(draw_matrix(cfg.N, cfg.K_true));

    Dataset ds;
    ds.stations = std::move(stations);
    for (std::size_t l = 0; l < cfg.L; ++l) {
        DenseTensor3 x = cp_reconstruct(cp, l);
        for (double& v : x.values()) v += cfg.x_noise_sigma * rng.next_normal();
        ds.X.push_back(std::move(x));
    }

    // 3. Shared prediction parameters in the degenerate multi-scale form.
    SyntheticTruth truth;
    truth.hyper.K = cfg.K_true;
    truth.hyper.L = cfg.L;
    truth.hyper.N = cfg.N;
    truth.hyper.T = cfg.T;
    truth.hyper.mode = DegenerationMode::FullDegenerate;
    MuscatParams global = MuscatParams::zeros(truth.hyper);
    for (Eigen::Index i = 0; i < global.factors.a.size(); ++i) {
        global.factors.a[i] = rng.next_normal();
    }
    for (Eigen::Index i = 0; i < global.factors.b.size(); ++i) {
        global.factors.b[i] = rng.next_normal();
    }
    for (std::size_t l = 0; l < cfg.L; ++l) {
        global.factors.C[l] = draw_matrix(cfg.N, cfg.K_true);
        global.w_spatial[l] = 0.25 * draw_matrix(cfg.N, cfg.K_true);
        global.v_temporal[l] = 0.25 * draw_matrix(cfg.N, cfg.K_true);
    }
    global.k.setConstant(1.0 / std::sqrt(static_cast<double>(cfg.L)));
    truth.global_theta = muscat_pack(global, truth.hyper);

    // 4. Per-station parameter offsets. In clustered mode half the variance
    //    is shared within a cluster, so nearby stations stay correlated.
    const Eigen::Index P = truth.global_theta.size();
    std::vector<Vector> cluster_shift(n_clusters, Vector::Zero(P));
    for (auto& g : cluster_shift) {
        for (Eigen::Index i = 0; i < P; ++i) g[i] = rng.next_normal();
    }
    truth.station_delta.resize(cfg.S);
    const double shared = clustered ? std::sqrt(0.5) : 0.0;
    const double own = clustered ? std::sqrt(0.5) : 1.0;
    for (std::size_t s = 0; s < cfg.S; ++s) {
        Vector g(P);
        for (Eigen::Index i = 0; i < P; ++i) g[i] = rng.next_normal();
        truth.station_delta[s] =
            cfg.hetero_sigma * (shared * cluster_shift[cluster_of[s]] + own * g);
    }

    // 5. Responses from the per-station parameters; noise strictly last so
    //    the noiseless tensor is a prefix-identical draw.
    ds.Y = DenseTensor3(1, cfg.T, cfg.S);
    std::vector<MuscatParams> station_params;
    station_params.reserve(cfg.S);
    for (std::size_t s = 0; s < cfg.S; ++s) {
        station_params.push_back(
            muscat_unpack(truth.global_theta + truth.station_delta[s], truth.hyper));
    }
    std::vector<Vector> slices(cfg.L);
    for (std::size_t t = 0; t < cfg.T; ++t) {
        for (std::size_t s = 0; s < cfg.S; ++s) {
            for (std::size_t l = 0; l < cfg.L; ++l) slices[l] = ds.X[l].slice1(t, s);
            ds.Y.at(0, t, s) = muscat_predict(slices, t, station_params[s]);
        }
    }
    for (double& v : ds.Y.values()) v += cfg.noise_sigma * rng.next_normal();

    ds.meta.L = cfg.L;
    ds.meta.K_true = cfg.K_true;
    ds.meta.noise_sigma = cfg.noise_sigma;
    ds.meta.hetero_sigma = cfg.hetero_sigma;
    ds.meta.seed = cfg.seed;
    ds.validate();
    return {std::move(ds), std::move(truth)};
}

Dataset generate_synthetic(const SyntheticConfig& cfg) {
    return generate_synthetic_with_truth(cfg).first;
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& dataset, double ratio) {
    dataset.validate();
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw ParamError(kComponent, "split ratio must lie strictly in (0, 1)");
    }
    const std::size_t T = dataset.times();
    const std::size_t cut = static_cast<std::size_t>(
        std::floor(ratio * static_cast<double>(T)));
    if (cut == 0 || cut >= T) {
        throw ParamError(kComponent, "split at " + std::to_string(cut) + " of " +
                                         std::to_string(T) + " leaves one side empty");
    }

    const auto take = [&](const DenseTensor3& src, std::size_t begin, std::size_t end) {
        DenseTensor3 out(src.d1(), end - begin, src.d3());
        for (std::size_t i = 0; i < src.d1(); ++i) {
            for (std::size_t t = begin; t < end; ++t) {
                for (std::size_t s = 0; s < src.d3(); ++s) {
                    out.at(i, t - begin, s) = src.at(i, t, s);
                }
            }
        }
        return out;
    };

    Dataset train, test;
    train.stations = dataset.stations;
    test.stations = dataset.stations;
    train.meta = dataset.meta;
    test.meta = dataset.meta;
    for (const DenseTensor3& x : dataset.X) {
        train.X.push_back(take(x, 0, cut));
        test.X.push_back(take(x, cut, T));
    }
    train.Y = take(dataset.Y, 0, cut);
    test.Y = take(dataset.Y, cut, T);
    return {std::move(train), std::move(test)};
}

CokrigeSchedule make_cokrige_schedule(const StationSet& stations, std::size_t G,
                                      std::uint64_t seed) {
    stations.validate();
    const std::size_t n = stations.size();
    if (G == 0) {
        throw ParamError(kComponent, "group count must be >= 1");
    }
    if (G > n) {
        throw ParamError(kComponent, "group count " + std::to_string(G) +
                                         " exceeds station count " + std::to_string(n));
    }
    Rng rng(seed);
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        std::swap(perm[i - 1], perm[rng.next_index(i)]);
    }

    CokrigeSchedule schedule;
    schedule.seed = seed;
    schedule.groups.resize(G);
    const std::size_t base = n / G;
    const std::size_t extra = n % G;
    std::size_t cursor = 0;
    for (std::size_t g = 0; g < G; ++g) {
        const std::size_t size = base + (g < extra ? 1 : 0);
        for (std::size_t j = 0; j < size; ++j) {
            schedule.groups[g].push_back(stations.stations[perm[cursor++]].id);
        }
    }
    schedule.deletion_order.resize(G);
    for (std::size_t g = 0; g < G; ++g) schedule.deletion_order[g] = g;
    for (std::size_t i = G; i > 1; --i) {
        std::swap(schedule.deletion_order[i - 1], schedule.deletion_order[rng.next_index(i)]);
    }
    return schedule;
}

void save_tensor(const DenseTensor3& tensor, const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) {
        throw IoError(kComponent, "cannot open '" + file.string() + "' for writing");
    }
    out.write(kTensorMagic, sizeof(kTensorMagic));
    write_u64_le(out, tensor.d1());
    write_u64_le(out, tensor.d2());
    write_u64_le(out, tensor.d3());
    for (double v : tensor.values()) {
        write_u64_le(out, std::bit_cast<std::uint64_t>(v));
    }
    if (!out) {
        throw IoError(kComponent, "write to '" + file.string() + "' failed");
    }
}

DenseTensor3 load_tensor(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) {
        throw IoError(kComponent, "cannot open '" + file.string() + "'");
    }
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || !std::equal(magic, magic + 8, kTensorMagic)) {
        throw FormatError(kComponent, "'" + file.string() + "' is not a tensor file");
    }
    const std::uint64_t d1 = read_u64_le(in);
    const std::uint64_t d2 = read_u64_le(in);
    const std::uint64_t d3 = read_u64_le(in);
    if (!in || d1 == 0 || d2 == 0 || d3 == 0 || d1 * d2 * d3 > (1ULL << 32)) {
        throw FormatError(kComponent, "'" + file.string() + "' has an invalid dims header");
    }
    const std::size_t count = static_cast<std::size_t>(d1 * d2 * d3);
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
        values[i] = std::bit_cast<double>(read_u64_le(in));
        if (!in) {
            throw FormatError(kComponent, "'" + file.string() +
                                              "' payload shorter than its dims header");
        }
    }
    in.peek();
    if (!in.eof()) {
        throw FormatError(kComponent, "'" + file.string() +
                                          "' payload longer than its dims header");
    }
    DenseTensor3 tensor(d1, d2, d3, std::move(values));
    if (!tensor.all_finite()) {
        throw FormatError(kComponent, "'" + file.string() + "' contains non-finite values");
    }
    return tensor;
}

void save_stations_csv(const StationSet& stations, const std::filesystem::path& file) {
    stations.validate();
    std::ofstream out(file, std::ios::binary);
    if (!out) {
        throw IoError(kComponent, "cannot open '" + file.string() + "' for writing");
    }
    out << "id,c1,c2,coord_system\n";
    for (const Station& s : stations.stations) {
        if (s.id.find(',') != std::string::npos || s.id.find('\n') != std::string::npos) {
            throw ValidationError(kComponent, "station id '" + s.id + "' contains a delimiter");
        }
        out << s.id << ',' << format_double(s.c1) << ',' << format_double(s.c2) << ','
            << coord_system_name(stations.coord_system) << '\n';
    }
}

StationSet load_stations_csv(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) {
        throw IoError(kComponent, "cannot open '" + file.string() + "'");
    }
    std::string line;
    if (!std::getline(in, line) || line != "id,c1,c2,coord_system") {
        throw FormatError(kComponent, "'" + file.string() + "' missing stations header");
    }
    StationSet out;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 4) {
            throw FormatError(kComponent, "'" + file.string() + "' row has " +
                                              std::to_string(fields.size()) + " fields");
        }
        Station s;
        s.id = std::string(fields[0]);
        s.c1 = parse_double(fields[1], kComponent);
        s.c2 = parse_double(fields[2], kComponent);
        const CoordSystem cs = coord_system_from_name(fields[3]);
        if (first) {
            out.coord_system = cs;
            first = false;
        } else if (cs != out.coord_system) {
            throw FormatError(kComponent, "'" + file.string() + "' mixes coordinate systems");
        }
        out.stations.push_back(std::move(s));
    }
    out.validate();
    return out;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
    dataset.validate();
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw IoError(kComponent, "cannot create directory '" + dir.string() + "'");
    }
    save_stations_csv(dataset.stations, dir / "stations.csv");
    save_tensor(dataset.Y, dir / "targets.f64");
    for (std::size_t l = 0; l < dataset.X.size(); ++l) {
        save_tensor(dataset.X[l], dir / ("scale_" + std::to_string(l + 1) + ".f64"));
    }
    nlohmann::json meta;
    meta["L"] = dataset.meta.L;
    if (dataset.meta.K_true) meta["K_true"] = *dataset.meta.K_true;
    if (dataset.meta.noise_sigma) meta["noise_sigma"] = *dataset.meta.noise_sigma;
    if (dataset.meta.hetero_sigma) meta["hetero_sigma"] = *dataset.meta.hetero_sigma;
    if (dataset.meta.seed) meta["seed"] = *dataset.meta.seed;
    std::ofstream out(dir / "meta.json", std::ios::binary);
    if (!out) {
        throw IoError(kComponent, "cannot open '" + (dir / "meta.json").string() +
                                      "' for writing");
    }
    out << meta.dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const auto meta_path = dir / "meta.json";
    std::ifstream meta_in(meta_path, std::ios::binary);
    if (!meta_in) {
        throw IoError(kComponent, "cannot open '" + meta_path.string() + "'");
    }
    nlohmann::json meta;
    try {
        meta_in >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(kComponent, "'" + meta_path.string() + "': " + e.what());
    }
    if (!meta.contains("L") || !meta["L"].is_number_unsigned()) {
        throw FormatError(kComponent, "'" + meta_path.string() + "' missing scale count L");
    }

    Dataset ds;
    ds.meta.L = meta["L"].get<std::size_t>();
    if (meta.contains("K_true")) ds.meta.K_true = meta["K_true"].get<std::size_t>();
    if (meta.contains("noise_sigma")) ds.meta.noise_sigma = meta["noise_sigma"].get<double>();
    if (meta.contains("hetero_sigma")) {
        ds.meta.hetero_sigma = meta["hetero_sigma"].get<double>();
    }
    if (meta.contains("seed")) ds.meta.seed = meta["seed"].get<std::uint64_t>();

    ds.stations = load_stations_csv(dir / "stations.csv");
    ds.Y = load_tensor(dir / "targets.f64");
    for (std::size_t l = 0; l < ds.meta.L; ++l) {
        ds.X.push_back(load_tensor(dir / ("scale_" + std::to_string(l + 1) + ".f64")));
    }
    ds.validate();
    return ds;
}

std::vector<TaskSeries> task_series(const Dataset& dataset, std::size_t time_offset) {
    dataset.validate();
    const std::size_t T = dataset.times();
    const std::size_t S = dataset.task_count();
    const std::size_t L = dataset.scales();
    std::vector<TaskSeries> out;
    out.reserve(S);
    for (std::size_t s = 0; s < S; ++s) {
        TaskSeries series;
        series.id = dataset.stations.stations[s].id;
        series.x.reserve(T);
        series.y = Vector(static_cast<Eigen::Index>(T));
        for (std::size_t t = 0; t < T; ++t) {
            Slice slice;
            slice.t = time_offset + t;
            slice.scales.reserve(L);
            for (std::size_t l = 0; l < L; ++l) {
                slice.scales.push_back(dataset.X[l].slice1(t, s));
            }
            series.x.push_back(std::move(slice));
            series.y[static_cast<Eigen::Index>(t)] = dataset.Y.at(0, t, s);
        }
        out.push_back(std::move(series));
    }
    return out;
}

}  // namespace sum
