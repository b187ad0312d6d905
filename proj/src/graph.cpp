#include "sum/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "sum/errors.hpp"
#include "sum/rng.hpp"

namespace sum {

namespace {

constexpr const char* kComponent = "graph-reg";
constexpr double kEarthRadiusKm = 6371.0;

double haversine_km(const Station& p, const Station& q) {
    constexpr double deg = std::numbers::pi / 180.0;
    const double lat1 = p.c1 * deg;
    const double lat2 = q.c1 * deg;
    const double dlat = (q.c1 - p.c1) * deg;
    const double dlon = (q.c2 - p.c2) * deg;
    const double s1 = std::sin(dlat / 2.0);
    const double s2 = std::sin(dlon / 2.0);
    const double h = s1 * s1 + std::cos(lat1) * std::cos(lat2) * s2 * s2;
    return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

double euclidean(const Station& p, const Station& q) {
    const double dx = p.c1 - q.c1;
    const double dy = p.c2 - q.c2;
    return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

void StationSet::validate() const {
    if (stations.empty()) {
        throw ValidationError(kComponent, "station set is empty");
    }
    std::unordered_set<std::string> seen;
    for (const Station& s : stations) {
        if (!seen.insert(s.id).second) {
            throw ValidationError(kComponent, "duplicate station id '" + s.id + "'");
        }
        if (!std::isfinite(s.c1) || !std::isfinite(s.c2)) {
            throw ValidationError(kComponent, "non-finite coordinate for station '" + s.id + "'");
        }
        if (coord_system == CoordSystem::LatLonDegrees) {
            if (std::abs(s.c1) > 90.0 || std::abs(s.c2) > 180.0) {
                throw ValidationError(kComponent,
                                      "station '" + s.id + "' has out-of-range lat/lon");
            }
        }
    }
}

StationSet StationSet::subset(const std::vector<std::size_t>& indices) const {
    StationSet out;
    out.coord_system = coord_system;
    out.stations.reserve(indices.size());
    for (std::size_t i : indices) {
        if (i >= stations.size()) {
            throw ParamError(kComponent, "station index " + std::to_string(i) + " out of range");
        }
        out.stations.push_back(stations[i]);
    }
    return out;
}

Matrix distance_matrix(const StationSet& stations) {
    stations.validate();
    const std::size_t n = stations.size();
    Matrix d = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dist =
                stations.coord_system == CoordSystem::LatLonDegrees
                    ? haversine_km(stations.stations[i], stations.stations[j])
                    : euclidean(stations.stations[i], stations.stations[j]);
            d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = dist;
            d(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = dist;
        }
    }
    return d;
}

TaskGraph gaussian_adjacency(const Matrix& distances, double omega) {
    if (!(omega > 0.0)) {
        throw ParamError(kComponent, "kernel bandwidth omega must be positive");
    }
    if (distances.rows() != distances.cols()) {
        throw ShapeError(kComponent, "distance matrix must be square");
    }
    const Eigen::Index n = distances.rows();
    TaskGraph g;
    g.omega = omega;
    g.adjacency = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) continue;
            const double d = distances(i, j);
            if (!(d >= 0.0)) {
                throw ValidationError(kComponent, "distance matrix has a negative or NaN entry");
            }
            g.adjacency(i, j) = std::exp(-d / omega);
        }
    }
    g.degree = Vector(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double acc = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) acc += g.adjacency(i, j);
        g.degree[i] = acc;
    }
    g.laplacian = -g.adjacency;
    for (Eigen::Index i = 0; i < n; ++i) g.laplacian(i, i) = g.degree[i];
    if (!g.psd_spot_check()) {
        throw NumericError(kComponent, "task-graph Laplacian failed the PSD spot check");
    }
    return g;
}

bool TaskGraph::psd_spot_check(std::size_t draws) const {
    const Eigen::Index n = adjacency.rows();
    Rng rng(0x505d5eedULL);
    for (std::size_t k = 0; k < draws; ++k) {
        Vector v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.next_normal();
        const double q = v.dot(laplacian * v);
        if (q < -1e-9 * std::max(1.0, v.squaredNorm())) return false;
    }
    return true;
}

double median_offdiagonal_distance(const Matrix& distances) {
    const Eigen::Index n = distances.rows();
    if (n < 2) {
        throw ParamError(kComponent, "median bandwidth needs at least two stations");
    }
    std::vector<double> vals;
    vals.reserve(static_cast<std::size_t>(n) * (static_cast<std::size_t>(n) - 1) / 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) vals.push_back(distances(i, j));
    }
    std::sort(vals.begin(), vals.end());
    const std::size_t m = vals.size();
    return (m % 2 == 1) ? vals[m / 2] : 0.5 * (vals[m / 2 - 1] + vals[m / 2]);
}

double laplacian_trace(const Matrix& W, const TaskGraph& graph) {
    if (static_cast<std::size_t>(W.cols()) != graph.size()) {
        throw ShapeError(kComponent, "task-parameter matrix has " + std::to_string(W.cols()) +
                                         " columns, graph has " + std::to_string(graph.size()) +
                                         " tasks");
    }
    // tr(W L W') = sum of (W L) entrywise-times W.
    return ((W * graph.laplacian).cwiseProduct(W)).sum();
}

Matrix laplacian_trace_grad(const Matrix& W, const TaskGraph& graph) {
    if (static_cast<std::size_t>(W.cols()) != graph.size()) {
        throw ShapeError(kComponent, "task-parameter matrix has " + std::to_string(W.cols()) +
                                         " columns, graph has " + std::to_string(graph.size()) +
                                         " tasks");
    }
    return 2.0 * (W * graph.laplacian);
}

}  // namespace sum
