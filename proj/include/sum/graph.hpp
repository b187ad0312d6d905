#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sum/linalg.hpp"

namespace sum {

enum class CoordSystem { LatLonDegrees, PlanarUnits };

struct Station {
    std::string id;
    double c1 = 0.0;  // latitude (degrees) or planar x
    double c2 = 0.0;  // longitude (degrees) or planar y
};

/// Ordered collection of stations sharing one coordinate system.
/// Ids must be unique; lat/lon coordinates must satisfy |lat| <= 90,
/// |lon| <= 180.
struct StationSet {
    std::vector<Station> stations;
    CoordSystem coord_system = CoordSystem::PlanarUnits;

    std::size_t size() const { return stations.size(); }
    void validate() const;

    /// Subset preserving the original order; ids not found throw.
    StationSet subset(const std::vector<std::size_t>& indices) const;
};

/// Task-relation graph: Gaussian-kernel adjacency A (symmetric, zero
/// diagonal, entries in [0, 1]), its degree vector D_ii = sum_j A_ij, and
/// the precomputed Laplacian D - A. The diagonal of A is forced to zero;
/// it cancels inside D - A, and a zero diagonal keeps the pairwise-sum
/// identity for the trace exact.
struct TaskGraph {
    Matrix adjacency;   // S x S
    Vector degree;      // S
    Matrix laplacian;   // S x S, D - A
    double omega = 1.0;

    std::size_t size() const { return static_cast<std::size_t>(adjacency.rows()); }

    /// Spot-check that v' L v >= -1e-9 * max(1, |v|^2) for a few
    /// deterministic pseudo-random v.
    bool psd_spot_check(std::size_t draws = 8) const;
};

/// Pairwise distances. LatLonDegrees -> haversine great-circle distance in
/// km (Earth radius 6371.0 km); PlanarUnits -> Euclidean distance.
Matrix distance_matrix(const StationSet& stations);

/// Builds the task graph with A_ij = exp(-d_ij / omega) off the diagonal.
TaskGraph gaussian_adjacency(const Matrix& distances, double omega);

/// Median of the off-diagonal distances; the default kernel bandwidth when
/// none is configured. Requires at least two stations.
double median_offdiagonal_distance(const Matrix& distances);

/// tr(W (D - A) W'), where column i of W is the flat parameter vector of
/// task i. Equals 0.5 * sum_ij A_ij |W_:,i - W_:,j|^2.
double laplacian_trace(const Matrix& W, const TaskGraph& graph);

/// d/dW tr(W (D - A) W') = 2 W (D - A).
Matrix laplacian_trace_grad(const Matrix& W, const TaskGraph& graph);

}  // namespace sum
