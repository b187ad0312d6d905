#include <doctest.h>

#include <cmath>
#include <numbers>

#include "sum/errors.hpp"
#include "sum/graph.hpp"
#include "support/oracles.hpp"

using namespace sum;

namespace {

StationSet planar(std::initializer_list<std::pair<double, double>> coords) {
    StationSet s;
    s.coord_system = CoordSystem::PlanarUnits;
    std::size_t i = 0;
    for (const auto& [x, y] : coords) {
        s.stations.push_back({"p" + std::to_string(i++), x, y});
    }
    return s;
}

}  // namespace

TEST_CASE("distance_matrix planar basics") {
    const StationSet s = planar({{0.0, 0.0}, {3.0, 4.0}, {0.0, 0.0}});
    const Matrix d = distance_matrix(s);
    CHECK(d(0, 0) == 0.0);
    CHECK(d(0, 1) == doctest::Approx(5.0).epsilon(1e-14));  // 3-4-5 triangle
    CHECK(d(1, 0) == d(0, 1));
    CHECK(d(0, 2) == 0.0);  // identical coordinates
}

TEST_CASE("distance_matrix haversine quarter circle") {
    StationSet s;
    s.coord_system = CoordSystem::LatLonDegrees;
    s.stations = {{"a", 0.0, 0.0}, {"b", 0.0, 90.0}};
    const Matrix d = distance_matrix(s);
    const double want = std::numbers::pi * 6371.0 / 2.0;
    CHECK(d(0, 1) == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("distance_matrix validates coordinates") {
    StationSet s;
    s.coord_system = CoordSystem::LatLonDegrees;
    s.stations = {{"a", 91.0, 0.0}};
    CHECK_THROWS_AS(distance_matrix(s), ValidationError);
    StationSet dup = planar({{0.0, 0.0}, {1.0, 1.0}});
    dup.stations[1].id = dup.stations[0].id;
    CHECK_THROWS_AS(distance_matrix(dup), ValidationError);
    CHECK_THROWS_AS(distance_matrix(StationSet{}), ValidationError);
}

TEST_CASE("gaussian_adjacency analytic entries") {
    Matrix d(2, 2);
    d << 0.0, 0.0, 0.0, 0.0;
    const TaskGraph zero_dist = gaussian_adjacency(d, 2.0);
    CHECK(zero_dist.adjacency(0, 1) == doctest::Approx(1.0));
    CHECK(zero_dist.adjacency(0, 0) == 0.0);  // forced zero diagonal

    d(0, 1) = d(1, 0) = 2.0;
    const TaskGraph at_omega = gaussian_adjacency(d, 2.0);
    CHECK(at_omega.adjacency(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));

    CHECK_THROWS_AS(gaussian_adjacency(d, 0.0), ParamError);
    CHECK_THROWS_AS(gaussian_adjacency(d, -1.0), ParamError);
}

TEST_CASE("gaussian_adjacency matches the per-entry formula oracle") {
    const StationSet s = planar({{0.0, 0.0}, {1.0, 0.0}, {0.0, 2.0}});
    const Matrix d = distance_matrix(s);
    const double omega = 1.0;
    const TaskGraph g = gaussian_adjacency(d, omega);
    for (Eigen::Index i = 0; i < 3; ++i) {
        for (Eigen::Index j = 0; j < 3; ++j) {
            const double want = i == j ? 0.0 : std::exp(-d(i, j) / omega);
            CHECK(std::abs(g.adjacency(i, j) - want) <= 1e-12);
        }
        double row_sum = 0.0;
        for (Eigen::Index j = 0; j < 3; ++j) row_sum += g.adjacency(i, j);
        CHECK(std::abs(g.degree[i] - row_sum) <= 1e-12);
    }
}

TEST_CASE("gaussian_adjacency is monotone in distance") {
    Rng rng(23);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t n = 3 + rng.next_index(6);
        Matrix d = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        for (Eigen::Index i = 0; i < d.rows(); ++i) {
            for (Eigen::Index j = i + 1; j < d.cols(); ++j) {
                d(i, j) = d(j, i) = 10.0 * rng.next_double();
            }
        }
        const TaskGraph g = gaussian_adjacency(d, 0.5 + rng.next_double());
        for (Eigen::Index i = 0; i < d.rows(); ++i) {
            for (Eigen::Index j = 0; j < d.cols(); ++j) {
                for (Eigen::Index k = 0; k < d.rows(); ++k) {
                    for (Eigen::Index l = 0; l < d.cols(); ++l) {
                        if (i == j || k == l) continue;
                        if (d(i, j) <= d(k, l)) {
                            CHECK(g.adjacency(i, j) >= g.adjacency(k, l));
                        }
                    }
                }
            }
        }
    }
}

TEST_CASE("task graph Laplacian is PSD on random probes") {
    Rng rng(29);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 2 + rng.next_index(8);
        StationSet s;
        s.coord_system = CoordSystem::PlanarUnits;
        for (std::size_t i = 0; i < n; ++i) {
            s.stations.push_back({"s" + std::to_string(i), 50.0 * rng.next_double(),
                                  50.0 * rng.next_double()});
        }
        const TaskGraph g = gaussian_adjacency(distance_matrix(s), 5.0);
        CHECK(g.psd_spot_check());
        for (int probe = 0; probe < 5; ++probe) {
            const Vector v = oracle::random_vector(n, rng);
            CHECK(v.dot(g.laplacian * v) >= -1e-9 * std::max(1.0, v.squaredNorm()));
        }
    }
}

TEST_CASE("laplacian_trace hand example") {
    Matrix d(2, 2);
    d << 0.0, 1.0, 1.0, 0.0;
    const double omega = 1.0 / std::log(2.0);  // exp(-1/omega) = 0.5
    const TaskGraph g = gaussian_adjacency(d, omega);
    REQUIRE(g.adjacency(0, 1) == doctest::Approx(0.5).epsilon(1e-12));

    Matrix w(2, 2);
    w << 1.0, 0.0, 0.0, 1.0;  // columns (1,0) and (0,1)
    CHECK(laplacian_trace(w, g) == doctest::Approx(1.0).epsilon(1e-12));

    const Matrix grad = laplacian_trace_grad(w, g);
    CHECK(grad(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(grad(1, 0) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(grad(0, 1) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(grad(1, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("laplacian_trace vanishes when all columns are identical") {
    Rng rng(31);
    const TaskGraph g = oracle::complete_unit_graph(4);
    const Vector w = oracle::random_vector(6, rng);
    Matrix W(6, 4);
    for (int i = 0; i < 4; ++i) W.col(i) = w;
    CHECK(std::abs(laplacian_trace(W, g)) <= 1e-12);
    CHECK(laplacian_trace_grad(W, g).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("laplacian_trace matches the pairwise-sum oracle") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed + 1000);
        const std::size_t s = 2 + rng.next_index(9);   // S <= 10
        const std::size_t p = 1 + rng.next_index(12);
        Matrix d = Matrix::Zero(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s));
        for (Eigen::Index i = 0; i < d.rows(); ++i) {
            for (Eigen::Index j = i + 1; j < d.cols(); ++j) {
                d(i, j) = d(j, i) = 5.0 * rng.next_double();
            }
        }
        const TaskGraph g = gaussian_adjacency(d, 1.0 + rng.next_double());
        const Matrix W = oracle::random_matrix(p, s, rng);
        const double got = laplacian_trace(W, g);
        const double want = oracle::laplacian_trace_pairwise(W, g.adjacency);
        CHECK(std::abs(got - want) <= 1e-9 * std::max(1.0, std::abs(want)));
        CHECK(got >= -1e-12);
    }
}

TEST_CASE("laplacian_trace is translation invariant across columns") {
    Rng rng(37);
    const TaskGraph g = oracle::complete_unit_graph(5, 2.0);
    Matrix W = oracle::random_matrix(7, 5, rng);
    const double base = laplacian_trace(W, g);
    const Vector shift = oracle::random_vector(7, rng, 10.0);
    for (int i = 0; i < 5; ++i) W.col(i) += shift;
    CHECK(laplacian_trace(W, g) ==
          doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("laplacian_trace_grad matches central finite differences") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed + 2000);
        const std::size_t s = 2 + rng.next_index(6);
        const std::size_t p = 1 + rng.next_index(6);
        Matrix d = Matrix::Zero(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s));
        for (Eigen::Index i = 0; i < d.rows(); ++i) {
            for (Eigen::Index j = i + 1; j < d.cols(); ++j) {
                d(i, j) = d(j, i) = 3.0 * rng.next_double();
            }
        }
        const TaskGraph g = gaussian_adjacency(d, 1.5);
        const Matrix W = oracle::random_matrix(p, s, rng);

        const Matrix analytic = laplacian_trace_grad(W, g);
        // Flatten W, finite-difference the trace, compare entrywise.
        Vector flat(static_cast<Eigen::Index>(p * s));
        for (std::size_t i = 0; i < p * s; ++i) flat[static_cast<Eigen::Index>(i)] = W.data()[i];
        const auto f = [&](const Vector& v) {
            Matrix m(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(s));
            for (std::size_t i = 0; i < p * s; ++i) m.data()[i] = v[static_cast<Eigen::Index>(i)];
            return laplacian_trace(m, g);
        };
        const Vector fd = oracle::central_diff(f, flat, 1e-5);
        double max_rel = 0.0;
        for (std::size_t i = 0; i < p * s; ++i) {
            const double a = analytic.data()[i];
            const double b = fd[static_cast<Eigen::Index>(i)];
            max_rel = std::max(max_rel,
                               std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)}));
        }
        CHECK(max_rel <= 1e-5);
    }
}

TEST_CASE("laplacian shape mismatches are rejected") {
    const TaskGraph g = oracle::complete_unit_graph(3);
    CHECK_THROWS_AS(laplacian_trace(Matrix::Zero(4, 2), g), ShapeError);
    CHECK_THROWS_AS(laplacian_trace_grad(Matrix::Zero(4, 2), g), ShapeError);
}

TEST_CASE("median_offdiagonal_distance") {
    Matrix d(3, 3);
    d << 0.0, 1.0, 3.0,
         1.0, 0.0, 7.0,
         3.0, 7.0, 0.0;
    CHECK(median_offdiagonal_distance(d) == doctest::Approx(3.0));
    Matrix one(1, 1);
    CHECK_THROWS_AS(median_offdiagonal_distance(one), ParamError);
}

TEST_CASE("StationSet::subset preserves order") {
    const StationSet s = planar({{0, 0}, {1, 0}, {2, 0}, {3, 0}});
    const StationSet sub = s.subset({0, 2, 3});
    REQUIRE(sub.size() == 3);
    CHECK(sub.stations[1].id == "p2");
    CHECK_THROWS_AS(s.subset({9}), ParamError);
}
