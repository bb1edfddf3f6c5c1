#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "lcar/precision.hpp"
#include "oracles.hpp"

using lcar::AdjacencyStructure;
using lcar::CandidateSequence;
using lcar::EdgeState;

namespace {

CandidateSequence random_sequence(lcar::RngStream& rng, const AdjacencyStructure& adj) {
    std::vector<int> order(adj.num_edges());
    for (int i = 0; i < adj.num_edges(); ++i) order[i] = i;
    for (int i = adj.num_edges() - 1; i > 0; --i) {
        std::swap(order[i], order[rng.uniform_int(i + 1)]);
    }
    return CandidateSequence(adj, std::move(order));
}

}  // namespace

TEST_CASE("precision of the full 3-node path") {
    const auto adj = AdjacencyStructure::from_edges(3, {{0, 1}, {1, 2}});
    const EdgeState state(adj, true);
    const Eigen::MatrixXd q = Eigen::MatrixXd(lcar::build_precision(state, 0.001));

    Eigen::MatrixXd expected(4, 4);
    expected << 1.001, -1, 0, 0,
                -1, 2.001, -1, 0,
                0, -1, 1.001, 0,
                0, 0, 0, 0.001;
    REQUIRE((q - expected).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("precision rejects non-positive epsilon") {
    const auto adj = AdjacencyStructure::from_edges(2, {{0, 1}});
    const EdgeState state(adj, true);
    REQUIRE_THROWS_AS(lcar::build_precision(state, 0.0), lcar::NonPositiveEpsilon);
    REQUIRE_THROWS_AS(lcar::build_sub_precision(state, -1.0), lcar::NonPositiveEpsilon);
}

TEST_CASE("a single unit with no base edges stays unlinked") {
    // With no neighbours there is nothing to remove, so the unit never gains
    // the global link and only the dominance constant remains.
    const auto adj = AdjacencyStructure::from_edges(1, {});
    const EdgeState state(adj, true);
    const Eigen::MatrixXd q = Eigen::MatrixXd(lcar::build_precision(state, 0.001));
    REQUIRE(q.rows() == 2);
    REQUIRE((q - 0.001 * Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-15);
    REQUIRE(oracle::smallest_eigenvalue(q) > 0.0);
}

TEST_CASE("sparse assembly matches the dense definition entrywise") {
    lcar::RngStream rng(3);
    for (int rep = 0; rep < 30; ++rep) {
        const auto adj = oracle::random_adjacency(rng, 7, 6);
        const auto state = oracle::random_edge_state(rng, adj);
        const double eps = rep % 2 == 0 ? 0.001 : 0.01;

        const Eigen::MatrixXd full = Eigen::MatrixXd(lcar::build_precision(state, eps));
        const Eigen::MatrixXd full_oracle = oracle::dense_precision(state, eps);
        REQUIRE((full - full_oracle).cwiseAbs().maxCoeff() < 1e-14);

        const Eigen::MatrixXd sub = Eigen::MatrixXd(lcar::build_sub_precision(state, eps));
        REQUIRE((sub - oracle::dense_sub_precision(state, eps)).cwiseAbs().maxCoeff() < 1e-14);

        REQUIRE(oracle::smallest_eigenvalue(full_oracle) >= eps - 1e-12);
    }
}

TEST_CASE("log_det of a diagonal matrix") {
    lcar::SpMat q(2, 2);
    q.insert(0, 0) = 2.0;
    q.insert(1, 1) = 2.0;
    q.makeCompressed();
    REQUIRE(lcar::log_det(q) == Catch::Approx(std::log(4.0)).epsilon(1e-14));
}

TEST_CASE("log_det matches the dense eigendecomposition oracle") {
    const auto adj = AdjacencyStructure::from_edges(3, {{0, 1}, {1, 2}});
    const EdgeState state(adj, true);
    const auto sub = lcar::build_sub_precision(state, 0.001);
    REQUIRE(std::abs(lcar::log_det(sub) -
                     oracle::logdet_eigen(oracle::dense_sub_precision(state, 0.001))) < 1e-10);

    lcar::RngStream rng(17);
    for (int rep = 0; rep < 20; ++rep) {
        const auto radj = oracle::random_adjacency(rng, 10, 8);
        const auto rstate = oracle::random_edge_state(rng, radj);
        const auto full = lcar::build_precision(rstate, 0.001);
        REQUIRE(std::abs(lcar::log_det(full) -
                         oracle::logdet_eigen(oracle::dense_precision(rstate, 0.001))) < 1e-8);
    }
}

TEST_CASE("log_det rejects indefinite matrices") {
    lcar::SpMat q(2, 2);
    q.insert(0, 0) = 1.0;
    q.insert(1, 1) = -1.0;
    q.makeCompressed();
    REQUIRE_THROWS_AS(lcar::log_det(q), lcar::NotPositiveDefinite);
}

TEST_CASE("quad_form basics and the dominance bound") {
    const auto adj = AdjacencyStructure::from_edges(3, {{0, 1}, {1, 2}});
    const EdgeState state(adj, true);
    const double eps = 0.001;
    const auto sub = lcar::build_sub_precision(state, eps);

    REQUIRE(lcar::quad_form(sub, Eigen::VectorXd::Zero(3)) == 0.0);

    lcar::SpMat diag(3, 3);
    diag.insert(0, 0) = 1.0;
    diag.insert(1, 1) = 2.0;
    diag.insert(2, 2) = 3.0;
    diag.makeCompressed();
    const Eigen::Vector3d v(1.0, -2.0, 0.5);
    REQUIRE(lcar::quad_form(diag, v) == Catch::Approx(1.0 + 8.0 + 0.75).epsilon(1e-14));

    lcar::RngStream rng(5);
    for (int rep = 0; rep < 10; ++rep) {
        Eigen::VectorXd x(3);
        for (int i = 0; i < 3; ++i) x[i] = rng.normal();
        const Eigen::MatrixXd dense = oracle::dense_sub_precision(state, eps);
        REQUIRE(lcar::quad_form(sub, x) == Catch::Approx(x.dot(dense * x)).margin(1e-12));
        REQUIRE(lcar::quad_form(sub, x) >= eps * x.squaredNorm() - 1e-12);
    }

    REQUIRE_THROWS_AS(lcar::quad_form(sub, Eigen::VectorXd::Zero(4)), lcar::DimensionMismatch);
}

TEST_CASE("edge delta log-determinants") {
    lcar::RngStream rng(23);
    const double eps = 0.001;

    SECTION("remove then re-add cancels") {
        const auto adj = oracle::random_adjacency(rng, 8, 5);
        const auto seq = random_sequence(rng, adj);
        for (int j = adj.num_edges(); j >= 1; j -= 2) {
            const double down = lcar::edge_delta_logdet(seq, j, lcar::EdgeMove::Remove, eps);
            const double up = lcar::edge_delta_logdet(seq, j - 1, lcar::EdgeMove::Add, eps);
            REQUIRE(std::abs(down + up) < 1e-10);
        }
    }

    SECTION("matches the dense recompute oracle on the 3-node path") {
        const auto adj = AdjacencyStructure::from_edges(3, {{0, 1}, {1, 2}});
        const CandidateSequence seq(adj, {0, 1});  // removes {0,1} first
        const double delta = lcar::edge_delta_logdet(seq, 2, lcar::EdgeMove::Remove, eps);
        const double expected = oracle::logdet_eigen(oracle::dense_sub_precision(seq.candidate(1), eps)) -
                                oracle::logdet_eigen(oracle::dense_sub_precision(seq.candidate(2), eps));
        REQUIRE(std::abs(delta - expected) < 1e-10);
    }

    SECTION("telescopes to the endpoint difference") {
        for (int rep = 0; rep < 5; ++rep) {
            const auto adj = oracle::random_adjacency(rng, 9, 7);
            const auto seq = random_sequence(rng, adj);
            double total = 0.0;
            for (int j = adj.num_edges(); j >= 1; --j) {
                total += lcar::edge_delta_logdet(seq, j, lcar::EdgeMove::Remove, eps);
            }
            const double lo = lcar::log_det(lcar::build_sub_precision(seq.candidate(0), eps));
            const double hi = lcar::log_det(lcar::build_sub_precision(seq.candidate(adj.num_edges()), eps));
            REQUIRE(std::abs(total - (lo - hi)) < 1e-8);
        }
    }
}

TEST_CASE("candidate log-determinant cache") {
    lcar::RngStream rng(31);
    const auto adj = oracle::random_adjacency(rng, 8, 6);
    auto seq = random_sequence(rng, adj);
    const double eps = 0.001;

    REQUIRE_THROWS_AS(seq.cached_logdet(0), lcar::MissingLogDetCache);
    lcar::ensure_logdet_cache(seq, eps);
    for (int j = 0; j <= adj.num_edges(); ++j) {
        const double direct = lcar::log_det(lcar::build_precision(seq.candidate(j), eps));
        REQUIRE(std::abs(seq.cached_logdet(j) - direct) < 1e-9);
    }
}

TEST_CASE("Laplacian kernel: constants per extended component are annihilated") {
    // Two base components; at the full graph the global node is isolated,
    // giving three components in the extended graph.
    const auto adj = AdjacencyStructure::from_edges(5, {{0, 1}, {1, 2}, {3, 4}});
    const EdgeState state(adj, true);
    const Eigen::MatrixXd q = Eigen::MatrixXd(lcar::build_precision(state, 0.001));
    const Eigen::MatrixXd laplacian = q - 0.001 * Eigen::MatrixXd::Identity(6, 6);

    Eigen::VectorXd comp1 = Eigen::VectorXd::Zero(6);
    comp1.head(3).setOnes();
    Eigen::VectorXd comp2 = Eigen::VectorXd::Zero(6);
    comp2.segment(3, 2).setOnes();
    Eigen::VectorXd comp3 = Eigen::VectorXd::Zero(6);
    comp3[5] = 1.0;
    REQUIRE((laplacian * comp1).cwiseAbs().maxCoeff() < 1e-14);
    REQUIRE((laplacian * comp2).cwiseAbs().maxCoeff() < 1e-14);
    REQUIRE((laplacian * comp3).cwiseAbs().maxCoeff() < 1e-14);
}
