#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lcar/simulation.hpp"
#include "oracles.hpp"

using lcar::RngStream;
using lcar::SimScenario;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("Matern correlation closed forms") {
    REQUIRE(lcar::matern_correlation(0.0, 2.5, 1.3) == 1.0);
    // nu = 1/2 is the exponential family.
    for (double d : {0.1, 0.7, 2.0, 5.0}) {
        REQUIRE(lcar::matern_correlation(d, 0.5, 1.7) ==
                Catch::Approx(std::exp(-d / 1.7)).epsilon(1e-12));
    }
    // Monotone decreasing in distance.
    double prev = 1.0;
    for (double d = 0.2; d < 6.0; d += 0.2) {
        const double c = lcar::matern_correlation(d, 2.5, 1.0);
        REQUIRE(c < prev);
        prev = c;
    }
    REQUIRE_THROWS_AS(lcar::matern_correlation(1.0, 2.5, 0.0), lcar::InvalidArgument);
}

TEST_CASE("range calibration") {
    SECTION("two points solve the scalar equation") {
        MatrixXd pts(2, 2);
        pts << 0, 0, 1.7, 0;
        const double range = lcar::calibrate_range(pts, 2.5, 0.5);
        REQUIRE(lcar::matern_correlation(1.7, 2.5, range) == Catch::Approx(0.5).margin(1e-6));
    }
    SECTION("unreachable targets are rejected") {
        MatrixXd pts(2, 2);
        pts << 0, 0, 1, 0;
        REQUIRE_THROWS_AS(lcar::calibrate_range(pts, 2.5, 1.0), lcar::NoBracket);
        REQUIRE_THROWS_AS(lcar::calibrate_range(pts, 2.5, 0.0), lcar::NoBracket);
    }
    SECTION("scaling the geometry scales the range") {
        const MatrixXd pts = lcar::lattice_centroids(4);
        const double base = lcar::calibrate_range(pts, 2.5, 0.5);
        const double scaled = lcar::calibrate_range((3.0 * pts).eval(), 2.5, 0.5);
        REQUIRE(scaled == Catch::Approx(3.0 * base).epsilon(1e-4));
    }
    SECTION("median correlation hits the target on the full lattice") {
        const MatrixXd pts = lcar::lattice_centroids(8);
        const double range = lcar::calibrate_range(pts, 2.5, 0.5);
        std::vector<double> corrs;
        for (int i = 0; i < pts.rows(); ++i) {
            for (int j = i + 1; j < pts.rows(); ++j) {
                corrs.push_back(lcar::matern_correlation((pts.row(i) - pts.row(j)).norm(), 2.5, range));
            }
        }
        REQUIRE(lcar::median(corrs) == Catch::Approx(0.5).margin(1e-6));
    }
}

TEST_CASE("field draws match the target covariance") {
    RngStream rng(7);
    MatrixXd pts(10, 2);
    for (int i = 0; i < 10; ++i) {
        pts(i, 0) = rng.uniform(0.0, 3.0);
        pts(i, 1) = rng.uniform(0.0, 3.0);
    }
    const MatrixXd corr = lcar::matern_correlation_matrix(pts, 2.5, 1.0);
    const MatrixXd chol = lcar::field_cholesky(corr);

    const int draws = 5000;
    MatrixXd sample = MatrixXd::Zero(10, 10);
    VectorXd mean = VectorXd::Zero(10);
    for (int d = 0; d < draws; ++d) {
        const VectorXd z = lcar::matern_field(chol, rng);
        mean += z;
        sample += z * z.transpose();
    }
    mean /= draws;
    sample /= draws;
    REQUIRE(mean.cwiseAbs().maxCoeff() < 0.05);
    REQUIRE((sample - corr).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("vanishing range gives uncorrelated draws") {
    RngStream rng(11);
    const MatrixXd pts = lcar::lattice_centroids(3);
    const MatrixXd corr = lcar::matern_correlation_matrix(pts, 2.5, 1e-4);
    for (int i = 0; i < corr.rows(); ++i) {
        for (int j = 0; j < corr.cols(); ++j) {
            if (i != j) REQUIRE(std::abs(corr(i, j)) < 1e-10);
        }
    }
    REQUIRE_NOTHROW(lcar::field_cholesky(corr));
}

TEST_CASE("three-band template structure") {
    const auto labels = lcar::three_band_template(8);
    REQUIRE(labels.size() == 64);
    int lo = 0, mid = 0, hi = 0;
    for (int v : labels) {
        REQUIRE((v == -1 || v == 0 || v == 1));
        lo += v == -1;
        mid += v == 0;
        hi += v == 1;
    }
    REQUIRE(lo > 0);
    REQUIRE(mid > 0);
    REQUIRE(hi > 0);
    REQUIRE(lo + mid + hi == 64);
    // Deterministic.
    REQUIRE(labels == lcar::three_band_template(8));
}

TEST_CASE("replicates are reproducible and respect the scenario") {
    const int side = 4;
    const MatrixXd pts = lcar::lattice_centroids(side);
    const auto tmpl = lcar::three_band_template(side);
    SimScenario scenario;
    scenario.e_lo = 150.0;
    scenario.e_hi = 250.0;
    const double range = lcar::calibrate_range(pts, scenario.matern_smoothness, 0.5);
    const MatrixXd chol =
        lcar::field_cholesky(lcar::matern_correlation_matrix(pts, scenario.matern_smoothness, range));

    RngStream a = RngStream::substream(9, "sim", 0);
    RngStream b = RngStream::substream(9, "sim", 0);
    const auto rep1 = lcar::generate_replicate(scenario, tmpl, chol, a);
    const auto rep2 = lcar::generate_replicate(scenario, tmpl, chol, b);
    REQUIRE(rep1.study.y == rep2.study.y);
    REQUIRE(rep1.study.expected == rep2.study.expected);
    REQUIRE(rep1.truth.log_risk == rep2.truth.log_risk);
    REQUIRE(rep1.prior_counts.size() == 3);
    for (int p = 0; p < 3; ++p) {
        REQUIRE(rep1.prior_counts[p].first == rep2.prior_counts[p].first);
    }

    for (int k = 0; k < side * side; ++k) {
        REQUIRE(rep1.study.expected[k] >= 150.0);
        REQUIRE(rep1.study.expected[k] <= 250.0);
    }
    REQUIRE(rep1.truth.fitted.isApprox(
        (rep1.study.expected.array() * rep1.truth.log_risk.array().exp()).matrix()));
}

TEST_CASE("study counts are unbiased and prior periods track the study surface") {
    const int side = 4;
    const auto tmpl = lcar::three_band_template(side);
    const MatrixXd pts = lcar::lattice_centroids(side);
    SimScenario scenario;
    scenario.e_lo = 150.0;
    scenario.e_hi = 250.0;
    const double range = lcar::calibrate_range(pts, scenario.matern_smoothness, 0.5);
    const MatrixXd chol =
        lcar::field_cholesky(lcar::matern_correlation_matrix(pts, scenario.matern_smoothness, range));

    double bias = 0.0;
    double corr_sum = 0.0;
    double cov_xy = 0.0;
    const int reps = 400;
    for (int r = 0; r < reps; ++r) {
        RngStream rng = RngStream::substream(33, "sim", r);
        const auto rep = lcar::generate_replicate(scenario, tmpl, chol, rng);
        bias += ((rep.study.y.array() / rep.study.expected.array()) -
                 rep.truth.log_risk.array().exp())
                    .mean();

        // Correlation between first prior-period log SIR (continuity
        // corrected, as at ingestion) and the study log risk.
        const VectorXd log_sir = ((rep.prior_counts[0].first.array() + 0.5) /
                                  (rep.prior_counts[0].second.array() + 0.5))
                                     .log();
        const VectorXd a = log_sir.array() - log_sir.mean();
        const VectorXd b = rep.truth.log_risk.array() - rep.truth.log_risk.mean();
        corr_sum += a.dot(b) / std::sqrt(a.squaredNorm() * b.squaredNorm());

        // Covariate and residual fields are independent.
        const VectorXd x = rep.study.X.col(1).array() - rep.study.X.col(1).mean();
        const VectorXd p = rep.truth.phi.array() - rep.truth.phi.mean();
        cov_xy += x.dot(p) / std::sqrt(x.squaredNorm() * p.squaredNorm());
    }
    REQUIRE(std::abs(bias / reps) < 0.01);
    REQUIRE(corr_sum / reps > 0.9);
    REQUIRE(std::abs(cov_xy / reps) < 0.05);
}

TEST_CASE("flat template removes the localised structure") {
    const int side = 4;
    const std::vector<int> flat(16, 0);
    const MatrixXd pts = lcar::lattice_centroids(side);
    SimScenario scenario;
    scenario.step_magnitude = 0.0;
    const double range = lcar::calibrate_range(pts, scenario.matern_smoothness, 0.5);
    const MatrixXd chol =
        lcar::field_cholesky(lcar::matern_correlation_matrix(pts, scenario.matern_smoothness, range));
    RngStream rng(3);
    const auto rep = lcar::generate_replicate(scenario, flat, chol, rng);
    // The truth surface is the raw field: zero template contribution.
    VectorXd resid = rep.truth.phi;
    REQUIRE(resid.size() == 16);
    REQUIRE(std::abs(resid.mean()) < 3.0);  // zero-mean field, loose sanity bound
}

TEST_CASE("run_scenarios with a perfect-fit hook returns zero RMSE") {
    lcar::ScenarioConfig config;
    config.lattice_side = 4;
    config.replicates = 2;
    SimScenario scenario;
    config.scenarios = {scenario};
    config.n_bootstrap = 50;
    config.fit_hook = [](lcar::ModelKind, const lcar::SimulatedReplicate& rep) {
        lcar::ReplicateFit fit;
        fit.beta_estimate = rep.truth.beta;
        fit.fitted_estimate = rep.truth.fitted;
        return fit;
    };
    const auto results = lcar::run_scenarios(config);
    REQUIRE(results.size() == 1);
    for (const auto& score : results[0].scores) {
        REQUIRE(score.beta_rmse.rmse == 0.0);
        REQUIRE(score.beta_rmse.lower == 0.0);
        REQUIRE(score.beta_rmse.upper == 0.0);
        REQUIRE(score.fitted_rmse.rmse == 0.0);
    }
}

TEST_CASE("run_scenarios end-to-end smoke at tiny scale") {
    lcar::ScenarioConfig config;
    config.lattice_side = 4;
    config.replicates = 2;
    SimScenario scenario;
    scenario.e_lo = 50.0;
    scenario.e_hi = 100.0;
    config.scenarios = {scenario};
    config.n_bootstrap = 40;
    config.fit.burn_in = 300;
    config.fit.keep = 300;
    config.seed = 4;

    const auto results = lcar::run_scenarios(config);
    REQUIRE(results.size() == 1);
    REQUIRE(results[0].scores.size() == 3);
    for (const auto& score : results[0].scores) {
        REQUIRE(score.beta_rmse.rmse > 0.0);
        REQUIRE(score.beta_rmse.lower <= score.beta_rmse.rmse + 1e-12);
        REQUIRE(score.beta_rmse.upper >= score.beta_rmse.rmse - 1e-12);
        REQUIRE(std::isfinite(score.fitted_rmse.rmse));
    }

    // Reproducible end to end.
    const auto again = lcar::run_scenarios(config);
    REQUIRE(results[0].beta_estimates == again[0].beta_estimates);
}
