#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "lcar/adjacency.hpp"
#include "lcar/diagnostics.hpp"
#include "lcar/elicitation.hpp"
#include "lcar/errors.hpp"
#include "lcar/model.hpp"
#include "lcar/rng.hpp"
#include "lcar/sampler.hpp"
#include "lcar/util.hpp"

namespace lcar {

// ============================================================
// Geometry helpers
// ============================================================

/// Unit-spaced grid centroids, row major.
inline Eigen::MatrixXd lattice_centroids(int side) {
    if (side < 1) throw InvalidArgument("lattice side must be >= 1");
    Eigen::MatrixXd pts(side * side, 2);
    for (int r = 0; r < side; ++r) {
        for (int c = 0; c < side; ++c) {
            pts(r * side + c, 0) = static_cast<double>(c);
            pts(r * side + c, 1) = static_cast<double>(r);
        }
    }
    return pts;
}

inline AdjacencyStructure lattice_rook_adjacency(int side) {
    std::vector<std::pair<int, int>> edges;
    auto id = [side](int r, int c) { return r * side + c; };
    for (int r = 0; r < side; ++r) {
        for (int c = 0; c < side; ++c) {
            if (c + 1 < side) edges.emplace_back(id(r, c), id(r, c + 1));
            if (r + 1 < side) edges.emplace_back(id(r, c), id(r + 1, c));
        }
    }
    return AdjacencyStructure::from_edges(side * side, edges);
}

/// Three contiguous horizontal bands labelled -1, 0, +1.
inline std::vector<int> three_band_template(int side) {
    std::vector<int> labels(static_cast<std::size_t>(side * side));
    for (int r = 0; r < side; ++r) {
        const int band = r < side / 3 ? -1 : (r < 2 * side / 3 ? 0 : 1);
        for (int c = 0; c < side; ++c) labels[static_cast<std::size_t>(r * side + c)] = band;
    }
    return labels;
}

// ============================================================
// Matern fields
// ============================================================

/// Matern correlation with smoothness nu and range rho, in the
/// sqrt(2 nu) d / rho parameterisation (nu = 1/2 gives exp(-d/rho)).
inline double matern_correlation(double distance, double smoothness, double range) {
    if (!(range > 0.0)) throw InvalidArgument("range must be > 0");
    if (!(smoothness > 0.0)) throw InvalidArgument("smoothness must be > 0");
    if (distance <= 0.0) return 1.0;
    const double arg = std::sqrt(2.0 * smoothness) * distance / range;
    if (arg > 700.0) return 0.0;  // Bessel K underflow
    const double scale = std::pow(2.0, 1.0 - smoothness) / boost::math::tgamma(smoothness);
    return scale * std::pow(arg, smoothness) * boost::math::cyl_bessel_k(smoothness, arg);
}

inline Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& centroids) {
    const Eigen::Index n = centroids.rows();
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            d(i, j) = d(j, i) = (centroids.row(i) - centroids.row(j)).norm();
        }
    }
    return d;
}

inline Eigen::MatrixXd matern_correlation_matrix(const Eigen::MatrixXd& centroids,
                                                 double smoothness, double range) {
    const Eigen::MatrixXd d = pairwise_distances(centroids);
    Eigen::MatrixXd corr(d.rows(), d.cols());
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
        for (Eigen::Index j = 0; j < d.cols(); ++j) {
            corr(i, j) = i == j ? 1.0 : matern_correlation(d(i, j), smoothness, range);
        }
    }
    return corr;
}

/// Range solving median pairwise correlation = target, by bisection
/// (correlation is monotone increasing in the range at fixed distances).
inline double calibrate_range(const Eigen::MatrixXd& centroids, double smoothness,
                              double target_median_corr) {
    if (centroids.rows() < 2) throw InvalidArgument("need at least two centroids");
    if (!(target_median_corr > 0.0) || !(target_median_corr < 1.0)) {
        throw NoBracket("target median correlation must lie strictly in (0, 1)");
    }
    std::vector<double> dists;
    for (Eigen::Index i = 0; i < centroids.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < centroids.rows(); ++j) {
            const double d = (centroids.row(i) - centroids.row(j)).norm();
            if (!(d > 0.0)) throw InvalidArgument("centroids must be distinct");
            dists.push_back(d);
        }
    }
    std::sort(dists.begin(), dists.end());
    const std::size_t m = dists.size();
    const double d_mid1 = dists[(m - 1) / 2];
    const double d_mid2 = dists[m / 2];
    auto median_corr = [&](double range) {
        return 0.5 * (matern_correlation(d_mid1, smoothness, range) +
                      matern_correlation(d_mid2, smoothness, range));
    };

    double lo = 1e-9 * d_mid1;
    double hi = dists.back();
    int doublings = 0;
    while (median_corr(hi) < target_median_corr) {
        hi *= 2.0;
        if (++doublings > 200) throw NoBracket("target correlation unreachable");
    }
    for (int it = 0; it < 400; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double c = median_corr(mid);
        if (std::abs(c - target_median_corr) < 1e-7) return mid;
        (c < target_median_corr ? lo : hi) = mid;
    }
    const double range = 0.5 * (lo + hi);
    if (std::abs(median_corr(range) - target_median_corr) >= 1e-6) {
        throw NoBracket("bisection failed to reach the target correlation");
    }
    return range;
}

/// Lower Cholesky factor of the correlation matrix, with jitter up to
/// 1e-10 allowed on the diagonal.
inline Eigen::MatrixXd field_cholesky(const Eigen::MatrixXd& corr) {
    Eigen::MatrixXd work = corr;
    for (double jitter : {0.0, 1e-12, 1e-10}) {
        work = corr;
        work.diagonal().array() += jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(work);
        if (llt.info() == Eigen::Success) return llt.matrixL();
    }
    throw SingularCovariance("correlation matrix is numerically singular beyond 1e-10 jitter");
}

/// Zero-mean, unit-marginal-variance Gaussian field draw from a
/// precomputed Cholesky factor.
inline Eigen::VectorXd matern_field(const Eigen::MatrixXd& chol, RngStream& rng) {
    Eigen::VectorXd z(chol.rows());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    return chol * z;
}

inline Eigen::VectorXd matern_field(const Eigen::MatrixXd& centroids, double smoothness,
                                    double range, RngStream& rng) {
    return matern_field(field_cholesky(matern_correlation_matrix(centroids, smoothness, range)),
                        rng);
}

// ============================================================
// Scenario data generation
// ============================================================

struct SimScenario {
    double step_magnitude = 1.0;  // M
    double e_lo = 50.0;
    double e_hi = 100.0;
    double beta_true = 0.1;
    double matern_smoothness = 2.5;
    double target_median_corr = 0.5;
    int prior_periods = 3;
    double prior_noise = 0.1;

    std::string label() const {
        auto trim = [](double v) {
            std::string s = std::to_string(v);
            s.erase(s.find_last_not_of('0') + 1);
            if (!s.empty() && s.back() == '.') s.pop_back();
            return s;
        };
        return "M=" + trim(step_magnitude) + ",E=" + trim(e_lo) + "-" + trim(e_hi);
    }
};

struct TruthRecord {
    double beta = 0.0;
    Eigen::VectorXd phi;       // template step plus residual field
    Eigen::VectorXd log_risk;  // beta * x + phi
    Eigen::VectorXd fitted;    // E_k exp(log risk)
};

struct SimulatedReplicate {
    Dataset study;  // X = [1, covariate field]
    std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> prior_counts;  // (Y, E) per period
    TruthRecord truth;
};

/// One replicate: fresh covariate and residual fields, uniform expected
/// counts, Poisson study counts, and perturbed prior periods sharing the
/// study expected counts.
inline SimulatedReplicate generate_replicate(const SimScenario& scenario,
                                             const std::vector<int>& mean_template,
                                             const Eigen::MatrixXd& chol, RngStream& rng) {
    const auto n = static_cast<int>(mean_template.size());
    if (chol.rows() != n) throw DimensionMismatch("template and geometry disagree on n");

    SimulatedReplicate rep;
    const Eigen::VectorXd covariate = matern_field(chol, rng);
    const Eigen::VectorXd residual = matern_field(chol, rng);

    rep.truth.beta = scenario.beta_true;
    rep.truth.phi.resize(n);
    for (int k = 0; k < n; ++k) {
        rep.truth.phi[k] =
            scenario.step_magnitude * mean_template[static_cast<std::size_t>(k)] + residual[k];
    }
    rep.truth.log_risk = scenario.beta_true * covariate + rep.truth.phi;

    rep.study.X.resize(n, 2);
    rep.study.X.col(0).setOnes();
    rep.study.X.col(1) = covariate;
    rep.study.covariate_names = {"x1"};
    rep.study.expected.resize(n);
    for (int k = 0; k < n; ++k) rep.study.expected[k] = rng.uniform(scenario.e_lo, scenario.e_hi);
    rep.truth.fitted = rep.study.expected.array() * rep.truth.log_risk.array().exp();
    rep.study.y.resize(n);
    for (int k = 0; k < n; ++k) {
        rep.study.y[k] = static_cast<double>(rng.poisson(rep.truth.fitted[k]));
    }

    for (int period = 0; period < scenario.prior_periods; ++period) {
        Eigen::VectorXd phi_p = rep.truth.phi;
        for (int k = 0; k < n; ++k) {
            phi_p[k] += rng.uniform(-scenario.prior_noise, scenario.prior_noise);
        }
        const Eigen::VectorXd risk = scenario.beta_true * covariate + phi_p;
        Eigen::VectorXd y_p(n);
        for (int k = 0; k < n; ++k) {
            y_p[k] = static_cast<double>(
                rng.poisson(rep.study.expected[k] * std::exp(risk[k])));
        }
        rep.prior_counts.emplace_back(std::move(y_p), rep.study.expected);
    }
    return rep;
}

// ============================================================
// Scenario runner
// ============================================================

struct ReplicateFit {
    double beta_estimate = 0.0;        // posterior median, original scale
    Eigen::VectorXd fitted_estimate;   // posterior mean of E_k R_k
};

struct ModelScore {
    ModelKind model = ModelKind::Lcar;
    RmseResult beta_rmse;
    RmseResult fitted_rmse;
};

struct ScenarioResult {
    SimScenario scenario;
    std::vector<ModelScore> scores;
    /// Per-replicate raw material, model-major: beta_estimates(rep, model).
    Eigen::MatrixXd beta_estimates;
    Eigen::MatrixXd fitted_mse;
};

struct ScenarioConfig {
    std::vector<SimScenario> scenarios;
    int replicates = 50;
    int lattice_side = 8;
    /// Custom geometry: all three of centroids, adjacency and template
    /// must be supplied together; otherwise the rook lattice is used.
    Eigen::MatrixXd centroids;
    std::shared_ptr<const AdjacencyStructure> adjacency;
    std::vector<int> mean_template;
    std::vector<ModelKind> models = {ModelKind::Iar, ModelKind::Bym, ModelKind::Lcar};

    SamplerConfig fit;  // shortened chains by default for desk-scale studies
    ElicitationOptions elicitation;
    int n_bootstrap = 1000;
    std::uint64_t seed = 1;
    int num_threads = 0;

    /// Observers for persistence; called in replicate order.
    std::function<void(const SimScenario&, int, const SimulatedReplicate&)> on_replicate;
    /// Validation hook replacing the whole fit pipeline when set.
    std::function<ReplicateFit(ModelKind, const SimulatedReplicate&)> fit_hook;

    ScenarioConfig() {
        fit.n_chains = 1;
        fit.burn_in = 5000;
        fit.keep = 5000;
        fit.store_phi = false;
    }
};

namespace detail {

inline ReplicateFit fit_one_model(ModelKind kind, const Dataset& standardised, double sd_x,
                                  const CandidateSequence* seq, const AdjacencyStructure* adj,
                                  const SamplerConfig& fit_config) {
    const PosteriorSamples samples = run_chains(standardised, kind, seq, adj, fit_config);
    ReplicateFit out;
    std::vector<double> beta_draws = samples.pooled_beta(1);
    out.beta_estimate = median(std::move(beta_draws)) / sd_x;
    out.fitted_estimate = samples.posterior_mean_fitted();
    return out;
}

}  // namespace detail

/// Full simulation study: generate, elicit, fit every model, score RMSEs
/// with bootstrap intervals. Replicates are reproducible from
/// (seed, scenario label, replicate index) and scheduling-independent.
inline std::vector<ScenarioResult> run_scenarios(const ScenarioConfig& config) {
    if (config.scenarios.empty()) throw InvalidArgument("no scenarios requested");
    if (config.replicates < 1) throw InvalidArgument("need at least one replicate");

    const bool custom = config.centroids.rows() > 0;
    if (custom && (config.adjacency == nullptr || config.mean_template.empty())) {
        throw InvalidArgument("custom centroids need a matching adjacency and template");
    }
    const Eigen::MatrixXd centroids =
        custom ? config.centroids : lattice_centroids(config.lattice_side);
    const std::shared_ptr<const AdjacencyStructure> adj =
        custom ? config.adjacency
               : std::make_shared<const AdjacencyStructure>(
                     lattice_rook_adjacency(config.lattice_side));
    const std::vector<int> mean_template =
        custom ? config.mean_template : three_band_template(config.lattice_side);
    if (static_cast<Eigen::Index>(mean_template.size()) != centroids.rows() ||
        adj->n_units() != centroids.rows()) {
        throw DimensionMismatch("template, adjacency and geometry disagree on n");
    }

    std::vector<ScenarioResult> results;
    for (const SimScenario& scenario : config.scenarios) {
        const double range =
            calibrate_range(centroids, scenario.matern_smoothness, scenario.target_median_corr);
        const Eigen::MatrixXd chol = field_cholesky(
            matern_correlation_matrix(centroids, scenario.matern_smoothness, range));

        ScenarioResult result;
        result.scenario = scenario;
        const auto n_models = static_cast<int>(config.models.size());
        result.beta_estimates.resize(config.replicates, n_models);
        result.fitted_mse.resize(config.replicates, n_models);

        std::vector<SimulatedReplicate> reps(static_cast<std::size_t>(config.replicates));
        parallel_for(static_cast<std::size_t>(config.replicates), config.num_threads,
                     [&](std::size_t r) {
            RngStream rng = RngStream::substream(config.seed, "sim:" + scenario.label(), r);
            SimulatedReplicate rep = generate_replicate(scenario, mean_template, chol, rng);

            // Standardise the covariate for fitting; estimates are mapped
            // back to the original scale for scoring.
            Dataset std_data = rep.study;
            const double mean_x = std_data.X.col(1).mean();
            const double sd_x = std::sqrt((std_data.X.col(1).array() - mean_x).square().sum() /
                                          (std_data.X.rows() - 1));
            std_data.X.col(1) = (std_data.X.col(1).array() - mean_x) / sd_x;

            std::optional<CandidateSequence> seq;
            for (int m = 0; m < n_models; ++m) {
                const ModelKind kind = config.models[static_cast<std::size_t>(m)];
                ReplicateFit fit;
                if (config.fit_hook) {
                    fit = config.fit_hook(kind, rep);
                } else {
                    if (kind == ModelKind::Lcar && !seq) {
                        const PriorData prior = prior_from_counts(rep.prior_counts, std_data.X);
                        ElicitationOptions opts = config.elicitation;
                        opts.epsilon = config.fit.epsilon;
                        seq = elicit_sequence(adj, prior, opts).first;
                        ensure_logdet_cache(*seq, config.fit.epsilon);
                    }
                    SamplerConfig fit_config = config.fit;
                    fit_config.seed = substream_seed(
                        config.seed, "fit:" + scenario.label() + ":" + model_name(kind), r);
                    fit = detail::fit_one_model(kind, std_data, sd_x, seq ? &*seq : nullptr,
                                                adj.get(), fit_config);
                }
                result.beta_estimates(static_cast<Eigen::Index>(r), m) = fit.beta_estimate;
                result.fitted_mse(static_cast<Eigen::Index>(r), m) =
                    (fit.fitted_estimate - rep.truth.fitted).squaredNorm() /
                    static_cast<double>(rep.truth.fitted.size());
            }
            if (config.on_replicate) reps[r] = std::move(rep);
        });

        if (config.on_replicate) {
            for (int r = 0; r < config.replicates; ++r) {
                config.on_replicate(scenario, r, reps[static_cast<std::size_t>(r)]);
            }
        }

        for (int m = 0; m < n_models; ++m) {
            ModelScore score;
            score.model = config.models[static_cast<std::size_t>(m)];
            std::vector<double> beta_sq(static_cast<std::size_t>(config.replicates));
            std::vector<double> fit_sq(static_cast<std::size_t>(config.replicates));
            for (int r = 0; r < config.replicates; ++r) {
                const double err = result.beta_estimates(r, m) - scenario.beta_true;
                beta_sq[static_cast<std::size_t>(r)] = err * err;
                fit_sq[static_cast<std::size_t>(r)] = result.fitted_mse(r, m);
            }
            RngStream boot_beta = RngStream::substream(
                config.seed, "boot:beta:" + scenario.label() + ":" + model_name(score.model));
            RngStream boot_fit = RngStream::substream(
                config.seed, "boot:fit:" + scenario.label() + ":" + model_name(score.model));
            score.beta_rmse = rmse_from_squared_errors(beta_sq, config.n_bootstrap, boot_beta);
            score.fitted_rmse = rmse_from_squared_errors(fit_sq, config.n_bootstrap, boot_fit);
            result.scores.push_back(score);
        }
        results.push_back(std::move(result));
    }
    return results;
}

}  // namespace lcar
