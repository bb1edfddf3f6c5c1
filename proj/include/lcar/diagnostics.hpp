#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lcar/adjacency.hpp"
#include "lcar/errors.hpp"
#include "lcar/model.hpp"
#include "lcar/rng.hpp"
#include "lcar/sampler.hpp"
#include "lcar/util.hpp"

namespace lcar {

// ============================================================
// Deviance information criterion
// ============================================================

struct DicResult {
    double dic = 0.0;
    double p_d = 0.0;
    double mean_deviance = 0.0;
    double deviance_at_mean = 0.0;
};

/// DIC from the pooled deviance trace: effective parameters are the mean
/// deviance minus the deviance at the posterior means of the linear
/// predictor's ingredients.
inline DicResult dic(const PosteriorSamples& samples, const Dataset& data) {
    const std::vector<double> trace = samples.pooled_deviance();
    if (trace.empty()) throw EmptyTrace("no deviance draws");
    DicResult out;
    for (double d : trace) out.mean_deviance += d;
    out.mean_deviance /= static_cast<double>(trace.size());

    Eigen::VectorXd eta = data.X * samples.posterior_mean_beta() + samples.posterior_mean_phi();
    if (samples.kind == ModelKind::Bym) eta += samples.posterior_mean_theta();
    out.deviance_at_mean = deviance(data, eta);
    out.p_d = out.mean_deviance - out.deviance_at_mean;
    out.dic = out.mean_deviance + out.p_d;
    return out;
}

// ============================================================
// Moran's I
// ============================================================

/// Classic binary-weight statistic on centred values:
/// (n / sum W) * (z' W z) / (z' z).
inline double morans_i(const Eigen::VectorXd& values, const AdjacencyStructure& adj) {
    if (values.size() != adj.n_units()) {
        throw DimensionMismatch("residuals and adjacency disagree on n");
    }
    if (adj.num_edges() == 0) throw InvalidArgument("Moran's I needs at least one edge");
    Eigen::VectorXd z = values.array() - values.mean();
    const double denom = z.squaredNorm();
    if (denom <= 0.0) throw ConstantResiduals("Moran's I is undefined for constant residuals");
    double cross = 0.0;
    for (const Edge& e : adj.edges()) cross += z[e.a] * z[e.b];
    const double s0 = 2.0 * adj.num_edges();
    return (adj.n_units() / s0) * (2.0 * cross) / denom;
}

struct MoransTest {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Two-sided permutation test; the observed statistic counts itself in the
/// reference set.
inline MoransTest morans_i_test(const Eigen::VectorXd& residuals, const AdjacencyStructure& adj,
                                int n_permutations, RngStream& rng) {
    if (n_permutations < 1) throw InvalidArgument("need at least one permutation");
    MoransTest out;
    out.statistic = morans_i(residuals, adj);
    Eigen::VectorXd z = residuals;
    long at_least = 0;
    for (int p = 0; p < n_permutations; ++p) {
        for (Eigen::Index i = z.size() - 1; i > 0; --i) {
            const auto j = static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(i + 1)));
            std::swap(z[i], z[j]);
        }
        if (std::abs(morans_i(z, adj)) >= std::abs(out.statistic) - 1e-15) ++at_least;
    }
    out.p_value = static_cast<double>(at_least + 1) / static_cast<double>(n_permutations + 1);
    return out;
}

/// (Y - mu) / sqrt(mu) at the given fitted values.
inline Eigen::VectorXd pearson_residuals(const Dataset& data, const Eigen::VectorXd& fitted) {
    if (fitted.size() != data.y.size()) throw DimensionMismatch("fitted values have wrong length");
    return (data.y - fitted).array() / fitted.array().sqrt();
}

// ============================================================
// Relative risks
// ============================================================

struct RelativeRisk {
    std::string name;
    double increment = 1.0;  // covariate change the risk refers to (one SD)
    double median = 1.0;
    double lower = 1.0;
    double upper = 1.0;
};

/// Posterior relative risks per covariate for a one-standard-deviation
/// increase. Covariates are standardised at ingestion, so the draws are
/// exponentiated directly; `increments` records the original SDs.
inline std::vector<RelativeRisk> relative_risks(const PosteriorSamples& samples,
                                                const std::vector<std::string>& names,
                                                const Eigen::VectorXd& increments) {
    std::vector<RelativeRisk> out;
    const int p = samples.n_coefficients;
    if (static_cast<int>(names.size()) != p - 1 || increments.size() != p - 1) {
        throw DimensionMismatch("one name and increment per non-intercept covariate expected");
    }
    for (int c = 1; c < p; ++c) {
        std::vector<double> draws = samples.pooled_beta(c);
        if (draws.empty()) throw EmptyTrace("no coefficient draws");
        std::sort(draws.begin(), draws.end());
        RelativeRisk rr;
        rr.name = names[static_cast<std::size_t>(c - 1)];
        rr.increment = increments[c - 1];
        rr.median = std::exp(quantile_sorted(draws, 0.5));
        rr.lower = std::exp(quantile_sorted(draws, 0.025));
        rr.upper = std::exp(quantile_sorted(draws, 0.975));
        out.push_back(rr);
    }
    return out;
}

// ============================================================
// Root-mean-square error with bootstrap intervals
// ============================================================

struct RmseResult {
    double rmse = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

/// Percentile interval over explicit resamples (each a vector of indices
/// into the squared-error array). Exposed so tests can enumerate the
/// exhaustive resample set.
inline RmseResult rmse_from_squared_errors(const std::vector<double>& squared_errors,
                                           const std::vector<std::vector<int>>& resamples) {
    if (squared_errors.empty()) throw InvalidArgument("no errors to summarise");
    RmseResult out;
    double total = 0.0;
    for (double s : squared_errors) total += s;
    out.rmse = std::sqrt(total / static_cast<double>(squared_errors.size()));
    if (resamples.empty()) {
        out.lower = out.upper = out.rmse;
        return out;
    }
    std::vector<double> boot;
    boot.reserve(resamples.size());
    for (const auto& idx : resamples) {
        double s = 0.0;
        for (int i : idx) s += squared_errors[static_cast<std::size_t>(i)];
        boot.push_back(std::sqrt(s / static_cast<double>(idx.size())));
    }
    std::sort(boot.begin(), boot.end());
    out.lower = quantile_sorted(boot, 0.025);
    out.upper = quantile_sorted(boot, 0.975);
    return out;
}

inline RmseResult rmse_from_squared_errors(const std::vector<double>& squared_errors,
                                           int n_bootstrap, RngStream& rng) {
    std::vector<std::vector<int>> resamples(static_cast<std::size_t>(std::max(0, n_bootstrap)));
    const int m = static_cast<int>(squared_errors.size());
    for (auto& idx : resamples) {
        idx.resize(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) {
            idx[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_int(m));
        }
    }
    return rmse_from_squared_errors(squared_errors, resamples);
}

/// RMSE of estimates against truth with a percentile bootstrap interval
/// over elements.
inline RmseResult rmse_report(const Eigen::VectorXd& truth, const Eigen::VectorXd& estimates,
                              int n_bootstrap, RngStream& rng) {
    if (truth.size() != estimates.size()) {
        throw DimensionMismatch("truth and estimates have different lengths");
    }
    std::vector<double> sq(static_cast<std::size_t>(truth.size()));
    for (Eigen::Index i = 0; i < truth.size(); ++i) {
        const double e = estimates[i] - truth[i];
        sq[static_cast<std::size_t>(i)] = e * e;
    }
    return rmse_from_squared_errors(sq, n_bootstrap, rng);
}

// ============================================================
// Overdispersion of the covariate-only model
// ============================================================

/// Pearson chi-square over degrees of freedom from the covariate-only
/// Poisson fit; about 1 for equidispersed data.
inline double overdispersion(const Dataset& data) {
    const GlmFit fit = poisson_glm(data);
    const double pearson =
        ((data.y - fit.fitted).array().square() / fit.fitted.array()).sum();
    const double df = static_cast<double>(data.n_units() - data.n_coefficients());
    if (df <= 0.0) throw InvalidArgument("no residual degrees of freedom");
    return pearson / df;
}

// ============================================================
// Edges-removed posterior density
// ============================================================

struct EdgesRemovedDensity {
    int num_edges = 0;
    /// Row per chain, column per count of removed edges (0..N_W).
    Eigen::MatrixXd per_chain;
    Eigen::VectorXd pooled;
};

/// Histogram density of the number of removed edges (N_W - j), per chain
/// and pooled with equal chain weights.
inline EdgesRemovedDensity edges_removed_density(const PosteriorSamples& samples) {
    EdgesRemovedDensity out;
    out.num_edges = samples.num_edges;
    const int bins = samples.num_edges + 1;
    const auto n_chains = static_cast<int>(samples.chains.size());
    out.per_chain = Eigen::MatrixXd::Zero(n_chains, bins);
    for (int c = 0; c < n_chains; ++c) {
        const auto& draws = samples.chains[static_cast<std::size_t>(c)].candidate_j;
        if (draws.empty()) throw EmptyTrace("no candidate-index draws");
        for (int j : draws) {
            const int removed = samples.num_edges - j;
            out.per_chain(c, removed) += 1.0;
        }
        out.per_chain.row(c) /= static_cast<double>(draws.size());
    }
    out.pooled = out.per_chain.colwise().mean();
    return out;
}

/// Middle interval [lo, hi] of the pooled removed-edge distribution.
inline std::pair<int, int> edges_removed_interval(const EdgesRemovedDensity& density,
                                                  double mass = 0.95) {
    const double tail = (1.0 - mass) / 2.0;
    double cum = 0.0;
    int lo = 0, hi = density.num_edges;
    for (int k = 0; k <= density.num_edges; ++k) {
        cum += density.pooled[k];
        if (cum >= tail) {
            lo = k;
            break;
        }
    }
    cum = 0.0;
    for (int k = density.num_edges; k >= 0; --k) {
        cum += density.pooled[k];
        if (cum >= tail) {
            hi = k;
            break;
        }
    }
    return {lo, hi};
}

}  // namespace lcar
