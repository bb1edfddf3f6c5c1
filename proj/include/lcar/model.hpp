#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lcar/adjacency.hpp"
#include "lcar/errors.hpp"
#include "lcar/precision.hpp"

namespace lcar {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class ModelKind { Lcar, Iar, Bym };

inline const char* model_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::Lcar: return "lcar";
        case ModelKind::Iar: return "iar";
        default: return "bym";
    }
}

// ============================================================
// Data
// ============================================================

/// One period of areal count data: observed counts, expected counts from
/// external standardisation, and the design matrix with intercept column.
struct Dataset {
    VectorXd y;
    VectorXd expected;
    MatrixXd X;
    std::vector<std::string> covariate_names;

    int n_units() const { return static_cast<int>(y.size()); }
    int n_coefficients() const { return static_cast<int>(X.cols()); }

    void validate() const {
        if (expected.size() != y.size() || X.rows() != y.size()) {
            throw DimensionMismatch("counts, expected counts and covariates disagree on n");
        }
        for (Eigen::Index k = 0; k < y.size(); ++k) {
            if (y[k] < 0.0) throw InvalidArgument("observed counts must be non-negative");
            if (!(expected[k] > 0.0)) {
                throw NonPositiveExpected("expected count for unit " + std::to_string(k + 1) +
                                          " must be > 0");
            }
        }
        const auto qr = X.colPivHouseholderQr();
        if (qr.rank() < X.cols()) {
            throw SingularDesign("design matrix is rank-deficient");
        }
    }
};

/// One MCMC state. `theta`/`sigma2` are used by the convolution model only,
/// `candidate_j` by the random-neighbourhood model only.
struct ChainState {
    VectorXd beta;
    double tau2 = 1.0;
    VectorXd phi;
    double phi_star = 0.0;
    int candidate_j = 0;
    VectorXd theta;
    double sigma2 = 1.0;
};

// ============================================================
// Likelihood
// ============================================================

/// Poisson log-likelihood at linear predictor eta (log Y! included).
inline double log_poisson_lik(const Dataset& data, const VectorXd& eta) {
    if (eta.size() != data.y.size()) {
        throw DimensionMismatch("linear predictor has wrong length");
    }
    double total = 0.0;
    for (Eigen::Index k = 0; k < eta.size(); ++k) {
        total += data.y[k] * (std::log(data.expected[k]) + eta[k]) -
                 data.expected[k] * std::exp(eta[k]) - std::lgamma(data.y[k] + 1.0);
    }
    return total;
}

inline VectorXd linear_predictor(const Dataset& data, const ChainState& state, ModelKind kind) {
    VectorXd eta = data.X * state.beta + state.phi;
    if (kind == ModelKind::Bym) eta += state.theta;
    return eta;
}

inline double log_poisson_lik(const Dataset& data, const ChainState& state, ModelKind kind) {
    return log_poisson_lik(data, linear_predictor(data, state, kind));
}

inline double deviance(const Dataset& data, const VectorXd& eta) {
    return -2.0 * log_poisson_lik(data, eta);
}

// ============================================================
// Covariate-only Poisson GLM (IRLS, log link, offset ln E)
// ============================================================

struct GlmFit {
    VectorXd beta;
    VectorXd fitted;  // E_k exp(x_k' beta)
    int iterations = 0;
};

inline GlmFit poisson_glm(const Dataset& data, int max_iterations = 100, double tol = 1e-10) {
    const int p = data.n_coefficients();
    const VectorXd offset = data.expected.array().log();

    GlmFit fit;
    fit.beta = VectorXd::Zero(p);
    fit.beta[0] = std::log((data.y.array() / data.expected.array()).mean() + 1e-8);
    for (int it = 0; it < max_iterations; ++it) {
        const VectorXd eta = offset + data.X * fit.beta;
        const VectorXd mu = eta.array().exp();
        const VectorXd z = eta - offset + (data.y - mu).cwiseQuotient(mu);
        const MatrixXd xw = data.X.transpose() * mu.asDiagonal();
        Eigen::LDLT<MatrixXd> ldlt(xw * data.X);
        if (ldlt.info() != Eigen::Success) {
            throw NonConvergence("IRLS weighted normal equations are singular");
        }
        const VectorXd beta_new = ldlt.solve(xw * z);
        const double step = (beta_new - fit.beta).cwiseAbs().maxCoeff();
        fit.beta = beta_new;
        fit.iterations = it + 1;
        if (step < tol) {
            fit.fitted = (offset + data.X * fit.beta).array().exp();
            return fit;
        }
    }
    throw NonConvergence("Poisson GLM did not converge in " + std::to_string(max_iterations) +
                         " iterations");
}

// ============================================================
// Random-neighbourhood (LCAR) prior
// ============================================================

struct GaussianMoments {
    double mean = 0.0;
    double variance = 0.0;
};

/// Full conditional of one extended random effect. Pass k in 0..n-1 for the
/// areal units, k = n for the global smoothing node. The conditional mean is
/// the weighted average of the active neighbours and (when the unit has
/// lost an edge) the global effect; the variance scales inversely with the
/// number of remaining links plus epsilon.
inline GaussianMoments lcar_phi_full_conditional(int k, const ChainState& state,
                                                 const EdgeState& edges, double epsilon) {
    const AdjacencyStructure& adj = edges.base();
    const int n = adj.n_units();
    if (k < 0 || k > n) throw IndexOutOfRange("effect index out of range");
    double weighted_sum = 0.0;
    double link_total = 0.0;
    if (k == n) {
        for (int i = 0; i < n; ++i) {
            if (edges.global_link(i)) {
                weighted_sum += state.phi[i];
                link_total += 1.0;
            }
        }
    } else {
        for (int e : adj.incident_edges(k)) {
            if (!edges.is_active(e)) continue;
            const Edge& ed = adj.edge(e);
            weighted_sum += state.phi[ed.a == k ? ed.b : ed.a];
        }
        link_total = edges.active_degree(k);
        if (edges.global_link(k)) {
            weighted_sum += state.phi_star;
            link_total += 1.0;
        }
    }
    const double denom = link_total + epsilon;
    return {weighted_sum / denom, state.tau2 / denom};
}

/// phi_ext' Q phi_ext without assembling Q: the active-edge differences,
/// the global-link differences, and the ridge term.
inline double lcar_quad_form(const ChainState& state, const EdgeState& edges, double epsilon) {
    const AdjacencyStructure& adj = edges.base();
    const int n = adj.n_units();
    double quad = epsilon * (state.phi.squaredNorm() + state.phi_star * state.phi_star);
    for (int e = 0; e < adj.num_edges(); ++e) {
        if (!edges.is_active(e)) continue;
        const Edge& ed = adj.edge(e);
        const double d = state.phi[ed.a] - state.phi[ed.b];
        quad += d * d;
    }
    for (int k = 0; k < n; ++k) {
        if (edges.global_link(k)) {
            const double d = state.phi[k] - state.phi_star;
            quad += d * d;
        }
    }
    return quad;
}

/// Joint log-density of the extended effects given the candidate index,
/// using the precomputed candidate log-determinants.
inline double lcar_joint_logprior(const ChainState& state, const CandidateSequence& seq,
                                  double epsilon, const EdgeState& edges) {
    const double logdet = seq.cached_logdet(state.candidate_j);
    const double dim = static_cast<double>(seq.base().n_units() + 1);
    return 0.5 * logdet - 0.5 * dim * std::log(2.0 * M_PI * state.tau2) -
           lcar_quad_form(state, edges, epsilon) / (2.0 * state.tau2);
}

inline double lcar_joint_logprior(const ChainState& state, const CandidateSequence& seq,
                                  double epsilon) {
    return lcar_joint_logprior(state, seq, epsilon, seq.candidate(state.candidate_j));
}

// ============================================================
// Comparator priors: intrinsic and convolution
// ============================================================

enum class IarConstraint { SumToZero };

/// Conditional of one intrinsic-model effect given its neighbours.
inline GaussianMoments iar_phi_full_conditional(int k, const ChainState& state,
                                                const AdjacencyStructure& adj) {
    const int d = adj.degree(k);
    if (d == 0) {
        throw InvalidArgument("intrinsic model needs every unit to have a neighbour (unit " +
                              std::to_string(k + 1) + " has none)");
    }
    double sum = 0.0;
    for (int nb : adj.neighbours(k)) sum += state.phi[nb];
    return {sum / d, state.tau2 / d};
}

inline double iar_quad_form(const VectorXd& phi, const AdjacencyStructure& adj) {
    double quad = 0.0;
    for (const Edge& ed : adj.edges()) {
        const double d = phi[ed.a] - phi[ed.b];
        quad += d * d;
    }
    return quad;
}

/// Improper intrinsic log-density, evaluated on the sum-to-zero
/// representative. The rank of the intrinsic precision is n minus the
/// number of connected components, which fixes the tau2 exponent.
inline double iar_logprior(const ChainState& state, const AdjacencyStructure& adj,
                           IarConstraint constraint = IarConstraint::SumToZero) {
    VectorXd phi = state.phi;
    if (constraint == IarConstraint::SumToZero) phi.array() -= phi.mean();
    const double rank = adj.n_units() - connected_components(adj);
    return -0.5 * rank * std::log(2.0 * M_PI * state.tau2) -
           iar_quad_form(phi, adj) / (2.0 * state.tau2);
}

/// Partial correlation of two adjacent intrinsic effects given the rest.
inline double iar_partial_correlation(const AdjacencyStructure& adj, int k, int j) {
    bool adjacent = false;
    for (int nb : adj.neighbours(k)) adjacent |= nb == j;
    if (!adjacent) return 0.0;
    return 1.0 / std::sqrt(static_cast<double>(adj.degree(k)) * adj.degree(j));
}

/// Convolution model: intrinsic effects plus independent effects with a
/// common variance.
inline double bym_logprior(const ChainState& state, const AdjacencyStructure& adj) {
    double independent = 0.0;
    for (Eigen::Index k = 0; k < state.theta.size(); ++k) {
        independent += -0.5 * std::log(2.0 * M_PI * state.sigma2) -
                       state.theta[k] * state.theta[k] / (2.0 * state.sigma2);
    }
    return iar_logprior(state, adj) + independent;
}

}  // namespace lcar
