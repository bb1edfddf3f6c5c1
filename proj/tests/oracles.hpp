#pragma once

// Dense, from-first-principles reference implementations used by the unit
// and acceptance suites. Everything here is deliberately naive and kept
// independent of the sparse/fast paths under test.

#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lcar/adjacency.hpp"
#include "lcar/elicitation.hpp"
#include "lcar/rng.hpp"

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Extended neighbourhood matrix from the definition: the active-edge block
/// bordered by the removed-edge indicators.
inline MatrixXd dense_extended_w(const lcar::EdgeState& state) {
    const auto& adj = state.base();
    const int n = adj.n_units();
    MatrixXd w = MatrixXd::Zero(n + 1, n + 1);
    for (int e = 0; e < adj.num_edges(); ++e) {
        if (!state.is_active(e)) continue;
        const auto& ed = adj.edge(e);
        w(ed.a, ed.b) = 1.0;
        w(ed.b, ed.a) = 1.0;
    }
    for (int k = 0; k < n; ++k) {
        int removed = 0;
        for (int e : adj.incident_edges(k)) removed += state.is_active(e) ? 0 : 1;
        if (removed > 0) {
            w(k, n) = 1.0;
            w(n, k) = 1.0;
        }
    }
    return w;
}

inline MatrixXd dense_precision(const lcar::EdgeState& state, double epsilon) {
    const MatrixXd w = dense_extended_w(state);
    const VectorXd row_sums = w.rowwise().sum();
    MatrixXd q = -w;
    q.diagonal() += row_sums;
    q.diagonal().array() += epsilon;
    return q;
}

inline MatrixXd dense_sub_precision(const lcar::EdgeState& state, double epsilon) {
    const int n = state.base().n_units();
    return dense_precision(state, epsilon).topLeftCorner(n, n);
}

/// Log-determinant through a full symmetric eigendecomposition.
inline double logdet_eigen(const MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
    return es.eigenvalues().array().log().sum();
}

inline double smallest_eigenvalue(const MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
    return es.eigenvalues().minCoeff();
}

/// Zero-mean multivariate normal log-density with precision prec / tau2.
inline double mvn_logpdf_precision(const VectorXd& x, const MatrixXd& prec, double tau2) {
    const double n = static_cast<double>(x.size());
    const double quad = x.dot(prec * x) / tau2;
    return 0.5 * logdet_eigen(prec) - 0.5 * n * std::log(2.0 * M_PI * tau2) - 0.5 * quad;
}

/// Random connected-ish adjacency: a spanning path plus extra random pairs.
inline lcar::AdjacencyStructure random_adjacency(lcar::RngStream& rng, int n, int extra_edges) {
    std::vector<std::pair<int, int>> pairs;
    for (int k = 0; k + 1 < n; ++k) pairs.emplace_back(k, k + 1);
    for (int e = 0; e < extra_edges; ++e) {
        const int a = static_cast<int>(rng.uniform_int(n));
        const int b = static_cast<int>(rng.uniform_int(n));
        if (a != b) pairs.emplace_back(a, b);
    }
    return lcar::AdjacencyStructure::from_edges(n, pairs);
}

inline lcar::EdgeState random_edge_state(lcar::RngStream& rng, const lcar::AdjacencyStructure& adj,
                                         double keep_prob = 0.5) {
    lcar::EdgeState state(adj, true);
    for (int e = 0; e < adj.num_edges(); ++e) {
        if (rng.uniform() >= keep_prob) state.set_active(e, false);
    }
    return state;
}

// ------------------------------------------------------------
// Dense generalised-least-squares and greedy-sweep references
// ------------------------------------------------------------

struct DenseGls {
    VectorXd beta;
    double tau2;
};

/// (beta, tau2) by brute-force dense algebra. `pooled_over_units` selects
/// the 1/n scaling of the summed prior surfaces (the default convention).
inline DenseGls dense_gls(const MatrixXd& q_sub, const MatrixXd& phi, const MatrixXd& x,
                          bool pooled_over_units = true) {
    const double denom = pooled_over_units ? static_cast<double>(phi.rows())
                                           : static_cast<double>(phi.cols());
    const VectorXd phi_bar = phi.rowwise().sum() / denom;
    const MatrixXd xtqx = x.transpose() * q_sub * x;
    DenseGls out;
    out.beta = xtqx.inverse() * (x.transpose() * q_sub * phi_bar);
    double quad = 0.0;
    for (int j = 0; j < phi.cols(); ++j) {
        const VectorXd v = phi.col(j) - x * out.beta;
        quad += v.dot(q_sub * v);
    }
    out.tau2 = quad / (static_cast<double>(phi.rows()) * phi.cols());
    return out;
}

/// Gaussian score of one edge state, everything dense.
inline double dense_gaussian_score(const lcar::EdgeState& state, const MatrixXd& phi,
                                   const MatrixXd& x, double eps, const VectorXd& beta,
                                   double tau2) {
    if (!(tau2 > 1e-300)) return std::numeric_limits<double>::infinity();
    const MatrixXd q = dense_sub_precision(state, eps);
    double quad = 0.0;
    for (int j = 0; j < phi.cols(); ++j) {
        const VectorXd v = phi.col(j) - x * beta;
        quad += v.dot(q * v);
    }
    const double n = static_cast<double>(phi.rows());
    const double r = static_cast<double>(phi.cols());
    return 0.5 * r * logdet_eigen(q) - 0.5 * n * r * std::log(tau2) - quad / (2.0 * tau2);
}

/// Greedy sweep that rebuilds and refactorises the dense precision for
/// every trial edge. Ties broken by canonical edge index.
inline std::vector<int> naive_elicit(const lcar::AdjacencyStructure& adj, const MatrixXd& phi,
                                     const MatrixXd& x, double eps,
                                     bool refresh_per_trial = false) {
    lcar::EdgeState state(adj, true);
    std::vector<int> order;
    for (int step = 0; step < adj.num_edges(); ++step) {
        const DenseGls step_est = dense_gls(dense_sub_precision(state, eps), phi, x);
        int best_edge = -1;
        double best_score = -std::numeric_limits<double>::infinity();
        for (int e = 0; e < adj.num_edges(); ++e) {
            if (!state.is_active(e)) continue;
            lcar::EdgeState trial = state;
            trial.set_active(e, false);
            double score;
            if (refresh_per_trial) {
                const DenseGls est = dense_gls(dense_sub_precision(trial, eps), phi, x);
                score = dense_gaussian_score(trial, phi, x, eps, est.beta, est.tau2);
            } else {
                score = dense_gaussian_score(trial, phi, x, eps, step_est.beta, step_est.tau2);
            }
            if (best_edge < 0 || score > best_score) {
                best_score = score;
                best_edge = e;
            }
        }
        order.push_back(best_edge);
        state.set_active(best_edge, false);
    }
    return order;
}

/// Random prior data with a smooth-ish surface plus noise.
inline lcar::PriorData random_prior_data(lcar::RngStream& rng, int n, int r, int covariates = 1) {
    lcar::PriorData data;
    data.X.resize(n, covariates + 1);
    data.X.col(0).setOnes();
    for (int c = 1; c <= covariates; ++c) {
        for (int k = 0; k < n; ++k) data.X(k, c) = rng.normal();
    }
    data.phi.resize(n, r);
    for (int j = 0; j < r; ++j) {
        for (int k = 0; k < n; ++k) data.phi(k, j) = rng.normal(0.0, 0.8);
    }
    return data;
}

}  // namespace oracle
