#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "lcar/adjacency.hpp"
#include "lcar/errors.hpp"
#include "lcar/precision.hpp"
#include "lcar/util.hpp"

namespace lcar {

// ============================================================
// Historical data for eliciting the candidate sequence
// ============================================================

/// Log standardised-incidence-ratio surfaces for the periods before the
/// study, plus the shared design matrix. Column j of `phi` is one period.
struct PriorData {
    Eigen::MatrixXd phi;  // n x r
    Eigen::MatrixXd X;    // n x (p+1), intercept first

    int n_units() const { return static_cast<int>(phi.rows()); }
    int periods() const { return static_cast<int>(phi.cols()); }

    void validate() const {
        if (periods() == 0) throw EmptyPriorData("no prior periods supplied");
        if (!phi.allFinite()) throw InvalidArgument("prior log ratios must be finite");
        if (X.rows() != phi.rows()) {
            throw DimensionMismatch("covariates and prior periods disagree on n");
        }
        if (X.colPivHouseholderQr().rank() < X.cols()) {
            throw SingularDesign("design matrix is rank-deficient");
        }
    }
};

/// Builds PriorData from raw per-period counts. The log ratio is undefined
/// at zero counts, so any period containing a zero uses the 0.5 continuity
/// correction on both counts, applied to the whole period for consistency.
/// `corrected`, when given, reports which periods were adjusted.
inline PriorData prior_from_counts(
    const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& periods,
    Eigen::MatrixXd X, std::vector<bool>* corrected = nullptr) {
    if (periods.empty()) throw EmptyPriorData("no prior periods supplied");
    const Eigen::Index n = periods.front().first.size();
    PriorData data;
    data.phi.resize(n, static_cast<Eigen::Index>(periods.size()));
    data.X = std::move(X);
    if (corrected) corrected->assign(periods.size(), false);
    for (std::size_t j = 0; j < periods.size(); ++j) {
        const auto& [y, e] = periods[j];
        if (y.size() != n || e.size() != n) {
            throw DimensionMismatch("prior periods disagree on n");
        }
        for (Eigen::Index k = 0; k < n; ++k) {
            if (y[k] < 0.0) throw InvalidArgument("prior counts must be non-negative");
            if (!(e[k] > 0.0)) {
                throw NonPositiveExpected("prior expected count for unit " +
                                          std::to_string(k + 1) + " must be > 0");
            }
        }
        const bool needs_correction = (y.array() == 0.0).any();
        const double shift = needs_correction ? 0.5 : 0.0;
        if (corrected && needs_correction) (*corrected)[j] = true;
        data.phi.col(static_cast<Eigen::Index>(j)) =
            ((y.array() + shift) / (e.array() + shift)).log();
    }
    data.validate();
    return data;
}

// ============================================================
// Step-wise maximum-likelihood estimates
// ============================================================

/// Scaling of the pooled prior surface inside the generalised-least-squares
/// estimate of beta. `PooledOverUnits` divides the sum over periods by n;
/// `MeanOverPeriods` divides by r instead.
enum class BetaMeanScale { PooledOverUnits, MeanOverPeriods };

struct MlEstimates {
    Eigen::VectorXd beta_hat;
    double tau2_hat = 0.0;
};

namespace detail {

inline MlEstimates ml_estimates_from(const SpMat& q_sub, const PriorData& data,
                                     BetaMeanScale scale) {
    const int n = data.n_units();
    const int r = data.periods();
    const double denom = scale == BetaMeanScale::PooledOverUnits ? n : r;
    const Eigen::VectorXd phi_bar = data.phi.rowwise().sum() / denom;

    const Eigen::MatrixXd qx = q_sub * data.X;
    const Eigen::MatrixXd xtqx = data.X.transpose() * qx;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(xtqx);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
        throw SingularDesign("X'QX is not invertible");
    }
    MlEstimates est;
    est.beta_hat = ldlt.solve(qx.transpose() * phi_bar);

    double quad = 0.0;
    for (int j = 0; j < r; ++j) {
        const Eigen::VectorXd v = data.phi.col(j) - data.X * est.beta_hat;
        quad += v.dot(q_sub * v);
    }
    est.tau2_hat = quad / (static_cast<double>(n) * r);
    return est;
}

// A residual variance this far below the scale of the data is a perfect
// fit up to roundoff.
inline double tau2_degenerate_floor(const PriorData& data) {
    const double scale = data.phi.squaredNorm() /
                         (static_cast<double>(data.n_units()) * data.periods());
    return std::max(1e-24 * scale, 1e-300);
}

// Gaussian log-likelihood of the prior surfaces, dropping the constant
// -nr/2 ln(2 pi). Degenerate zero-variance fits score +infinity so that the
// sweep falls through to canonical tie-breaking.
inline double gaussian_score(double logdet_sub, double quad_total, double tau2_hat, int n, int r,
                             double tau2_floor) {
    if (!(tau2_hat > tau2_floor)) return std::numeric_limits<double>::infinity();
    return 0.5 * r * logdet_sub - 0.5 * n * r * std::log(tau2_hat) - quad_total / (2.0 * tau2_hat);
}

}  // namespace detail

/// Maximum-likelihood estimates of (beta, tau2) under the approximate
/// Gaussian model with the given edge state's precision.
inline MlEstimates ml_estimates(const EdgeState& state, const PriorData& data, double epsilon,
                                BetaMeanScale scale = BetaMeanScale::PooledOverUnits) {
    data.validate();
    if (data.n_units() != state.base().n_units()) {
        throw DimensionMismatch("prior data and adjacency disagree on n");
    }
    return detail::ml_estimates_from(build_sub_precision(state, epsilon), data, scale);
}

/// Approximate Gaussian log-likelihood of the prior surfaces under the
/// given edge state, with the estimates computed from that same state.
inline double candidate_loglik(const EdgeState& state, const PriorData& data, double epsilon,
                               BetaMeanScale scale = BetaMeanScale::PooledOverUnits) {
    data.validate();
    if (data.n_units() != state.base().n_units()) {
        throw DimensionMismatch("prior data and adjacency disagree on n");
    }
    const SpMat q = build_sub_precision(state, epsilon);
    const MlEstimates est = detail::ml_estimates_from(q, data, scale);
    double quad = 0.0;
    for (int j = 0; j < data.periods(); ++j) {
        const Eigen::VectorXd v = data.phi.col(j) - data.X * est.beta_hat;
        quad += v.dot(q * v);
    }
    return detail::gaussian_score(log_det(q), quad, est.tau2_hat, data.n_units(),
                                  data.periods(), detail::tau2_degenerate_floor(data));
}

// ============================================================
// Greedy sweep
// ============================================================

struct ElicitationStep {
    int edge_index = -1;
    double loglik = 0.0;
    Eigen::VectorXd beta_hat;
    double tau2_hat = 0.0;
};

struct ElicitationTrace {
    std::vector<ElicitationStep> steps;  // one per removed edge
};

struct ElicitationOptions {
    double epsilon = 1e-3;
    BetaMeanScale beta_mean_scale = BetaMeanScale::PooledOverUnits;
    /// Validation switch: recompute (beta, tau2) under every trial state
    /// instead of once per step. Much slower; same contract.
    bool refresh_estimates_per_trial = false;
    int num_threads = 1;
};

/// Greedy elicitation of the full removal order. Starting from the full
/// graph, each step scores every single-edge removal and removes the
/// maximiser, ties broken by canonical edge index. The per-trial score uses
/// the rank-two determinant update and an O(1) quadratic-form update around
/// the current factorisation, so one step costs one factorisation plus one
/// inverse-column solve per touched unit.
inline std::pair<CandidateSequence, ElicitationTrace> elicit_sequence(
    std::shared_ptr<const AdjacencyStructure> adj, const PriorData& data,
    const ElicitationOptions& options = {}) {
    data.validate();
    if (data.n_units() != adj->n_units()) {
        throw DimensionMismatch("prior data and adjacency disagree on n");
    }
    const int nw = adj->num_edges();
    if (nw < 1) throw InvalidArgument("adjacency has no edges to elicit");
    const int n = adj->n_units();
    const int r = data.periods();
    const double tau2_floor = detail::tau2_degenerate_floor(data);

    EdgeState state(*adj, true);
    CholeskyContext chol;
    SpMat q = build_sub_precision(state, options.epsilon);
    chol.factorize(q);
    double logdet = chol.log_det();

    ElicitationTrace trace;
    trace.steps.reserve(nw);
    std::vector<int> removal_order;
    removal_order.reserve(nw);

    std::vector<int> active_edges;
    std::vector<double> scores;
    std::vector<Eigen::VectorXd> columns(static_cast<std::size_t>(n));
    std::vector<int> column_of(static_cast<std::size_t>(n), -1);

    for (int step = 0; step < nw; ++step) {
        const MlEstimates est = detail::ml_estimates_from(q, data, options.beta_mean_scale);

        // Residual cross-products reused by every trial at this step.
        Eigen::MatrixXd resid(n, r);
        for (int j = 0; j < r; ++j) resid.col(j) = data.phi.col(j) - data.X * est.beta_hat;
        double quad_base = 0.0;
        for (int j = 0; j < r; ++j) quad_base += resid.col(j).dot(q * resid.col(j));
        const Eigen::VectorXd sq_sums = resid.array().square().rowwise().sum();

        active_edges.clear();
        for (int e = 0; e < nw; ++e) {
            if (state.is_active(e)) active_edges.push_back(e);
        }

        // Inverse columns for every unit touched by an active edge.
        std::vector<int> units;
        std::fill(column_of.begin(), column_of.end(), -1);
        for (int e : active_edges) {
            for (int k : {adj->edge(e).a, adj->edge(e).b}) {
                if (column_of[static_cast<std::size_t>(k)] < 0) {
                    column_of[static_cast<std::size_t>(k)] = static_cast<int>(units.size());
                    units.push_back(k);
                }
            }
        }
        parallel_for(units.size(), options.num_threads, [&](std::size_t i) {
            columns[i] = chol.inverse_column(units[i]);
        });

        scores.assign(active_edges.size(), 0.0);
        parallel_for(active_edges.size(), options.num_threads, [&](std::size_t i) {
            const int e = active_edges[i];
            const Edge& ed = adj->edge(e);
            if (options.refresh_estimates_per_trial) {
                EdgeState trial = state;
                trial.set_active(e, false);
                const SpMat q_trial = build_sub_precision(trial, options.epsilon);
                const MlEstimates trial_est =
                    detail::ml_estimates_from(q_trial, data, options.beta_mean_scale);
                double quad = 0.0;
                for (int j = 0; j < r; ++j) {
                    const Eigen::VectorXd v = data.phi.col(j) - data.X * trial_est.beta_hat;
                    quad += v.dot(q_trial * v);
                }
                scores[i] = detail::gaussian_score(log_det(q_trial), quad, trial_est.tau2_hat, n,
                                                   r, tau2_floor);
                return;
            }
            const auto& col_a = columns[static_cast<std::size_t>(column_of[ed.a])];
            const auto& col_b = columns[static_cast<std::size_t>(column_of[ed.b])];
            const double delta_logdet =
                sub_logdet_delta_from_columns(state, e, EdgeMove::Remove, col_a, col_b);
            const double da = state.removed_incident(ed.a) == 0 ? 0.0 : -1.0;
            const double db = state.removed_incident(ed.b) == 0 ? 0.0 : -1.0;
            const double cross = resid.row(ed.a).dot(resid.row(ed.b));
            const double delta_quad = 2.0 * cross + da * sq_sums[ed.a] + db * sq_sums[ed.b];
            scores[i] = detail::gaussian_score(logdet + delta_logdet, quad_base + delta_quad,
                                               est.tau2_hat, n, r, tau2_floor);
        });

        std::size_t best = 0;
        for (std::size_t i = 1; i < scores.size(); ++i) {
            if (scores[i] > scores[best]) best = i;
        }

        const int chosen = active_edges[best];
        trace.steps.push_back({chosen, scores[best], est.beta_hat, est.tau2_hat});
        removal_order.push_back(chosen);
        state.set_active(chosen, false);
        q = build_sub_precision(state, options.epsilon);
        chol.factorize(q);
        logdet = chol.log_det();
    }

    return {CandidateSequence(std::move(adj), std::move(removal_order)), std::move(trace)};
}

inline std::pair<CandidateSequence, ElicitationTrace> elicit_sequence(
    const AdjacencyStructure& adj, const PriorData& data, const ElicitationOptions& options = {}) {
    return elicit_sequence(std::make_shared<const AdjacencyStructure>(adj), data, options);
}

}  // namespace lcar
