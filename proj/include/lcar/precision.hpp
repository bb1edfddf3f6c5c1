#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "lcar/adjacency.hpp"
#include "lcar/errors.hpp"

namespace lcar {

using SpMat = Eigen::SparseMatrix<double>;

// ============================================================
// Assembly
// ============================================================
//
// The extended precision is diag(row sums) - W_ext + eps*I over the n+1
// nodes (units plus the global smoothing node). Both triangles are stored,
// and every *potential* nonzero of the base geography is inserted even when
// its current value is zero: all candidates then share one sparsity
// pattern, so a single symbolic factorisation serves the whole sweep.

namespace detail {

inline void check_epsilon(double epsilon) {
    if (!(epsilon > 0.0)) {
        throw NonPositiveEpsilon("diagonal dominance constant must be > 0, got " +
                                 std::to_string(epsilon));
    }
}

}  // namespace detail

/// Extended (n+1)x(n+1) precision for the given edge state.
inline SpMat build_precision(const EdgeState& state, double epsilon) {
    detail::check_epsilon(epsilon);
    const AdjacencyStructure& adj = state.base();
    const int n = adj.n_units();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(n + 1 + 2 * adj.num_edges() + 2 * n));
    for (int k = 0; k < n; ++k) {
        const double link = state.global_link(k) ? 1.0 : 0.0;
        trip.emplace_back(k, k, state.active_degree(k) + link + epsilon);
        if (adj.degree(k) > 0) {
            trip.emplace_back(k, n, -link);
            trip.emplace_back(n, k, -link);
        }
    }
    trip.emplace_back(n, n, state.global_degree() + epsilon);
    for (int e = 0; e < adj.num_edges(); ++e) {
        const Edge& ed = adj.edge(e);
        const double w = state.is_active(e) ? 1.0 : 0.0;
        trip.emplace_back(ed.a, ed.b, -w);
        trip.emplace_back(ed.b, ed.a, -w);
    }
    SpMat q(n + 1, n + 1);
    q.setFromTriplets(trip.begin(), trip.end());
    return q;
}

/// Leading n x n block of the extended precision (the global node's row and
/// column dropped, its indicator contribution to the diagonal kept).
inline SpMat build_sub_precision(const EdgeState& state, double epsilon) {
    detail::check_epsilon(epsilon);
    const AdjacencyStructure& adj = state.base();
    const int n = adj.n_units();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(n + 2 * adj.num_edges()));
    for (int k = 0; k < n; ++k) {
        const double link = state.global_link(k) ? 1.0 : 0.0;
        trip.emplace_back(k, k, state.active_degree(k) + link + epsilon);
    }
    for (int e = 0; e < adj.num_edges(); ++e) {
        const Edge& ed = adj.edge(e);
        const double w = state.is_active(e) ? 1.0 : 0.0;
        trip.emplace_back(ed.a, ed.b, -w);
        trip.emplace_back(ed.b, ed.a, -w);
    }
    SpMat q(n, n);
    q.setFromTriplets(trip.begin(), trip.end());
    return q;
}

// ============================================================
// Factorisation
// ============================================================

/// Sparse LDL^T factorisation wrapper. The symbolic analysis (fill-reducing
/// ordering) runs once on the first matrix and is reused for every later
/// factorisation, which is valid because all candidates share one pattern.
class CholeskyContext {
public:
    void factorize(const SpMat& q) {
        if (!analyzed_) {
            solver_.analyzePattern(q);
            analyzed_ = true;
        }
        solver_.factorize(q);
        if (solver_.info() != Eigen::Success || (solver_.vectorD().array() <= 0.0).any()) {
            throw NotPositiveDefinite("sparse factorisation failed; precision state is corrupted");
        }
    }

    double log_det() const { return solver_.vectorD().array().log().sum(); }

    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const { return solver_.solve(rhs); }

    /// Column k of the inverse.
    Eigen::VectorXd inverse_column(int k) const {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(solver_.rows());
        e[k] = 1.0;
        return solver_.solve(e);
    }

private:
    Eigen::SimplicialLDLT<SpMat> solver_;
    bool analyzed_ = false;
};

/// Log-determinant of a symmetric positive-definite sparse matrix.
inline double log_det(const SpMat& q) {
    Eigen::SimplicialLDLT<SpMat> solver(q);
    if (solver.info() != Eigen::Success || (solver.vectorD().array() <= 0.0).any()) {
        throw NotPositiveDefinite("matrix is not positive definite");
    }
    return solver.vectorD().array().log().sum();
}

/// v' Q v.
inline double quad_form(const SpMat& q, const Eigen::VectorXd& v) {
    if (q.rows() != v.size()) {
        throw DimensionMismatch("quadratic form: matrix is " + std::to_string(q.rows()) +
                                "x" + std::to_string(q.cols()) + ", vector has length " +
                                std::to_string(v.size()));
    }
    return v.dot(q * v);
}

// ============================================================
// Single-edge determinant updates
// ============================================================
//
// Toggling one edge perturbs the leading block of the precision on the two
// endpoint rows only: the off-diagonal pair flips between -1 and 0, and
// each endpoint's diagonal changes by the degree step net of a possible
// global-link flip. That is a rank-2 symmetric update, so the determinant
// ratio is the 2x2 capacitance det(I + C * S) with S the corresponding
// entries of the current inverse.

enum class EdgeMove { Remove, Add };

/// Change in ln|Q_sub| from toggling `edge_idx` in `state`, given columns
/// a and b of the current inverse (col_a = Q_sub^{-1} e_a, likewise b).
inline double sub_logdet_delta_from_columns(const EdgeState& state, int edge_idx, EdgeMove move,
                                            const Eigen::VectorXd& col_a,
                                            const Eigen::VectorXd& col_b) {
    const Edge& ed = state.base().edge(edge_idx);
    double off, da, db;
    if (move == EdgeMove::Remove) {
        if (!state.is_active(edge_idx)) throw InvalidArgument("edge is not active");
        off = 1.0;  // -1 -> 0
        da = state.removed_incident(ed.a) == 0 ? 0.0 : -1.0;
        db = state.removed_incident(ed.b) == 0 ? 0.0 : -1.0;
    } else {
        if (state.is_active(edge_idx)) throw InvalidArgument("edge is already active");
        off = -1.0;  // 0 -> -1
        da = state.removed_incident(ed.a) == 1 ? 0.0 : 1.0;
        db = state.removed_incident(ed.b) == 1 ? 0.0 : 1.0;
    }
    const double s_aa = col_a[ed.a];
    const double s_ab = col_a[ed.b];
    const double s_bb = col_b[ed.b];
    // M = I + C*S with C = [[da, off], [off, db]], S = [[s_aa, s_ab], [s_ab, s_bb]].
    const double m11 = 1.0 + da * s_aa + off * s_ab;
    const double m12 = da * s_ab + off * s_bb;
    const double m21 = off * s_aa + db * s_ab;
    const double m22 = 1.0 + off * s_ab + db * s_bb;
    const double det = m11 * m22 - m12 * m21;
    if (!(det > 0.0)) {
        throw NotPositiveDefinite("edge update would lose positive definiteness");
    }
    return std::log(det);
}

/// Same update, solving for the two inverse columns on demand.
inline double sub_logdet_delta(const CholeskyContext& chol, const EdgeState& state, int edge_idx,
                               EdgeMove move) {
    const Edge& ed = state.base().edge(edge_idx);
    return sub_logdet_delta_from_columns(state, edge_idx, move, chol.inverse_column(ed.a),
                                         chol.inverse_column(ed.b));
}

/// ln|Q(cand j')_sub| - ln|Q(cand j)_sub| for the adjacent candidate in the
/// given direction (j' = j-1 for Remove, j+1 for Add).
inline double edge_delta_logdet(const CandidateSequence& seq, int j, EdgeMove move,
                                double epsilon) {
    const int nw = seq.num_edges();
    if (move == EdgeMove::Remove && (j < 1 || j > nw)) {
        throw IndexOutOfRange("no candidate below index " + std::to_string(j));
    }
    if (move == EdgeMove::Add && (j < 0 || j >= nw)) {
        throw IndexOutOfRange("no candidate above index " + std::to_string(j));
    }
    const EdgeState state = seq.candidate(j);
    const int edge_idx = move == EdgeMove::Remove ? seq.edge_removed_at(j) : seq.edge_removed_at(j + 1);
    CholeskyContext chol;
    chol.factorize(build_sub_precision(state, epsilon));
    return sub_logdet_delta(chol, state, edge_idx, move);
}

// ============================================================
// Candidate log-determinant cache
// ============================================================

/// ln|Q(cand j, eps)| of the full extended precision for every j.
inline std::vector<double> candidate_logdets(const CandidateSequence& seq, double epsilon) {
    const int nw = seq.num_edges();
    std::vector<double> values(static_cast<std::size_t>(nw + 1));
    EdgeState state(seq.base(), true);
    CholeskyContext chol;
    for (int j = nw; j >= 0; --j) {
        chol.factorize(build_precision(state, epsilon));
        values[static_cast<std::size_t>(j)] = chol.log_det();
        if (j > 0) state.set_active(seq.edge_removed_at(j), false);
    }
    return values;
}

/// Installs the candidate log-determinant cache if missing or computed for
/// a different epsilon.
inline void ensure_logdet_cache(CandidateSequence& seq, double epsilon) {
    if (seq.has_logdet_cache() && seq.cache_epsilon() == epsilon) return;
    seq.set_logdet_cache(candidate_logdets(seq, epsilon), epsilon);
}

}  // namespace lcar
