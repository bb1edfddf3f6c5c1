#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lcar/errors.hpp"
#include "lcar/util.hpp"

namespace lcar {

/// One undirected border pair, canonically ordered a < b (0-based units).
struct Edge {
    int a = 0;
    int b = 0;
    friend bool operator==(const Edge&, const Edge&) = default;
};

// ============================================================
// AdjacencyStructure: the fixed geography
// ============================================================

/// n areal units and the symmetric binary border relation, stored as a
/// deduplicated edge list in canonical (a < b, lexicographic) order.
/// Immutable after construction; safe to share across threads.
class AdjacencyStructure {
public:
    /// Builds from an arbitrary list of unit pairs (0-based, either
    /// orientation, duplicates allowed).
    static AdjacencyStructure from_edges(int n, const std::vector<std::pair<int, int>>& pairs) {
        if (n <= 0) throw InvalidArgument("number of units must be positive");
        std::set<std::pair<int, int>> canon;
        for (const auto& [u, v] : pairs) {
            if (u < 0 || u >= n || v < 0 || v >= n) {
                throw IndexOutOfRange("edge (" + std::to_string(u + 1) + "," +
                                      std::to_string(v + 1) + ") references a unit outside 1.." +
                                      std::to_string(n));
            }
            if (u == v) {
                throw SelfLoop("unit " + std::to_string(u + 1) + " paired with itself");
            }
            canon.emplace(std::min(u, v), std::max(u, v));
        }
        AdjacencyStructure adj;
        adj.n_ = n;
        adj.edges_.reserve(canon.size());
        for (const auto& [a, b] : canon) adj.edges_.push_back({a, b});
        adj.incident_.assign(n, {});
        adj.neighbours_.assign(n, {});
        for (int e = 0; e < static_cast<int>(adj.edges_.size()); ++e) {
            adj.incident_[adj.edges_[e].a].push_back(e);
            adj.incident_[adj.edges_[e].b].push_back(e);
            adj.neighbours_[adj.edges_[e].a].push_back(adj.edges_[e].b);
            adj.neighbours_[adj.edges_[e].b].push_back(adj.edges_[e].a);
        }
        return adj;
    }

    int n_units() const { return n_; }
    /// Number of edges N_W in the full geography.
    int num_edges() const { return static_cast<int>(edges_.size()); }
    const Edge& edge(int e) const { return edges_[static_cast<std::size_t>(e)]; }
    const std::vector<Edge>& edges() const { return edges_; }
    /// Edge indices incident to unit k.
    const std::vector<int>& incident_edges(int k) const { return incident_[static_cast<std::size_t>(k)]; }
    const std::vector<int>& neighbours(int k) const { return neighbours_[static_cast<std::size_t>(k)]; }
    int degree(int k) const { return static_cast<int>(incident_[static_cast<std::size_t>(k)].size()); }

    /// Stable fingerprint of (n, canonical edge list); recorded in sequence
    /// sidecars and run manifests to detect mismatched inputs.
    std::string hash() const {
        std::uint64_t h = fnv1a64(&n_, sizeof(n_));
        for (const Edge& e : edges_) {
            h = fnv1a64(&e.a, sizeof(e.a), h);
            h = fnv1a64(&e.b, sizeof(e.b), h);
        }
        return hash_hex(h);
    }

private:
    int n_ = 0;
    std::vector<Edge> edges_;
    std::vector<std::vector<int>> incident_;
    std::vector<std::vector<int>> neighbours_;
};

/// Number of connected components of the base graph.
inline int connected_components(const AdjacencyStructure& adj) {
    const int n = adj.n_units();
    std::vector<int> label(static_cast<std::size_t>(n), -1);
    int components = 0;
    std::vector<int> stack;
    for (int start = 0; start < n; ++start) {
        if (label[start] >= 0) continue;
        stack.push_back(start);
        label[start] = components;
        while (!stack.empty()) {
            const int k = stack.back();
            stack.pop_back();
            for (int nb : adj.neighbours(k)) {
                if (label[nb] < 0) {
                    label[nb] = components;
                    stack.push_back(nb);
                }
            }
        }
        ++components;
    }
    return components;
}

// ============================================================
// EdgeState: one realisation of the random edge set
// ============================================================

/// Active/inactive flags over the base edges plus the derived bookkeeping:
/// per-unit active degree, per-unit count of removed incident edges (whose
/// positivity is the indicator that links the unit to the global smoothing
/// node), and their totals. Value type, owned by one chain at a time.
class EdgeState {
public:
    explicit EdgeState(const AdjacencyStructure& base, bool all_active = true)
        : base_(&base),
          active_(static_cast<std::size_t>(base.num_edges()), all_active ? 1 : 0),
          active_degree_(static_cast<std::size_t>(base.n_units()), 0),
          removed_count_(static_cast<std::size_t>(base.n_units()), 0) {
        if (all_active) {
            for (int k = 0; k < base.n_units(); ++k) active_degree_[k] = base.degree(k);
            active_total_ = base.num_edges();
        } else {
            for (int k = 0; k < base.n_units(); ++k) removed_count_[k] = base.degree(k);
            active_total_ = 0;
        }
        refresh_global_degree();
    }

    const AdjacencyStructure& base() const { return *base_; }

    bool is_active(int e) const { return active_[static_cast<std::size_t>(e)] != 0; }

    void set_active(int e, bool on) {
        if (e < 0 || e >= base_->num_edges()) throw IndexOutOfRange("edge index out of range");
        auto& flag = active_[static_cast<std::size_t>(e)];
        if ((flag != 0) == on) return;
        const Edge& ed = base_->edge(e);
        const int delta = on ? 1 : -1;
        flag = on ? 1 : 0;
        active_total_ += delta;
        for (int k : {ed.a, ed.b}) {
            const bool was_linked = removed_count_[k] > 0;
            active_degree_[k] += delta;
            removed_count_[k] -= delta;
            const bool now_linked = removed_count_[k] > 0;
            if (was_linked != now_linked) global_degree_ += now_linked ? 1 : -1;
        }
    }

    int active_count() const { return active_total_; }
    int active_degree(int k) const { return active_degree_[static_cast<std::size_t>(k)]; }
    /// w_k*: 1 iff at least one edge incident to unit k has been removed.
    bool global_link(int k) const { return removed_count_[static_cast<std::size_t>(k)] > 0; }
    int removed_incident(int k) const { return removed_count_[static_cast<std::size_t>(k)]; }
    /// Degree of the global smoothing node, the sum of all w_k*.
    int global_degree() const { return global_degree_; }

    /// Row sums of the extended neighbourhood matrix: entry k < n is the
    /// active degree of unit k plus its global link; the last entry is the
    /// global node's degree.
    Eigen::VectorXd extended_row_sums() const {
        const int n = base_->n_units();
        Eigen::VectorXd sums(n + 1);
        for (int k = 0; k < n; ++k) {
            sums[k] = active_degree_[k] + (global_link(k) ? 1.0 : 0.0);
        }
        sums[n] = global_degree_;
        return sums;
    }

private:
    void refresh_global_degree() {
        global_degree_ = 0;
        for (int c : removed_count_) global_degree_ += c > 0 ? 1 : 0;
    }

    const AdjacencyStructure* base_;
    std::vector<std::uint8_t> active_;
    std::vector<int> active_degree_;
    std::vector<int> removed_count_;
    int active_total_ = 0;
    int global_degree_ = 0;
};

// ============================================================
// CandidateSequence: the elicited family of edge states
// ============================================================

/// The ordered candidate states, encoded as the base geography plus the
/// order in which edges are removed. Candidate j keeps the last j entries
/// of the removal order active, so candidate N_W is the full graph and
/// candidate 0 the empty one, with exactly one edge changing between
/// neighbours. Immutable apart from the optional log-determinant cache,
/// which is installed once before sampling.
class CandidateSequence {
public:
    CandidateSequence(std::shared_ptr<const AdjacencyStructure> base, std::vector<int> removal_order)
        : base_(std::move(base)), removal_order_(std::move(removal_order)) {
        const int nw = base_->num_edges();
        if (static_cast<int>(removal_order_.size()) != nw) {
            throw InvalidArgument("removal order must list every edge exactly once");
        }
        std::vector<std::uint8_t> seen(static_cast<std::size_t>(nw), 0);
        for (int e : removal_order_) {
            if (e < 0 || e >= nw || seen[static_cast<std::size_t>(e)]) {
                throw InvalidArgument("removal order is not a permutation of the edges");
            }
            seen[static_cast<std::size_t>(e)] = 1;
        }
    }

    CandidateSequence(const AdjacencyStructure& base, std::vector<int> removal_order)
        : CandidateSequence(std::make_shared<const AdjacencyStructure>(base),
                            std::move(removal_order)) {}

    const AdjacencyStructure& base() const { return *base_; }
    std::shared_ptr<const AdjacencyStructure> base_ptr() const { return base_; }
    int num_edges() const { return base_->num_edges(); }
    const std::vector<int>& removal_order() const { return removal_order_; }

    /// Edge state with exactly j active edges.
    EdgeState candidate(int j) const {
        check_index(j);
        EdgeState state(*base_, true);
        for (int step = 0; step < num_edges() - j; ++step) {
            state.set_active(removal_order_[static_cast<std::size_t>(step)], false);
        }
        return state;
    }

    /// The edge whose removal moves candidate j to candidate j-1.
    int edge_removed_at(int j) const {
        if (j < 1 || j > num_edges()) throw IndexOutOfRange("no removal between these candidates");
        return removal_order_[static_cast<std::size_t>(num_edges() - j)];
    }

    // --- log-determinant cache (full extended precision, one value per candidate) ---

    bool has_logdet_cache() const { return logdet_cache_.has_value(); }
    double cache_epsilon() const { return cache_epsilon_; }

    void set_logdet_cache(std::vector<double> values, double epsilon) {
        if (static_cast<int>(values.size()) != num_edges() + 1) {
            throw DimensionMismatch("log-determinant cache must hold one value per candidate");
        }
        logdet_cache_ = std::move(values);
        cache_epsilon_ = epsilon;
    }

    double cached_logdet(int j) const {
        check_index(j);
        if (!logdet_cache_) {
            throw MissingLogDetCache("candidate log-determinants have not been precomputed");
        }
        return (*logdet_cache_)[static_cast<std::size_t>(j)];
    }

private:
    void check_index(int j) const {
        if (j < 0 || j > num_edges()) {
            throw IndexOutOfRange("candidate index " + std::to_string(j) + " outside 0.." +
                                  std::to_string(num_edges()));
        }
    }

    std::shared_ptr<const AdjacencyStructure> base_;
    std::vector<int> removal_order_;
    std::optional<std::vector<double>> logdet_cache_;
    double cache_epsilon_ = 0.0;
};

}  // namespace lcar
