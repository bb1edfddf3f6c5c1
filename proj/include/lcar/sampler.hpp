#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "lcar/adjacency.hpp"
#include "lcar/elicitation.hpp"
#include "lcar/errors.hpp"
#include "lcar/model.hpp"
#include "lcar/precision.hpp"
#include "lcar/rng.hpp"
#include "lcar/util.hpp"

namespace lcar {

// ============================================================
// Configuration
// ============================================================

/// Individual update switches, exposed for validation tests (e.g. prior
/// sampling with the likelihood off, or exercising one kernel in
/// isolation). All on in normal use.
struct UpdateToggles {
    bool beta = true;
    bool phi = true;
    bool tau2 = true;
    bool candidate = true;
    bool level = true;
    bool align = true;
    bool theta = true;
    bool sigma2 = true;

    /// Everything disabled; switch on the kernels under test one by one.
    static UpdateToggles none() {
        UpdateToggles t;
        t.beta = t.phi = t.tau2 = t.candidate = t.level = t.align = t.theta =
            t.sigma2 = false;
        return t;
    }
};

struct SamplerConfig {
    int n_chains = 3;
    long burn_in = 100000;
    long keep = 50000;
    int thin = 1;
    /// Half-width of the window from which candidate moves are proposed.
    int q = 5;
    double epsilon = 1e-3;
    std::uint64_t seed = 1;

    double beta_prior_var = 1000.0;
    double tau2_upper = 1000.0;
    double sigma2_upper = 1000.0;

    bool adapt = true;
    double target_accept_single = 0.44;
    double target_accept_block = 0.35;

    /// Scales the log-likelihood in every acceptance ratio; 0 turns the
    /// data off entirely (prior sampling, validation only).
    double likelihood_weight = 1.0;
    UpdateToggles updates;

    bool store_phi = true;
    int num_threads = 0;
    /// Starting candidate index; -1 means the full graph.
    int initial_candidate = -1;

    void validate() const {
        if (n_chains < 1) throw InvalidArgument("need at least one chain");
        if (burn_in < 0 || keep < 0) throw InvalidArgument("burn_in and keep must be >= 0");
        if (thin < 1) throw InvalidArgument("thin must be >= 1");
        if (q < 1) throw InvalidArgument("q must be >= 1");
        if (!(epsilon > 0.0)) throw NonPositiveEpsilon("epsilon must be > 0");
        if (!(tau2_upper > 0.0) || !(sigma2_upper > 0.0) || !(beta_prior_var > 0.0)) {
            throw InvalidArgument("prior bounds must be > 0");
        }
    }
};

// ============================================================
// Adaptation bookkeeping
// ============================================================

namespace detail {

// Robbins-Monro step size; decays slowly enough to keep adapting through a
// long burn-in, frozen entirely afterwards.
inline double rm_gamma(long t) { return 1.0 / std::pow(static_cast<double>(t) + 10.0, 0.6); }

struct ScalarAdapter {
    double log_sd = 0.0;
    long t = 0;
    long proposals = 0;
    double accept_sum = 0.0;

    double sd() const { return std::exp(log_sd); }

    void record(double alpha, double target, bool adapting) {
        ++proposals;
        accept_sum += alpha;
        if (adapting) {
            ++t;
            log_sd = std::clamp(log_sd + rm_gamma(t) * (alpha - target), -12.0, 6.0);
        }
    }

    double acceptance_rate() const {
        return proposals > 0 ? accept_sum / static_cast<double>(proposals) : 0.0;
    }
};

// Haario-style block proposal: empirical covariance of the history scaled
// by 2.38^2/d, with a Robbins-Monro factor on top.
struct BlockAdapter {
    Eigen::MatrixXd chol;  // proposal cholesky factor (without the RM factor)
    double log_scale = 0.0;
    long t = 0;
    long proposals = 0;
    double accept_sum = 0.0;

    Eigen::VectorXd mean;
    Eigen::MatrixXd m2;
    long count = 0;
    double initial_sd = 0.1;

    void init(int dim, double sd0) {
        initial_sd = sd0;
        chol = Eigen::MatrixXd::Identity(dim, dim) * sd0;
        mean = Eigen::VectorXd::Zero(dim);
        m2 = Eigen::MatrixXd::Zero(dim, dim);
        count = 0;
    }

    void observe(const Eigen::VectorXd& draw) {
        ++count;
        const Eigen::VectorXd delta = draw - mean;
        mean += delta / static_cast<double>(count);
        m2 += delta * (draw - mean).transpose();
    }

    void refresh() {
        if (count < 50) return;
        const int d = static_cast<int>(mean.size());
        Eigen::MatrixXd cov = m2 / static_cast<double>(count - 1);
        cov *= 2.38 * 2.38 / d;
        cov.diagonal().array() += 1e-10;
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        if (llt.info() == Eigen::Success) {
            chol = llt.matrixL();
        } else {
            // Degenerate adapted covariance: fall back to the initial scale.
            chol = Eigen::MatrixXd::Identity(d, d) * initial_sd;
        }
    }

    void record(double alpha, double target, bool adapting) {
        ++proposals;
        accept_sum += alpha;
        if (adapting) {
            ++t;
            log_scale = std::clamp(log_scale + rm_gamma(t) * (alpha - target), -8.0, 4.0);
        }
    }

    double acceptance_rate() const {
        return proposals > 0 ? accept_sum / static_cast<double>(proposals) : 0.0;
    }
};

inline double window_size(int j, int q, int n_max) {
    return static_cast<double>(std::min(j, q) + std::min(n_max - j, q));
}

}  // namespace detail

// ============================================================
// One chain
// ============================================================

/// Full working state of a single Markov chain: parameter state, cached
/// linear predictor, edge state (random-neighbourhood model), RNG stream
/// and adaptation state. Owned by exactly one thread.
class Chain {
public:
    /// `seq` drives the LCAR model (and must carry its log-determinant
    /// cache); the fixed-geography models use `adj` instead.
    Chain(Dataset data, ModelKind kind, const CandidateSequence* seq,
          const AdjacencyStructure* adj, const SamplerConfig& config, RngStream rng)
        : data_(std::move(data)), kind_(kind), seq_(seq), fixed_adj_(adj), config_(config),
          rng_(rng) {
        if (kind_ == ModelKind::Lcar) {
            if (seq_ == nullptr) throw InvalidArgument("the LCAR model needs a candidate sequence");
            if (!seq_->has_logdet_cache()) {
                throw MissingLogDetCache("precompute the candidate log-determinants before sampling");
            }
        } else if (fixed_adj_ == nullptr) {
            throw InvalidArgument("fixed-geography models need the adjacency");
        }
        const int n = data_.n_units();
        const int p = data_.n_coefficients();

        state_.beta = Eigen::VectorXd::Zero(p);
        try {
            state_.beta = poisson_glm(data_).beta;
        } catch (const NonConvergence&) {
            // zero start is fine; burn-in does the rest
        }
        state_.phi = Eigen::VectorXd::Zero(n);
        state_.phi_star = 0.0;
        state_.tau2 = 0.1;
        state_.sigma2 = 0.1;
        if (kind_ == ModelKind::Bym) state_.theta = Eigen::VectorXd::Zero(n);
        if (kind_ == ModelKind::Lcar) {
            state_.candidate_j =
                config_.initial_candidate < 0 ? seq_->num_edges() : config_.initial_candidate;
            edges_ = seq_->candidate(state_.candidate_j);
        }
        eta_ = linear_predictor(data_, state_, kind_);

        const int n_sites = kind_ == ModelKind::Lcar ? n + 1 : n;
        phi_adapt_.assign(n_sites, {});
        for (auto& a : phi_adapt_) a.log_sd = std::log(0.5);
        theta_adapt_.assign(kind_ == ModelKind::Bym ? n : 0, {});
        for (auto& a : theta_adapt_) a.log_sd = std::log(0.5);
        level_adapt_.log_sd = std::log(0.5);
        align_adapt_.assign(p > 1 ? p - 1 : 0, {});
        for (auto& a : align_adapt_) a.log_sd = std::log(0.2);
        beta_adapt_.init(p, 0.05);
    }

    const ChainState& state() const { return state_; }
    ChainState& state() { return state_; }
    const Dataset& data() const { return data_; }
    const Eigen::VectorXd& eta() const { return eta_; }
    RngStream& rng() { return rng_; }
    const EdgeState& edges() const { return edges_; }

    /// Replaces the observed counts (joint-distribution validation); the
    /// rest of the dataset is unchanged.
    void set_observed(const Eigen::VectorXd& y) {
        if (y.size() != data_.y.size()) throw DimensionMismatch("observed counts have wrong length");
        data_.y = y;
    }

    /// Overwrites the parameter state (validation); the linear predictor
    /// and edge state are refreshed to match.
    void reset_state(const ChainState& fresh) {
        state_ = fresh;
        if (kind_ == ModelKind::Lcar) edges_ = seq_->candidate(state_.candidate_j);
        eta_ = linear_predictor(data_, state_, kind_);
    }

    /// One full sweep over all enabled updates.
    void sweep(bool adapting) {
        const auto& on = config_.updates;
        if (on.beta) update_beta(adapting);
        if (on.phi) update_phi(adapting);
        if (kind_ == ModelKind::Bym && on.theta) update_theta(adapting);
        if (kind_ == ModelKind::Lcar && on.level) update_level(adapting);
        if (on.align) update_align(adapting);
        if (kind_ != ModelKind::Lcar) recentre();
        if (on.tau2) update_tau2();
        if (kind_ == ModelKind::Bym && on.sigma2) update_sigma2();
        if (kind_ == ModelKind::Lcar && on.candidate) update_candidate();
        if (adapting && config_.adapt && config_.updates.beta) {
            beta_adapt_.observe(state_.beta);
            if (beta_adapt_.count % 100 == 0) beta_adapt_.refresh();
        }
    }

    double current_deviance() const { return deviance(data_, eta_); }
    Eigen::VectorXd fitted_values() const {
        return data_.expected.array() * eta_.array().exp();
    }

    double acceptance_phi() const {
        double s = 0.0;
        long n = 0;
        for (const auto& a : phi_adapt_) {
            s += a.accept_sum;
            n += a.proposals;
        }
        return n > 0 ? s / static_cast<double>(n) : 0.0;
    }
    double acceptance_beta() const { return beta_adapt_.acceptance_rate(); }
    double acceptance_candidate() const { return candidate_adapt_.acceptance_rate(); }
    double acceptance_level() const { return level_adapt_.acceptance_rate(); }
    double acceptance_align() const {
        double s = 0.0;
        long n = 0;
        for (const auto& a : align_adapt_) {
            s += a.accept_sum;
            n += a.proposals;
        }
        return n > 0 ? s / static_cast<double>(n) : 0.0;
    }
    double acceptance_theta() const {
        double s = 0.0;
        long n = 0;
        for (const auto& a : theta_adapt_) {
            s += a.accept_sum;
            n += a.proposals;
        }
        return n > 0 ? s / static_cast<double>(n) : 0.0;
    }

    /// Resets acceptance counters (called when burn-in ends so reported
    /// rates describe the kept samples).
    void reset_acceptance_counters() {
        for (auto& a : phi_adapt_) {
            a.proposals = 0;
            a.accept_sum = 0.0;
        }
        for (auto& a : theta_adapt_) {
            a.proposals = 0;
            a.accept_sum = 0.0;
        }
        beta_adapt_.proposals = 0;
        beta_adapt_.accept_sum = 0.0;
        candidate_adapt_.proposals = 0;
        candidate_adapt_.accept_sum = 0.0;
        level_adapt_.proposals = 0;
        level_adapt_.accept_sum = 0.0;
        for (auto& a : align_adapt_) {
            a.proposals = 0;
            a.accept_sum = 0.0;
        }
    }

    // --- individual updates (public so validation tests can drive them) ---

    void update_beta(bool adapting) {
        const int p = data_.n_coefficients();
        Eigen::VectorXd z(p);
        for (int i = 0; i < p; ++i) z[i] = rng_.normal();
        const Eigen::VectorXd step = std::exp(beta_adapt_.log_scale) * (beta_adapt_.chol * z);
        const Eigen::VectorXd proposal = state_.beta + step;
        const Eigen::VectorXd eta_new = eta_ + data_.X * step;

        double log_ratio = (state_.beta.squaredNorm() - proposal.squaredNorm()) /
                           (2.0 * config_.beta_prior_var);
        log_ratio += config_.likelihood_weight * likelihood_delta(eta_new);
        const double alpha = std::min(1.0, std::exp(log_ratio));
        if (rng_.uniform() < alpha) {
            state_.beta = proposal;
            eta_ = eta_new;
        }
        beta_adapt_.record(alpha, config_.target_accept_block, adapting && config_.adapt);
    }

    void update_phi(bool adapting) {
        const int n = data_.n_units();
        for (int k = 0; k < n; ++k) {
            const GaussianMoments cond =
                kind_ == ModelKind::Lcar
                    ? lcar_phi_full_conditional(k, state_, edges_, config_.epsilon)
                    : iar_phi_full_conditional(k, state_, prior_adjacency());
            auto& adapter = phi_adapt_[static_cast<std::size_t>(k)];
            const double current = state_.phi[k];
            const double proposal = current + adapter.sd() * rng_.normal();
            double log_ratio = ((current - cond.mean) * (current - cond.mean) -
                                (proposal - cond.mean) * (proposal - cond.mean)) /
                               (2.0 * cond.variance);
            const double eta_new = eta_[k] + (proposal - current);
            log_ratio += config_.likelihood_weight * site_likelihood_delta(k, eta_new);
            const double alpha = std::min(1.0, std::exp(log_ratio));
            if (rng_.uniform() < alpha) {
                state_.phi[k] = proposal;
                eta_[k] = eta_new;
            }
            adapter.record(alpha, config_.target_accept_single, adapting && config_.adapt);
        }
        if (kind_ == ModelKind::Lcar) {
            // Global effect: prior-only site.
            const GaussianMoments cond =
                lcar_phi_full_conditional(n, state_, edges_, config_.epsilon);
            auto& adapter = phi_adapt_[static_cast<std::size_t>(n)];
            const double current = state_.phi_star;
            const double proposal = current + adapter.sd() * rng_.normal();
            const double log_ratio = ((current - cond.mean) * (current - cond.mean) -
                                      (proposal - cond.mean) * (proposal - cond.mean)) /
                                     (2.0 * cond.variance);
            const double alpha = std::min(1.0, std::exp(log_ratio));
            if (rng_.uniform() < alpha) state_.phi_star = proposal;
            adapter.record(alpha, config_.target_accept_single, adapting && config_.adapt);
        }
    }

    void update_theta(bool adapting) {
        const int n = data_.n_units();
        for (int k = 0; k < n; ++k) {
            auto& adapter = theta_adapt_[static_cast<std::size_t>(k)];
            const double current = state_.theta[k];
            const double proposal = current + adapter.sd() * rng_.normal();
            double log_ratio = (current * current - proposal * proposal) / (2.0 * state_.sigma2);
            const double eta_new = eta_[k] + (proposal - current);
            log_ratio += config_.likelihood_weight * site_likelihood_delta(k, eta_new);
            const double alpha = std::min(1.0, std::exp(log_ratio));
            if (rng_.uniform() < alpha) {
                state_.theta[k] = proposal;
                eta_[k] = eta_new;
            }
            adapter.record(alpha, config_.target_accept_single, adapting && config_.adapt);
        }
    }

    /// Joint translation of the extended effects against the intercept;
    /// leaves the linear predictor invariant and decorrelates the nearly
    /// flat level direction of the ridge-regularised prior.
    void update_level(bool adapting) {
        const int n = data_.n_units();
        const double delta = level_adapt_.sd() * rng_.normal();
        const double sum_ext = state_.phi.sum() + state_.phi_star;
        const double quad_delta =
            config_.epsilon * (2.0 * delta * sum_ext + (n + 1) * delta * delta);
        const double b0 = state_.beta[0];
        const double b0_new = b0 - delta;
        const double log_ratio = (b0 * b0 - b0_new * b0_new) / (2.0 * config_.beta_prior_var) -
                                 quad_delta / (2.0 * state_.tau2);
        const double alpha = std::min(1.0, std::exp(log_ratio));
        if (rng_.uniform() < alpha) {
            state_.phi.array() += delta;
            state_.phi_star += delta;
            state_.beta[0] = b0_new;
        }
        level_adapt_.record(alpha, config_.target_accept_single, adapting && config_.adapt);
    }

    /// Interweaving move against the collinearity between each covariate
    /// and the random field: beta_c grows by delta while the field absorbs
    /// -delta * x_c, so the likelihood is untouched and only the prior
    /// ratio decides. Mixes the ridge the block update cannot cross.
    void update_align(bool adapting) {
        const int p = data_.n_coefficients();
        for (int c = 1; c < p; ++c) {
            auto& adapter = align_adapt_[static_cast<std::size_t>(c - 1)];
            const double delta = adapter.sd() * rng_.normal();
            const Eigen::VectorXd phi_new = state_.phi - delta * data_.X.col(c);
            const double bc = state_.beta[c];
            const double bc_new = bc + delta;
            double prior_delta = (bc * bc - bc_new * bc_new) / (2.0 * config_.beta_prior_var);
            if (kind_ == ModelKind::Lcar) {
                ChainState probe = state_;
                probe.phi = phi_new;
                prior_delta += (lcar_quad_form(state_, edges_, config_.epsilon) -
                                lcar_quad_form(probe, edges_, config_.epsilon)) /
                               (2.0 * state_.tau2);
            } else {
                prior_delta += (iar_quad_form(state_.phi, prior_adjacency()) -
                                iar_quad_form(phi_new, prior_adjacency())) /
                               (2.0 * state_.tau2);
            }
            const double alpha = std::min(1.0, std::exp(prior_delta));
            if (rng_.uniform() < alpha) {
                state_.phi = phi_new;
                state_.beta[c] = bc_new;
            }
            adapter.record(alpha, config_.target_accept_single, adapting && config_.adapt);
        }
    }

    void update_tau2() {
        const int n = data_.n_units();
        double quad, exponent;
        if (kind_ == ModelKind::Lcar) {
            quad = lcar_quad_form(state_, edges_, config_.epsilon);
            exponent = static_cast<double>(n + 1) / 2.0;
        } else {
            Eigen::VectorXd centred = state_.phi;
            centred.array() -= centred.mean();
            quad = iar_quad_form(centred, prior_adjacency());
            exponent =
                static_cast<double>(n - connected_components(prior_adjacency())) / 2.0;
        }
        // Uniform prior on tau2 leaves a truncated inverse gamma with
        // shape one less than the half-dimension exponent.
        const double shape = exponent - 1.0;
        if (shape <= 0.0) {
            throw InvalidArgument("graph too small for the exact variance conditional");
        }
        const double rate = std::max(quad / 2.0, 1e-12);
        state_.tau2 = rng_.trunc_inv_gamma(shape, rate, config_.tau2_upper);
    }

    void update_sigma2() {
        const double shape = static_cast<double>(data_.n_units()) / 2.0 - 1.0;
        if (shape <= 0.0) {
            throw InvalidArgument("graph too small for the exact variance conditional");
        }
        const double rate = std::max(state_.theta.squaredNorm() / 2.0, 1e-12);
        state_.sigma2 = rng_.trunc_inv_gamma(shape, rate, config_.sigma2_upper);
    }

    /// Windowed discrete move over the candidate index, with the boundary
    /// proposal-asymmetry correction.
    void update_candidate() {
        const int nw = seq_->num_edges();
        const int j = state_.candidate_j;
        const int q = config_.q;
        const int lo = std::max(0, j - q);
        const int hi = std::min(nw, j + q);
        const int size = hi - lo;  // window excluding j itself
        if (size <= 0) return;
        int pick = lo + static_cast<int>(rng_.uniform_int(static_cast<std::uint64_t>(size)));
        if (pick >= j) ++pick;

        EdgeState trial = edges_;
        if (pick < j) {
            for (int t = j; t > pick; --t) trial.set_active(seq_->edge_removed_at(t), false);
        } else {
            for (int t = j + 1; t <= pick; ++t) trial.set_active(seq_->edge_removed_at(t), true);
        }
        const double quad_now = lcar_quad_form(state_, edges_, config_.epsilon);
        ChainState probe = state_;
        probe.candidate_j = pick;
        const double quad_trial = lcar_quad_form(probe, trial, config_.epsilon);

        double log_ratio = 0.5 * (seq_->cached_logdet(pick) - seq_->cached_logdet(j)) -
                           (quad_trial - quad_now) / (2.0 * state_.tau2);
        log_ratio += std::log(detail::window_size(j, q, nw)) -
                     std::log(detail::window_size(pick, q, nw));
        const double alpha = std::min(1.0, std::exp(log_ratio));
        if (rng_.uniform() < alpha) {
            state_.candidate_j = pick;
            edges_ = std::move(trial);
        }
        candidate_adapt_.record(alpha, 0.0, false);  // never adapted
    }

private:
    const AdjacencyStructure& prior_adjacency() const {
        return kind_ == ModelKind::Lcar ? seq_->base() : *fixed_adj_;
    }

    void recentre() {
        const double mean = state_.phi.mean();
        state_.phi.array() -= mean;
        state_.beta[0] += mean;
    }

    double likelihood_delta(const Eigen::VectorXd& eta_new) const {
        double delta = 0.0;
        for (Eigen::Index k = 0; k < eta_.size(); ++k) {
            delta += data_.y[k] * (eta_new[k] - eta_[k]) -
                     data_.expected[k] * (std::exp(eta_new[k]) - std::exp(eta_[k]));
        }
        return delta;
    }

    double site_likelihood_delta(int k, double eta_new) const {
        return data_.y[k] * (eta_new - eta_[k]) -
               data_.expected[k] * (std::exp(eta_new) - std::exp(eta_[k]));
    }

    static const AdjacencyStructure& empty_adjacency() {
        static const AdjacencyStructure empty = AdjacencyStructure::from_edges(1, {});
        return empty;
    }

    Dataset data_;
    ModelKind kind_;
    const CandidateSequence* seq_;
    const AdjacencyStructure* fixed_adj_;
    SamplerConfig config_;
    RngStream rng_;

    ChainState state_;
    Eigen::VectorXd eta_;
    EdgeState edges_{empty_adjacency(), true};

    std::vector<detail::ScalarAdapter> phi_adapt_;
    std::vector<detail::ScalarAdapter> theta_adapt_;
    std::vector<detail::ScalarAdapter> align_adapt_;
    detail::ScalarAdapter level_adapt_;
    detail::ScalarAdapter candidate_adapt_;
    detail::BlockAdapter beta_adapt_;
};

// ============================================================
// Posterior samples
// ============================================================

struct ChainSamples {
    Eigen::MatrixXd beta;       // kept x (p+1)
    Eigen::VectorXd tau2;
    Eigen::VectorXd phi_star;
    Eigen::VectorXd sigma2;
    Eigen::VectorXd deviance;
    std::vector<int> candidate_j;
    Eigen::MatrixXd phi;        // kept x n when stored

    Eigen::VectorXd beta_mean;
    Eigen::VectorXd phi_mean;
    Eigen::VectorXd theta_mean;
    double phi_star_mean = 0.0;
    Eigen::VectorXd fitted_mean;  // running mean of E_k exp(eta_k)

    double accept_phi = 0.0;
    double accept_beta = 0.0;
    double accept_candidate = 0.0;
    double accept_level = 0.0;
    double accept_align = 0.0;
    double accept_theta = 0.0;
};

struct PosteriorSamples {
    ModelKind kind = ModelKind::Lcar;
    int n_units = 0;
    int n_coefficients = 0;
    int num_edges = 0;
    std::vector<ChainSamples> chains;

    long kept_per_chain() const { return chains.empty() ? 0 : chains.front().tau2.size(); }

    /// All chains' draws of one beta coefficient, pooled.
    std::vector<double> pooled_beta(int coef) const {
        std::vector<double> out;
        for (const auto& c : chains) {
            for (Eigen::Index i = 0; i < c.beta.rows(); ++i) out.push_back(c.beta(i, coef));
        }
        return out;
    }

    std::vector<double> pooled_deviance() const {
        std::vector<double> out;
        for (const auto& c : chains) {
            for (Eigen::Index i = 0; i < c.deviance.size(); ++i) out.push_back(c.deviance[i]);
        }
        return out;
    }

    Eigen::VectorXd posterior_mean_beta() const {
        Eigen::VectorXd m = Eigen::VectorXd::Zero(n_coefficients);
        for (const auto& c : chains) m += c.beta_mean;
        return m / static_cast<double>(chains.size());
    }

    Eigen::VectorXd posterior_mean_phi() const {
        Eigen::VectorXd m = Eigen::VectorXd::Zero(n_units);
        for (const auto& c : chains) m += c.phi_mean;
        return m / static_cast<double>(chains.size());
    }

    Eigen::VectorXd posterior_mean_theta() const {
        Eigen::VectorXd m = Eigen::VectorXd::Zero(n_units);
        if (kind != ModelKind::Bym) return m;
        for (const auto& c : chains) m += c.theta_mean;
        return m / static_cast<double>(chains.size());
    }

    Eigen::VectorXd posterior_mean_fitted() const {
        Eigen::VectorXd m = Eigen::VectorXd::Zero(n_units);
        for (const auto& c : chains) m += c.fitted_mean;
        return m / static_cast<double>(chains.size());
    }
};

/// Streaming hook for the bulk random-effect draws: called once per kept
/// iteration per chain.
using PhiSink = std::function<void(int chain, long kept_index, const Eigen::VectorXd& phi)>;

// ============================================================
// Multi-chain driver
// ============================================================

/// Runs the configured number of chains and collects thinned draws.
/// `seq` is required for the LCAR model (with its log-determinant cache
/// installed) and ignored otherwise; `adj` is required for the fixed-
/// geography models. Reproducible: chain c uses the ("chain", c) substream
/// of the master seed, and results are merged in chain order.
inline PosteriorSamples run_chains(const Dataset& data, ModelKind kind,
                                   const CandidateSequence* seq, const AdjacencyStructure* adj,
                                   const SamplerConfig& config, const PhiSink& phi_sink = {}) {
    config.validate();
    data.validate();
    if (kind == ModelKind::Lcar) {
        if (seq == nullptr) throw InvalidArgument("the LCAR model needs a candidate sequence");
    } else if (adj == nullptr) {
        throw InvalidArgument("fixed-geography models need the adjacency");
    }

    PosteriorSamples out;
    out.kind = kind;
    out.n_units = data.n_units();
    out.n_coefficients = data.n_coefficients();
    out.num_edges = kind == ModelKind::Lcar ? seq->num_edges()
                                            : (adj != nullptr ? adj->num_edges() : 0);
    out.chains.resize(static_cast<std::size_t>(config.n_chains));

    const long kept_count = config.keep / config.thin;

    parallel_for(static_cast<std::size_t>(config.n_chains), config.num_threads, [&](std::size_t c) {
        RngStream rng = RngStream::substream(config.seed, "chain", c);
        Chain chain(data, kind, seq, adj, config, rng);

        for (long it = 0; it < config.burn_in; ++it) chain.sweep(true);
        chain.reset_acceptance_counters();

        ChainSamples& s = out.chains[c];
        const int n = data.n_units();
        const int p = data.n_coefficients();
        s.beta.resize(kept_count, p);
        s.tau2.resize(kept_count);
        s.phi_star.resize(kept_count);
        s.sigma2.resize(kept_count);
        s.deviance.resize(kept_count);
        s.candidate_j.assign(static_cast<std::size_t>(kept_count), 0);
        if (config.store_phi) s.phi.resize(kept_count, n);
        s.beta_mean = Eigen::VectorXd::Zero(p);
        s.phi_mean = Eigen::VectorXd::Zero(n);
        s.theta_mean = Eigen::VectorXd::Zero(n);
        s.fitted_mean = Eigen::VectorXd::Zero(n);

        long kept = 0;
        for (long it = 0; it < config.keep && kept < kept_count; ++it) {
            chain.sweep(false);
            if ((it + 1) % config.thin != 0) continue;
            const ChainState& st = chain.state();
            s.beta.row(kept) = st.beta.transpose();
            s.tau2[kept] = st.tau2;
            s.phi_star[kept] = st.phi_star;
            s.sigma2[kept] = kind == ModelKind::Bym ? st.sigma2 : 0.0;
            s.deviance[kept] = chain.current_deviance();
            s.candidate_j[static_cast<std::size_t>(kept)] =
                kind == ModelKind::Lcar ? st.candidate_j : out.num_edges;
            if (config.store_phi) s.phi.row(kept) = st.phi.transpose();
            if (phi_sink) phi_sink(static_cast<int>(c), kept, st.phi);
            s.beta_mean += st.beta;
            s.phi_mean += st.phi;
            if (kind == ModelKind::Bym) s.theta_mean += st.theta;
            s.phi_star_mean += st.phi_star;
            s.fitted_mean += chain.fitted_values();
            ++kept;
        }
        if (kept > 0) {
            s.beta_mean /= static_cast<double>(kept);
            s.phi_mean /= static_cast<double>(kept);
            s.theta_mean /= static_cast<double>(kept);
            s.phi_star_mean /= static_cast<double>(kept);
            s.fitted_mean /= static_cast<double>(kept);
        }
        s.accept_phi = chain.acceptance_phi();
        s.accept_beta = chain.acceptance_beta();
        s.accept_candidate = chain.acceptance_candidate();
        s.accept_level = chain.acceptance_level();
        s.accept_align = chain.acceptance_align();
        s.accept_theta = chain.acceptance_theta();
    });

    return out;
}

// ============================================================
// Convergence summary
// ============================================================

/// Gelman-Rubin potential scale reduction across chains for one scalar.
inline double potential_scale_reduction(const std::vector<std::vector<double>>& chains) {
    const std::size_t m = chains.size();
    if (m < 2) return 1.0;
    const std::size_t len = chains.front().size();
    if (len < 2) return 1.0;
    double grand = 0.0;
    std::vector<double> means(m, 0.0), vars(m, 0.0);
    for (std::size_t c = 0; c < m; ++c) {
        for (double v : chains[c]) means[c] += v;
        means[c] /= static_cast<double>(len);
        for (double v : chains[c]) vars[c] += (v - means[c]) * (v - means[c]);
        vars[c] /= static_cast<double>(len - 1);
        grand += means[c];
    }
    grand /= static_cast<double>(m);
    double b = 0.0, w = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
        b += (means[c] - grand) * (means[c] - grand);
        w += vars[c];
    }
    b *= static_cast<double>(len) / static_cast<double>(m - 1);
    w /= static_cast<double>(m);
    if (w <= 0.0) return 1.0;
    const double var_plus = (static_cast<double>(len - 1) / len) * w + b / static_cast<double>(len);
    return std::sqrt(var_plus / w);
}

}  // namespace lcar
