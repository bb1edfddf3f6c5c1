#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string_view>

#include <boost/math/special_functions/gamma.hpp>

#include "lcar/errors.hpp"
#include "lcar/util.hpp"

namespace lcar {

inline std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derives the seed of a named substream from a master seed. All randomness
/// in a run flows from one user seed through (purpose, index) substreams,
/// which keeps parallel chains, replicates, permutations and bootstraps
/// reproducible independently of scheduling.
inline std::uint64_t substream_seed(std::uint64_t master, std::string_view purpose,
                                    std::uint64_t index = 0) {
    std::uint64_t x = master ^ fnv1a64(purpose) ^ (0x9e3779b97f4a7c15ULL * (index + 1));
    splitmix64(x);
    return splitmix64(x);
}

/// Seeded random stream with distributions implemented in-library so that
/// draws are bit-identical across standard-library implementations.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : engine_(seed) {}

    static RngStream substream(std::uint64_t master, std::string_view purpose,
                               std::uint64_t index = 0) {
        return RngStream(substream_seed(master, purpose, index));
    }

    std::uint64_t raw() { return engine_(); }

    /// Uniform on [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    /// Unbiased integer on [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) throw InvalidArgument("uniform_int with n = 0");
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    /// Standard normal via Box-Muller (one value per pair of uniforms).
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Poisson draw; sequential inversion for small means, transformed
    /// rejection (PTRS) for large ones.
    long poisson(double mean) {
        if (mean < 0.0 || !std::isfinite(mean)) throw InvalidArgument("poisson mean must be finite and >= 0");
        if (mean == 0.0) return 0;
        if (mean < 30.0) return poisson_inversion(mean);
        return poisson_ptrs(mean);
    }

    /// Inverse-CDF draw from an inverse-gamma(shape, rate) truncated to
    /// (0, upper]. Requires shape > 0.
    double trunc_inv_gamma(double shape, double rate, double upper) {
        if (shape <= 0.0) throw InvalidArgument("trunc_inv_gamma requires shape > 0");
        if (rate <= 0.0 || upper <= 0.0) throw InvalidArgument("trunc_inv_gamma requires rate, upper > 0");
        // CDF at x is Q(shape, rate/x), increasing in x.
        const double cdf_upper = boost::math::gamma_q(shape, rate / upper);
        double v = cdf_upper * (1.0 - uniform());  // (0, cdf_upper]
        v = std::max(v, std::numeric_limits<double>::min());
        const double z = boost::math::gamma_q_inv(shape, v);
        const double x = rate / z;
        return std::min(x, upper);
    }

private:
    long poisson_inversion(double mean) {
        const double limit = std::exp(-mean);
        long k = 0;
        double p = uniform();
        while (p > limit) {
            ++k;
            p *= uniform();
        }
        return k;
    }

    // Hormann (1993) PTRS transformed rejection, valid for mean >= 10.
    long poisson_ptrs(double mean) {
        const double log_mean = std::log(mean);
        const double b = 0.931 + 2.53 * std::sqrt(mean);
        const double a = -0.059 + 0.02483 * b;
        const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        const double v_r = 0.9277 - 3.6224 / (b - 2.0);
        while (true) {
            const double u = uniform() - 0.5;
            const double v = uniform();
            const double us = 0.5 - std::abs(u);
            const double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
            if (us >= 0.07 && v <= v_r) return static_cast<long>(kf);
            if (kf < 0.0 || (us < 0.013 && v > us)) continue;
            const double k = kf;
            if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
                k * log_mean - mean - std::lgamma(k + 1.0)) {
                return static_cast<long>(kf);
            }
        }
    }

    std::mt19937_64 engine_;
};

}  // namespace lcar
