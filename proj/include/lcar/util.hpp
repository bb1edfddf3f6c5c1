#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "lcar/errors.hpp"

namespace lcar {

/// FNV-1a 64-bit hash over raw bytes. Used for adjacency and input-file
/// fingerprints recorded in run manifests; stable across platforms.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s) {
    return fnv1a64(s.data(), s.size());
}

inline std::string hash_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

/// Static-partition parallel loop. Work item i is always processed by the
/// same partition regardless of how many threads actually run, so results
/// written to per-index slots are deterministic.
inline void parallel_for(std::size_t count, int num_threads,
                         const std::function<void(std::size_t)>& body) {
    if (num_threads <= 0) {
        num_threads = static_cast<int>(std::thread::hardware_concurrency());
    }
    num_threads = std::max(1, num_threads);
    if (num_threads == 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    const std::size_t n_workers = std::min<std::size_t>(num_threads, count);
    std::vector<std::thread> workers;
    workers.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) {
        workers.emplace_back([&, w] {
            for (std::size_t i = w; i < count; i += n_workers) body(i);
        });
    }
    for (auto& t : workers) t.join();
}

/// Linear-interpolation sample quantile on sorted data (R type 7).
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) throw InvalidArgument("quantile of empty sample");
    if (sorted.size() == 1) return sorted[0];
    p = std::clamp(p, 0.0, 1.0);
    const double h = static_cast<double>(sorted.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

inline double quantile(std::vector<double> values, double p) {
    std::sort(values.begin(), values.end());
    return quantile_sorted(values, p);
}

inline double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

}  // namespace lcar
