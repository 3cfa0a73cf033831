#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace fundusqa {

// Pairwise (binary-tree) reduction over [lo, hi). The split is always at the
// midpoint, so summing a sequence concatenated with itself yields exactly
// twice the original sum, and the order never depends on thread count.
template <class F>
double pairwise_reduce(std::size_t lo, std::size_t hi, const F& term) {
    if (hi - lo <= 8) {
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += term(i);
        return s;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    return pairwise_reduce(lo, mid, term) + pairwise_reduce(mid, hi, term);
}

inline double pairwise_sum(std::span<const double> v) {
    return pairwise_reduce(0, v.size(), [&](std::size_t i) { return v[i]; });
}

// FNV-1a over raw bytes; used for parameter fingerprints in model files.
inline uint64_t fnv1a(const void* bytes, std::size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace fundusqa
