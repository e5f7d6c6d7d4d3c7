#pragma once

#include <cstdint>

namespace attn {

/// SplitMix64 finalizer; the statistical workhorse behind Rng.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Splittable counter-based generator. Each stream is a pure function of
/// (key, counter), so forking a subkey (e.g. one per sampling round) gives
/// an independent reproducible stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : key_(mix64(seed ^ 0x5851f42d4c957f2dULL)) {}

    Rng fork(std::uint64_t subkey) const { return Rng(key_ ^ mix64(subkey + 0x9e3779b97f4a7c15ULL)); }

    std::uint64_t next() { return mix64(key_ + (++counter_) * 0x632be59bd9b4e019ULL); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool coin() { return (next() & 1ULL) != 0; }

    /// Uniform integer in [0, m).
    std::uint64_t below(std::uint64_t m) { return next() % m; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace attn
