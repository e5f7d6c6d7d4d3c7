#pragma once

// Independent reference implementations the unit and acceptance tests
// check the library against. Everything here is deliberately naive.

#include <cmath>
#include <limits>
#include <vector>

#include "attn/matrix.hpp"
#include "attn/rangesearch.hpp"
#include "attn/rng.hpp"

namespace oracles {

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Naive half-space weight sum (left-to-right scan).
inline double halfspace_sum(const attn::Matrix& pts, std::span<const double> w,
                            const attn::HalfSpace& h) {
    double s = 0.0;
    for (std::size_t j = 0; j < pts.rows(); ++j)
        if (dot(h.normal, pts.row(j)) >= h.threshold) s += w[j];
    return s;
}

inline std::size_t halfspace_count(const attn::Matrix& pts, const attn::HalfSpace& h) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < pts.rows(); ++j)
        if (dot(h.normal, pts.row(j)) >= h.threshold) ++c;
    return c;
}

/// Membership bitmap for set-equality checks.
inline std::vector<bool> halfspace_members(const attn::Matrix& pts, const attn::HalfSpace& h) {
    std::vector<bool> m(pts.rows());
    for (std::size_t j = 0; j < pts.rows(); ++j)
        m[j] = dot(h.normal, pts.row(j)) >= h.threshold;
    return m;
}

/// Naive power-sum polynomial evaluation.
inline double poly_eval_naive(std::span<const double> coeffs, double x) {
    double s = 0.0;
    for (std::size_t i = 0; i < coeffs.size(); ++i) s += coeffs[i] * std::pow(x, static_cast<double>(i));
    return s;
}

/// Dense row sums of exp(Q K^T).
inline std::vector<double> exp_row_sums(const attn::Matrix& q, const attn::Matrix& k) {
    std::vector<double> s(q.rows(), 0.0);
    for (std::size_t i = 0; i < q.rows(); ++i)
        for (std::size_t j = 0; j < k.rows(); ++j) s[i] += std::exp(dot(q.row(i), k.row(j)));
    return s;
}

/// Brute-force bichromatic Max-IP per row.
inline std::vector<long long> max_ip_rows(const attn::Matrix& a, const attn::Matrix& b) {
    std::vector<long long> m(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < b.rows(); ++j) best = std::max(best, dot(a.row(i), b.row(j)));
        m[i] = static_cast<long long>(std::llround(best));
    }
    return m;
}

/// Brute-force orthogonal-vectors decision.
inline bool has_orthogonal_pair(const attn::Matrix& a, const attn::Matrix& b) {
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j)
            if (dot(a.row(i), b.row(j)) == 0.0) return true;
    return false;
}

/// Uniform random matrix with entries in [-bound, bound].
inline attn::Matrix random_matrix(attn::Rng& rng, std::size_t n, std::size_t d, double bound) {
    attn::Matrix m(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) m(i, j) = rng.uniform(-bound, bound);
    return m;
}

/// Bernoulli(1/2) binary matrix.
inline attn::Matrix random_binary(attn::Rng& rng, std::size_t n, std::size_t d) {
    attn::Matrix m(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) m(i, j) = rng.coin() ? 1.0 : 0.0;
    return m;
}

/// Random integer matrix with entries in [-bound, bound].
inline attn::Matrix random_integer(attn::Rng& rng, std::size_t n, std::size_t d, long long bound) {
    attn::Matrix m(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            m(i, j) = static_cast<double>(
                static_cast<long long>(rng.below(static_cast<std::uint64_t>(2 * bound + 1))) -
                bound);
    return m;
}

}  // namespace oracles
