#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>

#include "attn/matrix.hpp"

namespace attn {

/// Problem parameters shared by the approximation algorithms: instance
/// shape (n, d), entry bound B, target additive error eps, and the derived
/// internal error eps_internal = eps / (7 * max(B, 1)) that the relevance
/// window and polynomial budget are driven by.
struct AttnParams {
    std::size_t n = 0;
    std::size_t d = 0;
    double entry_bound = 0.0;  // B
    double eps = 0.0;
    double eps_internal = 0.0;

    AttnParams(std::size_t n_, std::size_t d_, double bound, double eps_)
        : n(n_), d(d_), entry_bound(bound), eps(eps_) {
        if (!(bound >= 0.0) || !std::isfinite(bound))
            throw std::invalid_argument("AttnParams: entry bound must be finite and >= 0");
        if (!(eps > 0.0) || !(eps < 0.5))
            throw std::invalid_argument("AttnParams: eps must lie in (0, 1/2)");
        eps_internal = eps / (7.0 * std::max(bound, 1.0));
    }

    static AttnParams for_inputs(const Matrix& q, const Matrix& k, const Matrix& v, double eps) {
        double b = std::max({q.max_abs(), k.max_abs(), v.max_abs()});
        return AttnParams(q.rows(), q.cols(), b, eps);
    }

    /// Checks the (Q, K, V) triple against this instance's shape and bound.
    void check_inputs(const Matrix& q, const Matrix& k, const Matrix& v) const {
        if (q.rows() != n || k.rows() != n || v.rows() != n)
            throw std::invalid_argument("AttnParams: row count mismatch");
        if (q.cols() != d || k.cols() != d)
            throw std::invalid_argument("AttnParams: Q/K column count mismatch");
        if (v.cols() == 0) throw std::invalid_argument("AttnParams: V has no columns");
        double scale = entry_bound * (1.0 + 1e-12) + 1e-300;
        if (q.max_abs() > scale || k.max_abs() > scale || v.max_abs() > scale)
            throw std::invalid_argument("AttnParams: entry exceeds declared bound B");
    }
};

}  // namespace attn
