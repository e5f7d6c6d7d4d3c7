#pragma once

#include <cstddef>

#include "attn/matrix.hpp"

namespace attn {

/// A = U * V^T with U (n x r) and V (d x r); r is the numerical rank of A
/// at the threshold used to build the factorization.
struct RankFactorization {
    Matrix u;
    Matrix v;
    std::size_t rank = 0;
};

/// Column-pivoted QR factorization truncated at numerical rank. The
/// reconstruction satisfies ||A - U V^T||_inf <= tol * ||A||_inf * max(n, d).
RankFactorization rank_factorize(const Matrix& a, double tol = 1e-9);

}  // namespace attn
