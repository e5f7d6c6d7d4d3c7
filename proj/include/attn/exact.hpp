#pragma once

#include <vector>

#include "attn/matrix.hpp"

namespace attn {

/// Exact softmax attention D^{-1} exp(Q K^T) V, computed row by row with
/// per-row max subtraction. This is the reference oracle every
/// approximation in this library is tested against.
///
/// Q, K must be n x d with the same shape; V must have n rows (any number
/// of columns). Throws on n == 0 or shape mismatch.
Matrix exact_attention(const Matrix& q, const Matrix& k, const Matrix& v);

/// Debug entry point: the full n x n row-stochastic weight matrix
/// softmax(Q K^T). Quadratic memory; intended for tests and small n.
Matrix attention_weights(const Matrix& q, const Matrix& k);

/// Row sums of exp(Q K^T), evaluated as exp(m_i + log(sum exp(s - m_i)))
/// so that intermediate terms never overflow before the final result does.
std::vector<double> exp_row_sums(const Matrix& q, const Matrix& k);

/// Row-wise softmax of an arbitrary dense matrix (max-subtracted).
Matrix row_softmax(const Matrix& scores);

}  // namespace attn
