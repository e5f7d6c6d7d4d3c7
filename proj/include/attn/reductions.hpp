#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "attn/gradient.hpp"  // AttentionOracle
#include "attn/matrix.hpp"

namespace attn {

enum class EntryKind { kBinary, kInteger };

/// A set of n vectors in Z^d, rows of a matrix. Binary sets contain only
/// {0, 1}; integer sets hold integers with |entry| <= entry_bound.
struct VectorSet {
    Matrix vectors;
    EntryKind kind = EntryKind::kInteger;
    double entry_bound = 0.0;

    VectorSet(Matrix m, EntryKind k, double bound);
    std::size_t size() const { return vectors.rows(); }
    std::size_t dim() const { return vectors.cols(); }
};

/// Per-row multiplicative row-sum estimates for exp(Q K^T).
struct RowSumEstimate {
    std::vector<double> estimates;
    double eps = 0.0;
    std::size_t rounds_used = 0;
};

/// One batched oracle call deciding, per row, whether the row sum S_i of
/// exp(Q K^T) clears the threshold c_i: the result bit is 1 whenever
/// S_i >= (1+eps) c_i and 0 whenever S_i <= (1-eps) c_i (either answer is
/// allowed in between). Uses the augmented (n+1) x (d+1) construction and
/// an oracle call at additive error eps/100.
std::vector<std::uint8_t> threshold_indicator(const Matrix& q, const Matrix& k,
                                              const std::vector<double>& c, double eps,
                                              const AttentionOracle& oracle);

/// Parallel binary search over threshold_indicator levels. Estimates
/// satisfy S_i <= estimate_i <= (1 + 4 eps) S_i on honest oracles.
RowSumEstimate estimate_row_sums(const Matrix& q, const Matrix& k, double eps,
                                 const AttentionOracle& oracle);

struct MaxIpResult {
    std::vector<long long> per_row;  // M_i = max_j a_i . b_j
    long long global = 0;
};

/// Exact bichromatic Max-IP through the attention oracle: keys are scaled
/// by k C with k = ln n and the smallest admissible integer C, and each
/// M_i is recovered exactly from the row-sum estimate by the rounding
/// formula floor(log_n S'_i / C + 1/2).
MaxIpResult max_ip(const VectorSet& a, const VectorSet& b, const AttentionOracle& oracle);

/// OV decision via one row-sum recovery at entry scale sqrt(|ln k|):
/// true iff some estimated row sum reaches 1 - c (c = 1/2).
bool ov_large_entries(const VectorSet& a, const VectorSet& b, const AttentionOracle& oracle);

/// Randomized OV decision via parity of integer row sums over subsampled
/// key sets (rounds sampling rounds; 0 picks ceil(10 log2 n)). Exact
/// integer recovery requires n 2^d < 2^53. No false positives; false
/// negatives vanish at rate 2^-rounds per orthogonal witness.
bool ov_parity(const VectorSet& a, const VectorSet& b, const AttentionOracle& oracle,
               std::uint64_t seed, std::size_t rounds = 0);

}  // namespace attn
