#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "attn/params.hpp"

namespace attn {

/// Per-row relevance window over descending-sorted keys: the relevant run
/// starts at first_relevant and spans count_relevant entries; every key in
/// the run scores q * k >= c, and q * k - c lies in [0, log(n/eps')].
struct RelevanceWindow {
    double c = 0.0;
    std::size_t first_relevant = 0;
    std::size_t count_relevant = 0;
};

/// Debug trace of one output row of the d = 1 algorithms.
struct Row1dDebug {
    RelevanceWindow window;
    int sign = 0;              // sign of q_i (0 rows use the closed form)
    bool fallback_used = false;  // direct window summation replaced the
                                 // polynomial assembly for this row
};

/// Prefix sums of key powers against descending-sorted keys:
///   phi(b, J)   = sum_{j < J} k_j^b
///   phi_v(b, J) = sum_{j < J} k_j^b v_j
/// for all b in [0, g] and J in [0, n].
class PhiTables {
public:
    PhiTables(std::span<const double> k_sorted_desc, std::span<const double> v_sorted,
              std::size_t degree);

    std::size_t degree() const { return degree_; }
    std::size_t size() const { return n_; }

    double phi(std::size_t b, std::size_t j_end) const { return pow_pref_[b * (n_ + 1) + j_end]; }
    double phi_v(std::size_t b, std::size_t j_end) const { return powv_pref_[b * (n_ + 1) + j_end]; }

private:
    std::size_t degree_ = 0, n_ = 0;
    std::vector<double> pow_pref_, powv_pref_;
};

inline PhiTables build_phi_tables(std::span<const double> k_sorted_desc,
                                  std::span<const double> v_sorted, std::size_t degree) {
    return PhiTables(k_sorted_desc, v_sorted, degree);
}

/// Algorithm-1-style d = 1 attention: sign split, relevance window by
/// binary search, certified exp polynomial assembled from key-power prefix
/// sums. ||result - exact_attention||_inf <= params.eps.
std::vector<double> vector_attention(std::span<const double> q, std::span<const double> k,
                                     std::span<const double> v, const AttnParams& params,
                                     std::vector<Row1dDebug>* debug = nullptr);

/// Rounding-scheme d = 1 attention: discard irrelevant keys, bucket
/// surviving scores into width-log(1+eps') intervals, one representative
/// exponent per bucket. Same additive contract as vector_attention; the
/// bucket count grows like 1/eps', so this is the modest-accuracy path.
std::vector<double> rounding_attention_1d(std::span<const double> q, std::span<const double> k,
                                          std::span<const double> v, const AttnParams& params,
                                          std::vector<Row1dDebug>* debug = nullptr);

namespace detail1d {

/// Single-pass core used by both sign branches: all rows are treated as
/// having nonnegative q (zero rows take the uniform closed form).
std::vector<double> positive_vector_attention(std::span<const double> q_nonneg,
                                              std::span<const double> k,
                                              std::span<const double> v, const AttnParams& params,
                                              std::vector<Row1dDebug>* debug = nullptr);

}  // namespace detail1d
}  // namespace attn
