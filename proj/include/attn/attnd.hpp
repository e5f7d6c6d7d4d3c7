#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "attn/detail/partition_tree.hpp"
#include "attn/exppoly.hpp"
#include "attn/matrix.hpp"
#include "attn/params.hpp"
#include "attn/rangesearch.hpp"
#include "attn/stats.hpp"

namespace attn {

/// Weighted half-space-sum structures for every key-power tuple: one
/// logical RangeIndex per (tuple, t) with weights prod_k K_{j,k}^{l_k} *
/// V_{j,t} (t >= 1) or the bare power product (t = 0). All of them share
/// one partition tree over the key points; what varies per index is the
/// per-node weight sums.
class PhiIndexFamily {
public:
    std::size_t degree() const { return degree_; }
    std::size_t dim() const { return d_; }
    std::size_t value_cols() const { return d_v_; }
    std::size_t tuple_count() const { return tuple_count_; }
    std::size_t memory_bytes() const { return node_sums_.size() * sizeof(double); }
    const std::shared_ptr<const detail::PartitionTree>& tree() const { return tree_; }

    /// Multi-index (l_1..l_d) of tuple t, packed row-major.
    std::span<const int> tuple(std::size_t t) const { return {tuples_.data() + t * d_, d_}; }
    /// Index of a tuple, or npos when unknown.
    std::size_t find_tuple(std::span<const int> t) const;

    /// Per-node accumulated weights: sums(node)[tuple * (d_v+1) + t].
    std::span<const double> node_sums(std::size_t node) const {
        return {node_sums_.data() + node * stride_, stride_};
    }
    std::size_t stride() const { return stride_; }

    /// Weight of the permuted point p for (tuple, t); identical expression
    /// to the one the builder used, so boundary points recompute exactly.
    double point_weight(std::size_t p, std::span<const int> tuple, std::size_t t) const;

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    friend PhiIndexFamily build_phi_family(const Matrix&, const Matrix&, std::size_t,
                                           std::shared_ptr<const detail::PartitionTree>,
                                           std::size_t);
    std::size_t degree_ = 0, d_ = 0, d_v_ = 0, n_ = 0;
    std::size_t tuple_count_ = 0, stride_ = 0;
    std::vector<int> tuples_;
    std::vector<double> node_sums_;  // node-major
    std::vector<double> v_perm_;     // V rows permuted to tree order
    std::shared_ptr<const detail::PartitionTree> tree_;
};

/// Builds the (tuple, t) family over keys K and values V for polynomial
/// degree g. Throws if the estimated footprint exceeds mem_cap_bytes
/// (default 2 GiB), advising a larger eps or smaller B.
PhiIndexFamily build_phi_family(const Matrix& k, const Matrix& v, std::size_t degree,
                                std::shared_ptr<const detail::PartitionTree> tree = nullptr,
                                std::size_t mem_cap_bytes = std::size_t{2} << 30);

/// phi_t(halfspace, l_1..l_d) = sum over keys inside the half-space of
/// prod_k K_{j,k}^{l_k} * V_{j,t} (t = 0 drops the V factor).
double phi_query(const PhiIndexFamily& fam, std::size_t t, const HalfSpace& h,
                 std::span<const int> tuple);

/// One output row assembled from the multinomial expansion of the
/// certified polynomial against the phi family. Throws if the assembled
/// denominator is not positive (certification breach).
std::vector<double> assemble_row(std::span<const double> q_row, double c_row, const ExpPoly& p,
                                 const PhiIndexFamily& fam);

/// Per-row debug trace of approx_attention.
struct RowDDebug {
    long long s_max = 0;
    double c = 0.0;
    std::size_t relevant = 0;
    bool stable_path = false;  // anchored-moment evaluation used for this row
};

/// Constant-head-dimension approximate attention:
/// ||result - exact_attention||_inf <= params.eps. d = 1 delegates to the
/// dedicated vector algorithm; 2 <= d <= 8 runs the half-space pipeline.
Matrix approx_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                        const AttnParams& params, RunStats* stats = nullptr,
                        std::vector<RowDDebug>* debug = nullptr);

/// Low-rank wrapper: factorizes Q and K, rewrites the instance over the
/// smaller inner dimension r = min(rank Q, rank K), and runs
/// approx_attention there. Exact for the original inputs because
/// Q' K'^T = Q K^T.
Matrix low_rank_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                          const AttnParams& params, RunStats* stats = nullptr);

}  // namespace attn
