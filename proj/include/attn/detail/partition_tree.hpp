#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "attn/matrix.hpp"

namespace attn::detail {

enum class Region : std::uint8_t { kOutside, kInside, kCrossing };

/// Static spatial partition of a point set: recursive median split on the
/// widest bounding-box dimension. Points are stored permuted so every node
/// owns a contiguous index range; per-node bounding boxes, centroids and
/// radii support half-space classification and local expansions.
///
/// Half-space membership at the leaves is decided by the same
/// left-to-right dot product used by the naive scan, so the set of
/// included points is bit-identical to the naive filter. Interior nodes
/// are only classified fully-inside/outside with a conservative rounding
/// slack; anything within the slack band recurses to the exact test.
class PartitionTree {
public:
    struct Node {
        std::size_t begin = 0, end = 0;  // permuted point range
        int left = -1, right = -1;       // -1: leaf
    };

    static constexpr std::size_t kLeafSize = 16;

    PartitionTree(const Matrix& points, std::size_t leaf_size = kLeafSize);

    std::size_t size() const { return n_; }
    std::size_t dim() const { return d_; }
    bool empty() const { return n_ == 0; }
    const std::vector<Node>& nodes() const { return nodes_; }
    std::size_t root() const { return 0; }

    /// Original index of the point stored at permuted position p.
    std::size_t original_index(std::size_t p) const { return perm_[p]; }
    std::span<const double> point(std::size_t p) const { return {pts_.data() + p * d_, d_}; }
    std::span<const double> centroid(std::size_t node) const {
        return {centroid_.data() + node * d_, d_};
    }
    double radius(std::size_t node) const { return radius_[node]; }
    std::size_t count(std::size_t node) const { return nodes_[node].end - nodes_[node].begin; }

    /// Classifies node vs {x : q . x >= tau}. Conservative: answers
    /// kInside/kOutside only when every point of the node provably passes
    /// or fails the exact per-point test.
    Region classify(std::size_t node, std::span<const double> q, double tau) const;

    /// Exact membership count for {x : q . x >= tau}.
    std::size_t halfspace_count(std::span<const double> q, double tau) const;

    /// Canonical decomposition: maximal fully-inside nodes plus the
    /// permuted positions of boundary points that pass the exact test.
    void decompose(std::span<const double> q, double tau, std::vector<std::size_t>& inside_nodes,
                   std::vector<std::size_t>& loose_points) const;

private:
    void build(std::size_t node, std::size_t begin, std::size_t end, std::size_t leaf_size);
    void finalize_node(std::size_t node);

    std::size_t n_ = 0, d_ = 0;
    std::vector<Node> nodes_;
    std::vector<std::size_t> perm_;
    std::vector<double> pts_;      // permuted, row-major
    std::vector<double> bb_lo_, bb_hi_, centroid_;
    std::vector<double> radius_;
};

inline double dot_plain(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace attn::detail
