#include "attn/detail/partition_tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace attn::detail {

PartitionTree::PartitionTree(const Matrix& points, std::size_t leaf_size)
    : n_(points.rows()), d_(points.cols()) {
    if (n_ == 0) return;
    perm_.resize(n_);
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    pts_.resize(n_ * d_);
    for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t j = 0; j < d_; ++j) pts_[i * d_ + j] = points(i, j);
    nodes_.reserve(2 * (n_ / std::max<std::size_t>(leaf_size, 1) + 2));
    nodes_.push_back(Node{});
    build(0, 0, n_, std::max<std::size_t>(leaf_size, 1));
}

void PartitionTree::build(std::size_t node, std::size_t begin, std::size_t end,
                          std::size_t leaf_size) {
    nodes_[node].begin = begin;
    nodes_[node].end = end;
    if (end - begin > leaf_size) {
        // widest dimension of the current range
        std::size_t split_dim = 0;
        double best_spread = -1.0;
        for (std::size_t jd = 0; jd < d_; ++jd) {
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (std::size_t p = begin; p < end; ++p) {
                double v = pts_[p * d_ + jd];
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            if (hi - lo > best_spread) {
                best_spread = hi - lo;
                split_dim = jd;
            }
        }
        std::size_t mid = begin + (end - begin) / 2;
        // index-sorted nth_element over the coupled (perm, pts) rows
        std::vector<std::size_t> order(end - begin);
        std::iota(order.begin(), order.end(), begin);
        std::nth_element(order.begin(), order.begin() + (mid - begin), order.end(),
                         [&](std::size_t a, std::size_t b) {
                             return pts_[a * d_ + split_dim] < pts_[b * d_ + split_dim];
                         });
        // apply permutation to this range
        std::vector<std::size_t> perm_tmp(end - begin);
        std::vector<double> pts_tmp((end - begin) * d_);
        for (std::size_t t = 0; t < order.size(); ++t) {
            perm_tmp[t] = perm_[order[t]];
            for (std::size_t jd = 0; jd < d_; ++jd)
                pts_tmp[t * d_ + jd] = pts_[order[t] * d_ + jd];
        }
        std::copy(perm_tmp.begin(), perm_tmp.end(), perm_.begin() + begin);
        std::copy(pts_tmp.begin(), pts_tmp.end(), pts_.begin() + begin * d_);

        int li = static_cast<int>(nodes_.size());
        nodes_.push_back(Node{});
        nodes_[node].left = li;
        build(li, begin, mid, leaf_size);
        int ri = static_cast<int>(nodes_.size());
        nodes_.push_back(Node{});
        nodes_[node].right = ri;
        build(ri, mid, end, leaf_size);
    }
    finalize_node(node);
}

void PartitionTree::finalize_node(std::size_t node) {
    if (bb_lo_.size() < nodes_.size() * d_) {
        bb_lo_.resize(nodes_.capacity() * d_, 0.0);
        bb_hi_.resize(nodes_.capacity() * d_, 0.0);
        centroid_.resize(nodes_.capacity() * d_, 0.0);
        radius_.resize(nodes_.capacity(), 0.0);
    }
    const Node& nd = nodes_[node];
    for (std::size_t jd = 0; jd < d_; ++jd) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0.0;
        for (std::size_t p = nd.begin; p < nd.end; ++p) {
            double v = pts_[p * d_ + jd];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            sum += v;
        }
        bb_lo_[node * d_ + jd] = lo;
        bb_hi_[node * d_ + jd] = hi;
        centroid_[node * d_ + jd] = sum / static_cast<double>(nd.end - nd.begin);
    }
    double r2 = 0.0;
    for (std::size_t p = nd.begin; p < nd.end; ++p) {
        double acc = 0.0;
        for (std::size_t jd = 0; jd < d_; ++jd) {
            double diff = pts_[p * d_ + jd] - centroid_[node * d_ + jd];
            acc += diff * diff;
        }
        r2 = std::max(r2, acc);
    }
    radius_[node] = std::sqrt(r2);
}

Region PartitionTree::classify(std::size_t node, std::span<const double> q, double tau) const {
    double lo = 0.0, hi = 0.0, mag = 0.0;
    for (std::size_t jd = 0; jd < d_; ++jd) {
        double a = q[jd] * bb_lo_[node * d_ + jd];
        double b = q[jd] * bb_hi_[node * d_ + jd];
        lo += std::min(a, b);
        hi += std::max(a, b);
        mag += std::max(std::abs(a), std::abs(b));
    }
    // rounding slack keeps interior decisions consistent with the exact
    // per-point test; the band in between recurses
    double slack = 32.0 * std::numeric_limits<double>::epsilon() *
                   static_cast<double>(d_ + 1) * (mag + std::abs(tau));
    if (lo >= tau + slack) return Region::kInside;
    if (hi < tau - slack) return Region::kOutside;
    return Region::kCrossing;
}

std::size_t PartitionTree::halfspace_count(std::span<const double> q, double tau) const {
    if (empty()) return 0;
    std::size_t total = 0;
    std::vector<std::size_t> stack{root()};
    while (!stack.empty()) {
        std::size_t node = stack.back();
        stack.pop_back();
        Region r = classify(node, q, tau);
        if (r == Region::kOutside) continue;
        if (r == Region::kInside) {
            total += count(node);
            continue;
        }
        const Node& nd = nodes_[node];
        if (nd.left < 0) {
            for (std::size_t p = nd.begin; p < nd.end; ++p)
                if (dot_plain(q, point(p)) >= tau) ++total;
        } else {
            stack.push_back(static_cast<std::size_t>(nd.left));
            stack.push_back(static_cast<std::size_t>(nd.right));
        }
    }
    return total;
}

void PartitionTree::decompose(std::span<const double> q, double tau,
                              std::vector<std::size_t>& inside_nodes,
                              std::vector<std::size_t>& loose_points) const {
    inside_nodes.clear();
    loose_points.clear();
    if (empty()) return;
    std::vector<std::size_t> stack{root()};
    while (!stack.empty()) {
        std::size_t node = stack.back();
        stack.pop_back();
        Region r = classify(node, q, tau);
        if (r == Region::kOutside) continue;
        if (r == Region::kInside) {
            inside_nodes.push_back(node);
            continue;
        }
        const Node& nd = nodes_[node];
        if (nd.left < 0) {
            for (std::size_t p = nd.begin; p < nd.end; ++p)
                if (dot_plain(q, point(p)) >= tau) loose_points.push_back(p);
        } else {
            stack.push_back(static_cast<std::size_t>(nd.left));
            stack.push_back(static_cast<std::size_t>(nd.right));
        }
    }
}

}  // namespace attn::detail
