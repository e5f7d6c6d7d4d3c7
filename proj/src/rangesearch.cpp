#include "attn/rangesearch.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace attn {

namespace {

void check_build_args(const Matrix& points, std::span<const double> weights) {
    if (weights.size() != points.rows())
        throw std::invalid_argument("build_index: weights length != point count");
    if (points.rows() > 0 && points.cols() == 0)
        throw std::invalid_argument("build_index: points need d >= 1");
}

double weight_total(std::span<const double> w) {
    double s = 0.0;
    for (double v : w) s += v;
    return s;
}

}  // namespace

RangeIndex build_index(const Matrix& points, std::span<const double> weights, IndexEngine engine) {
    check_build_args(points, weights);
    if (engine == IndexEngine::kAuto)
        engine = points.cols() == 1 ? IndexEngine::kSorted : IndexEngine::kTree;
    if (engine == IndexEngine::kSorted && points.cols() != 1)
        throw std::invalid_argument("build_index: sorted engine requires d = 1");

    RangeIndex idx;
    idx.n_ = points.rows();
    idx.d_ = points.cols();
    idx.total_weight_ = weight_total(weights);
    idx.engine_ = engine;

    switch (engine) {
        case IndexEngine::kNaive: {
            idx.points_ = points;
            idx.weights_.assign(weights.begin(), weights.end());
            break;
        }
        case IndexEngine::kSorted: {
            std::vector<std::size_t> order(idx.n_);
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) { return points(a, 0) < points(b, 0); });
            idx.sorted_x_.resize(idx.n_);
            idx.prefix_.assign(idx.n_ + 1, 0.0);
            for (std::size_t i = 0; i < idx.n_; ++i) {
                idx.sorted_x_[i] = points(order[i], 0);
                idx.prefix_[i + 1] = idx.prefix_[i] + weights[order[i]];
            }
            break;
        }
        default: {  // kTree
            auto tree = std::make_shared<detail::PartitionTree>(points);
            return build_index_with_tree(std::move(tree), weights);
        }
    }
    return idx;
}

RangeIndex build_index_with_tree(std::shared_ptr<const detail::PartitionTree> tree,
                                 std::span<const double> weights) {
    if (!tree) throw std::invalid_argument("build_index_with_tree: null tree");
    if (weights.size() != tree->size())
        throw std::invalid_argument("build_index_with_tree: weights length != point count");
    RangeIndex idx;
    idx.engine_ = IndexEngine::kTree;
    idx.n_ = tree->size();
    idx.d_ = tree->dim();
    idx.total_weight_ = weight_total(weights);
    idx.tree_ = std::move(tree);
    // weights permuted into tree order; node sums bottom-up
    idx.weights_.resize(idx.n_);
    for (std::size_t p = 0; p < idx.n_; ++p)
        idx.weights_[p] = weights[idx.tree_->original_index(p)];
    const auto& nodes = idx.tree_->nodes();
    idx.node_sums_.assign(nodes.size(), 0.0);
    for (std::size_t v = nodes.size(); v-- > 0;) {
        if (nodes[v].left < 0) {
            double s = 0.0;
            for (std::size_t p = nodes[v].begin; p < nodes[v].end; ++p) s += idx.weights_[p];
            idx.node_sums_[v] = s;
        } else {
            idx.node_sums_[v] = idx.node_sums_[static_cast<std::size_t>(nodes[v].left)] +
                                idx.node_sums_[static_cast<std::size_t>(nodes[v].right)];
        }
    }
    return idx;
}

namespace {

void check_query(const RangeIndex& idx, const HalfSpace& h) {
    if (h.normal.size() != idx.dim() && idx.size() > 0)
        throw std::invalid_argument("halfspace query: normal dimension mismatch");
}

/// d = 1 membership: q * x >= tau. fl(q * x) is monotone in x for fixed q,
/// so the member set is a suffix (q > 0) or prefix (q < 0) of the
/// ascending order, found with the same multiply the naive scan performs.
std::pair<std::size_t, std::size_t> sorted_range(const std::vector<double>& xs, double q,
                                                 double tau) {
    if (q == 0.0) {
        return 0.0 >= tau ? std::make_pair(std::size_t{0}, xs.size())
                          : std::make_pair(xs.size(), xs.size());
    }
    if (q > 0.0) {
        auto it = std::partition_point(xs.begin(), xs.end(),
                                       [&](double x) { return !(q * x >= tau); });
        return {static_cast<std::size_t>(it - xs.begin()), xs.size()};
    }
    auto it = std::partition_point(xs.begin(), xs.end(), [&](double x) { return q * x >= tau; });
    return {std::size_t{0}, static_cast<std::size_t>(it - xs.begin())};
}

double tree_sum(const detail::PartitionTree& tree, const std::vector<double>& node_sums,
                const std::vector<double>& weights, const HalfSpace& h) {
    if (tree.empty()) return 0.0;
    double total = 0.0;
    std::vector<std::size_t> stack{tree.root()};
    const auto& nodes = tree.nodes();
    while (!stack.empty()) {
        std::size_t node = stack.back();
        stack.pop_back();
        switch (tree.classify(node, h.normal, h.threshold)) {
            case detail::Region::kOutside: break;
            case detail::Region::kInside: total += node_sums[node]; break;
            case detail::Region::kCrossing: {
                const auto& nd = nodes[node];
                if (nd.left < 0) {
                    for (std::size_t p = nd.begin; p < nd.end; ++p)
                        if (detail::dot_plain(h.normal, tree.point(p)) >= h.threshold)
                            total += weights[p];
                } else {
                    stack.push_back(static_cast<std::size_t>(nd.left));
                    stack.push_back(static_cast<std::size_t>(nd.right));
                }
                break;
            }
        }
    }
    return total;
}

}  // namespace

double halfspace_sum(const RangeIndex& idx, const HalfSpace& h) {
    check_query(idx, h);
    if (idx.size() == 0) return 0.0;
    switch (idx.engine()) {
        case IndexEngine::kNaive: {
            double s = 0.0;
            for (std::size_t j = 0; j < idx.size(); ++j)
                if (detail::dot_plain(h.normal, idx.points_.row(j)) >= h.threshold)
                    s += idx.weights_[j];
            return s;
        }
        case IndexEngine::kSorted: {
            auto [b, e] = sorted_range(idx.sorted_x_, h.normal[0], h.threshold);
            return idx.prefix_[e] - idx.prefix_[b];
        }
        default: return tree_sum(*idx.tree_, idx.node_sums_, idx.weights_, h);
    }
}

std::size_t halfspace_count(const RangeIndex& idx, const HalfSpace& h) {
    check_query(idx, h);
    if (idx.size() == 0) return 0;
    switch (idx.engine()) {
        case IndexEngine::kNaive: {
            std::size_t c = 0;
            for (std::size_t j = 0; j < idx.size(); ++j)
                if (detail::dot_plain(h.normal, idx.points_.row(j)) >= h.threshold) ++c;
            return c;
        }
        case IndexEngine::kSorted: {
            auto [b, e] = sorted_range(idx.sorted_x_, h.normal[0], h.threshold);
            return e - b;
        }
        default: return idx.tree_->halfspace_count(h.normal, h.threshold);
    }
}

long long max_projection_level(const RangeIndex& idx, std::span<const double> q, double step,
                               long long s_lo, long long s_hi) {
    if (idx.size() == 0) throw std::invalid_argument("max_projection_level: empty index");
    if (!(step > 0.0)) throw std::invalid_argument("max_projection_level: step must be > 0");
    if (s_lo > s_hi) throw std::invalid_argument("max_projection_level: s_lo > s_hi");
    auto nonempty = [&](long long s) {
        HalfSpace h{std::vector<double>(q.begin(), q.end()), static_cast<double>(s) * step};
        return halfspace_count(idx, h) > 0;
    };
    if (!nonempty(s_lo)) return s_lo - 1;
    if (nonempty(s_hi)) return s_hi;
    long long lo = s_lo, hi = s_hi;  // invariant: nonempty(lo), empty(hi)
    while (hi - lo > 1) {
        long long mid = lo + (hi - lo) / 2;
        (nonempty(mid) ? lo : hi) = mid;
    }
    return lo;
}

}  // namespace attn
