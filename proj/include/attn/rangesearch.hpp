#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "attn/detail/partition_tree.hpp"
#include "attn/matrix.hpp"

namespace attn {

/// Query region {x : normal . x >= threshold}. Points whose dot product
/// equals the threshold exactly are included.
struct HalfSpace {
    std::vector<double> normal;
    double threshold = 0.0;
};

enum class IndexEngine {
    kAuto,    // sorted prefix sums for d = 1, partition tree otherwise
    kTree,    // partition tree
    kSorted,  // d = 1 only: sorted projections + prefix sums
    kNaive,   // linear scan reference engine
};

/// Immutable weighted point-set index answering exact half-space weight
/// sums. The membership set always equals the naive filter
/// {j : points_j . normal >= threshold}; only the summation order differs
/// between engines.
class RangeIndex {
public:
    std::size_t size() const { return n_; }
    std::size_t dim() const { return d_; }
    double total_weight() const { return total_weight_; }
    IndexEngine engine() const { return engine_; }
    const std::shared_ptr<const detail::PartitionTree>& tree() const { return tree_; }

private:
    friend RangeIndex build_index(const Matrix&, std::span<const double>, IndexEngine);
    friend RangeIndex build_index_with_tree(std::shared_ptr<const detail::PartitionTree>,
                                            std::span<const double>);
    friend double halfspace_sum(const RangeIndex&, const HalfSpace&);
    friend std::size_t halfspace_count(const RangeIndex&, const HalfSpace&);
    friend long long max_projection_level(const RangeIndex&, std::span<const double>, double,
                                          long long, long long);

    IndexEngine engine_ = IndexEngine::kNaive;
    std::size_t n_ = 0, d_ = 0;
    double total_weight_ = 0.0;

    Matrix points_;                       // naive engine
    std::vector<double> weights_;         // original order (naive), permuted (tree)
    std::shared_ptr<const detail::PartitionTree> tree_;
    std::vector<double> node_sums_;       // tree engine, indexed by node

    std::vector<double> sorted_x_;        // sorted engine (ascending)
    std::vector<double> prefix_;          // prefix_[i] = sum of weights of first i sorted points
    std::vector<std::size_t> sorted_count_;  // implicit: i points
};

/// Builds an index over points (n x d) with one weight per point.
RangeIndex build_index(const Matrix& points, std::span<const double> weights,
                       IndexEngine engine = IndexEngine::kAuto);

/// Builds a tree-engine index sharing an existing partition tree (the
/// attention modules attach many weight assignments to one point set).
RangeIndex build_index_with_tree(std::shared_ptr<const detail::PartitionTree> tree,
                                 std::span<const double> weights);

/// Sum of weights over {j : points_j . normal >= threshold}.
double halfspace_sum(const RangeIndex& idx, const HalfSpace& h);

/// Number of points in the half-space (weight-independent).
std::size_t halfspace_count(const RangeIndex& idx, const HalfSpace& h);

/// Largest integer s in [s_lo, s_hi] such that {x : q . x >= s * step}
/// contains at least one point; s_lo - 1 if even s_lo's half-space is
/// empty. Binary search over levels; throws on an empty index or step <= 0.
long long max_projection_level(const RangeIndex& idx, std::span<const double> q, double step,
                               long long s_lo, long long s_hi);

}  // namespace attn
