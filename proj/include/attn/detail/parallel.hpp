#pragma once

#include <cstddef>
#include <functional>

namespace attn {

/// Global worker-thread count used by the row-parallel loops.
/// 1 (default) runs everything inline; 0 means hardware concurrency.
void set_threads(unsigned n);
unsigned threads();

namespace detail {

/// Runs fn(i) for i in [0, n). Outputs must be index-disjoint; chunk
/// boundaries do not affect results because each row is independent.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace detail
}  // namespace attn
