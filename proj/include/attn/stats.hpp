#pragma once

#include <cstddef>

namespace attn {

/// Optional instrumentation filled by the approximation entry points.
struct RunStats {
    double prep_seconds = 0.0;   // sorting, index/table/polynomial builds
    double query_seconds = 0.0;  // per-row work
    int path = 0;                // 0 exact/none, 1 phi-expansion, 2 anchored-moment
    std::size_t fallback_rows = 0;
};

}  // namespace attn
