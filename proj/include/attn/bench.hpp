#pragma once

#include <chrono>
#include <cstddef>
#include <vector>

namespace attn {

class Timer {
public:
    Timer() : t0_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    }

private:
    std::chrono::steady_clock::time_point t0_;
};

/// Least-squares slope of log(time) against log(n): the empirical runtime
/// scaling exponent.
double fit_loglog_exponent(const std::vector<double>& ns, const std::vector<double>& times);

}  // namespace attn
