#include "attn/bench.hpp"

#include <cmath>
#include <stdexcept>

namespace attn {

double fit_loglog_exponent(const std::vector<double>& ns, const std::vector<double>& times) {
    if (ns.size() != times.size() || ns.size() < 2)
        throw std::invalid_argument("fit_loglog_exponent: need >= 2 matched samples");
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const double m = static_cast<double>(ns.size());
    for (std::size_t i = 0; i < ns.size(); ++i) {
        double x = std::log(ns[i]);
        double y = std::log(std::max(times[i], 1e-9));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

}  // namespace attn
