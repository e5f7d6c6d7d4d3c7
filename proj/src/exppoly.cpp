#include "attn/exppoly.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace attn {

namespace {

constexpr std::size_t kMaxDegree = 256;
constexpr std::size_t kGridPoints = 10000;
constexpr double kDegreeSlackConstant = 16.0;  // documented C in the degree bound

/// Chebyshev interpolant of exp on [lo, hi] at degree g, in long double.
/// centered = true returns coefficients in powers of (x - mid), otherwise
/// in raw powers of x. All accumulation happens in long double; only the
/// final coefficients are rounded.
std::vector<double> chebyshev_exp(double lo, double hi, std::size_t g, bool centered) {
    const std::size_t m = g + 1;
    const long double mid = 0.5L * (static_cast<long double>(lo) + hi);
    const long double half = 0.5L * (static_cast<long double>(hi) - lo);

    std::vector<long double> theta(m), fvals(m), cheb(m, 0.0L);
    for (std::size_t j = 0; j < m; ++j) {
        theta[j] = static_cast<long double>(M_PI) * (j + 0.5L) / m;
        fvals[j] = std::exp(mid + half * std::cos(theta[j]));
    }
    for (std::size_t kk = 0; kk < m; ++kk) {
        long double acc = 0.0L;
        for (std::size_t j = 0; j < m; ++j) acc += fvals[j] * std::cos(kk * theta[j]);
        cheb[kk] = acc * 2.0L / m;
    }
    cheb[0] *= 0.5L;

    // T_k recurrence carried in the target basis: with y the basis
    // variable, t(y) = (y - off) / half where off = mid (raw) or 0.
    const long double a = 1.0L / half;
    const long double b = centered ? 0.0L : -mid / half;
    std::vector<long double> prev{1.0L};
    std::vector<long double> cur{b, a};
    std::vector<long double> out(m, 0.0L);
    out[0] += cheb[0] * prev[0];
    if (g >= 1)
        for (std::size_t i = 0; i < cur.size(); ++i) out[i] += cheb[1] * cur[i];
    for (std::size_t kk = 2; kk <= g; ++kk) {
        std::vector<long double> next(kk + 1, 0.0L);
        for (std::size_t i = 0; i < cur.size(); ++i) {
            next[i + 1] += 2.0L * a * cur[i];
            if (b != 0.0L) next[i] += 2.0L * b * cur[i];
        }
        for (std::size_t i = 0; i < prev.size(); ++i) next[i] -= prev[i];
        for (std::size_t i = 0; i < next.size(); ++i) out[i] += cheb[kk] * next[i];
        prev.swap(cur);
        cur.swap(next);
    }
    std::vector<double> rounded(m);
    for (std::size_t i = 0; i < m; ++i) rounded[i] = static_cast<double>(out[i]);
    return rounded;
}

double horner(const std::vector<double>& c, double x) {
    double acc = 0.0;
    for (std::size_t i = c.size(); i-- > 0;) acc = acc * x + c[i];
    return acc;
}

/// Max relative deviation from std::exp over the uniform certification
/// grid, evaluating exactly the way downstream users will (double Horner
/// on the double coefficients, argument shifted by `center`).
double grid_relative_error(const std::vector<double>& coeffs, double lo, double hi,
                           double center) {
    double worst = 0.0;
    for (std::size_t i = 0; i <= kGridPoints; ++i) {
        double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(kGridPoints);
        double target = std::exp(x);
        double err = std::abs(horner(coeffs, x - center) - target) / target;
        if (!std::isfinite(err) || !std::isfinite(target))
            return std::numeric_limits<double>::infinity();
        worst = std::max(worst, err);
    }
    return worst;
}

std::size_t degree_estimate(double width, double eps_rel) {
    double li = std::log(1.0 / eps_rel);
    double denom = std::max(1.0, std::log(std::max(li / std::max(width, 1e-12), 1.0 + 1e-9)));
    double est = std::max(li / denom, width);
    return static_cast<std::size_t>(std::ceil(est)) + 1;
}

void validate_interval(double lo, double hi, double eps_rel) {
    if (!(eps_rel > 0.0) || !(eps_rel < 0.1))
        throw std::invalid_argument("build_exp_poly: eps_rel must lie in (0, 0.1)");
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
        throw std::invalid_argument("build_exp_poly: need finite lo < hi");
}

}  // namespace

ExpPoly build_exp_poly(double lo, double hi, double eps_rel) {
    validate_interval(lo, hi, eps_rel);
    const double width = hi - lo;
    std::size_t g = std::min(degree_estimate(width, eps_rel), kMaxDegree);
    std::size_t bound = static_cast<std::size_t>(
        kDegreeSlackConstant * static_cast<double>(degree_estimate(width, eps_rel)) +
        kDegreeSlackConstant);

    for (;;) {
        std::vector<double> coeffs = chebyshev_exp(lo, hi, g, /*centered=*/false);
        if (grid_relative_error(coeffs, lo, hi, 0.0) <= eps_rel) {
            if (g > bound)
                throw std::runtime_error("build_exp_poly: certified degree exceeds documented bound");
            return ExpPoly(std::move(coeffs), lo, hi, eps_rel);
        }
        if (g >= kMaxDegree)
            throw std::runtime_error(
                "build_exp_poly: cannot certify relative error " + std::to_string(eps_rel) +
                " on [" + std::to_string(lo) + ", " + std::to_string(hi) +
                "] at degree <= " + std::to_string(kMaxDegree));
        g = std::min(kMaxDegree, std::max(g + 4, g + g / 4));
    }
}

std::vector<double> taylor_shift(std::span<const double> coeffs, double center) {
    std::vector<double> c(coeffs.begin(), coeffs.end());
    if (c.empty()) return c;
    const std::size_t g = c.size() - 1;
    for (std::size_t k = 0; k < g; ++k)
        for (std::size_t j = g - 1; j + 1 > k; --j) c[j] += center * c[j + 1];
    return c;
}

namespace detail {

std::optional<CenteredExpPoly> build_centered_exp_poly(double lo, double hi, double eps_rel) {
    validate_interval(lo, hi, eps_rel);
    const double width = hi - lo, center = 0.5 * (lo + hi);
    std::size_t g = std::min(degree_estimate(width, eps_rel), kMaxDegree);
    for (;;) {
        std::vector<double> coeffs = chebyshev_exp(lo, hi, g, /*centered=*/true);
        if (grid_relative_error(coeffs, lo, hi, center) <= eps_rel) {
            CenteredExpPoly p;
            p.lo = lo;
            p.hi = hi;
            p.center = center;
            p.eps_rel = eps_rel;
            p.abs_coeffs.resize(coeffs.size());
            for (std::size_t i = 0; i < coeffs.size(); ++i) p.abs_coeffs[i] = std::abs(coeffs[i]);
            p.coeffs = std::move(coeffs);
            return p;
        }
        if (g >= kMaxDegree) return std::nullopt;
        g = std::min(kMaxDegree, std::max(g + 4, g + g / 4));
    }
}

}  // namespace detail

}  // namespace attn
