#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace attn {

/// Polynomial approximation of exp on [lo, hi] with certified relative
/// error: |eval(x) - exp(x)| <= eps_rel * exp(x) for all x on a dense
/// certification grid. Coefficients are stored in the monomial basis,
/// ascending degree, because the attention algorithms expand monomials
/// binomially against precomputed key-power sums.
class ExpPoly {
public:
    double lo() const { return lo_; }
    double hi() const { return hi_; }
    double eps_rel() const { return eps_rel_; }
    std::size_t degree() const { return coeffs_.size() - 1; }

    /// m_0..m_g, ascending degree.
    const std::vector<double>& monomial_coeffs() const { return coeffs_; }

    /// Horner evaluation. Outside [lo, hi] the error contract is void but
    /// the polynomial value is still returned.
    double eval(double x) const {
        double acc = 0.0;
        for (std::size_t i = coeffs_.size(); i-- > 0;) acc = acc * x + coeffs_[i];
        return acc;
    }

private:
    friend ExpPoly build_exp_poly(double, double, double);
    ExpPoly(std::vector<double> coeffs, double lo, double hi, double eps_rel)
        : coeffs_(std::move(coeffs)), lo_(lo), hi_(hi), eps_rel_(eps_rel) {}

    std::vector<double> coeffs_;
    double lo_, hi_, eps_rel_;
};

/// Chebyshev interpolation of exp on [lo, hi] with adaptive degree; the
/// result is converted to the monomial basis and certified on a 10^4-point
/// uniform grid before being returned. Throws if eps_rel is outside
/// (0, 0.1) or if no degree up to 256 certifies.
///
/// The certified degree stays within C * max(log(1/eps)/max(1,
/// log(log(1/eps)/(hi-lo))), hi-lo) + C for C = 16 (checked at build).
ExpPoly build_exp_poly(double lo, double hi, double eps_rel);

/// Coefficients of P(y + center) given coefficients of P(y), ascending
/// degree (synthetic-division Taylor shift).
std::vector<double> taylor_shift(std::span<const double> coeffs, double center);

namespace detail {

/// Approximation of exp on [lo, hi] in powers of (x - center) with
/// center = (lo + hi)/2. The centered basis keeps the coefficient norm
/// near exp(center) instead of exp(hi), which is what the attention
/// assemblies need for their rounding certificates.
struct CenteredExpPoly {
    double lo = 0.0, hi = 0.0, center = 0.0, eps_rel = 0.0;
    std::vector<double> coeffs;      // of P(center + y), ascending in y
    std::vector<double> abs_coeffs;  // rounding-noise envelope

    std::size_t degree() const { return coeffs.size() - 1; }
    double eval(double x) const {
        double y = x - center, acc = 0.0;
        for (std::size_t i = coeffs.size(); i-- > 0;) acc = acc * y + coeffs[i];
        return acc;
    }
};

/// Returns an empty optional instead of throwing when double precision
/// cannot certify the relative budget on [lo, hi] (wide window with a
/// tight budget): callers fall back to direct exponential summation.
std::optional<CenteredExpPoly> build_centered_exp_poly(double lo, double hi, double eps_rel);

}  // namespace detail

}  // namespace attn
