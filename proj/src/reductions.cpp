#include "attn/reductions.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "attn/rng.hpp"

namespace attn {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

bool is_integer(double v) { return v == std::floor(v); }

}  // namespace

VectorSet::VectorSet(Matrix m, EntryKind k, double bound)
    : vectors(std::move(m)), kind(k), entry_bound(bound) {
    require(vectors.rows() > 0 && vectors.cols() > 0, "VectorSet: empty");
    for (double v : vectors.data()) {
        if (kind == EntryKind::kBinary) {
            require(v == 0.0 || v == 1.0, "VectorSet: binary set holds a non-{0,1} entry");
        } else {
            require(is_integer(v) && std::abs(v) <= entry_bound,
                    "VectorSet: integer set holds a non-integer or out-of-bound entry");
        }
    }
}

std::vector<std::uint8_t> threshold_indicator(const Matrix& q, const Matrix& k,
                                              const std::vector<double>& c, double eps,
                                              const AttentionOracle& oracle) {
    const std::size_t n = q.rows(), d = q.cols();
    require(n > 0 && k.rows() == n && k.cols() == d, "threshold_indicator: shape mismatch");
    require(c.size() == n, "threshold_indicator: c length mismatch");
    require(eps > 0.0, "threshold_indicator: eps must be positive");
    for (double ci : c)
        require(ci > 0.0 && std::isfinite(std::log(ci)), "threshold_indicator: c_i must be > 0");

    // Q' = [ln c | Q; 0 | 0], K' = [1 | 0; 0 | K], V' = e_1 pattern:
    // output column 1 of row i approximates S_i / (c_i + S_i).
    Matrix qa(n + 1, d + 1), ka(n + 1, d + 1), va(n + 1, d + 1);
    for (std::size_t i = 0; i < n; ++i) {
        qa(i, 0) = std::log(c[i]);
        for (std::size_t j = 0; j < d; ++j) qa(i, j + 1) = q(i, j);
    }
    ka(0, 0) = 1.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) ka(i + 1, j + 1) = k(i, j);
    for (std::size_t i = 1; i <= n; ++i) va(i, 0) = 1.0;

    Matrix out = oracle(qa, ka, va, eps / 100.0);
    std::vector<std::uint8_t> bits(n);
    for (std::size_t i = 0; i < n; ++i) bits[i] = out(i, 0) >= 0.5 ? 1 : 0;
    return bits;
}

RowSumEstimate estimate_row_sums(const Matrix& q, const Matrix& k, double eps,
                                 const AttentionOracle& oracle) {
    const std::size_t n = q.rows(), d = q.cols();
    require(n > 0 && k.rows() == n && k.cols() == d, "estimate_row_sums: shape mismatch");
    require(eps > 0.0 && eps <= 0.25, "estimate_row_sums: eps must lie in (0, 1/4]");

    const double step = std::log1p(eps);
    const double mag = static_cast<double>(d) * q.max_abs() * k.max_abs();
    const double ln_n = std::log(static_cast<double>(n));
    // S_i lies in [n exp(-mag), n exp(mag)]; every threshold level in the
    // bracket must stay a representable positive double
    if (mag + ln_n > 700.0 || mag - ln_n > 700.0)
        throw std::invalid_argument(
            "estimate_row_sums: |Q| |K| d is so large that row sums of exp(Q K^T) leave the "
            "double range; rescale the inputs");
    const long long f_lo = static_cast<long long>(std::floor((ln_n - mag) / step)) - 1;
    const long long f_hi = static_cast<long long>(std::ceil((ln_n + mag) / step)) + 1;

    // invariant: S_i > (1-eps)(1+eps)^{lo_i - 1} and S_i <= (1+eps)^{hi_i}
    std::vector<long long> lo(n, f_lo), hi(n, f_hi);
    std::vector<double> c(n);
    std::size_t rounds = 0;
    for (;;) {
        bool any = false;
        for (std::size_t i = 0; i < n; ++i) any |= hi[i] - lo[i] > 1;
        if (!any) break;
        for (std::size_t i = 0; i < n; ++i) {
            long long mid = hi[i] - lo[i] > 1 ? lo[i] + (hi[i] - lo[i]) / 2 : hi[i];
            c[i] = std::exp(static_cast<double>(mid - 1) * step);
        }
        std::vector<std::uint8_t> bits = threshold_indicator(q, k, c, eps, oracle);
        ++rounds;
        for (std::size_t i = 0; i < n; ++i) {
            if (hi[i] - lo[i] <= 1) continue;
            long long mid = lo[i] + (hi[i] - lo[i]) / 2;
            (bits[i] ? lo[i] : hi[i]) = mid;
        }
    }
    RowSumEstimate est;
    est.eps = eps;
    est.rounds_used = rounds;
    est.estimates.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        est.estimates[i] = std::exp(static_cast<double>(hi[i]) * step);
    return est;
}

MaxIpResult max_ip(const VectorSet& a, const VectorSet& b, const AttentionOracle& oracle) {
    require(a.size() == b.size(), "max_ip: set sizes differ");
    require(a.dim() == b.dim(), "max_ip: dimensions differ");
    const std::size_t n = a.size();
    require(n >= 2, "max_ip: n >= 2 required (log_n undefined at n = 1)");

    const double reduction_eps = 0.1;
    const double ln_n = std::log(static_cast<double>(n));
    // smallest integer C with 0.5 C > 1 + log_n(1+eps) and -0.5 C < log_n(1-eps)
    long long cc = 1;
    for (;;) {
        double half = 0.5 * static_cast<double>(cc);
        if (half > 1.0 + std::log1p(reduction_eps) / ln_n &&
            -half < std::log1p(-reduction_eps) / ln_n)
            break;
        ++cc;
    }
    const double scale = ln_n * static_cast<double>(cc);

    Matrix k = b.vectors;
    for (double& v : k.data()) v *= scale;
    RowSumEstimate est = estimate_row_sums(a.vectors, k, reduction_eps, oracle);

    MaxIpResult res;
    res.per_row.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double m = std::floor(std::log(est.estimates[i]) / (ln_n * static_cast<double>(cc)) + 0.5);
        res.per_row[i] = static_cast<long long>(m);
    }
    res.global = *std::max_element(res.per_row.begin(), res.per_row.end());
    return res;
}

bool ov_large_entries(const VectorSet& a, const VectorSet& b, const AttentionOracle& oracle) {
    require(a.kind == EntryKind::kBinary && b.kind == EntryKind::kBinary,
            "ov_large_entries: binary sets required");
    require(a.size() == b.size() && a.dim() == b.dim(), "ov_large_entries: shape mismatch");
    const std::size_t n = a.size();

    const double c_margin = 0.5;
    const double k_scale = (1.0 - c_margin) / (2.0 * static_cast<double>(n) * (1.0 + c_margin));
    const double s = std::sqrt(std::abs(std::log(k_scale)));

    Matrix q = a.vectors;
    for (double& v : q.data()) v *= -s;
    Matrix k = b.vectors;
    for (double& v : k.data()) v *= s;

    RowSumEstimate est = estimate_row_sums(q, k, 0.25, oracle);
    for (double e : est.estimates)
        if (e >= 1.0 - c_margin) return true;
    return false;
}

bool ov_parity(const VectorSet& a, const VectorSet& b, const AttentionOracle& oracle,
               std::uint64_t seed, std::size_t rounds) {
    require(a.kind == EntryKind::kBinary && b.kind == EntryKind::kBinary,
            "ov_parity: binary sets required");
    require(a.size() == b.size() && a.dim() == b.dim(), "ov_parity: shape mismatch");
    const std::size_t n = a.size(), d = a.dim();
    const double n2d = static_cast<double>(n) * std::pow(2.0, static_cast<double>(d));
    require(n2d < 9.007199254740992e15, "ov_parity: n 2^d must stay below 2^53");
    if (rounds == 0)
        rounds = static_cast<std::size_t>(
            std::ceil(10.0 * std::log2(static_cast<double>(std::max<std::size_t>(n, 2)))));

    // the zero vector is orthogonal to everything
    for (std::size_t i = 0; i < n; ++i) {
        bool zero = true;
        for (std::size_t j = 0; j < d; ++j) zero &= a.vectors(i, j) == 0.0;
        if (zero) return true;
    }

    // scores must come out as log(2) * (a . b) so the row sums are the
    // integers sum_j 2^{a.b}; the log 2 factor goes on the key side only
    const double ln2 = std::log(2.0);
    const Matrix& q = a.vectors;

    // integer sums in [n, n 2^d]; recover exactly from estimates with
    // additive error below 1/2
    const double eps_round = std::min(0.25, 1.0 / (10.0 * n2d));

    Rng rng(seed);
    for (std::size_t r = 0; r < rounds; ++r) {
        Rng round_rng = rng.fork(r);
        Matrix k(n, d);
        std::size_t filled = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (round_rng.coin()) {
                for (std::size_t j = 0; j < d; ++j) k(filled, j) = b.vectors(i, j) * ln2;
                ++filled;
            }
        }
        for (; filled < n; ++filled)
            for (std::size_t j = 0; j < d; ++j) k(filled, j) = ln2;  // pad with 1_d

        RowSumEstimate est = estimate_row_sums(q, k, eps_round, oracle);
        for (double e : est.estimates) {
            long long s = std::llround(e);
            if (s % 2 != 0) return true;
        }
    }
    return false;
}

}  // namespace attn
