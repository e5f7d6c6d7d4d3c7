#include "attn/attn1d.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "attn/detail/parallel.hpp"
#include "attn/exppoly.hpp"

namespace attn {

PhiTables::PhiTables(std::span<const double> k_sorted_desc, std::span<const double> v_sorted,
                     std::size_t degree)
    : degree_(degree), n_(k_sorted_desc.size()) {
    if (v_sorted.size() != n_) throw std::invalid_argument("build_phi_tables: length mismatch");
    for (std::size_t j = 0; j + 1 < n_; ++j)
        if (k_sorted_desc[j] < k_sorted_desc[j + 1])
            throw std::invalid_argument("build_phi_tables: keys not sorted descending");
    pow_pref_.assign((degree_ + 1) * (n_ + 1), 0.0);
    powv_pref_.assign((degree_ + 1) * (n_ + 1), 0.0);
    std::vector<double> kp(n_, 1.0);  // running k^b column
    for (std::size_t b = 0; b <= degree_; ++b) {
        double* pp = pow_pref_.data() + b * (n_ + 1);
        double* pv = powv_pref_.data() + b * (n_ + 1);
        for (std::size_t j = 0; j < n_; ++j) {
            if (b > 0) kp[j] *= k_sorted_desc[j];
            pp[j + 1] = pp[j] + kp[j];
            pv[j + 1] = pv[j] + kp[j] * v_sorted[j];
        }
    }
}

namespace {

constexpr double kUlp = std::numeric_limits<double>::epsilon();

void validate_vectors(std::span<const double> q, std::span<const double> k,
                      std::span<const double> v, const AttnParams& params) {
    if (q.size() != k.size() || q.size() != v.size())
        throw std::invalid_argument("attn1d: q, k, v length mismatch");
    if (q.empty()) throw std::invalid_argument("attn1d: n = 0");
    if (params.n != q.size() || params.d != 1)
        throw std::invalid_argument("attn1d: params do not match a d = 1 instance of this size");
    double bound = params.entry_bound * (1.0 + 1e-12) + 1e-300;
    for (std::size_t i = 0; i < q.size(); ++i)
        if (std::abs(q[i]) > bound || std::abs(k[i]) > bound || std::abs(v[i]) > bound)
            throw std::invalid_argument("attn1d: entry exceeds declared bound B");
}

struct Branch {
    std::vector<double> k_sorted;  // descending
    std::vector<double> v_sorted;
    std::vector<double> kappa;     // k_sorted - k_max (<= 0, descending)
    std::vector<double> prefix_v;  // plain v prefix sums, rounding path
};

Branch prepare_branch(std::span<const double> k, std::span<const double> v) {
    const std::size_t n = k.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return k[a] > k[b]; });
    Branch br;
    br.k_sorted.resize(n);
    br.v_sorted.resize(n);
    br.kappa.resize(n);
    br.prefix_v.assign(n + 1, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        br.k_sorted[j] = k[order[j]];
        br.v_sorted[j] = v[order[j]];
        br.kappa[j] = br.k_sorted[j] - k[order[0]];
        br.prefix_v[j + 1] = br.prefix_v[j] + br.v_sorted[j];
    }
    return br;
}

/// End of the relevant run: keys descending, q > 0, so fl(q * k_j) >= c
/// holds on a prefix; the predicate is the same multiplication the dense
/// oracle performs, which keeps the membership set bit-identical.
std::size_t window_end(const Branch& br, double q, double c) {
    auto it = std::partition_point(br.k_sorted.begin(), br.k_sorted.end(),
                                   [&](double x) { return q * x >= c; });
    return static_cast<std::size_t>(it - br.k_sorted.begin());
}

// C(l, b) packed triangularly: index l*(l+1)/2 + b
std::vector<double> pascal_table(std::size_t g) {
    std::vector<double> c((g + 1) * (g + 2) / 2);
    for (std::size_t l = 0; l <= g; ++l) {
        double* row = c.data() + l * (l + 1) / 2;
        const double* prev = c.data() + (l - 1) * l / 2;
        row[0] = 1.0;
        row[l] = 1.0;
        for (std::size_t b = 1; b < l; ++b) row[b] = prev[b - 1] + prev[b];
    }
    return c;
}

double mean(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

/// Softmax restricted to the relevant window with max subtraction; the
/// numerically exact per-row path used when the assembly's rounding
/// certificate rejects the prefix-sum route.
double direct_window_row(const Branch& br, double q, double m_row, std::size_t j_end) {
    double den = 0.0, num = 0.0;
    for (std::size_t j = 0; j < j_end; ++j) {
        double w = std::exp(q * br.k_sorted[j] - m_row);
        den += w;
        num += w * br.v_sorted[j];
    }
    return num / den;
}

struct PolyContext {
    std::optional<detail::CenteredExpPoly> poly;  // empty: direct summation only
    std::vector<double> binom;
    double window = 0.0;  // log(n / eps')
    double beta = 0.0;    // window - expansion center
};

PolyContext make_poly_context(std::size_t n, double eps_internal) {
    PolyContext ctx;
    ctx.window = std::log(static_cast<double>(n) / eps_internal);
    double hi = std::max(ctx.window, 1e-9);
    ctx.poly = detail::build_centered_exp_poly(0.0, hi, eps_internal);
    if (ctx.poly) {
        ctx.beta = ctx.window - ctx.poly->center;
        ctx.binom = pascal_table(ctx.poly->degree());
    }
    return ctx;
}

}  // namespace

namespace detail1d {

std::vector<double> positive_vector_attention(std::span<const double> q, std::span<const double> k,
                                              std::span<const double> v, const AttnParams& params,
                                              std::vector<Row1dDebug>* debug) {
    validate_vectors(q, k, v, params);
    const std::size_t n = q.size();
    for (double qi : q)
        if (qi < 0.0)
            throw std::invalid_argument("positive_vector_attention: negative q entry");

    const double eps_i = params.eps_internal;
    std::vector<double> out(n);
    if (debug) debug->assign(n, Row1dDebug{});
    if (n == 1) {
        out[0] = v[0];
        if (debug) (*debug)[0] = Row1dDebug{RelevanceWindow{0.0, 0, 1}, q[0] > 0.0 ? 1 : 0, false};
        return out;
    }

    PolyContext ctx = make_poly_context(n, eps_i);
    const std::size_t g = ctx.poly ? ctx.poly->degree() : 0;
    Branch br = prepare_branch(k, v);
    PhiTables tables(br.kappa, br.v_sorted, g);
    const double v_mean = mean(v);

    detail::parallel_for(n, [&](std::size_t i) {
        double qi = q[i];
        if (qi == 0.0) {
            out[i] = v_mean;
            if (debug) (*debug)[i] = Row1dDebug{RelevanceWindow{-ctx.window, 0, n}, 0, false};
            return;
        }
        double m_row = qi * br.k_sorted[0];
        double c = m_row - ctx.window;
        std::size_t j_end = window_end(br, qi, c);

        if (!ctx.poly) {
            // window too deep to certify a polynomial in doubles
            out[i] = direct_window_row(br, qi, m_row, j_end);
            if (debug) (*debug)[i] = Row1dDebug{RelevanceWindow{c, 0, j_end}, 1, true};
            return;
        }

        // y_j = q kappa_j + beta, with P(x) = sum coeffs[l] (x - center)^l
        thread_local std::vector<double> qp, bp;
        qp.assign(g + 1, 1.0);
        bp.assign(g + 1, 1.0);
        for (std::size_t b = 1; b <= g; ++b) {
            qp[b] = qp[b - 1] * qi;
            bp[b] = bp[b - 1] * ctx.beta;
        }
        // den_env accumulates the same sums with every term replaced by
        // its magnitude: kappa <= 0 makes |kappa|^b = (-1)^b kappa^b, so
        // the envelope reads off the same prefix tables. u * 2(g+1) *
        // den_env bounds the rounding noise of the whole assembly.
        double den = 0.0, num = 0.0, den_env = 0.0;
        for (std::size_t l = 0; l <= g; ++l) {
            const double* crow = ctx.binom.data() + l * (l + 1) / 2;
            double f1 = 0.0, fv = 0.0, fa = 0.0;
            for (std::size_t b = 0; b <= l; ++b) {
                double w = crow[b] * qp[b] * bp[l - b];
                double phi_b = tables.phi(b, j_end);
                f1 += w * phi_b;
                fv += w * tables.phi_v(b, j_end);
                fa += w * ((b & 1) ? -phi_b : phi_b);
            }
            den += ctx.poly->coeffs[l] * f1;
            num += ctx.poly->coeffs[l] * fv;
            den_env += ctx.poly->abs_coeffs[l] * fa;
        }
        double noise = kUlp * 2.0 * static_cast<double>(g + 1) * den_env;
        bool bad = !std::isfinite(den) || !std::isfinite(num) || !(den > 0.0) ||
                   !std::isfinite(noise) || noise > 0.1 * eps_i * den;
        if (bad) out[i] = direct_window_row(br, qi, m_row, j_end);
        else out[i] = num / den;
        if (debug) (*debug)[i] = Row1dDebug{RelevanceWindow{c, 0, j_end}, 1, bad};
    });
    return out;
}

}  // namespace detail1d

namespace {

/// Shared sign-splitting driver: rows with q_i >= 0 are read from the
/// (|q|, k) call and rows with q_i < 0 from the (|q|, -k) call.
template <typename Core>
std::vector<double> sign_split(std::span<const double> q, std::span<const double> k,
                               std::span<const double> v, const AttnParams& params,
                               std::vector<Row1dDebug>* debug, Core core) {
    validate_vectors(q, k, v, params);
    const std::size_t n = q.size();
    bool has_pos = false, has_neg = false;
    for (double qi : q) {
        has_pos |= qi >= 0.0;
        has_neg |= qi < 0.0;
    }
    std::vector<double> q_abs(q.begin(), q.end());
    for (double& x : q_abs) x = std::abs(x);

    std::vector<double> out(n);
    std::vector<Row1dDebug> dbg_pos, dbg_neg;
    std::vector<double> pos, neg;
    if (has_pos) pos = core(q_abs, k, v, debug ? &dbg_pos : nullptr);
    if (has_neg) {
        std::vector<double> k_neg(k.begin(), k.end());
        for (double& x : k_neg) x = -x;
        neg = core(q_abs, k_neg, v, debug ? &dbg_neg : nullptr);
    }
    if (debug) debug->assign(n, Row1dDebug{});
    for (std::size_t i = 0; i < n; ++i) {
        if (q[i] >= 0.0) {
            out[i] = pos[i];
            if (debug) (*debug)[i] = dbg_pos[i];
        } else {
            out[i] = neg[i];
            if (debug) {
                (*debug)[i] = dbg_neg[i];
                if (dbg_neg[i].sign != 0) (*debug)[i].sign = -1;
            }
        }
    }
    return out;
}

std::vector<double> positive_rounding_attention(std::span<const double> q,
                                                std::span<const double> k,
                                                std::span<const double> v,
                                                const AttnParams& params,
                                                std::vector<Row1dDebug>* debug) {
    const std::size_t n = q.size();
    const double eps_i = params.eps_internal;
    std::vector<double> out(n);
    if (debug) debug->assign(n, Row1dDebug{});
    if (n == 1) {
        out[0] = v[0];
        if (debug) (*debug)[0] = Row1dDebug{RelevanceWindow{0.0, 0, 1}, q[0] > 0.0 ? 1 : 0, false};
        return out;
    }
    const double window = std::log(static_cast<double>(n) / eps_i);
    const double bucket_w = std::log1p(eps_i);
    Branch br = prepare_branch(k, v);
    const double v_mean = mean(v);

    detail::parallel_for(n, [&](std::size_t i) {
        double qi = q[i];
        if (qi == 0.0) {
            out[i] = v_mean;
            if (debug) (*debug)[i] = Row1dDebug{RelevanceWindow{-window, 0, n}, 0, false};
            return;
        }
        double m_row = qi * br.k_sorted[0];
        double c = m_row - window;
        std::size_t j_end = window_end(br, qi, c);
        double den = 0.0, num = 0.0;
        std::size_t idx = 0;
        while (idx < j_end) {
            double score = qi * br.k_sorted[idx];
            double t = std::floor((m_row - score) / bucket_w);
            if (t < 0.0) t = 0.0;
            double lower = m_row - (t + 1.0) * bucket_w;  // bucket holds scores > lower
            auto it = std::partition_point(br.k_sorted.begin() + idx, br.k_sorted.begin() + j_end,
                                           [&](double x) { return qi * x > lower; });
            std::size_t end = static_cast<std::size_t>(it - br.k_sorted.begin());
            if (end == idx) end = idx + 1;  // safety against FP boundary stalls
            double rep = std::exp(-t * bucket_w);  // rounded-up representative weight
            den += rep * static_cast<double>(end - idx);
            num += rep * (br.prefix_v[end] - br.prefix_v[idx]);
            idx = end;
        }
        out[i] = num / den;
        if (debug) (*debug)[i] = Row1dDebug{RelevanceWindow{c, 0, j_end}, 1, false};
    });
    return out;
}

}  // namespace

std::vector<double> vector_attention(std::span<const double> q, std::span<const double> k,
                                     std::span<const double> v, const AttnParams& params,
                                     std::vector<Row1dDebug>* debug) {
    return sign_split(q, k, v, params, debug,
                      [&](std::span<const double> qq, std::span<const double> kk,
                          std::span<const double> vv, std::vector<Row1dDebug>* dbg) {
                          return detail1d::positive_vector_attention(qq, kk, vv, params, dbg);
                      });
}

std::vector<double> rounding_attention_1d(std::span<const double> q, std::span<const double> k,
                                          std::span<const double> v, const AttnParams& params,
                                          std::vector<Row1dDebug>* debug) {
    return sign_split(q, k, v, params, debug,
                      [&](std::span<const double> qq, std::span<const double> kk,
                          std::span<const double> vv, std::vector<Row1dDebug>* dbg) {
                          return positive_rounding_attention(qq, kk, vv, params, dbg);
                      });
}

}  // namespace attn
