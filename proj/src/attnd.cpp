#include "attn/attnd.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "attn/attn1d.hpp"
#include "attn/detail/parallel.hpp"
#include "attn/factor.hpp"

namespace attn {

namespace {

constexpr double kUlp = std::numeric_limits<double>::epsilon();
constexpr std::size_t kMaxHeadDim = 8;
constexpr double kMaxPhiTuples = 2.0e6;  // refuse to enumerate beyond this

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Anchored-expansion order and admissible projected radius, by head
/// dimension. Wider tuples get expensive fast, so higher d trades a
/// smaller validity radius for a lower order; the Taylor remainder
/// e^{2h} h^{m+1}/(m+1)! stays below 1e-10 for every row.
std::pair<std::size_t, double> local_expansion_params(std::size_t d) {
    if (d <= 3) return {16, 1.0};
    if (d == 4) return {12, 0.75};
    if (d <= 6) return {10, 0.5};
    return {8, 0.25};
}

// ---- multi-index tuples -----------------------------------------------------

void enumerate_tuples(std::size_t d, std::size_t budget, std::vector<int>& scratch,
                      std::vector<int>& out) {
    if (scratch.size() == d) {
        out.insert(out.end(), scratch.begin(), scratch.end());
        return;
    }
    for (std::size_t v = 0; v <= budget; ++v) {
        scratch.push_back(static_cast<int>(v));
        enumerate_tuples(d, budget - v, scratch, out);
        scratch.pop_back();
    }
}

std::vector<int> all_tuples(std::size_t d, std::size_t degree) {
    std::vector<int> out, scratch;
    out.reserve(16);
    enumerate_tuples(d, degree, scratch, out);
    return out;
}

double tuple_count_estimate(std::size_t d, std::size_t degree) {
    // C(degree + d, d)
    double c = 1.0;
    for (std::size_t i = 1; i <= d; ++i)
        c *= static_cast<double>(degree + i) / static_cast<double>(i);
    return c;
}

// ---- factorial helpers ------------------------------------------------------

const std::vector<double>& factorial_table() {
    static const std::vector<double> table = [] {
        std::vector<double> t(171);
        t[0] = 1.0;
        for (std::size_t i = 1; i < t.size(); ++i) t[i] = t[i - 1] * static_cast<double>(i);
        return t;
    }();
    return table;
}

double choose(std::size_t n, std::size_t k) {
    const auto& f = factorial_table();
    if (n < f.size()) return f[n] / (f[k] * f[n - k]);
    return std::exp(std::lgamma(static_cast<double>(n) + 1.0) -
                    std::lgamma(static_cast<double>(k) + 1.0) -
                    std::lgamma(static_cast<double>(n - k) + 1.0));
}

double multinomial_of(std::span<const int> parts) {
    std::size_t s = 0;
    for (int p : parts) s += static_cast<std::size_t>(p);
    const auto& f = factorial_table();
    if (s < f.size()) {
        double denom = 1.0;
        for (int p : parts) denom *= f[static_cast<std::size_t>(p)];
        return f[s] / denom;
    }
    double acc = std::lgamma(static_cast<double>(s) + 1.0);
    for (int p : parts) acc -= std::lgamma(static_cast<double>(p) + 1.0);
    return std::exp(acc);
}

// ---- assembly plan ----------------------------------------------------------

/// The per-instance constants of the multinomial assembly: the polynomial
/// shifted to the window center (for conditioning) and, per tuple
/// (l_1..l_d), the row of factors m~_{s+j} * multinom(s+j; j, l_1..l_d)
/// multiplying (-gamma)^j.
struct AssemblyPlan {
    std::size_t g = 0, d = 0, tuple_count = 0;
    double center = 0.0;
    std::vector<double> shifted, shifted_abs;
    std::vector<double> factors;
    std::vector<std::size_t> fact_off;
    std::vector<int> tuple_sum;
};

AssemblyPlan make_plan_from_centered(std::vector<double> shifted, double center,
                                     const std::vector<int>& tuples, std::size_t d);

AssemblyPlan make_plan(const ExpPoly& p, const std::vector<int>& tuples, std::size_t d) {
    double center = 0.5 * (p.lo() + p.hi());
    return make_plan_from_centered(taylor_shift(p.monomial_coeffs(), center), center, tuples, d);
}

AssemblyPlan make_plan(const detail::CenteredExpPoly& p, const std::vector<int>& tuples,
                       std::size_t d) {
    return make_plan_from_centered(p.coeffs, p.center, tuples, d);
}

AssemblyPlan make_plan_from_centered(std::vector<double> shifted, double center,
                                     const std::vector<int>& tuples, std::size_t d) {
    AssemblyPlan plan;
    plan.g = shifted.size() - 1;
    plan.d = d;
    plan.tuple_count = tuples.size() / d;
    plan.center = center;
    plan.shifted = std::move(shifted);
    plan.shifted_abs.resize(plan.shifted.size());
    for (std::size_t i = 0; i < plan.shifted.size(); ++i)
        plan.shifted_abs[i] = std::abs(plan.shifted[i]);

    plan.fact_off.assign(plan.tuple_count + 1, 0);
    plan.tuple_sum.resize(plan.tuple_count);
    for (std::size_t t = 0; t < plan.tuple_count; ++t) {
        int s = 0;
        for (std::size_t kk = 0; kk < d; ++kk) s += tuples[t * d + kk];
        if (static_cast<std::size_t>(s) > plan.g)
            throw std::invalid_argument("make_plan: tuple degree exceeds polynomial degree");
        plan.tuple_sum[t] = s;
        plan.fact_off[t + 1] = plan.fact_off[t] + (plan.g - static_cast<std::size_t>(s) + 1);
    }
    plan.factors.resize(plan.fact_off.back());
    for (std::size_t t = 0; t < plan.tuple_count; ++t) {
        std::span<const int> tup(tuples.data() + t * d, d);
        std::size_t s = static_cast<std::size_t>(plan.tuple_sum[t]);
        double base = multinomial_of(tup);
        double* row = plan.factors.data() + plan.fact_off[t];
        for (std::size_t j = 0; j + s <= plan.g; ++j)
            row[j] = plan.shifted[s + j] * choose(s + j, j) * base;
    }
    return plan;
}

double horner_abs(const std::vector<double>& abs_coeffs, double x) {
    double acc = 0.0;
    for (std::size_t i = abs_coeffs.size(); i-- > 0;) acc = acc * x + abs_coeffs[i];
    return acc;
}

/// Row numerator/denominator from accumulated phi values
/// (layout: tuple * (d_v + 1) + t with t = 0 the unweighted sums).
void assemble_from_phi(const AssemblyPlan& plan, const std::vector<int>& tuples,
                       std::span<const double> q_row, double c_row, std::size_t d_v,
                       std::span<const double> phi_acc, double* den_out, double* num_out) {
    const std::size_t g = plan.g, d = plan.d;
    const double gamma = c_row + plan.center;

    thread_local std::vector<double> gpow, qpow;
    gpow.assign(g + 1, 1.0);
    for (std::size_t j = 1; j <= g; ++j) gpow[j] = gpow[j - 1] * (-gamma);
    qpow.assign(d * (g + 1), 1.0);
    for (std::size_t k = 0; k < d; ++k)
        for (std::size_t e = 1; e <= g; ++e)
            qpow[k * (g + 1) + e] = qpow[k * (g + 1) + e - 1] * q_row[k];

    double den = 0.0;
    for (std::size_t t = 0; t < d_v; ++t) num_out[t] = 0.0;
    for (std::size_t ti = 0; ti < plan.tuple_count; ++ti) {
        const int* tup = tuples.data() + ti * d;
        double qprod = 1.0;
        for (std::size_t k = 0; k < d; ++k)
            qprod *= qpow[k * (g + 1) + static_cast<std::size_t>(tup[k])];
        const double* row = plan.factors.data() + plan.fact_off[ti];
        const std::size_t len = plan.fact_off[ti + 1] - plan.fact_off[ti];
        double inner = 0.0;
        for (std::size_t j = 0; j < len; ++j) inner += row[j] * gpow[j];
        double coef = qprod * inner;
        const double* acc = phi_acc.data() + ti * (d_v + 1);
        den += coef * acc[0];
        for (std::size_t t = 0; t < d_v; ++t) num_out[t] += coef * acc[t + 1];
    }
    *den_out = den;
}

}  // namespace

// ---- PhiIndexFamily ----------------------------------------------------------

std::size_t PhiIndexFamily::find_tuple(std::span<const int> t) const {
    if (t.size() != d_) return npos;
    for (std::size_t i = 0; i < tuple_count_; ++i) {
        bool eq = true;
        for (std::size_t k = 0; k < d_; ++k)
            if (tuples_[i * d_ + k] != t[k]) {
                eq = false;
                break;
            }
        if (eq) return i;
    }
    return npos;
}

double PhiIndexFamily::point_weight(std::size_t p, std::span<const int> tuple,
                                    std::size_t t) const {
    auto pt = tree_->point(p);
    double w = 1.0;
    for (std::size_t k = 0; k < d_; ++k)
        for (int e = 0; e < tuple[k]; ++e) w *= pt[k];
    if (t > 0) w *= v_perm_[p * d_v_ + (t - 1)];
    return w;
}

PhiIndexFamily build_phi_family(const Matrix& k, const Matrix& v, std::size_t degree,
                                std::shared_ptr<const detail::PartitionTree> tree,
                                std::size_t mem_cap_bytes) {
    if (k.rows() != v.rows()) throw std::invalid_argument("build_phi_family: K/V row mismatch");
    if (k.cols() == 0) throw std::invalid_argument("build_phi_family: d = 0");
    PhiIndexFamily fam;
    fam.degree_ = degree;
    fam.d_ = k.cols();
    fam.d_v_ = v.cols();
    fam.n_ = k.rows();
    if (!tree) tree = std::make_shared<detail::PartitionTree>(k);
    fam.tree_ = std::move(tree);

    double count_est = tuple_count_estimate(fam.d_, degree);
    double mem_est = count_est * static_cast<double>(fam.d_v_ + 1) *
                     static_cast<double>(fam.tree_->nodes().size()) * sizeof(double);
    if (count_est > kMaxPhiTuples || mem_est > static_cast<double>(mem_cap_bytes))
        throw std::runtime_error(
            "build_phi_family: estimated index memory " +
            std::to_string(static_cast<long long>(mem_est / (1 << 20))) +
            " MiB exceeds the cap " + std::to_string(mem_cap_bytes >> 20) +
            " MiB; use a larger eps or a smaller entry bound B");

    fam.tuples_ = all_tuples(fam.d_, degree);
    fam.tuple_count_ = fam.tuples_.size() / fam.d_;
    fam.stride_ = fam.tuple_count_ * (fam.d_v_ + 1);

    fam.v_perm_.resize(fam.n_ * fam.d_v_);
    for (std::size_t p = 0; p < fam.n_; ++p) {
        std::size_t orig = fam.tree_->original_index(p);
        for (std::size_t t = 0; t < fam.d_v_; ++t) fam.v_perm_[p * fam.d_v_ + t] = v(orig, t);
    }

    const auto& nodes = fam.tree_->nodes();
    fam.node_sums_.assign(nodes.size() * fam.stride_, 0.0);
    const std::size_t d = fam.d_, d_v = fam.d_v_, g1 = degree + 1;
    std::vector<double> pw(d * g1);
    for (std::size_t node = nodes.size(); node-- > 0;) {
        double* sums = fam.node_sums_.data() + node * fam.stride_;
        if (nodes[node].left >= 0) {
            const double* l =
                fam.node_sums_.data() + static_cast<std::size_t>(nodes[node].left) * fam.stride_;
            const double* r =
                fam.node_sums_.data() + static_cast<std::size_t>(nodes[node].right) * fam.stride_;
            for (std::size_t i = 0; i < fam.stride_; ++i) sums[i] = l[i] + r[i];
            continue;
        }
        for (std::size_t p = nodes[node].begin; p < nodes[node].end; ++p) {
            auto pt = fam.tree_->point(p);
            for (std::size_t kk = 0; kk < d; ++kk) {
                pw[kk * g1] = 1.0;
                for (std::size_t e = 1; e < g1; ++e) pw[kk * g1 + e] = pw[kk * g1 + e - 1] * pt[kk];
            }
            const double* vrow = fam.v_perm_.data() + p * d_v;
            for (std::size_t ti = 0; ti < fam.tuple_count_; ++ti) {
                const int* tup = fam.tuples_.data() + ti * d;
                double w = 1.0;
                for (std::size_t kk = 0; kk < d; ++kk)
                    w *= pw[kk * g1 + static_cast<std::size_t>(tup[kk])];
                double* cell = sums + ti * (d_v + 1);
                cell[0] += w;
                for (std::size_t t = 0; t < d_v; ++t) cell[t + 1] += w * vrow[t];
            }
        }
    }
    return fam;
}

namespace {

/// All (tuple, t) phi values for one half-space, via one canonical tree
/// decomposition shared across the whole family.
void accumulate_phi(const PhiIndexFamily& fam, std::span<const double> normal, double tau,
                    std::vector<double>& acc) {
    acc.assign(fam.stride(), 0.0);
    const auto& tree = *fam.tree();
    thread_local std::vector<std::size_t> inside, loose;
    tree.decompose(normal, tau, inside, loose);
    for (std::size_t node : inside) {
        auto sums = fam.node_sums(node);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += sums[i];
    }
    const std::size_t d_v = fam.value_cols();
    for (std::size_t p : loose) {
        for (std::size_t ti = 0; ti < fam.tuple_count(); ++ti) {
            double* cell = acc.data() + ti * (d_v + 1);
            cell[0] += fam.point_weight(p, fam.tuple(ti), 0);
            for (std::size_t t = 1; t <= d_v; ++t)
                cell[t] += fam.point_weight(p, fam.tuple(ti), t);
        }
    }
}

}  // namespace

double phi_query(const PhiIndexFamily& fam, std::size_t t, const HalfSpace& h,
                 std::span<const int> tuple) {
    if (t > fam.value_cols()) throw std::invalid_argument("phi_query: t out of range");
    std::size_t ti = fam.find_tuple(tuple);
    if (ti == PhiIndexFamily::npos) throw std::invalid_argument("phi_query: unknown tuple");
    if (h.normal.size() != fam.dim()) throw std::invalid_argument("phi_query: dimension mismatch");
    const auto& tree = *fam.tree();
    std::vector<std::size_t> inside, loose;
    tree.decompose(h.normal, h.threshold, inside, loose);
    double s = 0.0;
    for (std::size_t node : inside) s += fam.node_sums(node)[ti * (fam.value_cols() + 1) + t];
    for (std::size_t p : loose) s += fam.point_weight(p, tuple, t);
    return s;
}

std::vector<double> assemble_row(std::span<const double> q_row, double c_row, const ExpPoly& p,
                                 const PhiIndexFamily& fam) {
    if (q_row.size() != fam.dim()) throw std::invalid_argument("assemble_row: dimension mismatch");
    if (p.degree() != fam.degree())
        throw std::invalid_argument("assemble_row: polynomial degree != family degree");
    std::vector<int> tuples(fam.tuple(0).data(),
                            fam.tuple(0).data() + fam.tuple_count() * fam.dim());
    AssemblyPlan plan = make_plan(p, tuples, fam.dim());

    std::vector<double> acc;
    accumulate_phi(fam, q_row, c_row, acc);
    const std::size_t d_v = fam.value_cols();
    std::vector<double> num(d_v, 0.0);
    double den = 0.0;
    assemble_from_phi(plan, tuples, q_row, c_row, d_v, acc, &den, num.data());
    if (!(den > 0.0) || !std::isfinite(den))
        throw std::runtime_error("assemble_row: nonpositive denominator (certification breach)");
    for (double& x : num) x /= den;
    return num;
}

// ---- anchored local-Taylor moments (stable evaluation path) ------------------

namespace {

struct NodeMoments {
    std::size_t order = 0, d = 0, d_v = 0, tuple_count = 0, stride = 0;
    double radius_cap = 1.0;
    std::vector<int> tuples;
    std::vector<double> vals;  // node-major; each tuple pre-divided by prod(alpha!)
};

NodeMoments build_moments(const detail::PartitionTree& tree, std::span<const double> v_perm,
                          std::size_t d_v) {
    NodeMoments mom;
    auto [order, radius] = local_expansion_params(tree.dim());
    mom.order = order;
    mom.radius_cap = radius;
    mom.d = tree.dim();
    mom.d_v = d_v;
    mom.tuples = all_tuples(mom.d, order);
    mom.tuple_count = mom.tuples.size() / mom.d;
    mom.stride = mom.tuple_count * (d_v + 1);
    const auto& nodes = tree.nodes();
    mom.vals.assign(nodes.size() * mom.stride, 0.0);

    std::vector<double> inv_fact(mom.tuple_count);
    const auto& f = factorial_table();
    for (std::size_t ti = 0; ti < mom.tuple_count; ++ti) {
        double denom = 1.0;
        for (std::size_t kk = 0; kk < mom.d; ++kk)
            denom *= f[static_cast<std::size_t>(mom.tuples[ti * mom.d + kk])];
        inv_fact[ti] = 1.0 / denom;
    }

    const std::size_t g1 = mom.order + 1;
    detail::parallel_for(nodes.size(), [&](std::size_t node) {
        std::vector<double> pw(mom.d * g1);
        double* out = mom.vals.data() + node * mom.stride;
        auto cen = tree.centroid(node);
        for (std::size_t p = nodes[node].begin; p < nodes[node].end; ++p) {
            auto pt = tree.point(p);
            for (std::size_t kk = 0; kk < mom.d; ++kk) {
                double delta = pt[kk] - cen[kk];
                pw[kk * g1] = 1.0;
                for (std::size_t e = 1; e < g1; ++e) pw[kk * g1 + e] = pw[kk * g1 + e - 1] * delta;
            }
            const double* vrow = v_perm.data() + p * d_v;
            for (std::size_t ti = 0; ti < mom.tuple_count; ++ti) {
                const int* tup = mom.tuples.data() + ti * mom.d;
                double w = inv_fact[ti];
                for (std::size_t kk = 0; kk < mom.d; ++kk)
                    w *= pw[kk * g1 + static_cast<std::size_t>(tup[kk])];
                double* cell = out + ti * (d_v + 1);
                cell[0] += w;
                for (std::size_t t = 0; t < d_v; ++t) cell[t + 1] += w * vrow[t];
            }
        }
    });
    return mom;
}

/// Anchored evaluation of (sum_rel e^{Q.K - c} V_j, sum_rel e^{Q.K - c}).
/// Fully-inside nodes whose projected radius ||q|| r fits under the cap
/// use centroid-anchored Taylor moments with an exact exp at the anchor;
/// everything else recurses down to exact per-point evaluation, with the
/// same membership comparison the range index uses.
void stable_eval_row(const detail::PartitionTree& tree, const NodeMoments& mom,
                     std::span<const double> v_perm, std::span<const double> q, double c_row,
                     double* den_out, double* num_out, std::size_t d_v) {
    double qnorm = 0.0;
    for (double x : q) qnorm += x * x;
    qnorm = std::sqrt(qnorm);

    const std::size_t g1 = mom.order + 1;
    thread_local std::vector<double> qpow;
    qpow.assign(mom.d * g1, 1.0);
    for (std::size_t kk = 0; kk < mom.d; ++kk)
        for (std::size_t e = 1; e < g1; ++e)
            qpow[kk * g1 + e] = qpow[kk * g1 + e - 1] * q[kk];

    double den = 0.0;
    for (std::size_t t = 0; t < d_v; ++t) num_out[t] = 0.0;
    const auto& nodes = tree.nodes();
    thread_local std::vector<std::size_t> stack;
    stack.clear();
    stack.push_back(tree.root());
    while (!stack.empty()) {
        std::size_t node = stack.back();
        stack.pop_back();
        detail::Region r = tree.classify(node, q, c_row);
        if (r == detail::Region::kOutside) continue;
        bool leaf = nodes[node].left < 0;
        if (r == detail::Region::kInside && qnorm * tree.radius(node) <= mom.radius_cap) {
            double anchor = std::exp(detail::dot_plain(q, tree.centroid(node)) - c_row);
            const double* cells = mom.vals.data() + node * mom.stride;
            for (std::size_t ti = 0; ti < mom.tuple_count; ++ti) {
                const int* tup = mom.tuples.data() + ti * mom.d;
                double qprod = 1.0;
                for (std::size_t kk = 0; kk < mom.d; ++kk)
                    qprod *= qpow[kk * g1 + static_cast<std::size_t>(tup[kk])];
                const double* cell = cells + ti * (d_v + 1);
                double wq = anchor * qprod;
                den += wq * cell[0];
                for (std::size_t t = 0; t < d_v; ++t) num_out[t] += wq * cell[t + 1];
            }
            continue;
        }
        if (!leaf) {
            stack.push_back(static_cast<std::size_t>(nodes[node].left));
            stack.push_back(static_cast<std::size_t>(nodes[node].right));
            continue;
        }
        for (std::size_t p = nodes[node].begin; p < nodes[node].end; ++p) {
            double s = detail::dot_plain(q, tree.point(p));
            if (!(s >= c_row)) continue;
            double w = std::exp(s - c_row);
            den += w;
            const double* vrow = v_perm.data() + p * d_v;
            for (std::size_t t = 0; t < d_v; ++t) num_out[t] += w * vrow[t];
        }
    }
    *den_out = den;
}

Matrix uniform_output(const Matrix& v) {
    Matrix out(v.rows(), v.cols());
    for (std::size_t t = 0; t < v.cols(); ++t) {
        double s = 0.0;
        for (std::size_t j = 0; j < v.rows(); ++j) s += v(j, t);
        s /= static_cast<double>(v.rows());
        for (std::size_t i = 0; i < v.rows(); ++i) out(i, t) = s;
    }
    return out;
}

Matrix approx_attention_1d(const Matrix& q, const Matrix& k, const Matrix& v,
                           const AttnParams& params, RunStats* stats,
                           std::vector<RowDDebug>* debug) {
    const std::size_t n = q.rows(), d_v = v.cols();
    std::vector<double> qv(n), kv(n), vv(n);
    for (std::size_t i = 0; i < n; ++i) {
        qv[i] = q(i, 0);
        kv[i] = k(i, 0);
    }
    Matrix out(n, d_v);
    std::vector<Row1dDebug> dbg1;
    for (std::size_t t = 0; t < d_v; ++t) {
        for (std::size_t i = 0; i < n; ++i) vv[i] = v(i, t);
        AttnParams col_params(
            n, 1, std::max({q.max_abs(), k.max_abs(), v.max_abs(), params.entry_bound}),
            params.eps);
        auto col = vector_attention(qv, kv, vv, col_params, (debug && t == 0) ? &dbg1 : nullptr);
        for (std::size_t i = 0; i < n; ++i) out(i, t) = col[i];
    }
    if (debug) {
        debug->assign(n, RowDDebug{});
        for (std::size_t i = 0; i < n; ++i) {
            (*debug)[i].c = dbg1[i].window.c;
            (*debug)[i].relevant = dbg1[i].window.count_relevant;
            (*debug)[i].stable_path = dbg1[i].fallback_used;
        }
    }
    if (stats) stats->path = 1;
    return out;
}

}  // namespace

Matrix approx_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                        const AttnParams& params, RunStats* stats,
                        std::vector<RowDDebug>* debug) {
    params.check_inputs(q, k, v);
    const std::size_t n = q.rows(), d = q.cols(), d_v = v.cols();
    if (n == 0) throw std::invalid_argument("approx_attention: n = 0");
    if (d == 1) return approx_attention_1d(q, k, v, params, stats, debug);
    if (d > kMaxHeadDim)
        throw std::invalid_argument("approx_attention: head dimension above " +
                                    std::to_string(kMaxHeadDim) +
                                    " is not supported (cost is exponential in d)");

    auto t0 = Clock::now();
    const double eps_i = params.eps_internal;
    const double step = std::log1p(eps_i);
    const double window = std::log(static_cast<double>(n) / eps_i);
    const double b = params.entry_bound;
    double bracket = std::ceil(static_cast<double>(d) * b * b / step) + 1.0;
    if (bracket > 2147483647.0)
        throw std::invalid_argument(
            "approx_attention: B^2 d / log(1+eps') exceeds 2^31 levels; use a larger eps or a "
            "smaller entry bound B");
    const long long s_hi = static_cast<long long>(bracket), s_lo = -s_hi;

    auto tree = std::make_shared<detail::PartitionTree>(k);
    std::vector<double> unit(n, 1.0);
    RangeIndex unit_idx = build_index_with_tree(tree, unit);

    // arguments live in [0, window + step]; certified there or not at all
    auto poly = detail::build_centered_exp_poly(0.0, window + step, eps_i);
    const std::size_t g = poly ? poly->degree() : 0;

    bool phi_feasible = poly.has_value() && tuple_count_estimate(d, g) <= kMaxPhiTuples &&
                        window < 690.0;
    std::vector<int> tuples;
    AssemblyPlan plan;
    if (phi_feasible) {
        tuples = all_tuples(d, g);
        plan = make_plan(*poly, tuples, d);
    }

    std::vector<double> kmax(d, 0.0);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t kk = 0; kk < d; ++kk)
            kmax[kk] = std::max(kmax[kk], std::abs(k(j, kk)));

    std::vector<long long> smax(n);
    std::vector<double> c_row(n);
    std::vector<std::size_t> n_rel(n);
    std::vector<char> row_ok(n, 0);
    std::atomic<bool> level_error{false};
    const double cert_floor =
        window < 690.0 ? 0.1 * eps_i * (1.0 - eps_i) * std::exp(window) : -1.0;

    detail::parallel_for(n, [&](std::size_t i) {
        auto qi = q.row(i);
        long long s = max_projection_level(unit_idx, qi, step, s_lo, s_hi);
        if (s < s_lo) {
            level_error.store(true);
            s = s_lo;
        }
        smax[i] = s;
        c_row[i] = static_cast<double>(s) * step - window;
        n_rel[i] = tree->halfspace_count(qi, c_row[i]);
        if (phi_feasible) {
            double letters = std::abs(c_row[i] + plan.center);
            for (std::size_t kk = 0; kk < d; ++kk) letters += std::abs(qi[kk]) * kmax[kk];
            double noise = kUlp * 2.0 * static_cast<double>(g + 1) *
                           static_cast<double>(n_rel[i]) * horner_abs(plan.shifted_abs, letters);
            row_ok[i] = (cert_floor > 0.0 && std::isfinite(noise) && noise <= cert_floor) ? 1 : 0;
        }
    });
    if (level_error.load())
        throw std::runtime_error("approx_attention: level bracket failed (internal)");
    bool all_ok =
        phi_feasible && std::all_of(row_ok.begin(), row_ok.end(), [](char c) { return c != 0; });

    std::vector<double> v_perm(n * d_v);
    for (std::size_t p = 0; p < n; ++p) {
        std::size_t orig = tree->original_index(p);
        for (std::size_t t = 0; t < d_v; ++t) v_perm[p * d_v + t] = v(orig, t);
    }

    PhiIndexFamily fam;
    if (all_ok) {
        try {
            fam = build_phi_family(k, v, g, tree);
        } catch (const std::runtime_error&) {
            all_ok = false;  // memory cap: the anchored path needs none of it
        }
    }

    Matrix out(n, d_v);
    std::size_t fallback_rows = 0;

    if (all_ok) {
        if (stats) {
            stats->path = 1;
            stats->prep_seconds = seconds_since(t0);
        }
        auto tq = Clock::now();
        std::vector<char> fell(n, 0);
        detail::parallel_for(n, [&](std::size_t i) {
            auto qi = q.row(i);
            thread_local std::vector<double> acc, num;
            accumulate_phi(fam, qi, c_row[i], acc);
            num.assign(d_v, 0.0);
            double den = 0.0;
            assemble_from_phi(plan, tuples, qi, c_row[i], d_v, acc, &den, num.data());

            double letters = std::abs(c_row[i] + plan.center);
            for (std::size_t kk = 0; kk < d; ++kk) letters += std::abs(qi[kk]) * kmax[kk];
            double noise = kUlp * 2.0 * static_cast<double>(g + 1) *
                           static_cast<double>(n_rel[i]) * horner_abs(plan.shifted_abs, letters);
            bool good = std::isfinite(den) && den > 0.0 && noise <= 0.1 * eps_i * den;
            for (std::size_t t = 0; good && t < d_v; ++t) good = std::isfinite(num[t]);
            if (!good) {
                fell[i] = 1;
                den = 0.0;
                num.assign(d_v, 0.0);
                for (std::size_t p = 0; p < n; ++p) {
                    double s = detail::dot_plain(qi, tree->point(p));
                    if (!(s >= c_row[i])) continue;
                    double w = std::exp(s - c_row[i]);
                    den += w;
                    for (std::size_t t = 0; t < d_v; ++t) num[t] += w * v_perm[p * d_v + t];
                }
            }
            for (std::size_t t = 0; t < d_v; ++t) out(i, t) = num[t] / den;
        });
        for (char c : fell) fallback_rows += c;
        if (stats) stats->query_seconds = seconds_since(tq);
    } else {
        NodeMoments mom = build_moments(*tree, v_perm, d_v);
        if (stats) {
            stats->path = 2;
            stats->prep_seconds = seconds_since(t0);
        }
        auto tq = Clock::now();
        detail::parallel_for(n, [&](std::size_t i) {
            thread_local std::vector<double> num;
            num.assign(d_v, 0.0);
            double den = 0.0;
            stable_eval_row(*tree, mom, v_perm, q.row(i), c_row[i], &den, num.data(), d_v);
            for (std::size_t t = 0; t < d_v; ++t) out(i, t) = num[t] / den;
        });
        fallback_rows = n;
        if (stats) stats->query_seconds = seconds_since(tq);
    }

    if (stats) stats->fallback_rows = fallback_rows;
    if (debug) {
        debug->assign(n, RowDDebug{});
        for (std::size_t i = 0; i < n; ++i)
            (*debug)[i] = RowDDebug{smax[i], c_row[i], n_rel[i], !all_ok};
    }
    return out;
}

Matrix low_rank_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                          const AttnParams& params, RunStats* stats) {
    params.check_inputs(q, k, v);
    RankFactorization fq = rank_factorize(q);
    RankFactorization fk = rank_factorize(k);
    if (std::min(fq.rank, fk.rank) == 0) return uniform_output(v);  // Q K^T = 0

    Matrix q2, k2;
    std::size_t r;
    if (fq.rank <= fk.rank) {
        r = fq.rank;
        q2 = fq.u;               // n x r
        k2 = multiply(k, fq.v);  // n x r; Q' K'^T = U_Q V_Q^T K^T = Q K^T
    } else {
        r = fk.rank;
        k2 = fk.u;
        q2 = multiply(q, fk.v);
    }
    double b2 = std::max({q2.max_abs(), k2.max_abs(), v.max_abs()});
    AttnParams inner(q.rows(), r, b2, params.eps);
    return approx_attention(q2, k2, v, inner, stats);
}

}  // namespace attn
