#include "attn/exact.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "attn/detail/parallel.hpp"

namespace attn {

namespace {

void check_triple(const Matrix& q, const Matrix& k, const Matrix& v) {
    // Q may carry a different row count than K/V (queries vs keys).
    if (q.rows() == 0 || k.rows() == 0) throw std::invalid_argument("exact_attention: n = 0");
    if (q.cols() == 0) throw std::invalid_argument("exact_attention: d = 0");
    if (q.cols() != k.cols()) throw std::invalid_argument("exact_attention: Q/K column mismatch");
    if (v.rows() != k.rows()) throw std::invalid_argument("exact_attention: V row mismatch");
    if (v.cols() == 0) throw std::invalid_argument("exact_attention: V has no columns");
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

Matrix exact_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
    check_triple(q, k, v);
    const std::size_t m_rows = q.rows(), n = k.rows(), dv = v.cols();
    Matrix out(m_rows, dv);
    detail::parallel_for(m_rows, [&](std::size_t i) {
        std::vector<double> scores(n);
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            scores[j] = dot(q.row(i), k.row(j));
            m = std::max(m, scores[j]);
        }
        double den = 0.0;
        std::vector<double> num(dv, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            double w = std::exp(scores[j] - m);
            den += w;
            auto vr = v.row(j);
            for (std::size_t t = 0; t < dv; ++t) num[t] += w * vr[t];
        }
        for (std::size_t t = 0; t < dv; ++t) out(i, t) = num[t] / den;
    });
    return out;
}

Matrix attention_weights(const Matrix& q, const Matrix& k) {
    if (q.rows() == 0 || k.rows() == 0 || q.cols() != k.cols())
        throw std::invalid_argument("attention_weights: bad shapes");
    Matrix scores = multiply_bt(q, k);
    return row_softmax(scores);
}

std::vector<double> exp_row_sums(const Matrix& q, const Matrix& k) {
    if (q.rows() == 0 || q.cols() != k.cols())
        throw std::invalid_argument("exp_row_sums: bad shapes");
    const std::size_t n = q.rows(), nk = k.rows();
    std::vector<double> sums(n);
    for (std::size_t i = 0; i < n; ++i) {
        double m = -std::numeric_limits<double>::infinity();
        std::vector<double> s(nk);
        for (std::size_t j = 0; j < nk; ++j) {
            s[j] = dot(q.row(i), k.row(j));
            m = std::max(m, s[j]);
        }
        double acc = 0.0;
        for (std::size_t j = 0; j < nk; ++j) acc += std::exp(s[j] - m);
        sums[i] = std::exp(m + std::log(acc));
    }
    return sums;
}

Matrix row_softmax(const Matrix& scores) {
    Matrix out(scores.rows(), scores.cols());
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < scores.cols(); ++j) m = std::max(m, scores(i, j));
        double den = 0.0;
        for (std::size_t j = 0; j < scores.cols(); ++j) {
            double w = std::exp(scores(i, j) - m);
            out(i, j) = w;
            den += w;
        }
        for (std::size_t j = 0; j < scores.cols(); ++j) out(i, j) /= den;
    }
    return out;
}

}  // namespace attn
