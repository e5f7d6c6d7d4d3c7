#include "attn/gradient.hpp"

#include <cmath>
#include <stdexcept>

#include "attn/attnd.hpp"
#include "attn/exact.hpp"

namespace attn {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

/// Column p of h row-scaled into A2: (h_{*,p} (x)_r A2)[i][j] = h[i][p] A2[i][j].
Matrix row_kron_col(const Matrix& col_src, std::size_t p, const Matrix& a2) {
    Matrix out(a2.rows(), a2.cols());
    for (std::size_t i = 0; i < a2.rows(); ++i) {
        double s = col_src(i, p);
        for (std::size_t j = 0; j < a2.cols(); ++j) out(i, j) = s * a2(i, j);
    }
    return out;
}

}  // namespace

GradInstance::GradInstance(Matrix a1_, Matrix a2_, Matrix a3_, Matrix e_, Matrix y_, Matrix x_,
                           double bound, double eps_)
    : a1(std::move(a1_)), a2(std::move(a2_)), a3(std::move(a3_)), e(std::move(e_)),
      y(std::move(y_)), x(std::move(x_)), entry_bound(bound), eps(eps_) {
    const std::size_t nn = a1.rows(), dd = a1.cols();
    require(nn > 0 && dd > 0, "GradInstance: empty A1");
    require(a2.rows() == nn && a2.cols() == dd, "GradInstance: A2 shape");
    require(a3.rows() == nn && a3.cols() == dd, "GradInstance: A3 shape");
    require(e.rows() == nn && e.cols() == dd, "GradInstance: E shape");
    require(y.rows() == dd && y.cols() == dd, "GradInstance: Y shape");
    require(x.rows() == dd && x.cols() == dd, "GradInstance: X shape");
    require(bound > 0.0 && std::isfinite(bound), "GradInstance: entry bound");
    require(eps_ > 0.0, "GradInstance: eps");
    double lim = bound * (1.0 + 1e-12);
    for (const Matrix* m : {&a1, &a2, &a3, &e, &y})
        require(m->max_abs() <= lim, "GradInstance: entry exceeds bound B");
}

AttentionOracle make_exact_oracle() {
    return [](const Matrix& q, const Matrix& k, const Matrix& v, double) {
        return exact_attention(q, k, v);
    };
}

AttentionOracle make_polyd_oracle() {
    return [](const Matrix& q, const Matrix& k, const Matrix& v, double eps) {
        AttnParams params = AttnParams::for_inputs(q, k, v, eps);
        return approx_attention(q, k, v, params);
    };
}

double gradient_oracle_eps(const GradInstance& inst) {
    double b = std::max(inst.entry_bound, 1.0);
    return inst.eps /
           (64.0 * static_cast<double>(inst.n()) * static_cast<double>(inst.d()) * b * b * b);
}

double loss(const GradInstance& inst) {
    Matrix f = row_softmax(multiply_bt(multiply(inst.a1, inst.x), inst.a2));
    Matrix h = multiply(inst.a3, inst.y);
    Matrix resid = subtract(multiply(f, h), inst.e);
    double s = 0.0;
    for (double v : resid.data()) s += v * v;
    return 0.5 * s;
}

Matrix exact_gradient(const GradInstance& inst) {
    const std::size_t n = inst.n();
    Matrix f = row_softmax(multiply_bt(multiply(inst.a1, inst.x), inst.a2));
    Matrix h = multiply(inst.a3, inst.y);
    Matrix fh = multiply(f, h);
    Matrix c = subtract(fh, inst.e);

    // term 1: A1^T [f o (c h^T)] A2
    Matrix cht = multiply_bt(c, h);  // n x n
    Matrix t1 = multiply_at(inst.a1, multiply(hadamard(f, cht), inst.a2));

    // term 2: A1^T diag(r) f A2 with r_i = <(f h)_i, c_i>. The softmax
    // chain rule scales row i of f by r_i; central-difference checks pin
    // this orientation down.
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t t = 0; t < h.cols(); ++t) s += fh(i, t) * c(i, t);
        r[i] = s;
    }
    Matrix fr = f;  // diag(r) f
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) fr(i, j) *= r[i];
    Matrix t2 = multiply_at(inst.a1, multiply(fr, inst.a2));

    return subtract(t1, t2);
}

Matrix approx_gradient(const GradInstance& inst, const AttentionOracle& oracle) {
    const std::size_t n = inst.n(), d = inst.d();
    const double eps2 = gradient_oracle_eps(inst);

    Matrix q = multiply(inst.a1, inst.x);  // X enters only through A1 X
    const Matrix& a2 = inst.a2;
    Matrix h = multiply(inst.a3, inst.y);

    // C5 = f h                                       [call 1]
    Matrix c5 = oracle(q, a2, h, eps2);
    Matrix c = subtract(c5, inst.e);

    // B3 = diag(r) (f A2), r_i = <(f h)_i, c_i>      [call 2]
    Matrix fa2 = oracle(q, a2, a2, eps2);
    Matrix b3 = fa2;
    for (std::size_t i = 0; i < n; ++i) {
        double r = 0.0;
        for (std::size_t t = 0; t < d; ++t) r += c5(i, t) * c(i, t);
        for (std::size_t j = 0; j < d; ++j) b3(i, j) *= r;
    }

    // B1 = sum_p (f (h_p (x)_r A2)) (x)_r (f h)_p,
    // B2 = sum_p (f (h_p (x)_r A2)) (x)_r E_p        [calls 3 .. d+2]
    Matrix b1(n, d), b2(n, d);
    for (std::size_t p = 0; p < d; ++p) {
        Matrix c6p = row_kron_col(h, p, a2);
        Matrix c7p = oracle(q, a2, c6p, eps2);
        for (std::size_t i = 0; i < n; ++i) {
            double w1 = c5(i, p), w2 = inst.e(i, p);
            for (std::size_t j = 0; j < d; ++j) {
                b1(i, j) += c7p(i, j) * w1;
                b2(i, j) += c7p(i, j) * w2;
            }
        }
    }
    Matrix inner = subtract(subtract(b1, b2), b3);
    return multiply_at(inst.a1, inner);
}

}  // namespace attn
