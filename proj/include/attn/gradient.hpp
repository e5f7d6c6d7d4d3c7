#pragma once

#include <cstddef>
#include <functional>

#include "attn/matrix.hpp"

namespace attn {

/// Attention-loss instance: L(X) = 1/2 || f(X) h - E ||_F^2 with
/// f(X) = row-softmax(A1 X A2^T) and h = A3 Y.
struct GradInstance {
    Matrix a1, a2, a3, e;  // n x d
    Matrix y, x;           // d x d
    double entry_bound = 0.0;
    double eps = 0.0;

    GradInstance(Matrix a1_, Matrix a2_, Matrix a3_, Matrix e_, Matrix y_, Matrix x_,
                 double bound, double eps_);

    std::size_t n() const { return a1.rows(); }
    std::size_t d() const { return a1.cols(); }
};

/// Attention oracle signature: computes softmax(Q K^T) V with additive
/// error at most eps in every entry. The exact oracle ignores eps.
using AttentionOracle =
    std::function<Matrix(const Matrix& q, const Matrix& k, const Matrix& v, double eps)>;

AttentionOracle make_exact_oracle();
AttentionOracle make_polyd_oracle();

/// Counts invocations of an underlying oracle (the reduction makes
/// exactly d + 2 calls per gradient: f h, f A2, and d row-Kronecker
/// products).
class CountingOracle {
public:
    explicit CountingOracle(AttentionOracle inner) : inner_(std::move(inner)) {}
    Matrix operator()(const Matrix& q, const Matrix& k, const Matrix& v, double eps) {
        ++calls_;
        return inner_(q, k, v, eps);
    }
    std::size_t calls() const { return calls_; }
    AttentionOracle as_oracle() {
        return [this](const Matrix& q, const Matrix& k, const Matrix& v, double eps) {
            return (*this)(q, k, v, eps);
        };
    }

private:
    AttentionOracle inner_;
    std::size_t calls_ = 0;
};

/// Loss value by dense evaluation.
double loss(const GradInstance& inst);

/// Dense reference gradient dL/dX:
/// A1^T [f o (c h^T)] A2 - A1^T f diag[f c h^T] A2 with c = f h - E.
/// Materializes n x n intermediates; intended for moderate n.
Matrix exact_gradient(const GradInstance& inst);

/// Gradient through d + 2 attention-oracle calls plus O(n d^2) extra
/// work; ||result - exact_gradient||_inf <= inst.eps when the oracle
/// honors its additive contract at eps2 = eps / (64 n d max(B,1)^3).
Matrix approx_gradient(const GradInstance& inst, const AttentionOracle& oracle);

/// eps2 handed to each oracle call (exposed so tests can pin it).
double gradient_oracle_eps(const GradInstance& inst);

}  // namespace attn
