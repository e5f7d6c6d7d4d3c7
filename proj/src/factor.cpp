#include "attn/factor.hpp"

#include <Eigen/Dense>
#include <stdexcept>

namespace attn {

RankFactorization rank_factorize(const Matrix& a, double tol) {
    if (!(tol > 0.0)) throw std::invalid_argument("rank_factorize: tol must be > 0");
    const std::size_t n = a.rows(), d = a.cols();
    double scale = a.max_abs();
    if (n == 0 || d == 0 || scale == 0.0)
        return RankFactorization{Matrix(n, 0), Matrix(d, 0), 0};

    Eigen::MatrixXd m(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) m(i, j) = a(i, j);

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m);
    const std::size_t kmax = std::min(n, d);
    Eigen::MatrixXd r_full = qr.matrixR().topLeftCorner(kmax, d).template triangularView<Eigen::Upper>();

    // Diagonal of R decays under column pivoting; cut at the threshold.
    std::size_t r = 0;
    for (std::size_t i = 0; i < kmax; ++i) {
        if (std::abs(r_full(i, i)) > tol * scale) ++r;
        else break;
    }
    if (r == 0) return RankFactorization{Matrix(n, 0), Matrix(d, 0), 0};

    Eigen::MatrixXd thin_q = qr.householderQ() * Eigen::MatrixXd::Identity(n, r);
    Eigen::MatrixXd vt = r_full.topRows(r) * qr.colsPermutation().transpose();  // r x d

    Matrix u(n, r), v(d, r);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < r; ++j) u(i, j) = thin_q(i, j);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < r; ++j) v(i, j) = vt(j, i);
    return RankFactorization{std::move(u), std::move(v), r};
}

}  // namespace attn
