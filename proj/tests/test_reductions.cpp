#include <doctest.h>

#include <cmath>

#include "attn/exact.hpp"
#include "attn/reductions.hpp"
#include "attn/rng.hpp"
#include "oracles.hpp"

using namespace attn;

namespace {

const AttentionOracle kExact = make_exact_oracle();

}  // namespace

TEST_SUITE_BEGIN("reductions");

TEST_CASE("threshold_indicator: decisive single-row cases") {
    Matrix q(1, 1), k(1, 1);  // S_1 = exp(0) = 1
    std::vector<double> low{0.25}, high{4.0};
    auto b1 = threshold_indicator(q, k, low, 0.1, kExact);
    CHECK(b1[0] == 1);  // S = 1 >= 1.1 * 0.25
    auto b0 = threshold_indicator(q, k, high, 0.1, kExact);
    CHECK(b0[0] == 0);  // S = 1 <= 0.9 * 4
    std::vector<double> bad{-1.0};
    CHECK_THROWS(threshold_indicator(q, k, bad, 0.1, kExact));
}

TEST_CASE("threshold_indicator matches dense sums on decisive rows") {
    Rng rng(101);
    for (int rep = 0; rep < 10; ++rep) {
        const std::size_t n = 2 + rng.below(14), d = 1 + rng.below(3);
        Matrix q = oracles::random_matrix(rng, n, d, 1.5);
        Matrix k = oracles::random_matrix(rng, n, d, 1.5);
        auto sums = oracles::exp_row_sums(q, k);
        const double eps = 0.2;
        std::vector<double> c(n);
        for (std::size_t i = 0; i < n; ++i) c[i] = sums[i] * (rng.coin() ? 2.0 : 0.5);
        auto bits = threshold_indicator(q, k, c, eps, kExact);
        for (std::size_t i = 0; i < n; ++i) {
            if (sums[i] >= (1.0 + eps) * c[i]) CHECK(bits[i] == 1);
            if (sums[i] <= (1.0 - eps) * c[i]) CHECK(bits[i] == 0);
            // rows inside the dead zone are unconstrained by contract
        }
    }
}

TEST_CASE("augmented-matrix structure of the indicator instance") {
    // re-derive Q' K'^T densely: first column ln c, top-right block Q K^T,
    // bottom row zero
    Rng rng(102);
    const std::size_t n = 6, d = 2;
    Matrix q = oracles::random_matrix(rng, n, d, 1.0);
    Matrix k = oracles::random_matrix(rng, n, d, 1.0);
    std::vector<double> c(n);
    for (auto& x : c) x = std::exp(rng.uniform(-1.0, 1.0));

    Matrix qa(n + 1, d + 1), ka(n + 1, d + 1);
    for (std::size_t i = 0; i < n; ++i) {
        qa(i, 0) = std::log(c[i]);
        for (std::size_t j = 0; j < d; ++j) qa(i, j + 1) = q(i, j);
    }
    ka(0, 0) = 1.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) ka(i + 1, j + 1) = k(i, j);

    Matrix prod = multiply_bt(qa, ka);
    Matrix qk = multiply_bt(q, k);
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(prod(i, 0) == doctest::Approx(std::log(c[i])));
        for (std::size_t j = 0; j < n; ++j)
            CHECK(prod(i, j + 1) == doctest::Approx(qk(i, j)).epsilon(1e-12));
    }
    for (std::size_t j = 0; j <= n; ++j) CHECK(prod(n, j) == 0.0);
}

TEST_CASE("estimate_row_sums: uniform instance") {
    const std::size_t n = 16;
    Matrix q(n, 2), k(n, 2);
    const double eps = 0.1;
    RowSumEstimate est = estimate_row_sums(q, k, eps, kExact);
    for (double e : est.estimates) {
        CHECK(e >= n * (1.0 - 1e-9));
        CHECK(e <= n * (1.0 + eps) * (1.0 + eps));
    }
}

TEST_CASE("estimate_row_sums: n = 1 exponential") {
    Matrix q = Matrix::from_rows({{1.0}}), k = Matrix::from_rows({{2.0}});
    const double eps = 0.1;
    RowSumEstimate est = estimate_row_sums(q, k, eps, kExact);
    double s = std::exp(2.0);
    CHECK(est.estimates[0] >= s * (1.0 - 4.0 * eps));
    CHECK(est.estimates[0] <= s * (1.0 + 4.0 * eps));
}

TEST_CASE("estimate_row_sums: random instances within (1 +- 4 eps)") {
    Rng rng(103);
    for (double eps : {0.25, 0.1}) {
        for (int rep = 0; rep < 8; ++rep) {
            const std::size_t n = 4 + rng.below(60), d = 1 + rng.below(3);
            Matrix q = oracles::random_matrix(rng, n, d, 2.0);
            Matrix k = oracles::random_matrix(rng, n, d, 2.0);
            auto sums = oracles::exp_row_sums(q, k);
            RowSumEstimate est = estimate_row_sums(q, k, eps, kExact);
            for (std::size_t i = 0; i < n; ++i) {
                CHECK(est.estimates[i] >= sums[i] * (1.0 - 4.0 * eps));
                CHECK(est.estimates[i] <= sums[i] * (1.0 + 4.0 * eps));
            }
            // round budget: ceil(log2 of the level range) + 2
            const double step = std::log1p(eps);
            const double mag = static_cast<double>(d) * q.max_abs() * k.max_abs();
            double range = (2.0 * mag) / step + 4.0;
            CHECK(est.rounds_used <= static_cast<std::size_t>(std::ceil(std::log2(range))) + 2);
        }
    }
    CHECK_THROWS(estimate_row_sums(Matrix(2, 1), Matrix(2, 1), 0.3, kExact));
}

TEST_CASE("estimate_row_sums rejects scales whose sums leave the double range") {
    Matrix q(4, 4), k(4, 4);
    for (auto& x : q.data()) x = 14.0;
    for (auto& x : k.data()) x = 14.0;  // d max|Q| max|K| = 784 > 700
    CHECK_THROWS_AS(estimate_row_sums(q, k, 0.1, kExact), std::invalid_argument);
}

TEST_CASE("max_ip: fixture with duplicate-padded rows") {
    Matrix a = Matrix::from_rows({{1.0, 0.0}, {1.0, 0.0}});
    Matrix b = Matrix::from_rows({{0.0, 1.0}, {1.0, 1.0}});
    VectorSet sa(a, EntryKind::kInteger, 1.0), sb(b, EntryKind::kInteger, 1.0);
    MaxIpResult res = max_ip(sa, sb, kExact);
    CHECK(res.per_row[0] == 1);
    CHECK(res.global == 1);
}

TEST_CASE("max_ip: all-zero A gives zero maxima") {
    Matrix a(4, 3), b(4, 3);
    for (std::size_t i = 0; i < 4; ++i) b(i, i % 3) = 1.0;
    VectorSet sa(a, EntryKind::kInteger, 1.0), sb(b, EntryKind::kInteger, 1.0);
    MaxIpResult res = max_ip(sa, sb, kExact);
    for (long long m : res.per_row) CHECK(m == 0);
}

TEST_CASE("max_ip matches brute force on random instances") {
    Rng rng(104);
    for (int rep = 0; rep < 12; ++rep) {
        const std::size_t n = 2 + rng.below(31), d = 1 + rng.below(4);
        const long long bound = 1 + static_cast<long long>(rng.below(3));
        Matrix a = oracles::random_integer(rng, n, d, bound);
        Matrix b = oracles::random_integer(rng, n, d, bound);
        VectorSet sa(a, EntryKind::kInteger, static_cast<double>(bound));
        VectorSet sb(b, EntryKind::kInteger, static_cast<double>(bound));
        MaxIpResult res = max_ip(sa, sb, kExact);
        auto brute = oracles::max_ip_rows(a, b);
        for (std::size_t i = 0; i < n; ++i) CHECK(res.per_row[i] == brute[i]);
    }
    Matrix single(1, 2);
    VectorSet s1(Matrix::from_rows({{1.0, 0.0}}), EntryKind::kInteger, 1.0);
    CHECK_THROWS(max_ip(s1, s1, kExact));  // n = 1 rejected
}

TEST_CASE("ov_large_entries: all-ones sets have no orthogonal pair") {
    const std::size_t n = 8, d = 3;
    Matrix ones(n, d);
    for (double& v : ones.data()) v = 1.0;
    VectorSet s(ones, EntryKind::kBinary, 1.0);
    CHECK(ov_large_entries(s, s, kExact) == false);
}

TEST_CASE("ov_large_entries: planted orthogonal pair is found") {
    Rng rng(105);
    const std::size_t n = 12, d = 6;
    Matrix a = oracles::random_binary(rng, n, d);
    Matrix b = oracles::random_binary(rng, n, d);
    // plant: zero A row 3 on the support of B row 7
    for (std::size_t j = 0; j < d; ++j)
        if (b(7, j) == 1.0) a(3, j) = 0.0;
    VectorSet sa(a, EntryKind::kBinary, 1.0), sb(b, EntryKind::kBinary, 1.0);
    CHECK(ov_large_entries(sa, sb, kExact) == true);
}

TEST_CASE("ov_large_entries matches brute force") {
    Rng rng(106);
    for (int rep = 0; rep < 12; ++rep) {
        const std::size_t n = 2 + rng.below(30), d = 2 + rng.below(8);
        Matrix a = oracles::random_binary(rng, n, d);
        Matrix b = oracles::random_binary(rng, n, d);
        VectorSet sa(a, EntryKind::kBinary, 1.0), sb(b, EntryKind::kBinary, 1.0);
        CHECK(ov_large_entries(sa, sb, kExact) == oracles::has_orthogonal_pair(a, b));
    }
}

TEST_CASE("ov_parity: all-ones sets are even everywhere") {
    const std::size_t n = 6, d = 3;
    Matrix ones(n, d);
    for (double& v : ones.data()) v = 1.0;
    VectorSet s(ones, EntryKind::kBinary, 1.0);
    CHECK(ov_parity(s, s, kExact, 7, 40) == false);
}

TEST_CASE("ov_parity: zero vector in A accepts immediately") {
    Matrix a(3, 4);
    Matrix b = Matrix::from_rows({{1, 0, 0, 1}, {0, 1, 1, 0}, {1, 1, 1, 1}});
    VectorSet sa(a, EntryKind::kBinary, 1.0), sb(b, EntryKind::kBinary, 1.0);
    CHECK(ov_parity(sa, sb, kExact, 1, 4) == true);
}

TEST_CASE("ov_parity matches brute force with generous rounds") {
    Rng rng(107);
    for (int rep = 0; rep < 8; ++rep) {
        const std::size_t n = 2 + rng.below(14), d = 2 + rng.below(6);
        Matrix a = oracles::random_binary(rng, n, d);
        Matrix b = oracles::random_binary(rng, n, d);
        VectorSet sa(a, EntryKind::kBinary, 1.0), sb(b, EntryKind::kBinary, 1.0);
        bool want = oracles::has_orthogonal_pair(a, b);
        bool got = ov_parity(sa, sb, kExact, 1000 + rep, 64);
        CHECK(got == want);
    }
}

TEST_CASE("ov_parity is deterministic given the seed") {
    Rng rng(108);
    Matrix a = oracles::random_binary(rng, 10, 5);
    Matrix b = oracles::random_binary(rng, 10, 5);
    VectorSet sa(a, EntryKind::kBinary, 1.0), sb(b, EntryKind::kBinary, 1.0);
    bool first = ov_parity(sa, sb, kExact, 42, 16);
    for (int rep = 0; rep < 3; ++rep) CHECK(ov_parity(sa, sb, kExact, 42, 16) == first);
}

TEST_CASE("reductions are oracle-independent where both oracles are feasible") {
    // maxip/ov-parity drive the augmented entry bound over the polynomial
    // oracle's level-bracket limit, so the cross-check runs on rowsums and
    // ov-large, whose scales both oracles accept
    Rng rng(109);
    const AttentionOracle polyd = make_polyd_oracle();

    for (int rep = 0; rep < 3; ++rep) {
        const std::size_t n = 8 + rng.below(9), d = 1 + rng.below(2);
        Matrix q = oracles::random_matrix(rng, n, d, 1.5);
        Matrix k = oracles::random_matrix(rng, n, d, 1.5);
        RowSumEstimate a = estimate_row_sums(q, k, 0.25, kExact);
        RowSumEstimate b = estimate_row_sums(q, k, 0.25, polyd);
        REQUIRE(a.estimates.size() == b.estimates.size());
        for (std::size_t i = 0; i < n; ++i) CHECK(a.estimates[i] == b.estimates[i]);
    }

    for (int rep = 0; rep < 3; ++rep) {
        const std::size_t n = 6 + rng.below(5), d = 3 + rng.below(3);
        Matrix a = oracles::random_binary(rng, n, d);
        Matrix b = oracles::random_binary(rng, n, d);
        VectorSet sa(a, EntryKind::kBinary, 1.0), sb(b, EntryKind::kBinary, 1.0);
        CHECK(ov_large_entries(sa, sb, kExact) == ov_large_entries(sa, sb, polyd));
    }
}

TEST_CASE("vector set validation") {
    CHECK_THROWS(VectorSet(Matrix::from_rows({{0.5}}), EntryKind::kBinary, 1.0));
    CHECK_THROWS(VectorSet(Matrix::from_rows({{2.5}}), EntryKind::kInteger, 3.0));
    CHECK_THROWS(VectorSet(Matrix::from_rows({{4.0}}), EntryKind::kInteger, 3.0));
}

TEST_SUITE_END();
