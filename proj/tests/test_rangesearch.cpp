#include <doctest.h>

#include <cmath>

#include "attn/rangesearch.hpp"
#include "attn/rng.hpp"
#include "oracles.hpp"

using namespace attn;

namespace {

HalfSpace random_halfspace(Rng& rng, std::size_t d, double scale) {
    HalfSpace h;
    h.normal.resize(d);
    for (auto& x : h.normal) x = rng.uniform(-scale, scale);
    h.threshold = rng.uniform(-scale * scale, scale * scale);
    return h;
}

void check_matches_naive(const Matrix& pts, std::span<const double> w, const RangeIndex& idx,
                         const HalfSpace& h) {
    double total_abs = 0.0;
    for (double x : w) total_abs += std::abs(x);
    CHECK(std::abs(halfspace_sum(idx, h) - oracles::halfspace_sum(pts, w, h)) <=
          1e-9 * std::max(total_abs, 1.0));
    CHECK(halfspace_count(idx, h) == oracles::halfspace_count(pts, h));
}

}  // namespace

TEST_SUITE_BEGIN("rangesearch");

TEST_CASE("empty index answers zero") {
    Matrix pts(0, 2);
    RangeIndex idx = build_index(pts, {});
    HalfSpace h{{1.0, 0.0}, 0.0};
    CHECK(halfspace_sum(idx, h) == 0.0);
    CHECK(idx.total_weight() == 0.0);
}

TEST_CASE("unit weights: total weight is n") {
    Rng rng(41);
    Matrix pts = oracles::random_matrix(rng, 37, 2, 3.0);
    std::vector<double> w(37, 1.0);
    RangeIndex idx = build_index(pts, w);
    CHECK(idx.total_weight() == 37.0);
    CHECK(halfspace_sum(idx, HalfSpace{{0.0, 0.0}, -1.0}) == 37.0);
}

TEST_CASE("threshold extremes") {
    Rng rng(42);
    Matrix pts = oracles::random_matrix(rng, 25, 2, 2.0);
    std::vector<double> w(25);
    for (auto& x : w) x = rng.uniform(0.0, 1.0);
    RangeIndex idx = build_index(pts, w);
    HalfSpace below{{1.0, 0.5}, -100.0};   // below min projection: everything
    HalfSpace above{{1.0, 0.5}, 100.0};    // above max projection: nothing
    CHECK(halfspace_sum(idx, below) == doctest::Approx(idx.total_weight()).epsilon(1e-12));
    CHECK(halfspace_sum(idx, above) == 0.0);
}

TEST_CASE("build rejects mismatched weights") {
    Matrix pts(4, 2);
    std::vector<double> w(3, 1.0);
    CHECK_THROWS(build_index(pts, w));
}

TEST_CASE("tree and sorted engines match the naive scan exactly") {
    Rng rng(43);
    for (std::size_t d : {1u, 2u, 3u}) {
        Matrix pts = oracles::random_matrix(rng, 200, d, 4.0);
        std::vector<double> w(200);
        for (auto& x : w) x = rng.uniform(-2.0, 2.0);
        RangeIndex fast = build_index(pts, w);           // kAuto: sorted for d=1, tree otherwise
        RangeIndex naive = build_index(pts, w, IndexEngine::kNaive);
        for (int rep = 0; rep < 100; ++rep) {
            HalfSpace h = random_halfspace(rng, d, 4.0);
            check_matches_naive(pts, w, fast, h);
            check_matches_naive(pts, w, naive, h);
            // membership sets are identical, not just sums
            auto members = oracles::halfspace_members(pts, h);
            std::size_t cnt = 0;
            for (bool b : members) cnt += b;
            CHECK(halfspace_count(fast, h) == cnt);
        }
    }
}

TEST_CASE("boundary ties are included") {
    // two points projecting exactly onto the threshold
    Matrix pts = Matrix::from_rows({{1.0, 1.0}, {2.0, 0.0}, {0.0, 0.5}});
    std::vector<double> w{1.0, 10.0, 100.0};
    RangeIndex idx = build_index(pts, w);
    HalfSpace h{{1.0, 1.0}, 2.0};  // projections: 2, 2, 0.5
    CHECK(halfspace_sum(idx, h) == 11.0);
    CHECK(halfspace_count(idx, h) == 2);
}

TEST_CASE("monotonicity in the threshold (unit weights)") {
    Rng rng(44);
    Matrix pts = oracles::random_matrix(rng, 120, 2, 3.0);
    std::vector<double> w(120, 1.0);
    RangeIndex idx = build_index(pts, w);
    HalfSpace h = random_halfspace(rng, 2, 3.0);
    double prev = 1e300;
    for (double tau = -12.0; tau <= 12.0; tau += 0.37) {
        h.threshold = tau;
        double cur = halfspace_sum(idx, h);
        CHECK(cur <= prev);
        prev = cur;
    }
}

TEST_CASE("additivity of weight assignments") {
    Rng rng(45);
    Matrix pts = oracles::random_matrix(rng, 90, 3, 2.0);
    std::vector<double> w1(90), w2(90), w12(90);
    double abs_total = 0.0;
    for (std::size_t i = 0; i < 90; ++i) {
        w1[i] = rng.uniform(-1.0, 1.0);
        w2[i] = rng.uniform(-1.0, 1.0);
        w12[i] = w1[i] + w2[i];
        abs_total += std::abs(w1[i]) + std::abs(w2[i]);
    }
    RangeIndex i1 = build_index(pts, w1), i2 = build_index(pts, w2), i12 = build_index(pts, w12);
    for (int rep = 0; rep < 40; ++rep) {
        HalfSpace h = random_halfspace(rng, 3, 2.0);
        CHECK(std::abs(halfspace_sum(i12, h) - halfspace_sum(i1, h) - halfspace_sum(i2, h)) <=
              1e-9 * abs_total);
    }
}

TEST_CASE("max_projection_level: single point") {
    Matrix pts = Matrix::from_rows({{3.7}});
    std::vector<double> w{1.0};
    RangeIndex idx = build_index(pts, w);
    std::vector<double> q{1.0};
    CHECK(max_projection_level(idx, q, 1.0, -10, 10) == 3);  // floor(3.7)
}

TEST_CASE("max_projection_level: zero query vector") {
    Rng rng(46);
    Matrix pts = oracles::random_matrix(rng, 20, 2, 3.0);
    std::vector<double> w(20, 1.0);
    RangeIndex idx = build_index(pts, w);
    std::vector<double> q{0.0, 0.0};
    CHECK(max_projection_level(idx, q, 0.25, -100, 100) == 0);
}

TEST_CASE("max_projection_level equals the exhaustive scan") {
    Rng rng(47);
    for (int rep = 0; rep < 30; ++rep) {
        std::size_t d = 1 + rng.below(3);
        Matrix pts = oracles::random_matrix(rng, 40, d, 2.0);
        std::vector<double> w(40, 1.0);
        RangeIndex idx = build_index(pts, w);
        std::vector<double> q(d);
        for (auto& x : q) x = rng.uniform(-2.0, 2.0);
        double step = 0.1 + rng.uniform() * 0.5;
        long long lo = -200, hi = 200;
        long long got = max_projection_level(idx, q, step, lo, hi);
        long long want = lo - 1;
        for (long long s = lo; s <= hi; ++s) {
            HalfSpace h{q, static_cast<double>(s) * step};
            if (oracles::halfspace_count(pts, h) > 0) want = s;
        }
        CHECK(got == want);
    }
}

TEST_CASE("max_projection_level rejects an empty index") {
    RangeIndex idx = build_index(Matrix(0, 1), {});
    std::vector<double> q{1.0};
    CHECK_THROWS(max_projection_level(idx, q, 1.0, -5, 5));
}

TEST_SUITE_END();
