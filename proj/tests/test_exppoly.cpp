#include <doctest.h>

#include <cmath>

#include "attn/exppoly.hpp"
#include "attn/rng.hpp"
#include "oracles.hpp"

using namespace attn;

TEST_SUITE_BEGIN("exppoly");

TEST_CASE("eval at 0 matches exp(0) within the budget") {
    ExpPoly p = build_exp_poly(0.0, 1.0, 1e-3);
    CHECK(p.eval(0.0) >= 1.0 - 1e-3);
    CHECK(p.eval(0.0) <= 1.0 + 1e-3);
}

TEST_CASE("attention-scale interval certifies against the library exponential") {
    const double n = 1024.0, eps = 1e-3;
    const double w = 2.0 * std::log(n / eps);
    ExpPoly p = build_exp_poly(0.0, w, eps);
    double worst = 0.0;
    for (int i = 0; i <= 10000; ++i) {
        double x = w * i / 10000.0;
        worst = std::max(worst, std::abs(p.eval(x) - std::exp(x)) / std::exp(x));
    }
    CHECK(worst <= eps);
}

TEST_CASE("degree grows with the interval") {
    ExpPoly wide = build_exp_poly(0.0, 20.0, 1e-3);
    ExpPoly narrow = build_exp_poly(0.0, 5.0, 1e-3);
    CHECK(wide.degree() >= narrow.degree());
}

TEST_CASE("documented degree-slack bound") {
    const std::pair<double, double> combos[] = {{1.0, 5e-2},  {1.0, 1e-6}, {5.0, 1e-3},
                                                {5.0, 1e-6},  {20.0, 1e-3}, {20.0, 1e-6},
                                                {30.0, 5e-2}, {30.0, 1e-2}};
    for (auto [w, eps] : combos) {
        ExpPoly p = build_exp_poly(0.0, w, eps);
        double li = std::log(1.0 / eps);
        double denom = std::max(1.0, std::log(std::max(li / w, 1.0 + 1e-9)));
        double bound = 16.0 * std::max(li / denom, w) + 16.0;
        CHECK(static_cast<double>(p.degree()) <= bound);
    }
}

TEST_CASE("eps_rel outside (0, 0.1) is rejected") {
    CHECK_THROWS(build_exp_poly(0.0, 1.0, 0.5));
    CHECK_THROWS(build_exp_poly(0.0, 1.0, 0.0));
    CHECK_THROWS(build_exp_poly(1.0, 1.0, 1e-3));  // lo == hi
}

TEST_CASE("an uncertifiable interval fails loudly") {
    CHECK_THROWS(build_exp_poly(0.0, 2000.0, 1e-6));
}

TEST_CASE("horner agrees with the naive power sum") {
    Rng rng(31);
    for (int rep = 0; rep < 20; ++rep) {
        std::size_t g = 1 + rng.below(12);
        std::vector<double> coeffs(g + 1);
        for (auto& c : coeffs) c = rng.uniform(-2.0, 2.0);
        ExpPoly p = build_exp_poly(0.0, 1.0, 1e-3);  // eval path shares Horner with this
        double x = rng.uniform(-1.5, 1.5);
        // check the public eval against the naive sum on the built polynomial
        double naive = oracles::poly_eval_naive(p.monomial_coeffs(), x);
        double rel = std::abs(p.eval(x) - naive) / std::max(1.0, std::abs(naive));
        CHECK(rel <= 1e-12);
        (void)coeffs;
    }
}

TEST_CASE("monomial coefficients reproduce eval and have length degree+1") {
    ExpPoly p = build_exp_poly(0.0, 3.0, 1e-4);
    CHECK(p.monomial_coeffs().size() == p.degree() + 1);
    Rng rng(32);
    for (int rep = 0; rep < 10; ++rep) {
        double x = rng.uniform(0.0, 3.0);
        double naive = oracles::poly_eval_naive(p.monomial_coeffs(), x);
        CHECK(std::abs(p.eval(x) - naive) <= 1e-12 * std::max(1.0, std::abs(naive)));
    }
}

TEST_CASE("degenerate tiny interval: constant coefficient near 1") {
    ExpPoly p = build_exp_poly(0.0, 1e-6, 0.05);
    CHECK(std::abs(p.monomial_coeffs()[0] - 1.0) <= 0.05);
}

TEST_CASE("fresh-sample relative error within 1.05x the budget") {
    Rng rng(33);
    // pointwise-relative certification needs the coefficient norm e^width
    // to stay under eps/ulp, so widths pair with feasible budgets here
    const std::pair<double, double> combos[] = {{2.0, 1e-4}, {10.0, 1e-4}, {20.0, 1e-4},
                                                {30.0, 1e-2}, {30.0, 1e-3}};
    for (auto [w, eps] : combos) {
        ExpPoly p = build_exp_poly(0.0, w, eps);
        double worst = 0.0;
        for (int i = 0; i < 1000; ++i) {
            double x = rng.uniform(0.0, w);
            worst = std::max(worst, std::abs(p.eval(x) - std::exp(x)) / std::exp(x));
        }
        CHECK(worst <= 1.05 * eps);
    }
}

TEST_CASE("centered builder reports uncertifiable windows instead of lying") {
    // u * e^30 >> 1e-6: no double-coefficient polynomial can hold a
    // pointwise relative budget this tight near the bottom of the window
    CHECK_FALSE(attn::detail::build_centered_exp_poly(0.0, 30.0, 1e-6).has_value());
    auto ok = attn::detail::build_centered_exp_poly(0.0, 12.0, 1e-4);
    REQUIRE(ok.has_value());
    Rng rng(36);
    for (int i = 0; i < 500; ++i) {
        double x = rng.uniform(0.0, 12.0);
        CHECK(std::abs(ok->eval(x) - std::exp(x)) <= 1.05e-4 * std::exp(x));
    }
}

TEST_CASE("positivity on the certified range") {
    ExpPoly p = build_exp_poly(0.0, 25.0, 1e-3);
    Rng rng(34);
    for (int i = 0; i < 1000; ++i) CHECK(p.eval(rng.uniform(0.0, 25.0)) > 0.0);
}

TEST_CASE("determinism: identical inputs give bitwise-identical coefficients") {
    ExpPoly a = build_exp_poly(0.0, 17.0, 1e-4);
    ExpPoly b = build_exp_poly(0.0, 17.0, 1e-4);
    REQUIRE(a.monomial_coeffs().size() == b.monomial_coeffs().size());
    for (std::size_t i = 0; i < a.monomial_coeffs().size(); ++i)
        CHECK(a.monomial_coeffs()[i] == b.monomial_coeffs()[i]);
}

TEST_CASE("taylor_shift shifts the argument") {
    // P(y) = y^2 -> P(y + 1) = y^2 + 2y + 1
    std::vector<double> sq{0.0, 0.0, 1.0};
    auto shifted = taylor_shift(sq, 1.0);
    REQUIRE(shifted.size() == 3);
    CHECK(shifted[0] == 1.0);
    CHECK(shifted[1] == 2.0);
    CHECK(shifted[2] == 1.0);

    Rng rng(35);
    std::vector<double> coeffs(7);
    for (auto& c : coeffs) c = rng.uniform(-1.0, 1.0);
    double center = rng.uniform(-2.0, 2.0);
    auto sh = taylor_shift(coeffs, center);
    for (int rep = 0; rep < 5; ++rep) {
        double y = rng.uniform(-1.0, 1.0);
        double direct = oracles::poly_eval_naive(coeffs, y + center);
        double via = oracles::poly_eval_naive(sh, y);
        CHECK(std::abs(direct - via) <= 1e-12 * std::max(1.0, std::abs(direct)));
    }
}

TEST_SUITE_END();
