#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <vector>

#include "qelab/oracle.hpp"

using namespace qelab;
using oracle::MomentPattern;
using oracle::Rational;

namespace {

MomentPattern pattern_from_alphas(int k, const std::vector<int>& z_alphas,
                                  const std::vector<int>& zbar_alphas) {
    MomentPattern p;
    for (int a : z_alphas) p.z.push_back({k, a});
    for (int a : zbar_alphas) p.zbar.push_back({k, a});
    return p;
}

// Independent Gaussian-moment oracle: group slots by variable and use
// E[g^a conj(g)^b] = (a == b) ? 2^a a! : 0 for independent complex Gaussians.
double gaussian_moment_by_independence(const MomentPattern& p) {
    double out = 1.0;
    for (const auto& v : p.variables()) {
        int a = 0, b = 0;
        for (const auto& s : p.z)
            if (s == v) ++a;
        for (const auto& s : p.zbar)
            if (s == v) ++b;
        if (a != b) return 0.0;
        double fact = 1.0;
        for (int i = 2; i <= a; ++i) fact *= i;
        out *= std::ldexp(fact, a);
    }
    return out;
}

}  // namespace

TEST_CASE("dirichlet_moment closed-form values", "[oracle]") {
    for (int d : {1, 2, 3, 8, 16, 129}) {
        const int c1[] = {1};
        Rational r = oracle::dirichlet_moment(d, c1);
        REQUIRE(r == Rational{1, d});
    }
    const int c2[] = {2};
    REQUIRE(oracle::dirichlet_moment(3, c2) == Rational{1, 6});
    const int c11[] = {1, 1};
    REQUIRE(oracle::dirichlet_moment(2, c11) == Rational{1, 6});
    // E|u|^4 = 2/(d(d+1))
    for (int d : {4, 8, 33}) {
        Rational r = oracle::dirichlet_moment(d, c2);
        REQUIRE(r == Rational{2, static_cast<long long>(d) * (d + 1)});
    }

    const int too_many[] = {1, 1, 1};
    REQUIRE_THROWS_AS(oracle::dirichlet_moment(2, too_many), validation_error);
    const int bad[] = {0};
    REQUIRE_THROWS_AS(oracle::dirichlet_moment(4, bad), validation_error);
}

TEST_CASE("weingarten leading term basic patterns", "[oracle]") {
    // m = 1 matched -> 1/d
    MomentPattern p1;
    p1.z = {{0, 3}};
    p1.zbar = {{0, 3}};
    REQUIRE(oracle::weingarten_leading(p1, 8) == Catch::Approx(1.0 / 8).epsilon(1e-15));

    // m = 2, same row, alpha != beta -> d^-2; alpha == beta -> 2 d^-2
    MomentPattern pab = pattern_from_alphas(0, {1, 2}, {1, 2});
    REQUIRE(oracle::weingarten_leading(pab, 16) == Catch::Approx(std::pow(16.0, -2)).epsilon(1e-15));
    MomentPattern paa = pattern_from_alphas(0, {1, 1}, {1, 1});
    REQUIRE(oracle::weingarten_leading(paa, 16) == Catch::Approx(2 * std::pow(16.0, -2)).epsilon(1e-15));

    // Unbalanced patterns vanish.
    MomentPattern unb;
    unb.z = {{0, 1}, {0, 2}};
    unb.zbar = {{0, 1}};
    REQUIRE(oracle::weingarten_leading(unb, 8) == 0.0);
}

TEST_CASE("weingarten reproduces the C1 + delta_kj C2 coefficient table", "[oracle]") {
    // E(|u_k(a)|^2 |u_k(b)|^2 |u_j(h)|^2 |u_j(x)|^2) has leading coefficient
    // C1 + delta_kj C2 with
    //   C1 = (1+d_ab)(1+d_hx)
    //   C2 = d_ah(1+d_bx+2d_hx) + d_ax(1+d_bh+2d_bx) + d_bh(1+2d_ab)
    //        + d_bx(1+2d_hx) + 6 d_ab d_bx d_hx.
    const int d = 16;
    const double d4 = std::pow(static_cast<double>(d), 4);
    for (int kj = 0; kj < 2; ++kj) {
        int k = 0, j = (kj == 0) ? 1 : 0;
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                for (int h = 0; h < 3; ++h)
                    for (int x = 0; x < 3; ++x) {
                        MomentPattern p;
                        p.z = {{k, a}, {k, b}, {j, h}, {j, x}};
                        p.zbar = {{k, a}, {k, b}, {j, h}, {j, x}};
                        auto del = [](int p_, int q_) { return p_ == q_ ? 1 : 0; };
                        int c1 = (1 + del(a, b)) * (1 + del(h, x));
                        int c2 = del(a, h) * (1 + del(b, x) + 2 * del(h, x)) +
                                 del(a, x) * (1 + del(b, h) + 2 * del(b, x)) +
                                 del(b, h) * (1 + 2 * del(a, b)) +
                                 del(b, x) * (1 + 2 * del(h, x)) +
                                 6 * del(a, b) * del(b, x) * del(h, x);
                        int expected = c1 + (k == j ? c2 : 0);
                        double count = oracle::weingarten_leading(p, d) * d4;
                        REQUIRE(std::lround(count) == expected);
                    }
    }
}

TEST_CASE("wick moments of complex Gaussians", "[oracle]") {
    MomentPattern m1 = pattern_from_alphas(0, {5}, {5});
    REQUIRE(oracle::wick_moment(m1) == 2.0);  // E|g|^2

    MomentPattern q1 = pattern_from_alphas(0, {1, 2}, {1, 2});
    REQUIRE(oracle::wick_moment(q1) == 4.0);  // E|g1|^2 |g2|^2

    MomentPattern q1_same = pattern_from_alphas(0, {1, 1}, {1, 1});
    REQUIRE(oracle::wick_moment(q1_same) == 8.0);  // E|g|^4

    MomentPattern unb = pattern_from_alphas(0, {1, 2}, {3});
    REQUIRE(oracle::wick_moment(unb) == 0.0);
}

TEST_CASE("pairing counts: wick/2^m equals d^m * weingarten for same-row patterns", "[oracle]") {
    // Exhaustive over z/zbar alpha labels in {0,1,2} for m <= 3, plus the
    // independent product-of-factorials Gaussian oracle.
    const int d = 32;
    for (int m = 1; m <= 3; ++m) {
        std::vector<int> z(m, 0), zb(m, 0);
        auto advance = [](std::vector<int>& v) {
            for (std::size_t i = 0; i < v.size(); ++i) {
                if (++v[i] < 3) return true;
                v[i] = 0;
            }
            return false;
        };
        do {
            std::vector<int> zb2(m, 0);
            do {
                MomentPattern p = pattern_from_alphas(0, z, zb2);
                double wick = oracle::wick_moment(p);
                double lead = oracle::weingarten_leading(p, d);
                double count_from_wick = std::ldexp(wick, -m);
                double count_from_wein = lead * std::pow(static_cast<double>(d), m);
                REQUIRE(count_from_wick == Catch::Approx(count_from_wein).margin(1e-9));
                REQUIRE(wick == Catch::Approx(gaussian_moment_by_independence(p)).margin(1e-12));
            } while (advance(zb2));
        } while (advance(z));
    }
}

TEST_CASE("haar monte carlo agrees with dirichlet moments", "[oracle]") {
    qelab::RngStream rng = qelab::RngStream::derive(1234, 0, 0);

    // E|u(0,0)|^2 = 1/d at d = 8.
    MomentPattern p1 = pattern_from_alphas(0, {0}, {0});
    auto est1 = oracle::haar_mc_moment(p1, 8, 20000, rng);
    REQUIRE(std::abs(est1.mean.real() - 0.125) <= 4.0 * est1.se);

    // Same-row |u|^4 at d = 8: exact 1/36, leading 2/64.  The Monte Carlo
    // mean must see the exact value and resolve the O(d^-3) correction.
    MomentPattern p2 = pattern_from_alphas(0, {0, 0}, {0, 0});
    auto est2 = oracle::haar_mc_moment(p2, 8, 20000, rng);
    REQUIRE(std::abs(est2.mean.real() - 1.0 / 36.0) <= 4.0 * est2.se);
    REQUIRE(std::abs(est2.mean.real() - 2.0 / 64.0) > 4.0 * est2.se);

    // Cross-row pattern |u_k(a)|^2 |u_j(a)|^2, k != j: exact 1/(d(d+1)),
    // leading d^-2, so the difference from the leading term is O(d^-3).
    MomentPattern px;
    px.z = {{0, 2}, {3, 2}};
    px.zbar = {{0, 2}, {3, 2}};
    auto estx = oracle::haar_mc_moment(px, 8, 20000, rng);
    REQUIRE(std::abs(estx.mean.real() - 1.0 / 72.0) <= 4.0 * estx.se);
    double lead = oracle::weingarten_leading(px, 8);
    REQUIRE(std::abs(estx.mean.real() - lead) <= 3.0 * std::pow(8.0, -3) + 4.0 * estx.se);
}

TEST_CASE("haar_expected_z closed form", "[oracle]") {
    // d = 3, b = (-2/3, 0, 2/3), omega = 0, |T| = 3:
    // E p^2 = (8/9) / (3*4), E Z = 3/3 * that = 2/27.
    std::vector<double> b = {-2.0 / 3.0, 0.0, 2.0 / 3.0};
    double ez = oracle::haar_expected_z(b, 0.0, 3);
    REQUIRE(ez == Catch::Approx(2.0 / 27.0).epsilon(1e-14));

    // Identity symbol: p_k = 1 always, so E Z = (|T|/d) (1 - omega)^2.
    std::vector<double> ones(5, 1.0);
    REQUIRE(oracle::haar_expected_z(ones, 1.0, 4) == Catch::Approx(0.0).margin(1e-15));
}
