#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <vector>

#include "qelab/ensembles.hpp"
#include "qelab/linalg.hpp"
#include "qelab/oracle.hpp"
#include "qelab/qe_stats.hpp"
#include "qelab/sphere.hpp"

using namespace qelab;
using linalg::cplx;
using linalg::UnitaryMatrix;
using oracle::MomentPattern;
using sphere::OperatorBlock;
using stats::IndexSetT;

namespace {

// Independent enumeration of the admissible indices straight from the
// real-endpoint interval conditions.
std::vector<int> index_set_by_enumeration(int n, double nu) {
    std::vector<int> out;
    double edge = std::pow(n, 0.25);
    double bulk = std::pow(n, 1.0 - nu);
    for (int k = -n; k <= n; ++k) {
        bool in_left = k <= -n + edge + 1e-9;
        bool in_right = k >= n - edge - 1e-9;
        bool in_bulk = k >= -n + bulk - 1e-9 && k <= n - bulk + 1e-9;
        if (in_left || in_right || in_bulk) out.push_back(k);
    }
    return out;
}

UnitaryMatrix haar(int d, std::uint64_t seed, std::uint64_t lane = 0) {
    RngStream rng = RngStream::derive(seed, lane, 0);
    return linalg::haar_unitary(d, rng);
}

double exact_haar_z(const OperatorBlock& block, const IndexSetT& t) {
    std::vector<double> diag(block.dim());
    for (int a = -block.degree; a <= block.degree; ++a)
        diag[a + block.degree] = block.elem(a, a).real();
    return oracle::haar_expected_z(diag, block.omega, t.size());
}

}  // namespace

TEST_CASE("index set matches the real-endpoint enumeration", "[qe_stats]") {
    for (int n : {0, 1, 2, 4, 8, 16, 33, 64, 100}) {
        for (double nu : {0.1, 0.25, 0.5, 0.7}) {
            IndexSetT t = stats::build_index_set(n, nu);
            REQUIRE(t.members == index_set_by_enumeration(n, nu));
        }
    }
}

TEST_CASE("index set worked examples", "[qe_stats]") {
    IndexSetT t16 = stats::build_index_set(16, 0.25);
    std::vector<int> expect;
    for (int k = -16; k <= -14; ++k) expect.push_back(k);
    for (int k = -8; k <= 8; ++k) expect.push_back(k);
    for (int k = 14; k <= 16; ++k) expect.push_back(k);
    REQUIRE(t16.members == expect);
    REQUIRE(t16.size() == 23);

    IndexSetT t1 = stats::build_index_set(1, 0.25);
    REQUIRE(t1.members == std::vector<int>{-1, 0, 1});
    IndexSetT t0 = stats::build_index_set(0, 0.5);
    REQUIRE(t0.members == std::vector<int>{0});

    REQUIRE_THROWS_AS(stats::build_index_set(8, 0.0), validation_error);
    REQUIRE_THROWS_AS(stats::build_index_set(8, 0.75), validation_error);
    REQUIRE_THROWS_AS(stats::build_index_set(8, -0.1), validation_error);
}

TEST_CASE("index set density climbs toward one along powers of four", "[qe_stats]") {
    // Density is not monotone over all powers of two (16 -> 64 dips because
    // 16^{3/4} = 8 needs no ceiling), but along {64, 256, 1024} it rises
    // strictly and approaches full density.
    double prev = stats::build_index_set(64, 0.25).density();
    for (int n : {256, 1024}) {
        double dens = stats::build_index_set(n, 0.25).density();
        REQUIRE(dens > prev);
        prev = dens;
    }
    REQUIRE(prev > 0.82);
    REQUIRE(stats::build_index_set(16384, 0.25).density() > 0.9);
}

TEST_CASE("quadratic forms: identity basis and identity block", "[qe_stats]") {
    const int n = 3, d = 7;
    OperatorBlock g = sphere::diagonal_symbol_block([](double s) { return s; }, n);
    UnitaryMatrix id = UnitaryMatrix::identity(d);
    auto q = stats::diagonal_quadratic_forms(g, id);
    for (int k = -n; k <= n; ++k)
        REQUIRE(q[k + n].real() == Catch::Approx(k / 3.5).margin(1e-15));

    OperatorBlock one = sphere::diagonal_symbol_block([](double) { return 1.0; }, n);
    UnitaryMatrix u = haar(d, 11);
    auto q1 = stats::diagonal_quadratic_forms(one, u);
    for (int k = 0; k < d; ++k) REQUIRE(q1[k].real() == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("quadratic forms match brute-force quadrature of the synthesized basis", "[qe_stats]") {
    const int n = 2, d = 5;
    sphere::SphericalGrid grid = sphere::build_grid(n, 1);
    sphere::HarmonicTable yt = sphere::eval_harmonics(n, grid);
    auto fn = [](double x, double) { return x; };  // cos(theta)
    OperatorBlock blk = sphere::mult_operator_block({fn, 0, "cos_theta"}, n, grid, &yt);
    UnitaryMatrix u = haar(d, 21);

    auto q = stats::diagonal_quadratic_forms(blk, u);
    for (int k = 0; k < d; ++k) {
        double oracle_value = 0.0;
        for (int i = 0; i < grid.n_theta(); ++i)
            for (int j = 0; j < grid.n_phi; ++j) {
                cplx psi(0.0, 0.0);
                for (int a = -n; a <= n; ++a) psi += u(k, a + n) * yt.value(a, i, j);
                oracle_value += grid.wx[i] * grid.w_phi() * fn(grid.x[i], grid.phi(j)) * std::norm(psi);
            }
        REQUIRE(std::abs(q[k].real() - oracle_value) <= 1e-10);
        REQUIRE(std::abs(q[k].imag()) <= 1e-10);
    }
}

TEST_CASE("qe statistic: identity operator and localized standard basis", "[qe_stats]") {
    const int n = 1;
    IndexSetT t = stats::build_index_set(n, 0.25);
    OperatorBlock one = sphere::diagonal_symbol_block([](double) { return 1.0; }, n);
    for (std::uint64_t s : {1u, 2u, 3u}) {
        UnitaryMatrix u = haar(3, 100 + s);
        REQUIRE(stats::qe_statistic(one, u, t) <= 1e-24);
    }

    OperatorBlock lin = sphere::diagonal_symbol_block([](double s) { return s; }, n);
    UnitaryMatrix id = UnitaryMatrix::identity(3);
    REQUIRE(stats::qe_statistic(lin, id, t) == Catch::Approx(8.0 / 27.0).epsilon(1e-13));
}

TEST_CASE("random basis delocalizes the linear symbol far below the standard basis", "[qe_stats][slow]") {
    const int n = 64, d = 129;
    IndexSetT t = stats::build_index_set(n, 0.25);
    OperatorBlock lin = sphere::diagonal_symbol_block([](double s) { return s; }, n);
    double x_identity = stats::qe_statistic(lin, UnitaryMatrix::identity(d), t);

    RngStream rng = RngStream::derive(2025, 0, 0);
    double mean = 0.0;
    const int draws = 400;
    for (int i = 0; i < draws; ++i)
        mean += stats::qe_statistic(lin, linalg::haar_unitary(d, rng), t) / draws;
    REQUIRE(mean * 10.0 < x_identity);
    // And the Monte Carlo mean sits on the exact Haar value.
    double target = exact_haar_z(lin, t);
    REQUIRE(std::abs(mean - target) <= 0.15 * target);
}

TEST_CASE("band statistics of rotationally invariant operators", "[qe_stats]") {
    const int n = 4;
    IndexSetT t = stats::build_index_set(n, 0.25);
    OperatorBlock g = sphere::diagonal_symbol_block([](double s) { return s * s; }, n);
    UnitaryMatrix u = haar(9, 7);
    double x = stats::qe_statistic(g, u, t);
    REQUIRE(stats::band_statistic(g, u, t, 0) == Catch::Approx(x).epsilon(1e-14));
    for (int band : {-3, -1, 1, 2, 5}) REQUIRE(stats::band_statistic(g, u, t, band) == 0.0);
}

TEST_CASE("band statistics of cos(theta)cos(phi): support and expectation identity", "[qe_stats][slow]") {
    const int n = 4, d = 9;
    IndexSetT t = stats::build_index_set(n, 0.25);
    sphere::SphericalGrid grid = sphere::build_grid(n, 1);
    OperatorBlock blk =
        sphere::mult_operator_block({[](double x, double p) { return x * std::cos(p); }, 1, "ctcp"}, n, grid);

    RngStream rng = RngStream::derive(404, 0, 0);
    double gap_mean = 0.0, gap_sq = 0.0, first_gap = 0.0;
    const int draws = 3000;
    for (int i = 0; i < draws; ++i) {
        UnitaryMatrix u = linalg::haar_unitary(d, rng);
        REQUIRE(stats::band_statistic(blk, u, t, 0) <= 1e-22);
        double x = stats::qe_statistic(blk, u, t);
        double wsum = stats::band_statistic(blk, u, t, 1) + stats::band_statistic(blk, u, t, -1);
        double gap = x - wsum;
        if (i == 0) first_gap = gap;
        gap_mean += gap;
        gap_sq += gap * gap;
    }
    gap_mean /= draws;
    double se = std::sqrt(std::max(0.0, gap_sq / draws - gap_mean * gap_mean) / draws);

    // Per realization the band sum does NOT reproduce X (the cross-band
    // products survive inside the square); it does in expectation.
    REQUIRE(std::abs(first_gap) > 1e-9);
    REQUIRE(std::abs(gap_mean) <= 4.0 * se);
}

TEST_CASE("rotational decomposition identities hold per draw", "[qe_stats]") {
    const int n = 8, d = 17;
    IndexSetT t = stats::build_index_set(n, 0.25);
    for (auto gfun : {+[](double s) { return s; }, +[](double s) { return s * s; }}) {
        OperatorBlock g = sphere::diagonal_symbol_block(gfun, n);
        for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
            UnitaryMatrix u = haar(d, 600 + seed);
            auto terms = stats::rotinv_decomposition(g, u, t);
            double z = stats::qe_statistic(g, u, t);
            REQUIRE(terms.Z == Catch::Approx(z).epsilon(1e-13));
            REQUIRE(terms.s_sum() == Catch::Approx(z).margin(1e-12 + 1e-10 * std::abs(z)));
            REQUIRE(terms.t_sum() == Catch::Approx(z * z).margin(1e-12 + 1e-9 * z * z));
        }
    }

    OperatorBlock one = sphere::diagonal_symbol_block([](double) { return 1.0; }, n);
    UnitaryMatrix u = haar(d, 77);
    auto terms = stats::rotinv_decomposition(one, u, t);
    REQUIRE(terms.Z <= 1e-24);
    REQUIRE(std::abs(terms.s_sum()) <= 1e-12);
    REQUIRE(terms.S1 == Catch::Approx(static_cast<double>(t.size()) / d).epsilon(1e-12));

    sphere::SphericalGrid grid = sphere::build_grid(2, 1);
    OperatorBlock offdiag =
        sphere::mult_operator_block({[](double x, double p) { return x * std::cos(p); }, 1, "ctcp"}, 2, grid);
    IndexSetT t2 = stats::build_index_set(2, 0.25);
    UnitaryMatrix u2 = haar(5, 78);
    REQUIRE_THROWS_AS(stats::rotinv_decomposition(offdiag, u2, t2), validation_error);
}

TEST_CASE("rotinv term means over wigner draws match the exact Haar values", "[qe_stats][slow]") {
    // E S1 under Haar follows from Dirichlet moments; GUE draws must land on
    // it.  (The omega^2 / omega^4 asymptotics of the rotationally invariant
    // expansion emerge only as |T|/d -> 1, far beyond desk scale.)
    const int n = 8, d = 17;
    IndexSetT t = stats::build_index_set(n, 0.25);
    OperatorBlock g = sphere::diagonal_symbol_block([](double s) { return s * s; }, n);

    ensembles::WignerEnsembleSpec spec;
    spec.profile = ensembles::make_profile(ensembles::ProfileKind::Flat, d, {});
    RngStream rng = RngStream::derive(8080, 0, 0);
    const int draws = 1200;
    double s1 = 0.0, s1_sq = 0.0, t1 = 0.0, t1_sq = 0.0;
    for (int i = 0; i < draws; ++i) {
        auto h = ensembles::sample_wigner(spec, d, rng);
        auto eig = linalg::hermitian_eig(h, linalg::ResidualCheck::Spot);
        auto terms = stats::rotinv_decomposition(g, eig.vectors, t);
        s1 += terms.S1;
        s1_sq += terms.S1 * terms.S1;
        t1 += terms.T1;
        t1_sq += terms.T1 * terms.T1;
    }
    s1 /= draws;
    t1 /= draws;
    double var_s1 = std::max(0.0, s1_sq / draws - s1 * s1);
    double se_s1 = std::sqrt(var_s1 / draws);
    double se_t1 = std::sqrt(std::max(0.0, t1_sq / draws - t1 * t1) / draws);

    // Exact Haar E S1 = (|T|/d) E p^2 via Dirichlet moments.
    double sum_b = 0.0, sum_b2 = 0.0;
    for (int a = -n; a <= n; ++a) {
        double b = g.elem(a, a).real();
        sum_b += b;
        sum_b2 += b * b;
    }
    double ep2 = (sum_b2 + sum_b * sum_b) / (static_cast<double>(d) * (d + 1));
    double es1 = static_cast<double>(t.size()) / d * ep2;
    REQUIRE(std::abs(s1 - es1) <= 4.0 * se_s1);
    // T1 = S1^2 per draw, so E T1 = (E S1)^2 + Var S1; check against the
    // sample's own variance rather than invent an eighth-moment closed form.
    REQUIRE(std::abs(t1 - (es1 * es1 + var_s1)) <= 4.0 * se_t1);
}

TEST_CASE("qe statistic is phase invariant", "[qe_stats]") {
    const int n = 4, d = 9;
    IndexSetT t = stats::build_index_set(n, 0.25);
    OperatorBlock g = sphere::diagonal_symbol_block([](double s) { return s; }, n);
    UnitaryMatrix u = haar(d, 33);
    double x0 = stats::qe_statistic(g, u, t);

    RngStream rng = RngStream::derive(34, 0, 0);
    UnitaryMatrix u_rot = u;
    UnitaryMatrix u_fixed = u;
    for (int k = 0; k < d; ++k) {
        cplx ph = std::polar(1.0, rng.uniform_angle());
        for (int a = 0; a < d; ++a) u_rot(k, a) *= ph;
        auto fixed = linalg::fix_phase(u.row(k));
        for (int a = 0; a < d; ++a) u_fixed(k, a) = fixed[a];
    }
    REQUIRE(stats::qe_statistic(g, u_rot, t) == Catch::Approx(x0).epsilon(1e-12));
    REQUIRE(stats::qe_statistic(g, u_fixed, t) == Catch::Approx(x0).epsilon(1e-12));
}

TEST_CASE("gue means match exact Haar values for X at small dimensions", "[qe_stats][slow]") {
    for (int n : {4, 8, 16}) {
        const int d = 2 * n + 1;
        IndexSetT t = stats::build_index_set(n, 0.25);
        OperatorBlock g = sphere::diagonal_symbol_block([](double s) { return s; }, n);
        ensembles::WignerEnsembleSpec spec;
        spec.profile = ensembles::make_profile(ensembles::ProfileKind::Flat, d, {});
        RngStream rng = RngStream::derive(9000, n, 0);
        const int draws = 800;
        double sum = 0.0, sq = 0.0;
        for (int i = 0; i < draws; ++i) {
            auto h = ensembles::sample_wigner(spec, d, rng);
            auto eig = linalg::hermitian_eig(h, linalg::ResidualCheck::Spot);
            double x = stats::qe_statistic(g, eig.vectors, t);
            sum += x;
            sq += x * x;
        }
        double mean = sum / draws;
        double se = std::sqrt(std::max(0.0, sq / draws - mean * mean) / draws);
        REQUIRE(std::abs(mean - exact_haar_z(g, t)) <= 4.0 * se);
    }
}

TEST_CASE("local que statistic", "[qe_stats]") {
    const int d = 8;
    std::vector<cplx> flat(d, cplx(1.0 / std::sqrt(8.0), 0.0));
    std::vector<double> a(d, 0.0);
    a[0] = 1.0;
    a[3] = -1.0;
    REQUIRE(std::abs(stats::local_que_statistic(flat, a)) <= 1e-15);

    std::vector<cplx> delta(d, cplx(0.0, 0.0));
    delta[0] = 1.0;
    REQUIRE(stats::local_que_statistic(delta, a) == Catch::Approx(d / 2.0).epsilon(1e-15));

    std::vector<double> biased(d, 0.0);
    biased[0] = 1.0;
    biased[1] = -0.5;
    REQUIRE_THROWS_AS(stats::local_que_statistic(flat, biased), validation_error);
    std::vector<double> out_of_range(d, 0.0);
    out_of_range[0] = 1.5;
    out_of_range[1] = -1.5;
    REQUIRE_THROWS_AS(stats::local_que_statistic(flat, out_of_range), validation_error);
    std::vector<double> empty(d, 0.0);
    REQUIRE_THROWS_AS(stats::local_que_statistic(flat, empty), validation_error);
}

TEST_CASE("local que tails shrink with support size", "[qe_stats][slow]") {
    const int d = 65;
    RngStream rng = RngStream::derive(4242, 0, 0);
    int tail8 = 0, tail32 = 0;
    const int draws = 1000;
    auto weights = [](int support) {
        std::vector<double> a(d, 0.0);
        for (int i = 0; i < support / 2; ++i) a[i] = 1.0;
        for (int i = support / 2; i < support; ++i) a[i] = -1.0;
        return a;
    };
    auto a8 = weights(8), a32 = weights(32);
    for (int i = 0; i < draws; ++i) {
        auto u = linalg::haar_unitary(d, rng);
        if (std::abs(stats::local_que_statistic(u.row(0), a8)) > 1.0) ++tail8;
        if (std::abs(stats::local_que_statistic(u.row(0), a32)) > 1.0) ++tail32;
    }
    REQUIRE(tail8 <= draws * (1.0 / 8.0 + 0.05));  // inside the C(d^-e + 1/|a|) envelope
    REQUIRE(tail32 <= tail8);
}

TEST_CASE("empirical moments of scaled gue eigenvector entries", "[qe_stats][slow]") {
    const int n = 16, d = 33;
    IndexSetT t = stats::build_index_set(n, 0.25);
    const int k_mid = t.members[t.size() / 2] + n;

    ensembles::WignerEnsembleSpec spec;
    spec.profile = ensembles::make_profile(ensembles::ProfileKind::Flat, d, {});
    RngStream rng = RngStream::derive(606, 0, 0);
    const int draws = 4000;
    std::vector<std::vector<cplx>> tuples;
    tuples.reserve(draws);
    const double scale = std::sqrt(2.0 * d);
    for (int i = 0; i < draws; ++i) {
        auto h = ensembles::sample_wigner(spec, d, rng);
        auto eig = linalg::hermitian_eig(h, linalg::ResidualCheck::Spot);
        cplx ph = std::polar(1.0, rng.uniform_angle());
        tuples.push_back({scale * ph * eig.vectors(k_mid, 0), scale * ph * eig.vectors(k_mid, 1)});
    }

    MomentPattern m1;
    m1.z = {{0, 0}};
    m1.zbar = {{0, 0}};
    auto est1 = stats::empirical_moment(m1, tuples);
    REQUIRE(std::abs(est1.mean - oracle::wick_moment(m1)) <= 3.0 * est1.se);

    MomentPattern q1;
    q1.z = {{0, 0}, {0, 1}};
    q1.zbar = {{0, 0}, {0, 1}};
    auto estq = stats::empirical_moment(q1, tuples);
    REQUIRE(std::abs(estq.mean - oracle::wick_moment(q1)) <= 3.0 * estq.se);

    // Conjugation-unbalanced pattern: the random phase kills it.
    MomentPattern unb;
    unb.z = {{0, 0}, {0, 1}};
    unb.zbar = {{0, 0}};
    auto estu = stats::empirical_moment(unb, tuples);
    REQUIRE(std::abs(estu.mean) <= 4.0 * estu.se);
    REQUIRE(oracle::wick_moment(unb) == 0.0);

    REQUIRE_THROWS_AS(stats::empirical_moment(m1, std::span<const std::vector<cplx>>{}),
                      validation_error);
}

TEST_CASE("series aggregation", "[qe_stats]") {
    std::vector<double> zeros(10, 0.0);
    auto agg0 = stats::aggregate_series(zeros, zeros);
    for (double v : agg0.cesaro) REQUIRE(v == 0.0);
    for (double v : agg0.kolmogorov_partials) REQUIRE(v == 0.0);

    // X_N = 1/N (X_0 = 0): cesaro[M] = H_M / M, strictly decreasing for M >= 3.
    const int len = 40;
    std::vector<double> means(len, 0.0), vars(len, 0.0);
    for (int n = 1; n < len; ++n) {
        means[n] = 1.0 / n;
        vars[n] = 1.0 / (static_cast<double>(n) * n);
    }
    auto agg = stats::aggregate_series(means, vars);
    double harmonic = 0.0;
    for (int n = 1; n < len; ++n) {
        harmonic += 1.0 / n;
        REQUIRE(agg.cesaro[n] == Catch::Approx(harmonic / n).epsilon(1e-13));
    }
    for (int m = 3; m < len; ++m) REQUIRE(agg.cesaro[m] < agg.cesaro[m - 1]);
    // Kolmogorov partial sums of 1/N^4 stay bounded with vanishing increments.
    REQUIRE(agg.kolmogorov_partials[len - 1] < 1.1);
    REQUIRE(agg.kolmogorov_partials[len - 1] - agg.kolmogorov_partials[len - 2] < 1e-5);
}

TEST_CASE("loglog fit on an exact power law", "[qe_stats]") {
    std::vector<std::pair<double, double>> pairs;
    for (double d : {9.0, 17.0, 33.0, 65.0}) pairs.emplace_back(d, 10.0 / (d * d));
    auto fit = stats::loglog_fit(pairs);
    REQUIRE(fit.slope == Catch::Approx(-2.0).margin(1e-12));
    REQUIRE(fit.intercept == Catch::Approx(std::log(10.0)).margin(1e-12));
    REQUIRE(fit.r2 == Catch::Approx(1.0).margin(1e-12));

    pairs[2].second = 0.0;
    REQUIRE_THROWS_AS(stats::loglog_fit(pairs), validation_error);
    std::vector<std::pair<double, double>> two = {{1.0, 1.0}, {2.0, 0.5}};
    REQUIRE_THROWS_AS(stats::loglog_fit(two), validation_error);
}

TEST_CASE("haar closed form anchors the decay slope at -1", "[qe_stats]") {
    std::vector<std::pair<double, double>> pairs;
    for (int n : {8, 16, 32, 64}) {
        IndexSetT t = stats::build_index_set(n, 0.25);
        OperatorBlock g = sphere::diagonal_symbol_block([](double s) { return s; }, n);
        pairs.emplace_back(2.0 * n + 1.0, exact_haar_z(g, t));
    }
    auto fit = stats::loglog_fit(pairs);
    REQUIRE(std::abs(fit.slope - (-1.0)) <= 0.05);
}
