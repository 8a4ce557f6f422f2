#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <vector>

#include "qelab/ensembles.hpp"
#include "qelab/linalg.hpp"
#include "qelab/oracle.hpp"

using namespace qelab;
using ensembles::EntryLaw;
using ensembles::ProfileKind;
using ensembles::VarianceProfile;
using ensembles::WignerEnsembleSpec;
using linalg::cplx;

TEST_CASE("flat profile", "[ensembles]") {
    VarianceProfile p = ensembles::make_profile(ProfileKind::Flat, 5, {});
    for (double v : p.sigma2) REQUIRE(v == 0.2);
    for (int k = 0; k < 5; ++k) REQUIRE(p.column_sum(k) == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("banded profile columns sum to one", "[ensembles]") {
    const double params[] = {0.5, 1.0};
    VarianceProfile p = ensembles::make_profile(ProfileKind::Banded, 5, params);
    for (int k = 0; k < 5; ++k) REQUIRE(std::abs(p.column_sum(k) - 1.0) <= 1e-12);
    for (int j = 0; j < 5; ++j)
        for (int k = 0; k < 5; ++k) REQUIRE(p(j, k) == p(k, j));
    REQUIRE(p.min_entry() >= 1.0 / (4.0 * 5));
    REQUIRE(p.max_entry() <= 4.0 / 5);
}

TEST_CASE("two-block profile respects bounds", "[ensembles]") {
    const double params[] = {0.3};
    VarianceProfile p = ensembles::make_profile(ProfileKind::TwoBlock, 4, params, 2.0);
    for (int k = 0; k < 4; ++k) REQUIRE(std::abs(p.column_sum(k) - 1.0) <= 1e-12);
    REQUIRE(p.min_entry() >= 1.0 / (2.0 * 4));

    // Odd dimension: the second block weight rebalances, sums stay exact.
    VarianceProfile podd = ensembles::make_profile(ProfileKind::TwoBlock, 5, params);
    for (int k = 0; k < 5; ++k) REQUIRE(std::abs(podd.column_sum(k) - 1.0) <= 1e-12);
    for (int j = 0; j < 5; ++j)
        for (int k = 0; k < 5; ++k) REQUIRE(podd(j, k) == podd(k, j));
}

TEST_CASE("profile parameter violations are rejected with the failing invariant", "[ensembles]") {
    const double too_heavy[] = {0.9, 1.0};
    REQUIRE_THROWS_WITH(ensembles::make_profile(ProfileKind::Banded, 5, too_heavy),
                        Catch::Matchers::ContainsSubstring("c1"));
    const double big_rho[] = {3.5};
    REQUIRE_THROWS_AS(ensembles::make_profile(ProfileKind::TwoBlock, 4, big_rho), validation_error);
    const double bad_width[] = {0.2, 9.0};
    REQUIRE_THROWS_AS(ensembles::make_profile(ProfileKind::Banded, 5, bad_width), validation_error);
}

TEST_CASE("rademacher entries have exact modulus", "[ensembles]") {
    WignerEnsembleSpec spec;
    spec.law = EntryLaw::ComplexRademacher;
    spec.profile = ensembles::make_profile(ProfileKind::Flat, 3, {});
    RngStream rng = RngStream::derive(5, 0, 0);
    for (int rep = 0; rep < 50; ++rep) {
        auto h = ensembles::sample_wigner(spec, 3, rng);
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) {
                if (j == k) {
                    REQUIRE(std::abs(std::abs(h(j, j).real()) - 1.0 / std::sqrt(3.0)) <= 1e-15);
                    REQUIRE(h(j, j).imag() == 0.0);
                } else {
                    REQUIRE(std::abs(std::abs(h(j, k)) - 1.0 / std::sqrt(3.0)) <= 1e-15);
                }
            }
    }
}

TEST_CASE("sampled matrices are exactly hermitian", "[ensembles]") {
    for (EntryLaw law : {EntryLaw::ComplexGaussian, EntryLaw::ComplexRademacher, EntryLaw::ComplexUniform}) {
        WignerEnsembleSpec spec;
        spec.law = law;
        spec.profile = ensembles::make_profile(ProfileKind::Flat, 7, {});
        RngStream rng = RngStream::derive(9, static_cast<int>(law), 0);
        auto h = ensembles::sample_wigner(spec, 7, rng);
        for (int j = 0; j < 7; ++j)
            for (int k = 0; k < 7; ++k) REQUIRE(h(j, k) == std::conj(h(k, j)));
    }
}

TEST_CASE("gaussian flat entry variance matches profile", "[ensembles]") {
    WignerEnsembleSpec spec;
    spec.profile = ensembles::make_profile(ProfileKind::Flat, 8, {});
    RngStream rng = RngStream::derive(21, 0, 0);
    const int n = 10000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        auto h = ensembles::sample_wigner(spec, 8, rng);
        double v = std::norm(h(0, 1));
        sum += v;
        sum2 += v * v;
    }
    double mean = sum / n;
    double se = std::sqrt(std::max(0.0, sum2 / n - mean * mean) / n);
    REQUIRE(std::abs(mean - 1.0 / 8.0) <= 3.0 * se);
}

TEST_CASE("validate_ensemble passes a GUE-class spec", "[ensembles][slow]") {
    WignerEnsembleSpec spec;
    spec.profile = ensembles::make_profile(ProfileKind::Flat, 16, {});
    RngStream rng = RngStream::derive(77, 0, 0);
    auto diag = ensembles::validate_ensemble(spec, 16, 10000, rng);
    INFO(diag.failure);
    REQUIRE(diag.all_ok());
}

TEST_CASE("validate_ensemble flags a planted unnormalized profile", "[ensembles]") {
    WignerEnsembleSpec spec;
    spec.profile = ensembles::make_profile(ProfileKind::Flat, 6, {});
    for (double& v : spec.profile.sigma2) v *= 1.1;  // column sums 1.1
    RngStream rng = RngStream::derive(78, 0, 0);
    auto diag = ensembles::validate_ensemble(spec, 6, 2000, rng);
    REQUIRE_FALSE(diag.normalization_ok);
    REQUIRE(diag.failure.find("normalization") != std::string::npos);
}

TEST_CASE("rademacher and uniform laws satisfy the moment condition", "[ensembles]") {
    for (EntryLaw law : {EntryLaw::ComplexRademacher, EntryLaw::ComplexUniform}) {
        WignerEnsembleSpec spec;
        spec.law = law;
        spec.profile = ensembles::make_profile(ProfileKind::Flat, 8, {});
        RngStream rng = RngStream::derive(101, static_cast<int>(law), 0);
        auto diag = ensembles::validate_ensemble(spec, 8, 4000, rng);
        INFO(ensembles::law_name(law) << ": " << diag.failure);
        REQUIRE(diag.all_ok());
    }
}

TEST_CASE("validate_ensemble rejects tiny sample counts", "[ensembles]") {
    WignerEnsembleSpec spec;
    spec.profile = ensembles::make_profile(ProfileKind::Flat, 4, {});
    RngStream rng(1);
    REQUIRE_THROWS_AS(ensembles::validate_ensemble(spec, 4, 100, rng), validation_error);
}

TEST_CASE("flat gaussian ensemble reproduces Haar eigenvector moments", "[ensembles][slow]") {
    // The bridge the whole laboratory leans on: GUE eigenvectors are Haar.
    const int d = 9;
    WignerEnsembleSpec spec;
    spec.profile = ensembles::make_profile(ProfileKind::Flat, d, {});
    RngStream rng = RngStream::derive(31, 0, 0);
    const int draws = 1500;
    double s4 = 0.0, q4 = 0.0, s22 = 0.0, q22 = 0.0;
    for (int t = 0; t < draws; ++t) {
        auto h = ensembles::sample_wigner(spec, d, rng);
        auto eig = linalg::hermitian_eig(h, linalg::ResidualCheck::Spot);
        double m4 = 0.0, m22 = 0.0;
        for (int k = 0; k < d; ++k) {
            double a0 = std::norm(eig.vectors(k, 0));
            double a1 = std::norm(eig.vectors(k, 1));
            m4 += a0 * a0 / d;
            m22 += a0 * a1 / d;
        }
        s4 += m4;
        q4 += m4 * m4;
        s22 += m22;
        q22 += m22 * m22;
    }
    const int e2[] = {2};
    const int e11[] = {1, 1};
    double target4 = oracle::dirichlet_moment(d, e2).value();
    double target22 = oracle::dirichlet_moment(d, e11).value();
    double mean4 = s4 / draws, mean22 = s22 / draws;
    double se4 = std::sqrt(std::max(0.0, q4 / draws - mean4 * mean4) / draws);
    double se22 = std::sqrt(std::max(0.0, q22 / draws - mean22 * mean22) / draws);
    REQUIRE(std::abs(mean4 - target4) <= 4.0 * se4);
    REQUIRE(std::abs(mean22 - target22) <= 4.0 * se22);
}
