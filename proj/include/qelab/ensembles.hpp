#pragma once

// Generalized Wigner sampling: entry laws, variance profiles, and a Monte
// Carlo self-diagnostic for the four defining conditions (unit column sums,
// order-1/d variance bounds, real/imaginary nondegeneracy, all-moment
// bounds after sqrt(d) scaling).

#include <array>
#include <cmath>
#include <complex>
#include <span>
#include <string>
#include <vector>

#include "qelab/errors.hpp"
#include "qelab/linalg.hpp"
#include "qelab/rng.hpp"

namespace qelab::ensembles {

using cplx = std::complex<double>;

struct VarianceProfile {
    int dim = 0;
    std::vector<double> sigma2;  // row-major d x d, symmetric

    double operator()(int j, int k) const { return sigma2[static_cast<std::size_t>(j) * dim + k]; }

    double column_sum(int k) const {
        double s = 0.0;
        for (int j = 0; j < dim; ++j) s += (*this)(j, k);
        return s;
    }

    double min_entry() const {
        double m = sigma2.empty() ? 0.0 : sigma2[0];
        for (double v : sigma2) m = std::min(m, v);
        return m;
    }

    double max_entry() const {
        double m = 0.0;
        for (double v : sigma2) m = std::max(m, v);
        return m;
    }

    // Throws naming the first violated invariant.
    void validate(double c1) const {
        if (dim < 1 || sigma2.size() != static_cast<std::size_t>(dim) * dim)
            throw validation_error("VarianceProfile: bad dimensions");
        for (int j = 0; j < dim; ++j)
            for (int k = j + 1; k < dim; ++k)
                if ((*this)(j, k) != (*this)(k, j))
                    throw validation_error("VarianceProfile: sigma2 is not symmetric");
        for (int k = 0; k < dim; ++k)
            if (std::abs(column_sum(k) - 1.0) > 1e-12)
                throw validation_error("VarianceProfile: column " + std::to_string(k) +
                                       " does not sum to 1 (normalization condition)");
        double lo = 1.0 / (c1 * dim), hi = c1 / dim;
        if (min_entry() < lo - 1e-15 || max_entry() > hi + 1e-15)
            throw validation_error("VarianceProfile: entries leave [(c1 d)^-1, c1/d]");
    }
};

enum class ProfileKind { Flat, Banded, TwoBlock };

// Flat: 1/d everywhere.
// Banded (params: mix weight w, integer half-width): (1-w)/d plus a wrapped
// symmetric band indicator normalized by its constant column count, so
// columns sum to 1 exactly without a rebalancing pass.
// TwoBlock (params: rho): block weights (1+rho)/d and (1+rho')/d inside the
// two halves with the off-block weight chosen so every column sums to 1.
inline VarianceProfile make_profile(ProfileKind kind, int d, std::span<const double> params,
                                    double c1 = 4.0) {
    if (d < 1) throw validation_error("make_profile: dimension must be >= 1");
    VarianceProfile p;
    p.dim = d;
    p.sigma2.assign(static_cast<std::size_t>(d) * d, 0.0);
    auto at = [&p, d](int j, int k) -> double& { return p.sigma2[static_cast<std::size_t>(j) * d + k]; };

    switch (kind) {
        case ProfileKind::Flat: {
            for (double& v : p.sigma2) v = 1.0 / d;
            break;
        }
        case ProfileKind::Banded: {
            if (params.size() != 2) throw validation_error("make_profile: banded needs {w, width}");
            double w = params[0];
            int width = static_cast<int>(params[1]);
            if (w < 0.0 || w >= 1.0) throw validation_error("make_profile: band weight outside [0,1)");
            if (width < 0 || 2 * width + 1 > d)
                throw validation_error("make_profile: band width outside admissible range");
            int count = 2 * width + 1;
            for (int j = 0; j < d; ++j)
                for (int k = 0; k < d; ++k) {
                    int dist = std::abs(j - k);
                    dist = std::min(dist, d - dist);  // wrapped distance keeps columns uniform
                    at(j, k) = (1.0 - w) / d + (dist <= width ? w / count : 0.0);
                }
            break;
        }
        case ProfileKind::TwoBlock: {
            if (params.size() != 1) throw validation_error("make_profile: two-block needs {rho}");
            double rho = params[0];
            int d1 = (d + 1) / 2, d2 = d - d1;
            if (d2 == 0) {
                for (double& v : p.sigma2) v = 1.0 / d;
                break;
            }
            double rho_off = rho * d1 / d2;           // off-block deficit
            double rho2 = rho * (static_cast<double>(d1) * d1) / (static_cast<double>(d2) * d2);
            for (int j = 0; j < d; ++j)
                for (int k = 0; k < d; ++k) {
                    bool j1 = j < d1, k1 = k < d1;
                    if (j1 && k1)
                        at(j, k) = (1.0 + rho) / d;
                    else if (!j1 && !k1)
                        at(j, k) = (1.0 + rho2) / d;
                    else
                        at(j, k) = (1.0 - rho_off) / d;
                }
            break;
        }
    }
    p.validate(c1);
    return p;
}

enum class EntryLaw { ComplexGaussian, ComplexRademacher, ComplexUniform };

inline const char* law_name(EntryLaw law) {
    switch (law) {
        case EntryLaw::ComplexGaussian: return "complex-gaussian";
        case EntryLaw::ComplexRademacher: return "complex-rademacher";
        case EntryLaw::ComplexUniform: return "complex-uniform";
    }
    return "?";
}

struct WignerEnsembleSpec {
    EntryLaw law = EntryLaw::ComplexGaussian;
    VarianceProfile profile;
    double c1 = 4.0;
    double c2 = 0.25;

    void validate() const {
        if (c1 <= 0.0 || c2 <= 0.0) throw validation_error("WignerEnsembleSpec: c1, c2 must be positive");
        profile.validate(c1);
    }
};

namespace detail {

// Unit-variance complex draws (E|x|^2 = 1); diagonal entries use the real
// companion law with E x^2 = 1.
inline cplx offdiag_unit(EntryLaw law, RngStream& rng) {
    switch (law) {
        case EntryLaw::ComplexGaussian:
            return rng.complex_gaussian_pair() / std::sqrt(2.0);
        case EntryLaw::ComplexRademacher:
            return cplx(rng.sign(), rng.sign()) / std::sqrt(2.0);
        case EntryLaw::ComplexUniform: {
            double re = rng.uniform(-1.0, 1.0), im = rng.uniform(-1.0, 1.0);
            return std::sqrt(1.5) * cplx(re, im);
        }
    }
    return {};
}

inline double diag_unit(EntryLaw law, RngStream& rng) {
    switch (law) {
        case EntryLaw::ComplexGaussian: return rng.gaussian();
        case EntryLaw::ComplexRademacher: return rng.sign();
        case EntryLaw::ComplexUniform: return std::sqrt(3.0) * rng.uniform(-1.0, 1.0);
    }
    return 0.0;
}

}  // namespace detail

// Entries independent for j <= k, h_kj = conj(h_jk), E h_jk = 0 and
// E |h_jk|^2 = sigma2_jk; diagonal entries real.
inline linalg::HermitianMatrix sample_wigner(const WignerEnsembleSpec& spec, int d, RngStream& rng) {
    if (spec.profile.dim != d) throw validation_error("sample_wigner: profile dimension mismatch");
    std::vector<cplx> a(static_cast<std::size_t>(d) * d, cplx(0.0, 0.0));
    for (int j = 0; j < d; ++j) {
        a[static_cast<std::size_t>(j) * d + j] =
            cplx(std::sqrt(spec.profile(j, j)) * detail::diag_unit(spec.law, rng), 0.0);
        for (int k = j + 1; k < d; ++k) {
            cplx h = std::sqrt(spec.profile(j, k)) * detail::offdiag_unit(spec.law, rng);
            a[static_cast<std::size_t>(j) * d + k] = h;
            a[static_cast<std::size_t>(k) * d + j] = std::conj(h);
        }
    }
    return linalg::HermitianMatrix(d, std::move(a));
}

struct EnsembleDiagnostics {
    bool normalization_ok = false;   // unit column sums + centered entries
    bool variance_bounds_ok = false; // profile bounds + empirical second moments
    bool nondegeneracy_ok = false;   // 2x2 real/imag covariance floor
    bool moments_ok = false;         // E|sqrt(d) h|^q <= C_q for q in {2,4,6,8}
    std::string failure;             // names the first violated condition

    double max_column_sum_error = 0.0;
    double mean_z = 0.0;              // grand standardized mean of entries
    double variance_ratio = 0.0;      // pooled empirical |h|^2 over profile total
    double variance_ratio_se = 0.0;
    double cov_min_eigen_scaled = 0.0;  // d * sigma2_min * lambda_min of pooled unit covariance
    std::array<double, 4> scaled_moments{};  // q = 2,4,6,8, pooled over off-diagonal entries
    std::array<double, 4> moment_bounds{};

    bool all_ok() const { return normalization_ok && variance_bounds_ok && nondegeneracy_ok && moments_ok; }
};

// Theoretical bound for E|x|^q of the unit off-diagonal law, q = 2m.
inline double unit_law_abs_moment(EntryLaw law, int m) {
    switch (law) {
        case EntryLaw::ComplexGaussian: {
            double f = 1.0;
            for (int i = 2; i <= m; ++i) f *= i;
            return f;  // E|g|^{2m} = m! for E|g|^2 = 1
        }
        case EntryLaw::ComplexRademacher:
            return 1.0;  // |x| = 1 surely
        case EntryLaw::ComplexUniform: {
            // x = sqrt(3/2)(u1 + i u2): |x|^2 = 1.5 (u1^2 + u2^2),
            // E (u1^2+u2^2)^m = sum_j C(m,j) / ((2j+1)(2(m-j)+1)).
            double s = 0.0;
            for (int j = 0; j <= m; ++j) {
                double c = 1.0;
                for (int i = 0; i < j; ++i) c = c * (m - i) / (i + 1);
                s += c / ((2.0 * j + 1.0) * (2.0 * (m - j) + 1.0));
            }
            return std::pow(1.5, m) * s;
        }
    }
    return 0.0;
}

// Empirical check of the four generalized-Wigner conditions; any condition
// violated beyond 4 standard errors flags the diagnostic and names it.
inline EnsembleDiagnostics validate_ensemble(const WignerEnsembleSpec& spec, int d,
                                             std::size_t n_samples, RngStream& rng) {
    if (n_samples < 1000) throw validation_error("validate_ensemble: need at least 10^3 samples");
    if (spec.profile.dim != d) throw validation_error("validate_ensemble: profile dimension mismatch");

    EnsembleDiagnostics diag;

    // Accumulators over the upper triangle including the diagonal.
    const std::size_t n_off = static_cast<std::size_t>(d) * (d - 1) / 2;
    cplx mean_sum(0.0, 0.0);
    double abs2_sum = 0.0, abs2_sq_sum = 0.0;
    double c_rr = 0.0, c_ii = 0.0, c_ri = 0.0;  // pooled covariance of unit-scaled off-diag
    std::array<double, 4> momq{};               // pooled |sqrt(d) h|^{2,4,6,8} over off-diag
    std::array<double, 4> momq_sq{};
    double sigma2_total = 0.0;
    for (int j = 0; j < d; ++j)
        for (int k = j; k < d; ++k) sigma2_total += spec.profile(j, k);

    for (std::size_t s = 0; s < n_samples; ++s) {
        linalg::HermitianMatrix h = sample_wigner(spec, d, rng);
        for (int j = 0; j < d; ++j) {
            for (int k = j; k < d; ++k) {
                cplx v = h(j, k);
                mean_sum += v;
                double a2 = std::norm(v);
                abs2_sum += a2;
                abs2_sq_sum += a2 * a2;
                if (k > j) {
                    double inv_s = 1.0 / std::sqrt(spec.profile(j, k));
                    double xr = v.real() * inv_s, xi = v.imag() * inv_s;
                    c_rr += xr * xr;
                    c_ii += xi * xi;
                    c_ri += xr * xi;
                    double sd2 = d * a2;
                    double pw = sd2;
                    for (int q = 0; q < 4; ++q) {
                        momq[q] += pw;
                        momq_sq[q] += pw * pw;
                        pw *= sd2;
                    }
                }
            }
        }
    }

    const double n_entries = static_cast<double>(n_samples) * (n_off + d);
    const double n_offpool = static_cast<double>(n_samples) * n_off;

    // Condition 1: normalization (exact on the profile) and centering.
    for (int k = 0; k < d; ++k)
        diag.max_column_sum_error =
            std::max(diag.max_column_sum_error, std::abs(spec.profile.column_sum(k) - 1.0));
    // Grand mean of entries: each entry has per-component variance <= sigma2,
    // so a conservative standard error uses the pooled sigma2 average.
    double se_mean = std::sqrt(sigma2_total * n_samples) / n_entries;
    diag.mean_z = std::abs(mean_sum) / n_entries / se_mean;
    diag.normalization_ok = diag.max_column_sum_error <= 1e-12 && diag.mean_z <= 4.0;
    if (!diag.normalization_ok) diag.failure = "normalization condition (unit column sums / centering)";

    // Condition 2: variance bounds and empirical second moments.
    double lo = 1.0 / (spec.c1 * d), hi = spec.c1 / d;
    bool bounds = spec.profile.min_entry() >= lo - 1e-15 && spec.profile.max_entry() <= hi + 1e-15;
    double mean_abs2 = abs2_sum / n_entries;
    double var_abs2 = std::max(0.0, abs2_sq_sum / n_entries - mean_abs2 * mean_abs2);
    diag.variance_ratio = abs2_sum / (static_cast<double>(n_samples) * sigma2_total);
    diag.variance_ratio_se =
        std::sqrt(var_abs2 * n_entries) / (static_cast<double>(n_samples) * sigma2_total);
    diag.variance_bounds_ok = bounds && std::abs(diag.variance_ratio - 1.0) <= 4.0 * diag.variance_ratio_se;
    if (diag.failure.empty() && !diag.variance_bounds_ok)
        diag.failure = "variance bounds ((c1 d)^-1 <= sigma2 <= c1/d / second moments)";

    // Condition 3: nondegeneracy of the 2x2 real/imag covariance, pooled over
    // off-diagonal entries after scaling each to unit total variance.
    if (d > 1) {
        c_rr /= n_offpool;
        c_ii /= n_offpool;
        c_ri /= n_offpool;
        double tr = c_rr + c_ii, det = c_rr * c_ii - c_ri * c_ri;
        double lam_min = 0.5 * (tr - std::sqrt(std::max(0.0, tr * tr - 4.0 * det)));
        diag.cov_min_eigen_scaled = d * spec.profile.min_entry() * lam_min;
        double se = d * spec.profile.min_entry() * std::sqrt(2.0 / n_offpool);
        diag.nondegeneracy_ok = diag.cov_min_eigen_scaled >= spec.c2 - 4.0 * se;
    } else {
        diag.nondegeneracy_ok = true;  // no off-diagonal entries at d = 1
    }
    if (diag.failure.empty() && !diag.nondegeneracy_ok)
        diag.failure = "real/imag covariance nondegeneracy (c2 bound)";

    // Condition 4: moment bounds for q = 2,4,6,8.
    diag.moments_ok = true;
    for (int q = 0; q < 4; ++q) {
        int m = q + 1;
        diag.scaled_moments[q] = (d > 1) ? momq[q] / n_offpool : 0.0;
        diag.moment_bounds[q] = unit_law_abs_moment(spec.law, m) * std::pow(spec.c1, m);
        double var = (d > 1) ? std::max(0.0, momq_sq[q] / n_offpool -
                                                 diag.scaled_moments[q] * diag.scaled_moments[q])
                             : 0.0;
        double se = std::sqrt(var / std::max(1.0, n_offpool));
        if (diag.scaled_moments[q] > diag.moment_bounds[q] + 4.0 * se) diag.moments_ok = false;
    }
    if (diag.failure.empty() && !diag.moments_ok) diag.failure = "moment bounds E|sqrt(d) h|^q <= C_q";

    return diag;
}

}  // namespace qelab::ensembles
