#pragma once

// The statistics under study: the admissible index set T, the quadratic-form
// deviations X_N and Z_N, azimuthal band statistics W_N(n), the S and T term
// decompositions of Z_N and Z_N^2, the local flatness statistic, empirical
// moments of scaled eigenvector entries, and series aggregation (Cesaro
// means, Kolmogorov partial sums, log-log decay fits).

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qelab/errors.hpp"
#include "qelab/linalg.hpp"
#include "qelab/oracle.hpp"
#include "qelab/sphere.hpp"

namespace qelab::stats {

using cplx = std::complex<double>;
using linalg::UnitaryMatrix;
using oracle::MomentEstimate;
using oracle::MomentPattern;
using sphere::OperatorBlock;

// Indices "in the bulk and near the edges": the union
//   [-N, -N + floor(N^{1/4})] u [-N + ceil(N^{1-nu}), N - ceil(N^{1-nu})]
//   u [N - floor(N^{1/4}), N],
// which is exactly the set of integers the real-endpoint intervals contain.
struct IndexSetT {
    int N = 0;
    double nu = 0.25;
    std::vector<int> members;  // sorted paper indices in [-N, N]

    int size() const { return static_cast<int>(members.size()); }
    double density() const { return static_cast<double>(size()) / (2 * N + 1); }
};

inline IndexSetT build_index_set(int N, double nu) {
    if (N < 0) throw validation_error("build_index_set: negative degree");
    if (!(nu > 0.0 && nu < 0.75))
        throw validation_error("build_index_set: nu must lie in (0, 3/4)");
    // Nudges keep exact powers (16^{1/4} = 2, 16^{3/4} = 8) stable against
    // last-ulp rounding of pow.
    int edge = static_cast<int>(std::floor(std::pow(N, 0.25) + 1e-9));
    int bulk = static_cast<int>(std::ceil(std::pow(N, 1.0 - nu) - 1e-9));
    std::vector<char> in(2 * N + 1, 0);
    auto mark = [&in, N](int lo, int hi) {
        lo = std::max(lo, -N);
        hi = std::min(hi, N);
        for (int k = lo; k <= hi; ++k) in[k + N] = 1;
    };
    mark(-N, -N + edge);
    mark(N - edge, N);
    mark(-N + bulk, N - bulk);
    IndexSetT t;
    t.N = N;
    t.nu = nu;
    for (int k = -N; k <= N; ++k)
        if (in[k + N]) t.members.push_back(k);
    return t;
}

// <A psi_k, psi_k> = sum_{a,b} A_ab u_k(a) conj(u_k(b)) for every k, with a
// fast path for diagonal blocks.
inline std::vector<cplx> diagonal_quadratic_forms(const OperatorBlock& block,
                                                  const UnitaryMatrix& u) {
    const int d = block.dim();
    if (u.dim() != d) throw validation_error("diagonal_quadratic_forms: dimension mismatch");
    std::vector<cplx> out(d);
    const int N = block.degree;
    if (block.is_diagonal()) {
        std::vector<double> b(d);
        for (int a = -N; a <= N; ++a) b[a + N] = block.elem(a, a).real();
        for (int k = 0; k < d; ++k) {
            std::span<const cplx> row = u.row(k);
            double acc = 0.0;
            for (int a = 0; a < d; ++a) acc += b[a] * std::norm(row[a]);
            out[k] = acc;
        }
        return out;
    }
    for (int k = 0; k < d; ++k) {
        std::span<const cplx> row = u.row(k);
        cplx acc(0.0, 0.0);
        for (int a = 0; a < d; ++a) {
            cplx inner(0.0, 0.0);
            const cplx* arow = block.elements.data() + static_cast<std::size_t>(a) * d;
            for (int b = 0; b < d; ++b) inner += arow[b] * std::conj(row[b]);
            acc += row[a] * inner;
        }
        out[k] = acc;
    }
    return out;
}

// X_N = (1/d_N) sum_{k in T} |<A psi_k, psi_k> - omega(A)|^2.  Note the
// normalization stays 1/d_N even though only |T| terms are summed.
inline double qe_statistic(const OperatorBlock& block, const UnitaryMatrix& u, const IndexSetT& t) {
    if (block.degree != t.N) throw validation_error("qe_statistic: block degree differs from T");
    const int d = block.dim();
    if (u.dim() != d) throw validation_error("qe_statistic: dimension mismatch");
    std::vector<cplx> q = diagonal_quadratic_forms(block, u);
    double acc = 0.0;
    for (int k : t.members) acc += std::norm(q[k + t.N] - block.omega);
    return acc / d;
}

// W_N(n): the statistic of the n-th azimuthal band with the band's own
// Liouville average (omega for n = 0, zero otherwise).
inline double band_statistic(const OperatorBlock& block, const UnitaryMatrix& u, const IndexSetT& t,
                             int n) {
    return qe_statistic(sphere::fourier_band(block, n), u, t);
}

struct RotinvTerms {
    double S1 = 0.0, S2 = 0.0;
    double T1 = 0.0, T2 = 0.0, T3 = 0.0, T4 = 0.0, T5 = 0.0;
    double Z = 0.0;

    double s_sum() const { return S1 + S2; }
    double t_sum() const { return T1 + T2 + T3 + T4 + T5; }
};

// The S and T terms of the rotationally invariant second-moment expansion.
// The nested sums over (k, j in T; alpha, beta, eta, xi) factor exactly into
// powers of p_k = sum_a B_aa |u_k(a)|^2, which is how they are evaluated;
// per draw S1 + S2 = Z_N and T1 + ... + T5 = Z_N^2 hold as identities.
inline RotinvTerms rotinv_decomposition(const OperatorBlock& block, const UnitaryMatrix& u,
                                        const IndexSetT& t) {
    if (!block.is_diagonal())
        throw validation_error("rotinv_decomposition: block is not rotationally invariant");
    if (block.degree != t.N) throw validation_error("rotinv_decomposition: block degree differs from T");
    const int d = block.dim();
    if (u.dim() != d) throw validation_error("rotinv_decomposition: dimension mismatch");

    std::vector<cplx> q = diagonal_quadratic_forms(block, u);
    const double w = block.omega;
    const double tsz = static_cast<double>(t.size());
    double sum_p = 0.0, sum_p2 = 0.0, z = 0.0;
    for (int k : t.members) {
        double p = q[k + t.N].real();
        sum_p += p;
        sum_p2 += p * p;
        z += (p - w) * (p - w);
    }
    const double dd = static_cast<double>(d);
    RotinvTerms out;
    out.S1 = sum_p2 / dd;
    out.S2 = -2.0 * w * sum_p / dd + tsz * w * w / dd;
    out.T1 = sum_p2 * sum_p2 / (dd * dd);
    out.T2 = -4.0 * w * sum_p2 * sum_p / (dd * dd);
    out.T3 = 2.0 * w * w * tsz * sum_p2 / (dd * dd);
    out.T4 = 4.0 * w * w * sum_p * sum_p / (dd * dd);
    out.T5 = -4.0 * w * w * w * tsz * sum_p / (dd * dd) + tsz * tsz * std::pow(w, 4) / (dd * dd);
    out.Z = z / dd;
    return out;
}

// (d/|a|) sum_a a(alpha) |u(alpha)|^2 for a mean-zero test weight a with
// values in [-1, 1].
inline double local_que_statistic(std::span<const cplx> u, std::span<const double> a) {
    if (u.size() != a.size()) throw validation_error("local_que_statistic: size mismatch");
    const std::size_t d = u.size();
    std::size_t support = 0;
    double sum_a = 0.0;
    for (double v : a) {
        if (v < -1.0 || v > 1.0)
            throw validation_error("local_que_statistic: weight outside [-1, 1]");
        if (v != 0.0) ++support;
        sum_a += v;
    }
    if (support == 0) throw validation_error("local_que_statistic: empty support");
    if (std::abs(sum_a) > 1e-12) throw validation_error("local_que_statistic: weights are not mean-zero");
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) acc += a[i] * std::norm(u[i]);
    return static_cast<double>(d) / static_cast<double>(support) * acc;
}

// Sample mean of the pattern polynomial over tuples of scaled eigenvector
// entries.  Each tuple carries one value per distinct pattern variable, in
// MomentPattern::variables() order.
inline MomentEstimate empirical_moment(const MomentPattern& pattern,
                                       std::span<const std::vector<cplx>> samples) {
    if (samples.empty()) throw validation_error("empirical_moment: no samples");
    const auto vars = pattern.variables();
    std::vector<std::size_t> z_idx, zbar_idx;
    for (const auto& s : pattern.z) z_idx.push_back(pattern.variable_index(s));
    for (const auto& s : pattern.zbar) zbar_idx.push_back(pattern.variable_index(s));

    cplx sum(0.0, 0.0);
    double sum_re2 = 0.0, sum_im2 = 0.0;
    for (const auto& tuple : samples) {
        if (tuple.size() < vars.size())
            throw validation_error("empirical_moment: sample tuple shorter than pattern variables");
        cplx prod(1.0, 0.0);
        for (std::size_t i : z_idx) prod *= tuple[i];
        for (std::size_t i : zbar_idx) prod *= std::conj(tuple[i]);
        sum += prod;
        sum_re2 += prod.real() * prod.real();
        sum_im2 += prod.imag() * prod.imag();
    }
    const double n = static_cast<double>(samples.size());
    cplx mean = sum / n;
    double var = std::max(0.0, sum_re2 / n - mean.real() * mean.real()) +
                 std::max(0.0, sum_im2 / n - mean.imag() * mean.imag());
    return {mean, std::sqrt(var / n), samples.size()};
}

struct SeriesAggregates {
    std::vector<double> cesaro;               // cesaro[M] = (1/M) sum_{N<=M} mean_N, M >= 1
    std::vector<double> kolmogorov_partials;  // sum_{1<=N<=M} var_N / N^2
};

// means and variances are indexed by consecutive N starting from 0.
inline SeriesAggregates aggregate_series(std::span<const double> means,
                                         std::span<const double> variances) {
    if (means.size() != variances.size())
        throw validation_error("aggregate_series: means/variances size mismatch");
    SeriesAggregates out;
    out.cesaro.resize(means.size());
    out.kolmogorov_partials.resize(means.size());
    double run = 0.0, kol = 0.0;
    for (std::size_t m = 0; m < means.size(); ++m) {
        run += means[m];
        if (m >= 1) kol += variances[m] / (static_cast<double>(m) * m);
        out.cesaro[m] = (m == 0) ? means[0] : run / static_cast<double>(m);
        out.kolmogorov_partials[m] = kol;
    }
    return out;
}

struct LogLogFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 1.0;
};

// Ordinary least squares on (log x, log y); every y must be positive.
inline LogLogFit loglog_fit(std::span<const std::pair<double, double>> pairs) {
    if (pairs.size() < 3) throw validation_error("loglog_fit: need at least 3 pairs");
    std::vector<double> lx, ly;
    for (const auto& [x, y] : pairs) {
        if (!(y > 0.0) || !(x > 0.0))
            throw validation_error("loglog_fit: nonpositive value at x = " + std::to_string(x));
        lx.push_back(std::log(x));
        ly.push_back(std::log(y));
    }
    const double n = static_cast<double>(pairs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
        syy += (ly[i] - my) * (ly[i] - my);
    }
    if (sxx == 0.0) throw validation_error("loglog_fit: degenerate abscissae");
    LogLogFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ss_res = syy - fit.slope * sxy;
    fit.r2 = (syy > 0.0) ? 1.0 - ss_res / syy : 1.0;
    return fit;
}

// Per-draw record of every statistic produced by one (N, draw) work item.
struct QEReport {
    int N = 0;
    long draw = 0;
    double X = 0.0;
    bool has_rotinv = false;
    RotinvTerms rotinv;            // valid when has_rotinv
    int band_limit = 0;            // W holds indices -band_limit..band_limit
    std::vector<double> W;         // size 2*band_limit + 1, may be empty
    std::vector<double> local_que; // optional per-support statistics
};

}  // namespace qelab::stats
