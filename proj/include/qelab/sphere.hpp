#pragma once

// Spherical harmonics on a Gauss-Legendre x uniform-azimuth grid, the two
// implemented operator families (multiplication by a function and diagonal
// azimuthal symbols), their matrix-element blocks restricted to a degree-N
// eigenspace, Liouville averages, Weyl traces, and azimuthal Fourier bands.
//
// Harmonics are orthonormal under the raw surface measure (total mass 4 pi),
// fully normalized and with Condon-Shortley phase, so omega for a
// multiplication operator is (1/4pi) times its surface integral.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qelab/errors.hpp"

namespace qelab::sphere {

using cplx = std::complex<double>;
inline constexpr double four_pi = 4.0 * std::numbers::pi;

struct SphericalGrid {
    int max_degree = 0;   // largest harmonic degree the grid integrates exactly
    int band_limit = 0;   // largest test-function azimuthal band admitted
    std::vector<double> x;   // Gauss-Legendre nodes in cos(theta)
    std::vector<double> wx;  // matching weights (sum to 2)
    int n_phi = 0;

    int n_theta() const { return static_cast<int>(x.size()); }
    double phi(int j) const { return 2.0 * std::numbers::pi * j / n_phi; }
    double w_phi() const { return 2.0 * std::numbers::pi / n_phi; }
};

namespace detail {

// Nodes and weights for n-point Gauss-Legendre on [-1, 1] by Newton iteration
// on the three-term recurrence.
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
    x.assign(n, 0.0);
    w.assign(n, 0.0);
    const int m = (n + 1) / 2;
    for (int i = 0; i < m; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
            }
            pp = n * (z * p0 - p1) / (z * z - 1.0);
            double dz = p0 / pp;
            z -= dz;
            if (std::abs(dz) < 1e-15) break;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        double wi = 2.0 / ((1.0 - z * z) * pp * pp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
}

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double fa, double fm, double fb, double whole, double tol,
                               int depth) {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0) return left + right;
    if (std::abs(left + right - whole) <= 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

inline double integrate_1d(const std::function<double(double)>& f, double a, double b, double tol) {
    double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 48);
}

}  // namespace detail

// Guarantees exact integration of Y_N^a * conj(Y_N^b) * (band-limit-L test
// function) for all N <= N_max: Gauss-Legendre is exact through polynomial
// degree 2 n_theta - 1 and the uniform azimuth grid through frequency
// n_phi - 1.
inline SphericalGrid build_grid(int n_max, int band_limit) {
    if (n_max < 0 || band_limit < 0) throw validation_error("build_grid: negative size");
    SphericalGrid g;
    g.max_degree = n_max;
    g.band_limit = band_limit;
    int n_theta = n_max + (band_limit + 1) / 2 + 1;
    detail::gauss_legendre(n_theta, g.x, g.wx);
    g.n_phi = 2 * n_max + band_limit + 1;
    return g;
}

// Values of the degree-N harmonics at the grid nodes, split into the real
// theta part (fully normalized associated Legendre) and the azimuthal phase.
class HarmonicTable {
public:
    HarmonicTable(int degree, const SphericalGrid& grid) : degree_(degree), grid_(&grid) {
        if (degree < 0) throw validation_error("eval_harmonics: negative degree");
        if (grid.max_degree < degree)
            throw validation_error("eval_harmonics: grid built for N_max " +
                                   std::to_string(grid.max_degree) + " cannot hold degree " +
                                   std::to_string(degree));
        const int d = 2 * degree + 1;
        const int nt = grid.n_theta();
        theta_part_.assign(static_cast<std::size_t>(d) * nt, 0.0);
        for (int i = 0; i < nt; ++i) {
            double xv = grid.x[i];
            for (int m = 0; m <= degree; ++m) {
                double v = normalized_assoc_legendre(degree, m, xv);
                theta_part_[static_cast<std::size_t>(m + degree) * nt + i] = v;
                if (m > 0)
                    theta_part_[static_cast<std::size_t>(degree - m) * nt + i] =
                        (m % 2 == 0 ? v : -v);
            }
        }
        phase_.assign(static_cast<std::size_t>(d) * grid.n_phi, cplx(0.0, 0.0));
        for (int k = -degree; k <= degree; ++k)
            for (int j = 0; j < grid.n_phi; ++j)
                phase_[static_cast<std::size_t>(k + degree) * grid.n_phi + j] =
                    std::polar(1.0, k * grid.phi(j));
    }

    int degree() const { return degree_; }
    const SphericalGrid& grid() const { return *grid_; }

    // Y_N^k at theta node i, phi node j (paper index k in [-N, N]).
    cplx value(int k, int i, int j) const {
        return theta_part(k, i) * phase_[static_cast<std::size_t>(k + degree_) * grid_->n_phi + j];
    }

    double theta_part(int k, int i) const {
        return theta_part_[static_cast<std::size_t>(k + degree_) * grid_->n_theta() + i];
    }

    // Stable fully normalized recurrence; safe for degrees into the
    // thousands because the normalization is carried inside the iteration.
    static double normalized_assoc_legendre(int l, int m, double xv) {
        double omx2 = (1.0 - xv) * (1.0 + xv);
        double pmm = 1.0;
        double fact = 1.0;
        for (int i = 1; i <= m; ++i) {
            pmm *= omx2 * fact / (fact + 1.0);
            fact += 2.0;
        }
        pmm = std::sqrt((2.0 * m + 1.0) * pmm / four_pi);
        if (m & 1) pmm = -pmm;
        if (l == m) return pmm;
        double pmmp1 = xv * std::sqrt(2.0 * m + 3.0) * pmm;
        if (l == m + 1) return pmmp1;
        double oldfact = std::sqrt(2.0 * m + 3.0);
        double pll = 0.0;
        for (int ll = m + 2; ll <= l; ++ll) {
            double f = std::sqrt((4.0 * ll * ll - 1.0) / (static_cast<double>(ll) * ll - static_cast<double>(m) * m));
            pll = (xv * pmmp1 - pmm / oldfact) * f;
            oldfact = f;
            pmm = pmmp1;
            pmmp1 = pll;
        }
        return pll;
    }

private:
    int degree_;
    const SphericalGrid* grid_;
    std::vector<double> theta_part_;  // (k+N) major, theta node minor
    std::vector<cplx> phase_;         // (k+N) major, phi node minor
};

inline HarmonicTable eval_harmonics(int degree, const SphericalGrid& grid) {
    return HarmonicTable(degree, grid);
}

// A test function on the sphere given as a callable of (cos theta, phi) with
// a declared effective azimuthal band limit; quadrature beyond the declared
// limit is the caller's responsibility.
struct SphereFunction {
    std::function<double(double cos_theta, double phi)> eval;
    int band_limit = 32;
    std::string name;
};

enum class OperatorFamily { Multiplication, DiagonalSymbol, FourierBand };

struct OperatorBlock {
    int degree = 0;
    std::vector<cplx> elements;  // row-major, row = alpha + N, col = beta + N
    double omega = 0.0;
    OperatorFamily family = OperatorFamily::Multiplication;
    OperatorFamily parent_family = OperatorFamily::Multiplication;  // for bands
    int band_index = 0;                                             // for bands
    double generator_sup = 0.0;  // sup |f| or sup |g| over the evaluation nodes

    int dim() const { return 2 * degree + 1; }

    const cplx& elem(int alpha, int beta) const {
        return elements[static_cast<std::size_t>(alpha + degree) * dim() + (beta + degree)];
    }
    cplx& elem(int alpha, int beta) {
        return elements[static_cast<std::size_t>(alpha + degree) * dim() + (beta + degree)];
    }

    bool is_diagonal(double tol = 0.0) const {
        const int d = dim();
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b)
                if (a != b && std::abs(elements[static_cast<std::size_t>(a) * d + b]) > tol)
                    return false;
        return true;
    }

    double hermiticity_defect() const {
        const int d = dim();
        double worst = 0.0;
        for (int a = 0; a < d; ++a)
            for (int b = a; b < d; ++b)
                worst = std::max(worst, std::abs(elements[static_cast<std::size_t>(a) * d + b] -
                                                 std::conj(elements[static_cast<std::size_t>(b) * d + a])));
        return worst;
    }
};

// Matrix elements <f Y_N^a, Y_N^b> by quadrature; omega = (1/4pi) integral f.
// The phi sums are done first as azimuthal Fourier coefficients per theta
// node, which also makes Hermiticity exact to the last bit for real f.
inline OperatorBlock mult_operator_block(const SphereFunction& f, int degree,
                                         const SphericalGrid& grid,
                                         const HarmonicTable* table = nullptr) {
    if (grid.max_degree < degree || grid.band_limit < f.band_limit)
        throw validation_error("mult_operator_block: grid insufficient for degree " +
                               std::to_string(degree) + " with band limit " +
                               std::to_string(f.band_limit));
    if (table && table->degree() != degree)
        throw validation_error("mult_operator_block: harmonic table degree mismatch");
    std::optional<HarmonicTable> local;
    if (!table) local.emplace(degree, grid);
    const HarmonicTable& yt = table ? *table : *local;

    const int d = 2 * degree + 1;
    const int nt = grid.n_theta();
    const int np = grid.n_phi;

    OperatorBlock block;
    block.degree = degree;
    block.family = OperatorFamily::Multiplication;
    block.elements.assign(static_cast<std::size_t>(d) * d, cplx(0.0, 0.0));

    // fhat[i][n + 2N] = w_phi * sum_j f(x_i, phi_j) e^{i n phi_j}, |n| <= 2N.
    const int nb = 2 * degree;
    std::vector<cplx> fhat(static_cast<std::size_t>(nt) * (2 * nb + 1), cplx(0.0, 0.0));
    double sup = 0.0, omega_sum = 0.0;
    for (int i = 0; i < nt; ++i) {
        for (int j = 0; j < np; ++j) {
            double fv = f.eval(grid.x[i], grid.phi(j));
            sup = std::max(sup, std::abs(fv));
            omega_sum += grid.wx[i] * grid.w_phi() * fv;
            for (int n = -nb; n <= nb; ++n)
                fhat[static_cast<std::size_t>(i) * (2 * nb + 1) + (n + nb)] +=
                    grid.w_phi() * fv * std::polar(1.0, n * grid.phi(j));
        }
    }
    block.omega = omega_sum / four_pi;
    block.generator_sup = sup;

    // A_ab = sum_i wx_i theta_a(i) theta_b(i) fhat_i(a - b), since the
    // conjugate on Y^b leaves the azimuthal factor e^{i(a-b)phi}.
    for (int a = -degree; a <= degree; ++a) {
        for (int b = -degree; b <= degree; ++b) {
            int n = a - b;
            cplx acc(0.0, 0.0);
            for (int i = 0; i < nt; ++i)
                acc += grid.wx[i] * yt.theta_part(a, i) * yt.theta_part(b, i) *
                       fhat[static_cast<std::size_t>(i) * (2 * nb + 1) + (n + nb)];
            block.elem(a, b) = acc;
        }
    }
    return block;
}

// Rotationally invariant family: B = g(L_z / (N + 1/2)) acts diagonally with
// B_aa = g(a / (N + 1/2)).  omega is defined through the Weyl limit,
// (1/2) integral of g over [-1, 1], evaluated adaptively to 1e-12.
inline OperatorBlock diagonal_symbol_block(const std::function<double(double)>& g, int degree) {
    const int d = 2 * degree + 1;
    OperatorBlock block;
    block.degree = degree;
    block.family = OperatorFamily::DiagonalSymbol;
    block.elements.assign(static_cast<std::size_t>(d) * d, cplx(0.0, 0.0));
    double sup = 0.0;
    for (int a = -degree; a <= degree; ++a) {
        double v = g(a / (degree + 0.5));
        sup = std::max(sup, std::abs(v));
        block.elem(a, a) = v;
    }
    block.generator_sup = sup;
    block.omega = 0.5 * detail::integrate_1d(g, -1.0, 1.0, 1e-12);
    return block;
}

// Keeps the entries with alpha = beta + n (the n-th azimuthal band), zeroing
// the rest; omega survives only in the n = 0 band.
inline OperatorBlock fourier_band(const OperatorBlock& block, int n) {
    if (std::abs(n) > 2 * block.degree)
        throw validation_error("fourier_band: band index exceeds 2N");
    OperatorBlock out;
    out.degree = block.degree;
    out.family = OperatorFamily::FourierBand;
    out.parent_family = block.family == OperatorFamily::FourierBand ? block.parent_family : block.family;
    out.band_index = n;
    out.generator_sup = block.generator_sup;
    out.omega = (n == 0) ? block.omega : 0.0;
    const int d = block.dim();
    out.elements.assign(static_cast<std::size_t>(d) * d, cplx(0.0, 0.0));
    for (int a = -block.degree; a <= block.degree; ++a) {
        int b = a - n;
        if (b >= -block.degree && b <= block.degree) out.elem(a, b) = block.elem(a, b);
    }
    return out;
}

// (1/d_N) tr of the block; the imaginary part of the trace must be noise.
inline double weyl_trace(const OperatorBlock& block) {
    cplx tr(0.0, 0.0);
    for (int a = -block.degree; a <= block.degree; ++a) tr += block.elem(a, a);
    double scaled_im = std::abs(tr.imag()) / std::max(1.0, std::abs(tr.real()));
    if (scaled_im > 1e-12)
        throw numeric_error("weyl_trace: trace has a non-negligible imaginary part");
    return tr.real() / block.dim();
}

// Operator norms of the azimuthal Fourier coefficients of a multiplication
// operator: band n multiplies by the n-th azimuthal mode f_n(theta) e^{i n phi},
// whose norm is sup_theta |f_n| (sup over the grid's theta nodes).
inline std::vector<double> fourier_norm_profile(const SphereFunction& f, int n_max,
                                                const SphericalGrid& grid) {
    if (n_max < 0) throw validation_error("fourier_norm_profile: negative band count");
    if (grid.n_phi < f.band_limit + n_max + 1)
        throw validation_error("fourier_norm_profile: grid cannot separate the requested bands");
    std::vector<double> out(2 * n_max + 1, 0.0);
    const int np = grid.n_phi;
    for (int i = 0; i < grid.n_theta(); ++i) {
        std::vector<double> row(np);
        for (int j = 0; j < np; ++j) row[j] = f.eval(grid.x[i], grid.phi(j));
        for (int n = -n_max; n <= n_max; ++n) {
            cplx c(0.0, 0.0);
            for (int j = 0; j < np; ++j) c += row[j] * std::polar(1.0, -n * grid.phi(j));
            out[n + n_max] = std::max(out[n + n_max], std::abs(c) / np);
        }
    }
    return out;
}

}  // namespace qelab::sphere
