#pragma once

// Exact reference values the Monte Carlo side is measured against:
// Dirichlet moments of Haar rows, the leading Weingarten permutation sum,
// complex-Gaussian Wick moments, and a Haar Monte Carlo cross-checker.
// Dirichlet moments are kept as exact rationals (big-integer factorials);
// conversion to double happens only at the comparison boundary.

#include <algorithm>
#include <complex>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "qelab/errors.hpp"
#include "qelab/linalg.hpp"
#include "qelab/rng.hpp"

namespace qelab::oracle {

using bigint = boost::multiprecision::cpp_int;
using cplx = std::complex<double>;

struct Rational {
    bigint num;
    bigint den;

    void reduce() {
        if (den < 0) {
            num = -num;
            den = -den;
        }
        bigint g = boost::multiprecision::gcd(num < 0 ? bigint(-num) : num, den);
        if (g > 1) {
            num /= g;
            den /= g;
        }
    }

    double value() const { return num.convert_to<double>() / den.convert_to<double>(); }

    bool operator==(const Rational& o) const { return num * o.den == o.num * den; }
};

inline bigint factorial(int n) {
    bigint f = 1;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

// E[ prod_i |u(alpha_i)|^{2 c_i} ] over a Haar row u, distinct alpha_i:
// prod_i c_i! * (d-1)! / (d-1+sum c_i)!   (moments of Dirichlet(1,...,1)).
inline Rational dirichlet_moment(int d, std::span<const int> exponents) {
    if (d < 1) throw validation_error("dirichlet_moment: dimension must be >= 1");
    if (exponents.empty() || static_cast<int>(exponents.size()) > d)
        throw validation_error("dirichlet_moment: need 1..d distinct indices");
    int total = 0;
    bigint num = 1;
    for (int c : exponents) {
        if (c < 1) throw validation_error("dirichlet_moment: exponents must be >= 1");
        num *= factorial(c);
        total += c;
    }
    Rational r{num * factorial(d - 1), factorial(d - 1 + total)};
    r.reduce();
    return r;
}

// A balanced list of entry slots u(k_i, alpha_i) and conjugated slots
// u(k'_i, alpha'_i) identifying a polynomial moment in matrix entries.
struct MomentPattern {
    struct Slot {
        int k;
        int alpha;
        bool operator==(const Slot& o) const { return k == o.k && alpha == o.alpha; }
    };
    std::vector<Slot> z;     // unconjugated
    std::vector<Slot> zbar;  // conjugated

    std::size_t order() const { return z.size(); }
    bool balanced() const { return z.size() == zbar.size(); }

    // Distinct slots in first-appearance order (z slots first); this is the
    // tuple layout expected by the sample-based moment estimators.
    std::vector<Slot> variables() const {
        std::vector<Slot> vars;
        auto add = [&vars](const Slot& s) {
            if (std::find(vars.begin(), vars.end(), s) == vars.end()) vars.push_back(s);
        };
        for (const Slot& s : z) add(s);
        for (const Slot& s : zbar) add(s);
        return vars;
    }

    std::size_t variable_index(const Slot& s) const {
        std::vector<Slot> vars = variables();
        auto it = std::find(vars.begin(), vars.end(), s);
        return static_cast<std::size_t>(it - vars.begin());
    }

    // |u_k(alpha)|^2 repeated c times, etc.: same-row pattern builder.
    static MomentPattern same_row_abs(int k, std::span<const int> alphas, std::span<const int> powers) {
        MomentPattern p;
        for (std::size_t i = 0; i < alphas.size(); ++i) {
            for (int c = 0; c < powers[i]; ++c) {
                p.z.push_back({k, alphas[i]});
                p.zbar.push_back({k, alphas[i]});
            }
        }
        return p;
    }
};

// Leading term of the Weingarten expansion:
//   d^{-m} * sum over permutations of prod_i delta_{k_i k'_{j_i}} delta_{alpha_i alpha'_{j_i}}.
// The O(d^{-m-1}) remainder is intentionally not included.
inline double weingarten_leading(const MomentPattern& pattern, int d) {
    if (!pattern.balanced()) return 0.0;  // unbalanced Haar moments vanish
    const int m = static_cast<int>(pattern.order());
    if (m == 0) return 1.0;
    if (m > 8) throw validation_error("weingarten_leading: pattern order above 8");
    std::vector<int> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    std::uint64_t count = 0;
    do {
        bool ok = true;
        for (int i = 0; i < m && ok; ++i) ok = (pattern.z[i] == pattern.zbar[perm[i]]);
        if (ok) ++count;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return static_cast<double>(count) * std::pow(static_cast<double>(d), -m);
}

// Exact moment E[ prod g(z_i) prod conj(g(zbar_j)) ] for iid complex
// Gaussians g = N1 + i N2 with standard components, so E[g conj(g)] = 2 and
// E[g g] = 0.  Pairing enumeration: 2^m times the number of label-matching
// permutations.
inline double wick_moment(const MomentPattern& pattern) {
    if (!pattern.balanced()) return 0.0;
    const int m = static_cast<int>(pattern.order());
    if (m == 0) return 1.0;
    if (m > 8) throw validation_error("wick_moment: pattern order above 8");
    std::vector<int> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    std::uint64_t count = 0;
    do {
        bool ok = true;
        for (int i = 0; i < m && ok; ++i) ok = (pattern.z[i] == pattern.zbar[perm[i]]);
        if (ok) ++count;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return std::ldexp(static_cast<double>(count), m);  // count * 2^m
}

struct MomentEstimate {
    cplx mean{0.0, 0.0};
    double se = 0.0;  // sqrt((Var Re + Var Im) / n)
    std::size_t n = 0;
};

// Monte Carlo over Haar draws of the entry-product moment.
inline MomentEstimate haar_mc_moment(const MomentPattern& pattern, int d, std::size_t n_samples,
                                     RngStream& rng) {
    if (n_samples < 1000) throw validation_error("haar_mc_moment: need at least 10^3 samples");
    for (const auto& s : pattern.z)
        if (s.k < 0 || s.k >= d || s.alpha < 0 || s.alpha >= d)
            throw validation_error("haar_mc_moment: slot index out of range");
    for (const auto& s : pattern.zbar)
        if (s.k < 0 || s.k >= d || s.alpha < 0 || s.alpha >= d)
            throw validation_error("haar_mc_moment: slot index out of range");

    cplx sum(0.0, 0.0);
    double sum_re2 = 0.0, sum_im2 = 0.0;
    for (std::size_t t = 0; t < n_samples; ++t) {
        linalg::UnitaryMatrix u = linalg::haar_unitary(d, rng);
        cplx prod(1.0, 0.0);
        for (const auto& s : pattern.z) prod *= u(s.k, s.alpha);
        for (const auto& s : pattern.zbar) prod *= std::conj(u(s.k, s.alpha));
        sum += prod;
        sum_re2 += prod.real() * prod.real();
        sum_im2 += prod.imag() * prod.imag();
    }
    const double n = static_cast<double>(n_samples);
    cplx mean = sum / n;
    double var_re = std::max(0.0, sum_re2 / n - mean.real() * mean.real());
    double var_im = std::max(0.0, sum_im2 / n - mean.imag() * mean.imag());
    return {mean, std::sqrt((var_re + var_im) / n), n_samples};
}

// Exact Haar expectation of (1/d) sum_{k in T} (p_k - omega)^2 for a diagonal
// block with diagonal entries b: E p_k = mean(b) and
// E p_k^2 = (sum b^2 + (sum b)^2) / (d (d+1)), via Dirichlet moments.
inline double haar_expected_z(std::span<const double> diag, double omega, int t_size) {
    const int d = static_cast<int>(diag.size());
    if (d < 1) throw validation_error("haar_expected_z: empty diagonal");
    if (t_size < 0 || t_size > d) throw validation_error("haar_expected_z: bad index-set size");
    double sum_b = 0.0, sum_b2 = 0.0;
    for (double b : diag) {
        sum_b += b;
        sum_b2 += b * b;
    }
    const int e2[] = {2};
    const int e11[] = {1, 1};
    double m4 = dirichlet_moment(d, e2).value();                       // E|u|^4
    double m22 = d > 1 ? dirichlet_moment(d, e11).value() : 0.0;       // E|u_a|^2|u_b|^2
    double ep = sum_b / d;
    double ep2 = sum_b2 * m4 + (sum_b * sum_b - sum_b2) * m22;
    double ez_per_k = ep2 - 2.0 * omega * ep + omega * omega;
    return (static_cast<double>(t_size) / d) * ez_per_k;
}

}  // namespace qelab::oracle
