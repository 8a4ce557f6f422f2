#pragma once

// Dense complex Hermitian eigendecomposition and Haar-unitary sampling.
//
// The eigensolver reduces the matrix to real symmetric tridiagonal form by
// Householder reflections (accumulating the transform), rotates the complex
// subdiagonal onto the real axis with a diagonal phase similarity, and then
// runs implicit-shift QL with Wilkinson shifts.  Eigenvectors are kept as
// rows throughout so every update streams over contiguous memory.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "qelab/errors.hpp"
#include "qelab/rng.hpp"

namespace qelab::linalg {

using cplx = std::complex<double>;

class HermitianMatrix {
public:
    HermitianMatrix(int dim, std::vector<cplx> entries) : dim_(dim), a_(std::move(entries)) {
        if (dim_ <= 0) throw validation_error("HermitianMatrix: dimension must be positive");
        if (a_.size() != static_cast<std::size_t>(dim_) * dim_)
            throw validation_error("HermitianMatrix: entry count does not match dimension");
        double scale = max_abs();
        double tol = 1e-12 * std::max(scale, 1e-300);
        for (int j = 0; j < dim_; ++j) {
            for (int k = j; k < dim_; ++k) {
                if (std::abs((*this)(j, k) - std::conj((*this)(k, j))) > tol)
                    throw validation_error("HermitianMatrix: input is not Hermitian at (" +
                                           std::to_string(j) + "," + std::to_string(k) + ")");
            }
        }
    }

    int dim() const { return dim_; }
    const cplx& operator()(int i, int j) const { return a_[static_cast<std::size_t>(i) * dim_ + j]; }
    std::span<const cplx> row(int i) const { return {a_.data() + static_cast<std::size_t>(i) * dim_, static_cast<std::size_t>(dim_)}; }
    const std::vector<cplx>& data() const { return a_; }

    double max_abs() const {
        double m = 0.0;
        for (const cplx& v : a_) m = std::max(m, std::abs(v));
        return m;
    }

    double trace_real() const {
        double t = 0.0;
        for (int i = 0; i < dim_; ++i) t += (*this)(i, i).real();
        return t;
    }

    double frobenius_norm() const {
        double s = 0.0;
        for (const cplx& v : a_) s += std::norm(v);
        return std::sqrt(s);
    }

private:
    int dim_;
    std::vector<cplx> a_;
};

// Row k is interpreted as the coefficient sequence of eigenvector k.
class UnitaryMatrix {
public:
    UnitaryMatrix(int dim, std::vector<cplx> rows) : dim_(dim), a_(std::move(rows)) {
        if (dim_ <= 0) throw validation_error("UnitaryMatrix: dimension must be positive");
        if (a_.size() != static_cast<std::size_t>(dim_) * dim_)
            throw validation_error("UnitaryMatrix: entry count does not match dimension");
    }

    static UnitaryMatrix identity(int dim) {
        std::vector<cplx> a(static_cast<std::size_t>(dim) * dim, cplx(0.0, 0.0));
        for (int i = 0; i < dim; ++i) a[static_cast<std::size_t>(i) * dim + i] = 1.0;
        return UnitaryMatrix(dim, std::move(a));
    }

    int dim() const { return dim_; }
    const cplx& operator()(int k, int alpha) const { return a_[static_cast<std::size_t>(k) * dim_ + alpha]; }
    cplx& operator()(int k, int alpha) { return a_[static_cast<std::size_t>(k) * dim_ + alpha]; }
    std::span<const cplx> row(int k) const { return {a_.data() + static_cast<std::size_t>(k) * dim_, static_cast<std::size_t>(dim_)}; }
    std::span<cplx> row(int k) { return {a_.data() + static_cast<std::size_t>(k) * dim_, static_cast<std::size_t>(dim_)}; }

    // Frobenius norm of U U* - I.
    double unitarity_defect() const {
        double s = 0.0;
        for (int i = 0; i < dim_; ++i) {
            for (int j = i; j < dim_; ++j) {
                cplx dot(0.0, 0.0);
                const cplx* ri = a_.data() + static_cast<std::size_t>(i) * dim_;
                const cplx* rj = a_.data() + static_cast<std::size_t>(j) * dim_;
                for (int t = 0; t < dim_; ++t) dot += ri[t] * std::conj(rj[t]);
                if (i == j) dot -= 1.0;
                s += (i == j ? 1.0 : 2.0) * std::norm(dot);
            }
        }
        return std::sqrt(s);
    }

private:
    int dim_;
    std::vector<cplx> a_;
};

struct EigenDecomposition {
    std::vector<double> eigenvalues;  // ascending
    UnitaryMatrix vectors;            // row k solves H v_k = lambda_k v_k
    double residual = 0.0;            // max_k ||H v_k - lambda_k v_k||_2 over checked k
};

enum class ResidualCheck { Full, Spot };

namespace detail {

inline double row_norm(std::span<const cplx> v) {
    double s = 0.0;
    for (const cplx& x : v) s += std::norm(x);
    return std::sqrt(s);
}

inline double residual_for(const HermitianMatrix& h, const UnitaryMatrix& vecs,
                           const std::vector<double>& lambda, const std::vector<int>& which) {
    int n = h.dim();
    std::vector<cplx> hv(n);
    double worst = 0.0;
    for (int k : which) {
        std::span<const cplx> v = vecs.row(k);
        for (int i = 0; i < n; ++i) {
            cplx acc(0.0, 0.0);
            std::span<const cplx> hrow = h.row(i);
            for (int j = 0; j < n; ++j) acc += hrow[j] * v[j];
            hv[i] = acc - lambda[k] * v[i];
        }
        worst = std::max(worst, row_norm(hv));
    }
    return worst;
}

}  // namespace detail

// Full spectrum and orthonormal eigenvector rows, eigenvalues ascending.
// Deterministic: no randomness anywhere in the reduction or the QL sweeps.
inline EigenDecomposition hermitian_eig(const HermitianMatrix& h,
                                        ResidualCheck residual_check = ResidualCheck::Full) {
    const int n = h.dim();
    constexpr int kMaxSweeps = 64;  // per eigenvalue

    // Working copy, symmetrized so both triangles agree exactly.
    std::vector<cplx> w(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j)
            w[static_cast<std::size_t>(i) * n + j] = 0.5 * (h(i, j) + std::conj(h(j, i)));
        w[static_cast<std::size_t>(i) * n + i] = cplx(h(i, i).real(), 0.0);
    }
    auto W = [&](int i, int j) -> cplx& { return w[static_cast<std::size_t>(i) * n + j]; };

    // B holds Q^T where H = Q T Q*; rows of B are columns of Q.
    std::vector<cplx> b(static_cast<std::size_t>(n) * n, cplx(0.0, 0.0));
    for (int i = 0; i < n; ++i) b[static_cast<std::size_t>(i) * n + i] = 1.0;
    auto B = [&](int i, int j) -> cplx& { return b[static_cast<std::size_t>(i) * n + j]; };

    std::vector<cplx> u(n), p(n), q(n), phase_row(n);

    // Householder reduction to Hermitian tridiagonal form.
    for (int k = 0; k + 2 < n; ++k) {
        const int lo = k + 1;
        double xnorm2 = 0.0;
        for (int i = lo; i < n; ++i) xnorm2 += std::norm(W(i, k));
        double xnorm = std::sqrt(xnorm2);
        if (xnorm == 0.0) continue;
        cplx x0 = W(lo, k);
        cplx alpha = (std::abs(x0) > 0.0) ? cplx(-xnorm * (x0 / std::abs(x0))) : cplx(-xnorm);

        double wnorm2 = 0.0;
        for (int i = lo; i < n; ++i) {
            u[i] = W(i, k);
            if (i == lo) u[i] -= alpha;
            wnorm2 += std::norm(u[i]);
        }
        double wnorm = std::sqrt(wnorm2);
        if (wnorm == 0.0) continue;
        for (int i = lo; i < n; ++i) u[i] /= wnorm;

        // p = A2 u on the trailing block, K = u* p, q = p - K u.
        for (int i = lo; i < n; ++i) {
            cplx acc(0.0, 0.0);
            const cplx* row = w.data() + static_cast<std::size_t>(i) * n;
            for (int j = lo; j < n; ++j) acc += row[j] * u[j];
            p[i] = acc;
        }
        double bigk = 0.0;
        for (int i = lo; i < n; ++i) bigk += (std::conj(u[i]) * p[i]).real();
        for (int i = lo; i < n; ++i) q[i] = p[i] - bigk * u[i];

        // A2 <- A2 - 2 u q* - 2 q u*.
        for (int i = lo; i < n; ++i) {
            cplx ui2 = 2.0 * u[i];
            cplx qi2 = 2.0 * q[i];
            cplx* row = w.data() + static_cast<std::size_t>(i) * n;
            for (int j = lo; j < n; ++j)
                row[j] -= ui2 * std::conj(q[j]) + qi2 * std::conj(u[j]);
        }
        // Column k now reduces to a single subdiagonal entry.
        W(lo, k) = alpha;
        W(k, lo) = std::conj(alpha);
        for (int i = lo + 1; i < n; ++i) {
            W(i, k) = 0.0;
            W(k, i) = 0.0;
        }

        // B <- (I - 2 conj(u) u^T) B, i.e. accumulate Q <- Q P from the right.
        for (int j = 0; j < n; ++j) phase_row[j] = 0.0;
        for (int i = lo; i < n; ++i) {
            cplx ui = u[i];
            const cplx* row = b.data() + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) phase_row[j] += ui * row[j];
        }
        for (int i = lo; i < n; ++i) {
            cplx cu2 = 2.0 * std::conj(u[i]);
            cplx* row = b.data() + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) row[j] -= cu2 * phase_row[j];
        }
    }

    // Rotate the complex subdiagonal onto the real axis; fold phases into B.
    std::vector<double> diag(n), off(n, 0.0);
    for (int i = 0; i < n; ++i) diag[i] = W(i, i).real();
    cplx ph(1.0, 0.0);
    for (int i = 0; i + 1 < n; ++i) {
        cplx e = W(i + 1, i);
        double ae = std::abs(e);
        off[i] = ae;
        ph = (ae > 0.0) ? cplx(ph * (e / ae)) : ph;
        cplx* row = b.data() + static_cast<std::size_t>(i + 1) * n;
        for (int j = 0; j < n; ++j) row[j] *= ph;
    }

    // Implicit-shift QL with Wilkinson shifts on (diag, off).
    const double eps = std::numeric_limits<double>::epsilon();
    off[n - 1] = 0.0;
    for (int l = 0; l < n; ++l) {
        int iter = 0;
        int m;
        do {
            for (m = l; m < n - 1; ++m) {
                double dd = std::abs(diag[m]) + std::abs(diag[m + 1]);
                if (std::abs(off[m]) <= eps * dd) break;
            }
            if (m != l) {
                if (iter++ == kMaxSweeps)
                    throw numeric_error("hermitian_eig: QL failed to converge for eigenvalue index " +
                                        std::to_string(l));
                double g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
                double r = std::hypot(g, 1.0);
                g = diag[m] - diag[l] + off[l] / (g + std::copysign(r, g));
                double s = 1.0, c = 1.0, pshift = 0.0;
                bool underflow = false;
                for (int i = m - 1; i >= l; --i) {
                    double f = s * off[i];
                    double bb = c * off[i];
                    r = std::hypot(f, g);
                    off[i + 1] = r;
                    if (r == 0.0) {
                        diag[i + 1] -= pshift;
                        off[m] = 0.0;
                        underflow = true;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = diag[i + 1] - pshift;
                    r = (diag[i] - g) * s + 2.0 * c * bb;
                    pshift = s * r;
                    diag[i + 1] = g + pshift;
                    g = c * r - bb;

                    cplx* ri = b.data() + static_cast<std::size_t>(i) * n;
                    cplx* ri1 = b.data() + static_cast<std::size_t>(i + 1) * n;
                    for (int j = 0; j < n; ++j) {
                        cplx f2 = ri1[j];
                        ri1[j] = s * ri[j] + c * f2;
                        ri[j] = c * ri[j] - s * f2;
                    }
                }
                if (underflow) continue;
                diag[l] -= pshift;
                off[l] = g;
                off[m] = 0.0;
            }
        } while (m != l);
    }

    // Ascending order; ties keep QL emergence order.
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::stable_sort(perm.begin(), perm.end(), [&](int i, int j) { return diag[i] < diag[j]; });

    std::vector<double> lambda(n);
    std::vector<cplx> rows(static_cast<std::size_t>(n) * n);
    for (int k = 0; k < n; ++k) {
        lambda[k] = diag[perm[k]];
        const cplx* src = b.data() + static_cast<std::size_t>(perm[k]) * n;
        std::copy(src, src + n, rows.begin() + static_cast<std::size_t>(k) * n);
    }

    EigenDecomposition out{std::move(lambda), UnitaryMatrix(n, std::move(rows)), 0.0};

    std::vector<int> which;
    if (residual_check == ResidualCheck::Full) {
        which.resize(n);
        std::iota(which.begin(), which.end(), 0);
    } else {
        for (int k : {0, n / 4, n / 2, (3 * n) / 4, n - 1})
            if (which.empty() || which.back() != k) which.push_back(k);
    }
    out.residual = detail::residual_for(h, out.vectors, out.eigenvalues, which);
    return out;
}

// Rotate v so its largest-modulus component (smallest index on ties) becomes
// real positive.  Moduli are untouched.
inline std::vector<cplx> fix_phase(std::span<const cplx> v) {
    std::size_t imax = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        double a = std::abs(v[i]);
        if (a > best) {
            best = a;
            imax = i;
        }
    }
    if (!(best > 0.0)) throw validation_error("fix_phase: zero vector");
    cplx rot = std::conj(v[imax] / best);
    std::vector<cplx> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = rot * v[i];
    out[imax] = cplx(std::abs(v[imax]), 0.0);
    return out;
}

// Haar sample on U(d): orthonormalize an iid standard complex Gaussian matrix
// row by row.  Gram-Schmidt with positive leading inner products is the unique
// QR with positive-real diagonal, so the law is exactly Haar; the second
// orthogonalization pass only tightens floating-point orthogonality.
inline UnitaryMatrix haar_unitary(int d, RngStream& rng) {
    if (d < 1) throw validation_error("haar_unitary: dimension must be >= 1");
    std::vector<cplx> a(static_cast<std::size_t>(d) * d);
    for (cplx& x : a) x = rng.complex_gaussian_pair();
    for (int r = 0; r < d; ++r) {
        cplx* vr = a.data() + static_cast<std::size_t>(r) * d;
        for (int pass = 0; pass < 2; ++pass) {
            for (int j = 0; j < r; ++j) {
                const cplx* vj = a.data() + static_cast<std::size_t>(j) * d;
                cplx dot(0.0, 0.0);
                for (int t = 0; t < d; ++t) dot += vr[t] * std::conj(vj[t]);
                for (int t = 0; t < d; ++t) vr[t] -= dot * vj[t];
            }
        }
        double nrm2 = 0.0;
        for (int t = 0; t < d; ++t) nrm2 += std::norm(vr[t]);
        double nrm = std::sqrt(nrm2);
        if (nrm == 0.0) throw numeric_error("haar_unitary: degenerate Gaussian draw");
        for (int t = 0; t < d; ++t) vr[t] /= nrm;
    }
    return UnitaryMatrix(d, std::move(a));
}

}  // namespace qelab::linalg
