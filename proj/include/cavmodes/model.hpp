// model.hpp — product basis |k,n>, field/motion operators and the effective
// Hamiltonian of a transversally pumped atom in a lossy single-mode cavity.
//
// Units: hbar = 1, recoil frequency omega_r = 1, lengths in 1/K.

#pragma once

#include <cmath>
#include <complex>
#include <algorithm>
#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "cavmodes/error.hpp"

namespace cavmodes {

using cplx = std::complex<double>;
using SparseOperator = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;
using StateVector = Eigen::VectorXcd;

inline constexpr cplx I{0.0, 1.0};

struct ModelParams {
    double delta_c{-390.0};  // cavity detuning
    double u0{-390.0};       // g^2 / Delta_a
    double ut{-38.0};        // g eta_t / Delta_a
    double kappa{31.25};     // half decay rate of the cavity field
    int k_max{32};           // momentum labels -k_max .. k_max-1
    int n_max{10};           // photon numbers 0 .. n_max

    void validate() const {
        require(kappa > 0.0, ErrorKind::invalid_argument, "kappa must be positive");
        require(k_max >= 2, ErrorKind::invalid_argument, "k_max must be at least 2");
        require(n_max >= 1, ErrorKind::invalid_argument, "n_max must be at least 1");
        require(std::isfinite(delta_c) && std::isfinite(u0) && std::isfinite(ut),
                ErrorKind::invalid_argument, "non-finite coupling constant");
    }
};

/// Tensor-product basis momentum (x) Fock, flattened momentum-major:
/// index = (k + k_max) * dim_n + n.
struct BasisSpec {
    int k_max{0};
    int n_max{0};
    int dim_k{0};
    int dim_n{0};
    int dim{0};

    int k_min() const { return -k_max; }
    int index(int k, int n) const { return (k + k_max) * dim_n + n; }
    int k_of(int i) const { return i / dim_n - k_max; }
    int n_of(int i) const { return i % dim_n; }
    bool contains(int k, int n) const {
        return k >= -k_max && k < k_max && n >= 0 && n <= n_max;
    }
    int k_index(int k) const { return k + k_max; }

    bool operator==(const BasisSpec&) const = default;
};

inline BasisSpec build_basis(const ModelParams& params) {
    params.validate();
    BasisSpec b;
    b.k_max = params.k_max;
    b.n_max = params.n_max;
    b.dim_k = 2 * params.k_max;
    b.dim_n = params.n_max + 1;
    b.dim = b.dim_k * b.dim_n;
    return b;
}

enum class FieldOp { annihilate, create, number };

namespace detail {

inline SparseOperator from_triplets(int dim, const std::vector<Eigen::Triplet<cplx>>& t) {
    SparseOperator op(dim, dim);
    op.setFromTriplets(t.begin(), t.end());
    op.prune(cplx{0.0, 0.0});
    op.makeCompressed();
    return op;
}

} // namespace detail

inline SparseOperator op_field(const BasisSpec& b, FieldOp kind) {
    std::vector<Eigen::Triplet<cplx>> t;
    t.reserve(static_cast<std::size_t>(b.dim));
    for (int k = b.k_min(); k < b.k_max; ++k) {
        for (int n = 0; n <= b.n_max; ++n) {
            switch (kind) {
                case FieldOp::annihilate:
                    if (n > 0) t.emplace_back(b.index(k, n - 1), b.index(k, n), std::sqrt(double(n)));
                    break;
                case FieldOp::create:
                    if (n < b.n_max) t.emplace_back(b.index(k, n + 1), b.index(k, n), std::sqrt(double(n + 1)));
                    break;
                case FieldOp::number:
                    if (n > 0) t.emplace_back(b.index(k, n), b.index(k, n), double(n));
                    break;
            }
        }
    }
    return detail::from_triplets(b.dim, t);
}

/// sin(Kx)|k> = (|k+1> - |k-1>) / 2i, couplings leaving the momentum window dropped.
inline SparseOperator op_sin(const BasisSpec& b) {
    std::vector<Eigen::Triplet<cplx>> t;
    const cplx half_over_i = 1.0 / (2.0 * I);
    for (int k = b.k_min(); k < b.k_max; ++k) {
        for (int n = 0; n <= b.n_max; ++n) {
            if (b.contains(k + 1, n)) t.emplace_back(b.index(k + 1, n), b.index(k, n), half_over_i);
            if (b.contains(k - 1, n)) t.emplace_back(b.index(k - 1, n), b.index(k, n), -half_over_i);
        }
    }
    return detail::from_triplets(b.dim, t);
}

/// sin^2(Kx)|k> = |k>/2 - (|k+2> + |k-2>)/4, hard truncation at the window edge.
inline SparseOperator op_sin2(const BasisSpec& b) {
    std::vector<Eigen::Triplet<cplx>> t;
    for (int k = b.k_min(); k < b.k_max; ++k) {
        for (int n = 0; n <= b.n_max; ++n) {
            t.emplace_back(b.index(k, n), b.index(k, n), 0.5);
            if (b.contains(k + 2, n)) t.emplace_back(b.index(k + 2, n), b.index(k, n), -0.25);
            if (b.contains(k - 2, n)) t.emplace_back(b.index(k - 2, n), b.index(k, n), -0.25);
        }
    }
    return detail::from_triplets(b.dim, t);
}

/// p^2/2mu in recoil units: k^2 on |k>.
inline SparseOperator op_kinetic(const BasisSpec& b) {
    std::vector<Eigen::Triplet<cplx>> t;
    for (int k = b.k_min(); k < b.k_max; ++k)
        for (int n = 0; n <= b.n_max; ++n)
            if (k != 0) t.emplace_back(b.index(k, n), b.index(k, n), double(k) * k);
    return detail::from_triplets(b.dim, t);
}

/// H_eff = -Delta_c n + k^2 + U_0 sin^2(Kx) n + U_t sin(Kx) (a^dag + a)
inline SparseOperator build_h_eff(const ModelParams& p, const BasisSpec& b) {
    const SparseOperator num = op_field(b, FieldOp::number);
    const SparseOperator a = op_field(b, FieldOp::annihilate);
    const SparseOperator ad = op_field(b, FieldOp::create);
    const SparseOperator s = op_sin(b);
    const SparseOperator s2 = op_sin2(b);
    SparseOperator h = cplx(-p.delta_c) * num + op_kinetic(b);
    // sin^2 and n act on different factors, so the product is order independent.
    SparseOperator s2n = s2 * num;
    SparseOperator pump = s * SparseOperator(ad + a);
    h += cplx(p.u0) * s2n + cplx(p.ut) * pump;
    h.prune(cplx{0.0, 0.0});
    h.makeCompressed();
    return h;
}

/// Jump operator sqrt(2 kappa) a.
inline SparseOperator build_jump(const ModelParams& p, const BasisSpec& b) {
    SparseOperator j = cplx(std::sqrt(2.0 * p.kappa)) * op_field(b, FieldOp::annihilate);
    j.makeCompressed();
    return j;
}

/// H_nH = H_eff - (i/2) J^dag J = H_eff - i kappa n
inline SparseOperator build_h_nh(const ModelParams& p, const BasisSpec& b) {
    SparseOperator h = build_h_eff(p, b);
    h -= cplx(0.0, p.kappa) * op_field(b, FieldOp::number);
    h.makeCompressed();
    return h;
}

/// Matrix-free H_nH (or H_eff with kappa = 0) exploiting the fixed band
/// structure |dk| <= 2, |dn| <= 1. Same matrix as build_h_nh, applied
/// several times faster than the generic sparse product.
class BandedHamiltonian {
public:
    BandedHamiltonian(const ModelParams& p, const BasisSpec& b, bool with_decay = true)
        : b_(b), pad_(2 * b.dim_n + 1), pump_(0.0, -0.5 * p.ut), diag_(std::size_t(b.dim)),
          sin2_(std::size_t(b.dim)), up_(std::size_t(b.dim)), down_(std::size_t(b.dim)),
          scratch_(padded_size(), cplx{}) {
        const double kappa = with_decay ? p.kappa : 0.0;
        for (int i = 0; i < b.dim; ++i) {
            const int k = b.k_of(i);
            const int n = b.n_of(i);
            const auto u = std::size_t(i);
            diag_[u] = cplx(-p.delta_c * n + double(k) * k + 0.5 * p.u0 * n, -kappa * n);
            sin2_[u] = -0.25 * p.u0 * n;
            // zero at the Fock edges, so the n +- 1 terms never reach a neighbouring k block
            up_[u] = n < b.n_max ? std::sqrt(double(n + 1)) : 0.0;
            down_[u] = std::sqrt(double(n));
        }
    }

    const BasisSpec& basis() const { return b_; }

    /// Zero margin on each side of a padded vector; momenta outside the
    /// window read as zero amplitude.
    int padding() const { return pad_; }
    std::size_t padded_size() const { return std::size_t(b_.dim + 2 * pad_); }

    /// out = H psi where `padded` points at element 0 of a vector with
    /// padding() zeros before and after it.
    void apply_padded(const cplx* padded, cplx* out) const {
        const int dim = b_.dim;
        const int dn = b_.dim_n;
        const cplx pump = pump_;
        const cplx* d = diag_.data();
        const double* s2 = sin2_.data();
        const double* up = up_.data();
        const double* dw = down_.data();
        for (int i = 0; i < dim; ++i) {
            // sin(Kx): x(j) = psi(k-1) - psi(k+1); then a + a^dag inside the k block
            const cplx x_up = padded[i + 1 - dn] - padded[i + 1 + dn];
            const cplx x_dn = padded[i - 1 - dn] - padded[i - 1 + dn];
            out[i] = d[i] * padded[i] + s2[i] * (padded[i - 2 * dn] + padded[i + 2 * dn]) +
                     pump * (up[i] * x_up + dw[i] * x_dn);
        }
    }

    /// out = H psi. Uses an internal scratch buffer, so each thread needs its own copy.
    void apply(const StateVector& psi, StateVector& out) {
        std::copy(psi.data(), psi.data() + b_.dim, scratch_.data() + pad_);
        apply_padded(scratch_.data() + pad_, out.data());
    }

private:
    BasisSpec b_;
    int pad_;
    cplx pump_;  // U_t / 2i
    std::vector<cplx> diag_;
    std::vector<double> sin2_, up_, down_;
    std::vector<cplx> scratch_;
};

/// Diagonal of the half-wavelength translation combined with a -> -a:
/// |k,n> -> (-1)^(k+n) |k,n>.
inline Eigen::VectorXd parity_signs(const BasisSpec& b) {
    Eigen::VectorXd s(b.dim);
    for (int i = 0; i < b.dim; ++i) s[i] = ((b.k_of(i) + b.n_of(i)) % 2 == 0) ? 1.0 : -1.0;
    return s;
}

/// Adiabatic cavity amplitude a(x) = i U_t sin / (i [Delta_c - U_0 sin^2] - kappa).
inline cplx adiabatic_field(double kx, const ModelParams& p) {
    const double s = std::sin(kx);
    return I * p.ut * s / (I * (p.delta_c - p.u0 * s * s) - p.kappa);
}

inline double adiabatic_photon_number(double kx, const ModelParams& p) {
    const double s = std::sin(kx);
    const double detuning = p.delta_c - p.u0 * s * s;
    return p.ut * p.ut * s * s / (detuning * detuning + p.kappa * p.kappa);
}

/// Debug dump: one "row,col,re,im" line per stored entry.
inline void write_operator_csv(std::ostream& os, const SparseOperator& op) {
    os << "row,col,re,im\n";
    os.precision(17);
    for (int r = 0; r < op.outerSize(); ++r)
        for (SparseOperator::InnerIterator it(op, r); it; ++it)
            os << it.row() << ',' << it.col() << ',' << it.value().real() << ',' << it.value().imag() << '\n';
}

} // namespace cavmodes
