// analysis.hpp — reduced states, position-space density matrices, spatial
// correlation, atom-field negativity and photon statistics.

#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "cavmodes/density.hpp"
#include "cavmodes/error.hpp"
#include "cavmodes/model.hpp"

namespace cavmodes {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

namespace detail {

inline void require_full(const DensityMatrix& rho) {
    require(rho.tag == BasisTag::full && rho.dim() == rho.basis.dim, ErrorKind::basis_mismatch,
            std::string("expected a full-basis density matrix, got ") + to_string(rho.tag));
}

inline void require_tag(const DensityMatrix& rho, BasisTag tag) {
    require(rho.tag == tag && rho.dim() == DensityMatrix::expected_dim(rho.basis, tag), ErrorKind::basis_mismatch,
            std::string("expected a ") + to_string(tag) + " density matrix, got " + to_string(rho.tag));
}

} // namespace detail

/// Tr_field (F rho) for a field-space operator F, i.e. sum_{n,m} F(n,m) rho(k,m;k',n).
/// With F = identity this is the ordinary partial trace over the cavity.
inline Eigen::MatrixXcd trace_field_with(const Eigen::MatrixXcd& rho, const BasisSpec& b, const Eigen::MatrixXcd& f) {
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(b.dim_k, b.dim_k);
    for (int k1 = 0; k1 < b.dim_k; ++k1)
        for (int k2 = 0; k2 < b.dim_k; ++k2) {
            // block rho(k1, . ; k2, .) is dim_n x dim_n
            const auto block = rho.block(k1 * b.dim_n, k2 * b.dim_n, b.dim_n, b.dim_n);
            out(k1, k2) = (f.array() * block.transpose().array()).sum();
        }
    return out;
}

inline DensityMatrix reduce_atom(const DensityMatrix& rho) {
    detail::require_full(rho);
    const BasisSpec& b = rho.basis;
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(b.dim_k, b.dim_k);
    for (int k1 = 0; k1 < b.dim_k; ++k1)
        for (int k2 = 0; k2 < b.dim_k; ++k2)
            out(k1, k2) = rho.data.block(k1 * b.dim_n, k2 * b.dim_n, b.dim_n, b.dim_n).trace();
    return {out, BasisTag::atom, b};
}

inline DensityMatrix reduce_field(const DensityMatrix& rho) {
    detail::require_full(rho);
    const BasisSpec& b = rho.basis;
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(b.dim_n, b.dim_n);
    for (int k = 0; k < b.dim_k; ++k) out += rho.data.block(k * b.dim_n, k * b.dim_n, b.dim_n, b.dim_n);
    return {out, BasisTag::field, b};
}

/// Uniform grid Kx_j = 2 pi j / N_x over one period (two lattice sites).
struct PositionGrid {
    int points{256};

    double kx(int j) const { return two_pi * double(j) / double(points); }
    double spacing() const { return two_pi / double(points); }
    std::vector<double> coordinates() const {
        std::vector<double> x(static_cast<std::size_t>(points));
        for (int j = 0; j < points; ++j) x[std::size_t(j)] = kx(j);
        return x;
    }

    void validate(const BasisSpec& b) const {
        require(points >= 4 * b.k_max, ErrorKind::invalid_argument,
                "position grid needs at least 4 k_max points");
    }
};

namespace detail {

// E(j, k) = exp(i k x_j) / sqrt(2 pi)
inline Eigen::MatrixXcd plane_waves(const PositionGrid& grid, const BasisSpec& b) {
    Eigen::MatrixXcd e(grid.points, b.dim_k);
    const double norm = 1.0 / std::sqrt(two_pi);
    for (int j = 0; j < grid.points; ++j)
        for (int kk = 0; kk < b.dim_k; ++kk) e(j, kk) = std::polar(norm, double(kk - b.k_max) * grid.kx(j));
    return e;
}

} // namespace detail

/// rho_at(x1, x2) = (1/2pi) sum_{k,k'} e^{i(k x1 - k' x2)} rho_at(k,k') on the grid.
inline Eigen::MatrixXcd position_representation(const DensityMatrix& rho_at, const PositionGrid& grid) {
    detail::require_tag(rho_at, BasisTag::atom);
    grid.validate(rho_at.basis);
    const Eigen::MatrixXcd e = detail::plane_waves(grid, rho_at.basis);
    return e * rho_at.data * e.adjoint();
}

/// Probability density rho_at(x, x) on the grid; integrates to tr rho_at
/// under the rectangle rule with spacing 2 pi / N_x.
inline Eigen::VectorXd position_density(const DensityMatrix& rho_at, const PositionGrid& grid) {
    detail::require_tag(rho_at, BasisTag::atom);
    grid.validate(rho_at.basis);
    const Eigen::MatrixXcd e = detail::plane_waves(grid, rho_at.basis);
    const Eigen::MatrixXcd er = e * rho_at.data;
    Eigen::VectorXd out(grid.points);
    for (int j = 0; j < grid.points; ++j) out[j] = er.row(j).dot(e.row(j)).real();
    return out;
}

/// Inverse of position_representation (exact for N_x >= 4 k_max).
inline DensityMatrix momentum_representation(const Eigen::MatrixXcd& rho_x, const PositionGrid& grid,
                                             const BasisSpec& b) {
    grid.validate(b);
    const Eigen::MatrixXcd e = detail::plane_waves(grid, b);
    const double w = grid.spacing();
    return {w * w * (e.adjoint() * rho_x * e), BasisTag::atom, b};
}

/// Evaluates chi(x) = \int d(K xi) |rho_at(xi, xi + x)| for each requested x
/// by the trapezoid rule on the (periodic) grid.
class CorrelationEvaluator {
public:
    CorrelationEvaluator(const DensityMatrix& rho_at, const PositionGrid& grid) : grid_(grid), b_(rho_at.basis) {
        detail::require_tag(rho_at, BasisTag::atom);
        grid.validate(b_);
        const Eigen::MatrixXcd e = detail::plane_waves(grid, b_);
        // m(j, k') = [sum_k e^{i k xi_j} rho(k,k')] e^{-i k' xi_j} / 2pi
        m_ = (e * rho_at.data).cwiseProduct(e.conjugate());
    }

    double operator()(double kx) const {
        Eigen::VectorXcd shift(b_.dim_k);
        for (int kk = 0; kk < b_.dim_k; ++kk) shift[kk] = std::polar(1.0, -double(kk - b_.k_max) * kx);
        return (m_ * shift).cwiseAbs().sum() * grid_.spacing();
    }

private:
    PositionGrid grid_;
    BasisSpec b_;
    Eigen::MatrixXcd m_;
};

inline double correlation_chi(const DensityMatrix& rho_at, double kx, const PositionGrid& grid) {
    return CorrelationEvaluator(rho_at, grid)(kx);
}

/// <n1,k1| rho_PT |n2,k2> = <n1,k2| rho |n2,k1>: transpose on the atomic index.
inline Eigen::MatrixXcd partial_transpose_atom(const DensityMatrix& rho) {
    detail::require_full(rho);
    const BasisSpec& b = rho.basis;
    Eigen::MatrixXcd out(b.dim, b.dim);
    for (int k1 = 0; k1 < b.dim_k; ++k1)
        for (int k2 = 0; k2 < b.dim_k; ++k2)
            out.block(k1 * b.dim_n, k2 * b.dim_n, b.dim_n, b.dim_n) =
                rho.data.block(k2 * b.dim_n, k1 * b.dim_n, b.dim_n, b.dim_n);
    return out;
}

/// Sum of |lambda| over eigenvalues of the partial transpose below -threshold.
inline double negativity(const DensityMatrix& rho, double threshold = 1e-8) {
    Eigen::MatrixXcd pt = partial_transpose_atom(rho);
    pt = 0.5 * (pt + pt.adjoint()).eval();
    const Eigen::VectorXd ev = hermitian_eigenvalues(pt);
    double neg = 0.0;
    for (double l : ev)
        if (l < -threshold) neg -= l;
    return neg;
}

struct FieldMoments {
    cplx a{0.0, 0.0};
    cplx a2{0.0, 0.0};
    cplx a4{0.0, 0.0};
    double n{0.0};
};

/// Truncated annihilation operator on the Fock factor.
inline Eigen::MatrixXcd field_annihilation(int dim_n) {
    Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(dim_n, dim_n);
    for (int n = 1; n < dim_n; ++n) a(n - 1, n) = std::sqrt(double(n));
    return a;
}

inline FieldMoments field_moments(const DensityMatrix& rho_cav) {
    detail::require_tag(rho_cav, BasisTag::field);
    const Eigen::MatrixXcd a = field_annihilation(rho_cav.dim());
    const Eigen::MatrixXcd a2 = a * a;
    FieldMoments m;
    m.a = (rho_cav.data * a).trace();
    m.a2 = (rho_cav.data * a2).trace();
    m.a4 = (rho_cav.data * a2 * a2).trace();
    m.n = (rho_cav.data * a.adjoint() * a).trace().real();
    return m;
}

inline std::vector<double> photon_distribution(const DensityMatrix& rho_cav) {
    detail::require_tag(rho_cav, BasisTag::field);
    std::vector<double> p(static_cast<std::size_t>(rho_cav.dim()));
    for (int n = 0; n < rho_cav.dim(); ++n) p[std::size_t(n)] = rho_cav.data(n, n).real();
    return p;
}

/// Q = (Var(n) - <n>) / <n>.
inline double mandel_q(const DensityMatrix& rho_cav, double tolerance = 1e-6) {
    const std::vector<double> p = photon_distribution(rho_cav);
    double mean = 0.0, second = 0.0;
    for (std::size_t n = 0; n < p.size(); ++n) {
        mean += double(n) * p[n];
        second += double(n) * double(n) * p[n];
    }
    require(mean > tolerance, ErrorKind::undefined, "Mandel Q undefined for a field with <n> ~ 0");
    return (second - mean * mean - mean) / mean;
}

} // namespace cavmodes
