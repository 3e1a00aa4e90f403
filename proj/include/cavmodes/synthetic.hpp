// synthetic.hpp — exact-form states of the mixture model, used as known inputs
// for the decomposition and analysis checks.

#pragma once

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "cavmodes/decompose.hpp"
#include "cavmodes/density.hpp"
#include "cavmodes/model.hpp"

namespace cavmodes::synthetic {

/// Momentum amplitudes of a periodic Gaussian wave packet centred at Kx = center;
/// `width` is the packet width in units of 1/K.
inline Eigen::VectorXcd localized_packet(const BasisSpec& b, double center, double width) {
    Eigen::VectorXcd c(b.dim_k);
    for (int k = b.k_min(); k < b.k_max; ++k)
        c[b.k_index(k)] = std::exp(-0.5 * double(k) * k * width * width) * std::polar(1.0, -double(k) * center);
    return c / c.norm();
}

inline DensityMatrix pure_atom(const Eigen::VectorXcd& phi, const BasisSpec& b) {
    return {phi * phi.adjoint(), BasisTag::atom, b};
}

/// Packet at the Kx = pi/2 well (paired with +alpha).
inline DensityMatrix odd_mode(const BasisSpec& b, double width = 0.5) {
    return pure_atom(localized_packet(b, 0.5 * std::numbers::pi, width), b);
}

/// Packet at the Kx = 3 pi/2 well (paired with -alpha).
inline DensityMatrix even_mode(const BasisSpec& b, double width = 0.5) {
    return pure_atom(localized_packet(b, 1.5 * std::numbers::pi, width), b);
}

/// Zero-momentum plane wave: flat position density.
inline DensityMatrix uniform_mode(const BasisSpec& b) {
    Eigen::VectorXcd phi = Eigen::VectorXcd::Zero(b.dim_k);
    phi[b.k_index(0)] = 1.0;
    return pure_atom(phi, b);
}

/// eps rho_O (x) |a><a| + eps rho_E (x) |-a><-a| + (1 - 2 eps) rho_R (x) |0><0|
/// with truncated, unrenormalized coherent vectors, so the cavity reduction equals
/// coherent_mixture(alpha, eps) exactly.
inline DensityMatrix mixture_state(cplx alpha, double epsilon, const DensityMatrix& odd, const DensityMatrix& even,
                                   const DensityMatrix& residual) {
    ModeDecomposition d;
    d.alpha = alpha;
    d.weights = {epsilon, epsilon, 1.0 - 2.0 * epsilon};
    d.rho_odd = odd;
    d.rho_even = even;
    d.rho_residual = residual;
    return reconstruct(d);
}

inline DensityMatrix standard_mixture(const BasisSpec& b, cplx alpha = 1.2, double epsilon = 0.3) {
    return mixture_state(alpha, epsilon, odd_mode(b), even_mode(b), uniform_mode(b));
}

/// |odd>|alpha> + |even>|-alpha>, normalized: an entangled pure state.
inline DensityMatrix cat_state(const BasisSpec& b, cplx alpha) {
    const Eigen::VectorXcd o = localized_packet(b, 0.5 * std::numbers::pi, 0.5);
    const Eigen::VectorXcd e = localized_packet(b, 1.5 * std::numbers::pi, 0.5);
    const Eigen::VectorXcd plus = coherent_amplitudes(alpha, b.dim_n);
    const Eigen::VectorXcd minus = coherent_amplitudes(-alpha, b.dim_n);
    Eigen::VectorXcd psi(b.dim);
    for (int k = 0; k < b.dim_k; ++k)
        for (int n = 0; n < b.dim_n; ++n) psi[k * b.dim_n + n] = o[k] * plus[n] + e[k] * minus[n];
    psi /= psi.norm();
    return {psi * psi.adjoint(), BasisTag::full, b};
}

/// Random mixed state of the requested tag: a normalized Gram matrix G G^dag.
inline DensityMatrix random_density(const BasisSpec& b, BasisTag tag, std::mt19937_64& rng, int rank = 3) {
    std::normal_distribution<double> g;
    const int dim = DensityMatrix::expected_dim(b, tag);
    Eigen::MatrixXcd m(dim, rank);
    for (int r = 0; r < dim; ++r)
        for (int c = 0; c < rank; ++c) m(r, c) = cplx(g(rng), g(rng));
    Eigen::MatrixXcd rho = m * m.adjoint();
    rho /= rho.trace().real();
    return {rho, tag, b};
}

} // namespace cavmodes::synthetic
