// decompose.hpp — three-component mixture model of the atom-cavity state.
//
//   rho = eps rho_O (x) |a><a| + eps rho_E (x) |-a><-a| + (1 - 2 eps) rho_R (x) |0><0|
//
// The cavity part fixes alpha and eps through its moments; the atomic modes
// follow by acting with a and a^2 on the full density matrix and tracing out
// the field.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cavmodes/analysis.hpp"
#include "cavmodes/density.hpp"
#include "cavmodes/error.hpp"
#include "cavmodes/model.hpp"

namespace cavmodes {

/// alpha^n e^{-|alpha|^2/2} / sqrt(n!) for n = 0..dim_n-1; not renormalized
/// after truncation.
inline Eigen::VectorXcd coherent_amplitudes(cplx alpha, int dim_n) {
    Eigen::VectorXcd c(dim_n);
    c[0] = std::exp(-0.5 * std::norm(alpha));
    for (int n = 1; n < dim_n; ++n) c[n] = c[n - 1] * alpha / std::sqrt(double(n));
    return c;
}

inline Eigen::MatrixXcd coherent_mixture_matrix(cplx alpha, double epsilon, int dim_n) {
    const Eigen::VectorXcd plus = coherent_amplitudes(alpha, dim_n);
    const Eigen::VectorXcd minus = coherent_amplitudes(-alpha, dim_n);
    Eigen::MatrixXcd m = epsilon * (plus * plus.adjoint() + minus * minus.adjoint());
    m(0, 0) += 1.0 - 2.0 * epsilon;
    return m;
}

/// Cavity state predicted by the mixture model, in the truncated Fock basis.
inline DensityMatrix coherent_mixture(cplx alpha, double epsilon, const BasisSpec& b) {
    return {coherent_mixture_matrix(alpha, epsilon, b.dim_n), BasisTag::field, b};
}

struct CoherentFit {
    cplx alpha{0.0, 0.0};
    double epsilon{0.0};
    double epsilon_unclamped{0.0};
    double clamped_by{0.0};    // |epsilon - epsilon_unclamped|
    cplx moment_ratio{0.0, 0.0};  // <a^4> / <a^2>
    FieldMoments moments;
};

/// alpha = root of <a^4>/<a^2>, eps = <a^dag a> / (2 |alpha|^2) clamped to [0, 1/2].
/// The sign of alpha is chosen on the side of `reference` (e.g. the adiabatic
/// field at Kx = pi/2); with no reference, Re(alpha) >= 0 (Im >= 0 on a tie).
inline CoherentFit fit_coherent_amplitude(const DensityMatrix& rho_cav, double tolerance = 1e-8,
                                          cplx reference = {0.0, 0.0}) {
    CoherentFit fit;
    fit.moments = field_moments(rho_cav);
    require(std::abs(fit.moments.a2) > tolerance, ErrorKind::degenerate_field,
            "degenerate field: |<a^2>| below tolerance, no +-alpha structure to fit");
    fit.moment_ratio = fit.moments.a4 / fit.moments.a2;
    fit.alpha = std::sqrt(fit.moment_ratio);
    if (std::abs(reference) > 0.0) {
        if ((fit.alpha * std::conj(reference)).real() < 0.0) fit.alpha = -fit.alpha;
    } else if (fit.alpha.real() < 0.0 || (fit.alpha.real() == 0.0 && fit.alpha.imag() < 0.0)) {
        fit.alpha = -fit.alpha;
    }
    require(std::norm(fit.alpha) > 0.0, ErrorKind::degenerate_field, "fitted amplitude is zero");
    fit.epsilon_unclamped = fit.moments.n / (2.0 * std::norm(fit.alpha));
    fit.epsilon = std::clamp(fit.epsilon_unclamped, 0.0, 0.5);
    fit.clamped_by = std::abs(fit.epsilon - fit.epsilon_unclamped);
    return fit;
}

/// Sum of absolute eigenvalues of a Hermitian matrix (= sum of singular values).
inline double trace_norm_hermitian(const Eigen::MatrixXcd& m) {
    const Eigen::MatrixXcd h = 0.5 * (m + m.adjoint());
    return hermitian_eigenvalues(h).cwiseAbs().sum();
}

/// Sum over n of |P_fit(n) - P(n)|: the entrywise absolute trace Tr|rho_fit - rho_cav|
/// restricted to the photon-number distribution.
inline double photon_distribution_error(const DensityMatrix& rho_cav, cplx alpha, double epsilon) {
    detail::require_tag(rho_cav, BasisTag::field);
    const Eigen::MatrixXcd fit = coherent_mixture_matrix(alpha, epsilon, rho_cav.dim());
    return (fit.diagonal() - rho_cav.data.diagonal()).real().cwiseAbs().sum();
}

/// Trace norm (sum of singular values) of rho_fit - rho_cav.
inline double trace_norm_fit_error(const DensityMatrix& rho_cav, cplx alpha, double epsilon) {
    detail::require_tag(rho_cav, BasisTag::field);
    return trace_norm_hermitian(coherent_mixture_matrix(alpha, epsilon, rho_cav.dim()) - rho_cav.data);
}

enum class FitErrorMeasure { photon_distribution, trace_norm };

inline const char* to_string(FitErrorMeasure m) {
    return m == FitErrorMeasure::trace_norm ? "trace_norm" : "photon_distribution";
}

/// Cavity fit error. The default compares photon-number distributions;
/// trace_norm also counts the off-diagonal coherences of rho_cav.
inline double cavity_fit_error(const DensityMatrix& rho_cav, cplx alpha, double epsilon,
                               FitErrorMeasure measure = FitErrorMeasure::photon_distribution) {
    return measure == FitErrorMeasure::trace_norm ? trace_norm_fit_error(rho_cav, alpha, epsilon)
                                                  : photon_distribution_error(rho_cav, alpha, epsilon);
}

struct ModeDecomposition {
    cplx alpha{0.0, 0.0};
    double epsilon{0.0};
    double fit_error{0.0};              // photon-distribution measure
    double fit_error_trace_norm{0.0};
    DensityMatrix rho_odd, rho_even, rho_residual;  // atomic, unit trace
    std::array<double, 3> weights{};                // (eps, eps, 1 - 2 eps)
    std::array<double, 3> extracted_weights{};      // traces before normalization
    double hermiticity_defect{0.0};  // largest |M - M^dag|/2 entry of the raw modes, per unit weight
    double weight_mismatch{0.0};     // max |extracted - model weight|
};

/// Splits a full density matrix into the atomic modes tied to +alpha, -alpha
/// and the vacuum. The +alpha mode is labelled odd.
inline ModeDecomposition extract_modes(const DensityMatrix& rho, cplx alpha, double epsilon,
                                       double tolerance = 1e-8) {
    detail::require_full(rho);
    require(std::abs(alpha) > tolerance, ErrorKind::decomposition_undefined,
            "decomposition undefined: |alpha| below tolerance");
    const BasisSpec& b = rho.basis;
    const Eigen::MatrixXcd a = field_annihilation(b.dim_n);
    const Eigen::MatrixXcd t0 = trace_field_with(rho.data, b, Eigen::MatrixXcd::Identity(b.dim_n, b.dim_n));
    const Eigen::MatrixXcd t1 = trace_field_with(rho.data, b, a);
    const Eigen::MatrixXcd t2 = trace_field_with(rho.data, b, a * a);
    const cplx alpha2 = alpha * alpha;

    const std::array<Eigen::MatrixXcd, 3> raw{
        (t2 + alpha * t1) / (2.0 * alpha2),
        (t2 - alpha * t1) / (2.0 * alpha2),
        t0 - t2 / alpha2,
    };

    ModeDecomposition d;
    d.alpha = alpha;
    d.epsilon = epsilon;
    d.weights = {epsilon, epsilon, 1.0 - 2.0 * epsilon};
    const DensityMatrix rho_cav = reduce_field(rho);
    d.fit_error = photon_distribution_error(rho_cav, alpha, epsilon);
    d.fit_error_trace_norm = trace_norm_fit_error(rho_cav, alpha, epsilon);
    std::array<DensityMatrix*, 3> out{&d.rho_odd, &d.rho_even, &d.rho_residual};
    for (std::size_t m = 0; m < 3; ++m) {
        const double w = raw[m].trace().real();
        d.extracted_weights[m] = w;
        require(w >= -1e-3, ErrorKind::model_mismatch,
                "model mismatch: extracted mode weight " + std::to_string(w) + " is negative");
        Eigen::MatrixXcd h = 0.5 * (raw[m] + raw[m].adjoint());
        if (w > 1e-9) {
            d.hermiticity_defect = std::max(d.hermiticity_defect, 0.5 * hermiticity_defect(raw[m]) / w);
            h /= h.trace().real();
        }
        *out[m] = DensityMatrix{h, BasisTag::atom, b};
        d.weight_mismatch = std::max(d.weight_mismatch, std::abs(w - d.weights[m]));
    }
    return d;
}

inline Eigen::MatrixXcd kron_atom_field(const Eigen::MatrixXcd& atom, const Eigen::MatrixXcd& field) {
    const Eigen::Index dk = atom.rows(), dn = field.rows();
    Eigen::MatrixXcd out(dk * dn, dk * dn);
    for (Eigen::Index k1 = 0; k1 < dk; ++k1)
        for (Eigen::Index k2 = 0; k2 < dk; ++k2) out.block(k1 * dn, k2 * dn, dn, dn) = atom(k1, k2) * field;
    return out;
}

/// Full density matrix of the mixture model for a given decomposition.
inline DensityMatrix reconstruct(const ModeDecomposition& d) {
    const BasisSpec& b = d.rho_odd.basis;
    const Eigen::VectorXcd plus = coherent_amplitudes(d.alpha, b.dim_n);
    const Eigen::VectorXcd minus = coherent_amplitudes(-d.alpha, b.dim_n);
    Eigen::MatrixXcd vac = Eigen::MatrixXcd::Zero(b.dim_n, b.dim_n);
    vac(0, 0) = 1.0;
    Eigen::MatrixXcd full = d.weights[0] * kron_atom_field(d.rho_odd.data, plus * plus.adjoint());
    full += d.weights[1] * kron_atom_field(d.rho_even.data, minus * minus.adjoint());
    full += d.weights[2] * kron_atom_field(d.rho_residual.data, vac);
    return {full, BasisTag::full, b};
}

/// S rho S^dag with S|k,n> = (-1)^(k+n)|k,n>: shifts the atom by half a
/// wavelength and flips the field sign, exchanging the odd and even modes.
inline DensityMatrix apply_parity(const DensityMatrix& rho) {
    detail::require_full(rho);
    const Eigen::VectorXd s = parity_signs(rho.basis);
    return {s.asDiagonal() * rho.data * s.asDiagonal(), BasisTag::full, rho.basis};
}

/// S_a rho S_a^dag with S_a|k> = (-1)^k|k>: the atomic half of apply_parity.
inline DensityMatrix translate_half_wavelength(const DensityMatrix& rho_at) {
    detail::require_tag(rho_at, BasisTag::atom);
    Eigen::VectorXd s(rho_at.basis.dim_k);
    for (int k = rho_at.basis.k_min(); k < rho_at.basis.k_max; ++k) s[rho_at.basis.k_index(k)] = (k % 2 == 0) ? 1.0 : -1.0;
    return {s.asDiagonal() * rho_at.data * s.asDiagonal(), BasisTag::atom, rho_at.basis};
}

/// Fit plus mode extraction in one call.
inline ModeDecomposition decompose(const DensityMatrix& rho, double tolerance = 1e-8, cplx reference = {0.0, 0.0}) {
    const CoherentFit fit = fit_coherent_amplitude(reduce_field(rho), tolerance, reference);
    return extract_modes(rho, fit.alpha, fit.epsilon, tolerance);
}

struct ModeWeightPoint {
    double kappa_t{0.0};
    double epsilon{0.0};
    double residual_weight{1.0};
    cplx alpha{0.0, 0.0};
    double fit_error{0.0};
    std::optional<ModeDecomposition> modes;
    std::string error;  // empty when the frame decomposed cleanly
};

struct TimedFrame {
    double kappa_t{0.0};
    const DensityMatrix* rho{nullptr};
};

/// Per-frame fit and decomposition. Frames without a usable field (e.g. the
/// initial vacuum) report eps = 0; errors are collected, not thrown.
inline std::vector<ModeWeightPoint> mode_weight_series(const std::vector<TimedFrame>& frames,
                                                       double tolerance = 1e-8,
                                                       cplx reference = {0.0, 0.0}) {
    std::vector<ModeWeightPoint> out;
    double last_t = -1.0;
    for (const auto& f : frames) {
        require(f.rho != nullptr && f.kappa_t > last_t, ErrorKind::invalid_argument,
                "frames must be non-null and strictly increasing in time");
        last_t = f.kappa_t;
        ModeWeightPoint p;
        p.kappa_t = f.kappa_t;
        try {
            const CoherentFit fit = fit_coherent_amplitude(reduce_field(*f.rho), tolerance, reference);
            p.alpha = fit.alpha;
            p.epsilon = fit.epsilon;
            p.residual_weight = 1.0 - 2.0 * fit.epsilon;
            p.modes = extract_modes(*f.rho, fit.alpha, fit.epsilon, tolerance);
            p.fit_error = p.modes->fit_error;
        } catch (const Error& e) {
            p.error = std::string(to_string(e.kind())) + ": " + e.what();
            if (e.kind() == ErrorKind::degenerate_field) {
                p.epsilon = 0.0;
                p.residual_weight = 1.0;
                p.alpha = 0.0;
            }
        }
        out.push_back(std::move(p));
    }
    return out;
}

} // namespace cavmodes
