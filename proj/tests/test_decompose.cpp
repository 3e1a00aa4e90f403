#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "cavmodes/analysis.hpp"
#include "cavmodes/decompose.hpp"
#include "cavmodes/synthetic.hpp"

using namespace cavmodes;

namespace {

BasisSpec basis(int k_max = 8, int n_max = 10) {
    ModelParams p;
    p.k_max = k_max;
    p.n_max = n_max;
    return build_basis(p);
}

// alpha^n e^{-|alpha|^2/2} / sqrt(n!) with no renormalization
Eigen::VectorXcd truncated_coherent(double alpha, int dim_n) {
    Eigen::VectorXcd c(dim_n);
    for (int n = 0; n < dim_n; ++n)
        c[n] = std::pow(alpha, n) * std::exp(-0.5 * alpha * alpha) / std::sqrt(std::tgamma(n + 1.0));
    return c;
}

DensityMatrix field_mixture(double alpha, double eps, const BasisSpec& b) {
    const Eigen::VectorXcd p = truncated_coherent(alpha, b.dim_n);
    const Eigen::VectorXcd m = truncated_coherent(-alpha, b.dim_n);
    Eigen::MatrixXcd rho = eps * (p * p.adjoint() + m * m.adjoint());
    rho(0, 0) += 1.0 - 2.0 * eps;
    return {rho, BasisTag::field, b};
}

} // namespace

TEST(CoherentFit, RecoversMixtureParameters) {
    const BasisSpec b = basis(2);
    for (auto [alpha, eps] : {std::pair{1.2, 0.3}, std::pair{0.8, 0.5}}) {
        const CoherentFit f = fit_coherent_amplitude(field_mixture(alpha, eps, b));
        // the sign of alpha is a convention; the pair +-alpha is what is fixed
        EXPECT_NEAR(std::abs(f.alpha), alpha, 1e-3);
        EXPECT_NEAR(std::abs(f.alpha.imag()) * std::abs(f.alpha.real()), 0.0, 1e-3);
        EXPECT_NEAR(f.epsilon, eps, 1e-3);
    }
}

TEST(CoherentFit, VacuumIsDegenerate) {
    const BasisSpec b = basis(2);
    Eigen::MatrixXcd vac = Eigen::MatrixXcd::Zero(b.dim_n, b.dim_n);
    vac(0, 0) = 1.0;
    try {
        fit_coherent_amplitude({vac, BasisTag::field, b});
        FAIL() << "expected degenerate_field";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::degenerate_field);
    }
}

TEST(FitError, ZeroForExactFit) {
    const BasisSpec b = basis(2);
    const DensityMatrix rho = coherent_mixture(1.2, 0.3, b);
    for (auto m : {FitErrorMeasure::photon_distribution, FitErrorMeasure::trace_norm})
        EXPECT_LE(cavity_fit_error(rho, 1.2, 0.3, m), 1e-12);
}

TEST(FitError, MeasuresAgainstHandSums) {
    const BasisSpec b = basis(2, 4);
    Eigen::MatrixXcd fock = Eigen::MatrixXcd::Zero(b.dim_n, b.dim_n);
    fock(1, 1) = 1.0;
    const DensityMatrix rho{fock, BasisTag::field, b};
    const Eigen::MatrixXcd fit = coherent_mixture_matrix(0.7, 0.25, b.dim_n);
    double l1 = 0.0;
    for (int n = 0; n < b.dim_n; ++n) l1 += std::abs(fit(n, n).real() - fock(n, n).real());
    EXPECT_NEAR(cavity_fit_error(rho, 0.7, 0.25), l1, 1e-14);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(fit - fock);
    EXPECT_NEAR(cavity_fit_error(rho, 0.7, 0.25, FitErrorMeasure::trace_norm), es.eigenvalues().cwiseAbs().sum(),
                1e-12);
}

TEST(ExtractModes, RoundTripOnSyntheticMixture) {
    const BasisSpec b = basis();
    const DensityMatrix odd = synthetic::odd_mode(b, 0.5);
    const DensityMatrix even = synthetic::even_mode(b, 0.8);
    const DensityMatrix res = synthetic::uniform_mode(b);
    const DensityMatrix rho = synthetic::mixture_state(1.2, 0.3, odd, even, res);
    const ModeDecomposition d = decompose(rho);
    const double sign = d.alpha.real() > 0 ? 1.0 : -1.0;
    EXPECT_NEAR(std::abs(d.alpha - sign * 1.2), 0.0, 1e-3);
    EXPECT_NEAR(d.epsilon, 0.3, 1e-3);
    // the +alpha mode is labelled odd
    const DensityMatrix& got_plus = sign > 0 ? d.rho_odd : d.rho_even;
    const DensityMatrix& got_minus = sign > 0 ? d.rho_even : d.rho_odd;
    EXPECT_LT((got_plus.data - odd.data).cwiseAbs().maxCoeff(), 1e-3);
    EXPECT_LT((got_minus.data - even.data).cwiseAbs().maxCoeff(), 1e-3);
    EXPECT_LT((d.rho_residual.data - res.data).cwiseAbs().maxCoeff(), 1e-3);
    EXPECT_LT(d.weight_mismatch, 1e-3);
    EXPECT_LT(trace_distance(reconstruct(d).data, rho.data), 1e-3);
    EXPECT_LE(extract_modes(rho, 1.2, 0.3).fit_error, 1e-12);
}

TEST(ExtractModes, NoVacuumPart) {
    const BasisSpec b = basis();
    const DensityMatrix rho =
        synthetic::mixture_state(0.8, 0.5, synthetic::odd_mode(b), synthetic::even_mode(b), synthetic::uniform_mode(b));
    const ModeDecomposition d = decompose(rho);
    EXPECT_NEAR(d.extracted_weights[2], 0.0, 1e-3);
    EXPECT_NEAR(d.weights[2], 0.0, 1e-3);
}

TEST(ExtractModes, ParitySwapsOddAndEven) {
    const BasisSpec b = basis();
    const DensityMatrix rho = synthetic::mixture_state(1.2, 0.3, synthetic::odd_mode(b, 0.5),
                                                       synthetic::even_mode(b, 0.8), synthetic::uniform_mode(b));
    const ModeDecomposition d = extract_modes(rho, 1.2, 0.3);
    const ModeDecomposition m = extract_modes(apply_parity(rho), 1.2, 0.3);
    EXPECT_LT((m.rho_odd.data - translate_half_wavelength(d.rho_even).data).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((m.rho_even.data - translate_half_wavelength(d.rho_odd).data).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((m.rho_residual.data - translate_half_wavelength(d.rho_residual).data).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ExtractModes, ModesPeakAtExpectedSites) {
    const BasisSpec b = basis();
    const DensityMatrix rho = synthetic::standard_mixture(b);
    const ModeDecomposition d = extract_modes(rho, 1.2, 0.3);
    const PositionGrid grid{64};
    auto peak = [&](const DensityMatrix& m) {
        const Eigen::VectorXd x = position_density(m, grid);
        Eigen::Index j;
        x.maxCoeff(&j);
        return grid.kx(int(j));
    };
    EXPECT_NEAR(peak(d.rho_odd), 0.5 * std::numbers::pi, 1e-12);
    EXPECT_NEAR(peak(d.rho_even), 1.5 * std::numbers::pi, 1e-12);
}

TEST(ExtractModes, SmallAlphaIsUndefined) {
    const BasisSpec b = basis(4, 4);
    const DensityMatrix rho = synthetic::standard_mixture(b);
    try {
        extract_modes(rho, 1e-12, 0.3);
        FAIL() << "expected decomposition_undefined";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::decomposition_undefined);
    }
}

TEST(ExtractModes, NegativeWeightIsModelMismatch) {
    // (|0> + |2>)/sqrt 2 has <a^2> far above alpha^2 at alpha = 0.3: the vacuum weight goes negative
    const BasisSpec b = basis(4, 4);
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(b.dim_n);
    psi[0] = psi[2] = 1.0 / std::sqrt(2.0);
    const Eigen::MatrixXcd field = psi * psi.adjoint();
    const DensityMatrix rho{kron_atom_field(synthetic::uniform_mode(b).data, field), BasisTag::full, b};
    try {
        extract_modes(rho, 0.3, 0.4);
        FAIL() << "expected model_mismatch";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::model_mismatch);
    }
}

TEST(ModeWeightSeries, VacuumFrameAndLaterFrame) {
    const BasisSpec b = basis();
    Eigen::MatrixXcd vac = Eigen::MatrixXcd::Zero(b.dim, b.dim);
    vac(b.index(0, 0), b.index(0, 0)) = 1.0;
    const DensityMatrix rho0{vac, BasisTag::full, b};
    const DensityMatrix rho1 = synthetic::standard_mixture(b);
    const auto s = mode_weight_series({{0.0, &rho0}, {1.0, &rho1}});
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s[0].epsilon, 0.0);
    EXPECT_EQ(s[0].residual_weight, 1.0);
    EXPECT_FALSE(s[0].modes.has_value());
    EXPECT_NEAR(s[1].epsilon, 0.3, 1e-3);
    EXPECT_NEAR(s[1].residual_weight, 0.4, 2e-3);
    EXPECT_TRUE(s[1].error.empty());
    EXPECT_THROW(mode_weight_series({{1.0, &rho0}, {0.5, &rho1}}), Error);
}

TEST(CoherentFit, ReferenceFixesTheSign) {
    const BasisSpec b = basis(2);
    const cplx alpha(0.05, 1.1);
    const DensityMatrix rho = coherent_mixture(alpha, 0.3, b);
    EXPECT_NEAR(std::abs(fit_coherent_amplitude(rho, 1e-8, cplx(0.0, 1.0)).alpha - alpha), 0.0, 1e-3);
    EXPECT_NEAR(std::abs(fit_coherent_amplitude(rho, 1e-8, cplx(0.0, -1.0)).alpha + alpha), 0.0, 1e-3);
    EXPECT_GE(fit_coherent_amplitude(rho).alpha.real(), 0.0);
}
