// oracle.hpp — direct integration of the Lindblad master equation on small
// truncations; the exact reference for the trajectory engine.

#pragma once

#include <cmath>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "cavmodes/density.hpp"
#include "cavmodes/error.hpp"
#include "cavmodes/model.hpp"

namespace cavmodes {

struct LiouvillianSpec {
    ModelParams params;
    BasisSpec basis;
    SparseOperator h_eff;
    SparseOperator h_nh;  // H_eff - (i/2) J^dag J
    SparseOperator jump;  // sqrt(2 kappa) a

    static constexpr double max_entries = 1e6;  // of the vectorized rho

    explicit LiouvillianSpec(const ModelParams& p)
        : params(p), basis(build_basis(p)) {
        require(double(basis.dim) * double(basis.dim) <= max_entries, ErrorKind::invalid_argument,
                "master-equation oracle refuses dim^2 = " + std::to_string(basis.dim * basis.dim) +
                    " > 1e6; use the trajectory engine");
        h_eff = build_h_eff(p, basis);
        h_nh = build_h_nh(p, basis);
        jump = build_jump(p, basis);
    }

    double max_hamiltonian_entry() const {
        double m = 0.0;
        for (int r = 0; r < h_eff.outerSize(); ++r)
            for (SparseOperator::InnerIterator it(h_eff, r); it; ++it) m = std::max(m, std::abs(it.value()));
        return m;
    }
};

namespace detail {

struct LiouvillianScratch {
    Eigen::MatrixXcd h_rho, j_rho, j_rho_d;
};

// out = -i (H_nH rho - rho H_nH^dag) + J rho J^dag, with J rho J^dag taken as
// (J (J rho)^dag)^dag so both products stay sparse-times-dense
inline void liouvillian_into(const Eigen::MatrixXcd& rho, const LiouvillianSpec& spec, Eigen::MatrixXcd& out,
                             LiouvillianScratch& w) {
    w.h_rho.noalias() = spec.h_nh * rho;
    w.j_rho.noalias() = spec.jump * rho;
    w.j_rho_d = w.j_rho.adjoint();
    w.j_rho.noalias() = spec.jump * w.j_rho_d;
    out = cplx(0.0, -1.0) * (w.h_rho - w.h_rho.adjoint()) + w.j_rho.adjoint();
}

} // namespace detail

/// d rho/dt = -i [H_eff, rho] + J rho J^dag - {J^dag J, rho}/2, written as
/// -i (H_nH rho - rho H_nH^dag) + J rho J^dag.
inline Eigen::MatrixXcd liouvillian_apply(const Eigen::MatrixXcd& rho, const LiouvillianSpec& spec) {
    require(rho.rows() == spec.basis.dim && rho.cols() == spec.basis.dim, ErrorKind::basis_mismatch,
            "density matrix dimension does not match the Liouvillian");
    Eigen::MatrixXcd out;
    detail::LiouvillianScratch w;
    detail::liouvillian_into(rho, spec, out, w);
    return out;
}

inline DensityMatrix liouvillian_apply(const DensityMatrix& rho, const LiouvillianSpec& spec) {
    require(rho.tag == BasisTag::full && rho.basis == spec.basis, ErrorKind::basis_mismatch,
            "Liouvillian needs a full-basis density matrix of the same model");
    return {liouvillian_apply(rho.data, spec), BasisTag::full, spec.basis};
}

struct TimedDensity {
    double kappa_t{0.0};
    DensityMatrix rho;
};

namespace detail {

class Rk4Density {
public:
    void step(Eigen::MatrixXcd& rho, const LiouvillianSpec& spec, double dt) {
        liouvillian_into(rho, spec, k_, w_);
        acc_ = k_;
        stage_ = rho + (0.5 * dt) * k_;
        liouvillian_into(stage_, spec, k_, w_);
        acc_ += 2.0 * k_;
        stage_ = rho + (0.5 * dt) * k_;
        liouvillian_into(stage_, spec, k_, w_);
        acc_ += 2.0 * k_;
        stage_ = rho + dt * k_;
        liouvillian_into(stage_, spec, k_, w_);
        acc_ += k_;
        rho += (dt / 6.0) * acc_;
    }

private:
    Eigen::MatrixXcd k_, acc_, stage_;
    LiouvillianScratch w_;
};

inline void check_drift(const DensityMatrix& rho, double kappa_t) {
    const double drift = 1e-6 * std::max(1.0, kappa_t);
    const DensityCheck c = check_density(rho);
    if (!c.ok(1e-9 + drift, 1e-9 + drift, -1e-8 - drift)) {
        std::ostringstream msg;
        msg << "master-equation integration left the density-matrix set at kappa t = " << kappa_t
            << " (hermiticity " << c.hermiticity_defect << ", trace error " << c.trace_error
            << ", min eigenvalue " << c.min_eigenvalue << ")";
        throw Error(ErrorKind::invariant_violation, msg.str());
    }
}

} // namespace detail

/// Fixed-step RK4 from rho0 to `kappa_horizon`, returning rho at each of
/// `sample_times` (kappa t, ascending; each rounded to the step grid).
inline std::vector<TimedDensity> integrate_master_equation(const LiouvillianSpec& spec, const DensityMatrix& rho0,
                                                           double kappa_horizon, double kappa_dt,
                                                           const std::vector<double>& sample_times) {
    const double dt = kappa_dt / spec.params.kappa;
    require(kappa_dt > 0.0, ErrorKind::invalid_argument, "step must be positive");
    require(dt * spec.max_hamiltonian_entry() < 0.1, ErrorKind::step_size,
            "oracle step does not resolve the fastest Hamiltonian scale");
    require(rho0.tag == BasisTag::full && rho0.basis == spec.basis, ErrorKind::basis_mismatch,
            "initial density matrix does not match the spec");
    const long n_steps = std::lround(kappa_horizon / kappa_dt);
    std::vector<long> sample_steps;
    for (std::size_t i = 0; i < sample_times.size(); ++i) {
        require(i == 0 || sample_times[i] > sample_times[i - 1], ErrorKind::invalid_argument,
                "sample times must increase");
        sample_steps.push_back(std::lround(sample_times[i] / kappa_dt));
        require(sample_steps.back() <= n_steps, ErrorKind::invalid_argument, "sample time beyond horizon");
    }
    std::vector<TimedDensity> out;
    Eigen::MatrixXcd rho = rho0.data;
    std::size_t next = 0;
    detail::Rk4Density stepper;
    for (long s = 0; s <= n_steps; ++s) {
        while (next < sample_steps.size() && sample_steps[next] == s) {
            DensityMatrix snap{rho, BasisTag::full, spec.basis};
            detail::check_drift(snap, double(s) * kappa_dt);
            out.push_back({double(s) * kappa_dt, std::move(snap)});
            ++next;
        }
        if (s == n_steps) break;
        stepper.step(rho, spec, dt);
    }
    return out;
}

inline DensityMatrix vacuum_density(const BasisSpec& b) {
    StateVector psi = StateVector::Zero(b.dim);
    psi[b.index(0, 0)] = 1.0;
    return DensityMatrix::projector(psi, b);
}

struct SteadyStateOptions {
    double kappa_dt{5e-4};
    double kappa_cap{2000.0};
    double tolerance{1e-8};      // on max |d rho/dt| entry, in units of kappa
    double check_interval{1.0};  // kappa t between convergence checks
};

struct SteadyStateResult {
    DensityMatrix rho;
    bool converged{false};
    double residual{0.0};
    double kappa_t{0.0};
};

/// Long-time limit from the vacuum, integrating until the generator output
/// (scaled by 1/kappa) falls below tolerance or the cap is reached.
inline SteadyStateResult steady_state_direct(const LiouvillianSpec& spec, const SteadyStateOptions& opt = {}) {
    const double dt = opt.kappa_dt / spec.params.kappa;
    require(dt * spec.max_hamiltonian_entry() < 0.1, ErrorKind::step_size,
            "oracle step does not resolve the fastest Hamiltonian scale");
    const long check_every = std::max(1L, std::lround(opt.check_interval / opt.kappa_dt));
    Eigen::MatrixXcd rho = vacuum_density(spec.basis).data;
    SteadyStateResult res;
    detail::Rk4Density stepper;
    for (long s = 0;; ++s) {
        if (s % check_every == 0) {
            res.kappa_t = double(s) * opt.kappa_dt;
            res.residual = liouvillian_apply(rho, spec).cwiseAbs().maxCoeff() / spec.params.kappa;
            if (res.residual < opt.tolerance) {
                res.converged = true;
                break;
            }
            if (res.kappa_t >= opt.kappa_cap) break;
        }
        stepper.step(rho, spec, dt);
    }
    res.rho = {0.5 * (rho + rho.adjoint()), BasisTag::full, spec.basis};
    return res;
}

} // namespace cavmodes
