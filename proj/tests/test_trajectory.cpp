#include <cmath>
#include <cstring>
#include <random>

#include <gtest/gtest.h>

#include "cavmodes/analysis.hpp"
#include "cavmodes/trajectory.hpp"

using namespace cavmodes;

namespace {

ModelParams small(double ut = -22.0) {
    ModelParams p;
    p.ut = ut;
    p.k_max = 8;
    p.n_max = 3;
    return p;
}

EvolutionSchedule short_schedule(double horizon, double t_rel = 0.0) {
    EvolutionSchedule s;
    s.kappa_horizon = horizon;
    s.kappa_t_rel = t_rel;
    return s;
}

bool same_bits(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), sizeof(cplx) * std::size_t(a.size())) == 0;
}

StateVector basis_state(const BasisSpec& b, int k, int n) {
    StateVector psi = StateVector::Zero(b.dim);
    psi[b.index(k, n)] = 1.0;
    return psi;
}

} // namespace

TEST(JumpProbability, Examples) {
    ModelParams p = small();
    const BasisSpec b = build_basis(p);
    EXPECT_EQ(jump_probability(basis_state(b, 0, 0), p, 1e-4), 0.0);
    EXPECT_NEAR(jump_probability(basis_state(b, 0, 1), p, 1e-4), 6.25e-3, 1e-15);
    StateVector sup = (basis_state(b, 0, 0) + basis_state(b, 0, 2)) / std::sqrt(2.0);
    EXPECT_NEAR(jump_probability(sup, p, 1e-4), 2.0 * p.kappa * 1e-4, 1e-15);
}

TEST(Step, IdentityPropagator) {
    const ModelParams p = small();
    const BasisSpec b = build_basis(p);
    const SparseOperator zero(b.dim, b.dim);
    StateVector psi = (basis_state(b, 1, 0) + cplx(0.0, 1.0) * basis_state(b, -3, 0)) / std::sqrt(2.0);
    const StateVector out = step(psi, zero, p, 1e-4, 0.5);
    EXPECT_LT((out - psi).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Step, JumpOnFockState) {
    const ModelParams p = small();
    const BasisSpec b = build_basis(p);
    const SparseOperator h = build_h_nh(p, b);
    const StateVector out = step(basis_state(b, 0, 1), h, p, 1e-4, 0.0);
    EXPECT_EQ(out, basis_state(b, 0, 0));
}

TEST(Step, NoJumpKeepsUnitNorm) {
    const ModelParams p = small();
    const BasisSpec b = build_basis(p);
    const SparseOperator h = build_h_nh(p, b);
    StateVector psi = (basis_state(b, 0, 1) + basis_state(b, 2, 0)) / std::sqrt(2.0);
    for (int i = 0; i < 100; ++i) psi = step(psi, h, p, 1e-5, 0.99);
    EXPECT_NEAR(psi.norm(), 1.0, 1e-12);
}

TEST(Step, GuardsLargeJumpProbability) {
    const ModelParams p = small();
    const BasisSpec b = build_basis(p);
    const SparseOperator h = build_h_nh(p, b);
    try {
        step(basis_state(b, 0, 3), h, p, 1e-3, 0.5);  // P_c = 2 * 31.25 * 3 * 1e-3
        FAIL() << "expected a step-size error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::step_size);
    }
}

TEST(Step, JumpOnVacuumIsZeroNorm) {
    const BasisSpec b = build_basis(small());
    StateVector psi = basis_state(b, 0, 0);
    try {
        detail::apply_jump(psi, b.dim_n);
        FAIL() << "expected a zero-norm error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::zero_norm);
    }
}

TEST(Trajectory, DarkStateWithoutPump) {
    const ModelParams p = small(0.0);
    const auto rec = run_trajectory(p, short_schedule(5.0), 3);
    EXPECT_TRUE(rec.jumps.empty());
    for (double n : rec.mean_n) EXPECT_EQ(n, 0.0);
    const DensityMatrix rho = steady_state_density(rec);
    const BasisSpec b = build_basis(p);
    Eigen::MatrixXcd vac = Eigen::MatrixXcd::Zero(b.dim, b.dim);
    vac(b.index(0, 0), b.index(0, 0)) = 1.0;
    EXPECT_LT((rho.data - vac).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Trajectory, FixedSeedIsBitIdentical) {
    const ModelParams p = small(-38.0);
    const auto s = short_schedule(4.0, 1.0);
    const auto a = run_trajectory(p, s, 11);
    const auto b = run_trajectory(p, s, 11);
    EXPECT_EQ(a.mean_n, b.mean_n);
    EXPECT_EQ(a.jumps.size(), b.jumps.size());
    EXPECT_TRUE(same_bits(a.steady_sum, b.steady_sum));
    const auto c = run_trajectory(p, s, 12);
    EXPECT_NE(a.mean_n, c.mean_n);
}

TEST(Trajectory, SamplesIncreaseAndJumpsSitOnStepBoundaries) {
    const ModelParams p = small(-49.0);
    const auto s = short_schedule(3.0);
    const auto r = run_trajectory(p, s, 5);
    ASSERT_FALSE(r.jumps.empty());
    for (std::size_t i = 1; i < r.sample_times.size(); ++i) EXPECT_GT(r.sample_times[i], r.sample_times[i - 1]);
    for (const auto& j : r.jumps) {
        const double steps = j.kappa_t / s.kappa_dt;
        EXPECT_NEAR(steps, std::round(steps), 1e-6);
    }
    EXPECT_LT(r.max_norm_error, 1e-10);
}

TEST(Trajectory, PaperParametersProducePhotonsAndJumps) {
    ModelParams p;
    p.ut = -49.0;
    const auto r = run_trajectory(p, short_schedule(30.0, 20.0), 1);
    double late = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < r.sample_times.size(); ++i)
        if (r.sample_times[i] > 20.0) {
            late += r.mean_n[i];
            ++count;
        }
    EXPECT_GT(late / count, 0.0);
    EXPECT_GT(r.jumps.size(), 0u);
    EXPECT_LT(r.max_norm_error, 1e-10);
    EXPECT_LT(r.max_edge_population, 1e-6);
}

TEST(Trajectory, ScheduleCeilingAborts) {
    const ModelParams p = small(-49.0);
    EvolutionSchedule s = short_schedule(5.0);
    s.kappa_dt = 0.05;
    s.sample_interval = 0.05;
    try {
        run_trajectory(p, s, 1);
        FAIL() << "expected a step-size error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::step_size);
        EXPECT_NE(std::string(e.what()).find("kappa t"), std::string::npos);
    }
}

TEST(Propagator, ConvergenceOrder) {
    // no-jump evolution to a fixed time at dt, dt/2 against a dt/8 reference
    const ModelParams p = small(-38.0);
    const BasisSpec b = build_basis(p);
    Eigen::VectorXd w(b.dim);
    for (int i = 0; i < b.dim; ++i) w[i] = b.n_of(i);
    StateVector psi0 = StateVector::Zero(b.dim);
    psi0[b.index(0, 0)] = 0.8;
    psi0[b.index(1, 1)] = 0.6;
    auto evolve = [&](Integrator kind, double dt, int steps) {
        detail::Propagator prop(BandedHamiltonian(p, b), dt, kind);
        StateVector psi = psi0;
        for (int s = 0; s < steps; ++s) prop.no_jump(psi, w);
        return psi;
    };
    const double dt = 2e-4;
    const int steps = 50;
    for (auto kind : {Integrator::first_order, Integrator::rk4}) {
        const StateVector ref = evolve(Integrator::rk4, dt / 8, steps * 8);
        const double e1 = (evolve(kind, dt, steps) - ref).norm();
        const double e2 = (evolve(kind, dt / 2, steps * 2) - ref).norm();
        const double order = std::log2(e1 / e2);
        if (kind == Integrator::rk4) EXPECT_NEAR(order, 4.0, 0.3);
        else EXPECT_NEAR(order, 1.0, 0.3);
    }
}

TEST(SteadyState, TraceAndPositivity) {
    const auto r = run_trajectory(small(-38.0), short_schedule(6.0, 1.0), 2);
    const DensityMatrix rho = steady_state_density(r);
    const DensityCheck c = check_density(rho);
    EXPECT_LT(c.trace_error, 1e-9);
    EXPECT_LT(c.hermiticity_defect, 1e-12);
    EXPECT_GE(c.min_eigenvalue, -1e-10);
}

TEST(SteadyState, NoSamplesPastCutoff) {
    const auto r = run_trajectory(small(), short_schedule(1.0, 2.0), 2);
    try {
        steady_state_density(r);
        FAIL() << "expected no_samples";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::no_samples);
    }
}

TEST(Ensemble, InitialFrameIsVacuumForAnyN) {
    const ModelParams p = small(-38.0);
    EvolutionSchedule s = short_schedule(1.0);
    s.accumulate_steady = false;
    s.frame_times = {0.0, 1.0};
    const TrajectoryEngine engine(p);
    for (int n : {1, 7}) {
        std::vector<std::uint64_t> seeds;
        for (int i = 0; i < n; ++i) seeds.push_back(100 + i);
        const auto recs = run_ensemble(engine, s, seeds);
        const DensityMatrix rho0 = ensemble_density(recs, 0.0);
        EXPECT_NEAR(std::abs(rho0.data(engine.basis().index(0, 0), engine.basis().index(0, 0)) - 1.0), 0.0, 1e-15);
        EXPECT_NEAR(rho0.data.cwiseAbs().sum(), 1.0, 1e-15);
        const DensityMatrix rho1 = ensemble_density(recs, 1.0);
        if (n == 1) EXPECT_NEAR(purity(rho1), 1.0, 1e-12);
        else EXPECT_LT(purity(rho1), 1.0);
        EXPECT_TRUE(check_density(rho1).ok());
    }
}

TEST(Ensemble, RejectsMismatchedSchedules) {
    const TrajectoryEngine engine(small());
    EvolutionSchedule s = short_schedule(1.0);
    s.frame_times = {0.5};
    auto a = run_ensemble(engine, s, {1});
    s.frame_times = {0.25};
    const auto b = run_ensemble(engine, s, {2});
    a.push_back(b.front());
    EXPECT_THROW(ensemble_density(a, 0.5), Error);
    EXPECT_THROW(ensemble_density(run_ensemble(engine, s, {1}), 0.3), Error);
}

TEST(Ensemble, WorkerCountDoesNotChangeBits) {
    const TrajectoryEngine engine(small(-38.0));
    EvolutionSchedule s = short_schedule(2.0, 1.0);
    s.frame_times = {1.0, 2.0};
    const std::vector<std::uint64_t> seeds{5, 1, 9, 3, 7};
    const auto one = run_ensemble(engine, s, seeds, 1);
    const auto four = run_ensemble(engine, s, {9, 7, 5, 3, 1}, 4);
    EXPECT_TRUE(same_bits(ensemble_density(one, 2.0).data, ensemble_density(four, 2.0).data));
    EXPECT_TRUE(same_bits(steady_state_density(one).data, steady_state_density(four).data));
    EXPECT_THROW(run_ensemble(engine, s, {1, 1}), Error);
}

TEST(Ensemble, ParityKeepsFieldMeanAtZero) {
    const TrajectoryEngine engine(small(-38.0));
    const auto recs = run_ensemble(engine, short_schedule(4.0, 1.0), {1, 2, 3});
    const BatchedMean m = steady_field_mean(recs);
    EXPECT_LE(std::abs(m.mean), 1e-12);
    double n = 0.0;
    for (const auto& r : recs)
        for (double x : r.mean_n) n += x;
    EXPECT_GT(n, 0.0);
}
