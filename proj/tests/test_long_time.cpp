#include <gtest/gtest.h>

#include "cavmodes/analysis.hpp"
#include "cavmodes/oracle.hpp"
#include "cavmodes/trajectory.hpp"

using namespace cavmodes;

namespace {

ModelParams small_pumped() {
    ModelParams p;
    p.ut = -22.0;
    p.k_max = 8;
    p.n_max = 3;
    return p;
}

// long-time limit of the small pumped model, computed once for the suite
const SteadyStateResult& long_time_oracle() {
    static const SteadyStateResult r = [] {
        SteadyStateOptions opt;
        opt.kappa_dt = 2e-3;
        opt.kappa_cap = 3000.0;
        opt.tolerance = 1e-6;
        return steady_state_direct(LiouvillianSpec(small_pumped()), opt);
    }();
    return r;
}

} // namespace

TEST(LongTimeOracle, ConvergesWithZeroFieldAndPhotons) {
    const SteadyStateResult& r = long_time_oracle();
    ASSERT_TRUE(r.converged) << "residual " << r.residual << " at kappa t " << r.kappa_t;
    EXPECT_TRUE(check_density(r.rho).ok());
    const FieldMoments m = field_moments(reduce_field(r.rho));
    EXPECT_LT(std::abs(m.a), 1e-6);
    EXPECT_GT(m.n, 0.0);
}

TEST(LongTimeOracle, SteadyDensityAtShortHorizonMatches) {
    const SteadyStateResult& r = long_time_oracle();
    ASSERT_TRUE(r.converged);
    EvolutionSchedule s;
    s.kappa_horizon = 200.0;
    s.kappa_t_rel = 20.0;
    const TrajectoryEngine engine(small_pumped());
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t i = 1; i <= 16; ++i) seeds.push_back(i);
    const DensityMatrix mc = steady_state_density(run_ensemble(engine, s, seeds));
    EXPECT_LT(trace_distance(mc.data, r.rho.data), 0.05);
}
