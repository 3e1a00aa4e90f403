// trajectory.hpp — Monte-Carlo wave-function evolution with cavity-decay jumps,
// plus the steady-state (time average) and ensemble (trajectory average)
// density operators built from it.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "cavmodes/density.hpp"
#include "cavmodes/error.hpp"
#include "cavmodes/model.hpp"

namespace cavmodes {

enum class Integrator {
    first_order,  // (1 - i dt H_nH) psi, the classic MCWF step
    rk4,          // fourth-order no-jump propagator, exact-norm renormalization
};

/// All times in units of 1/kappa.
struct EvolutionSchedule {
    double kappa_dt{5e-4};
    double kappa_horizon{25000.0};
    double kappa_t_rel{20.0};
    double sample_interval{0.05};
    double max_jump_probability{0.01};
    Integrator integrator{Integrator::rk4};
    bool accumulate_steady{true};
    std::vector<double> frame_times;  // full states are kept at these times

    long total_steps() const { return std::lround(kappa_horizon / kappa_dt); }
    long steps_per_sample() const { return std::max(1L, std::lround(sample_interval / kappa_dt)); }

    void validate() const {
        require(kappa_dt > 0.0 && kappa_horizon > 0.0, ErrorKind::invalid_argument,
                "schedule needs positive step and horizon");
        require(sample_interval >= kappa_dt, ErrorKind::invalid_argument,
                "sample interval shorter than the step");
        require(std::abs(sample_interval / kappa_dt - double(steps_per_sample())) < 1e-6,
                ErrorKind::invalid_argument, "sample interval must be a multiple of the step");
        require(max_jump_probability > 0.0 && max_jump_probability < 0.1, ErrorKind::invalid_argument,
                "jump probability ceiling must lie in (0, 0.1)");
        for (std::size_t i = 0; i < frame_times.size(); ++i) {
            require(frame_times[i] >= 0.0 && frame_times[i] <= kappa_horizon + 1e-12,
                    ErrorKind::invalid_argument, "frame time outside the horizon");
            require(i == 0 || frame_times[i] > frame_times[i - 1], ErrorKind::invalid_argument,
                    "frame times must be strictly increasing");
        }
    }
};

inline double mean_photon_number(const StateVector& psi, int dim_n) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < psi.size(); ++i) acc += std::norm(psi[i]) * double(i % dim_n);
    return acc;
}

inline cplx mean_field(const StateVector& psi, int dim_n) {
    // <psi| a |psi> = sum conj(psi_{k,n-1}) sqrt(n) psi_{k,n}
    cplx acc{0.0, 0.0};
    for (Eigen::Index i = 0; i < psi.size(); ++i) {
        const int n = int(i % dim_n);
        if (n > 0) acc += std::conj(psi[i - 1]) * std::sqrt(double(n)) * psi[i];
    }
    return acc;
}

/// P_c = 2 kappa <n> dt, with dt in units of 1/omega_r.
inline double jump_probability(const StateVector& psi, const ModelParams& params, double dt) {
    return 2.0 * params.kappa * mean_photon_number(psi, params.n_max + 1) * dt;
}

namespace detail {

inline void normalize_or_throw(StateVector& psi, const char* what) {
    const double norm = psi.norm();
    require(norm > 0.0 && std::isfinite(norm), ErrorKind::zero_norm, what);
    psi /= norm;
}

inline void apply_jump(StateVector& psi, int dim_n) {
    // a|k,n> = sqrt(n)|k,n-1>; the sqrt(2 kappa) factor drops out on renormalization
    for (Eigen::Index i = 0; i < psi.size(); ++i) {
        const int n = int(i % dim_n);
        psi[i] = (n < dim_n - 1) ? std::sqrt(double(n + 1)) * psi[i + 1] : cplx{0.0, 0.0};
    }
    normalize_or_throw(psi, "jump applied to a state without photons");
}

} // namespace detail

/// One MCWF step with the first-order propagator. `uniform` is the random
/// number deciding whether a photon leaves the cavity.
inline StateVector step(const StateVector& psi, const SparseOperator& h_nh, const ModelParams& params,
                        double dt, double uniform) {
    const double pc = jump_probability(psi, params, dt);
    require(pc < 0.1, ErrorKind::step_size,
            "jump probability " + std::to_string(pc) + " exceeds 0.1; reduce the step");
    StateVector out;
    if (uniform < pc) {
        out = psi;
        detail::apply_jump(out, params.n_max + 1);
        return out;
    }
    out = psi - cplx(0.0, dt) * (h_nh * psi);
    out /= std::sqrt(1.0 - pc);
    detail::normalize_or_throw(out, "no-jump step produced a zero vector");
    return out;
}

struct JumpEvent {
    double kappa_t{0.0};
    double mean_n{0.0};  // after the jump
    cplx mean_a{0.0, 0.0};
};

struct TrajectoryRecord {
    std::uint64_t seed{0};
    std::vector<double> sample_times;
    std::vector<double> mean_n;
    std::vector<cplx> mean_a;
    std::vector<JumpEvent> jumps;

    std::vector<double> frame_times;
    std::vector<StateVector> frames;

    // Sum of |psi><psi| over samples with kappa t > kappa_t_rel.
    Eigen::MatrixXcd steady_sum;
    long steady_count{0};
    double kappa_t_rel{0.0};

    double max_norm_error{0.0};
    double max_edge_population{0.0};  // |k| >= k_max - 2
    double max_top_fock_population{0.0};
    BasisSpec basis;
};

/// Prebuilt, immutable operators shared by every trajectory of one model.
class TrajectoryEngine {
public:
    explicit TrajectoryEngine(const ModelParams& params)
        : params_(params), basis_(build_basis(params)), h_nh_(build_h_nh(params, basis_)),
          photon_weight_(basis_.dim) {
        for (int i = 0; i < basis_.dim; ++i) photon_weight_[i] = double(basis_.n_of(i));
    }

    const ModelParams& params() const { return params_; }
    const BasisSpec& basis() const { return basis_; }
    const SparseOperator& h_nh() const { return h_nh_; }

    StateVector initial_state() const {
        StateVector psi = StateVector::Zero(basis_.dim);
        psi[basis_.index(0, 0)] = 1.0;
        return psi;
    }

    TrajectoryRecord run(const EvolutionSchedule& schedule, std::uint64_t seed) const;

private:
    ModelParams params_;
    BasisSpec basis_;
    SparseOperator h_nh_;
    Eigen::VectorXd photon_weight_;  // n of each flat index
};

namespace detail {

class Propagator {
public:
    Propagator(BandedHamiltonian h, double dt, Integrator kind)
        : h_(std::move(h)), dt_(dt), kind_(kind), dim_(h_.basis().dim), k_(std::size_t(dim_)),
          acc_(std::size_t(dim_)), stage_(h_.padded_size(), cplx{}) {}

    // In-place no-jump step followed by exact renormalization; returns <n> of
    // the new state. `photon_weight` holds n for every flat index.
    double no_jump(StateVector& psi, const Eigen::VectorXd& photon_weight) {
        cplx* p = psi.data();
        const double* w = photon_weight.data();
        cplx* t = stage_.data() + h_.padding();
        cplx* k = k_.data();
        cplx* acc = acc_.data();
        std::copy(p, p + dim_, t);
        double norm2 = 0.0;
        double weighted = 0.0;
        if (kind_ == Integrator::first_order) {
            // (1 - i dt H_nH) psi; the 1/sqrt(1 - P_c) prefactor is a scalar and
            // is absorbed by the exact renormalization below.
            h_.apply_padded(t, k);
            const cplx f(0.0, -dt_);
            for (int i = 0; i < dim_; ++i) {
                const cplx v = p[i] + f * k[i];
                p[i] = v;
                const double a2 = std::norm(v);
                norm2 += a2;
                weighted += a2 * w[i];
            }
        } else {
            // classic RK4 for d psi/dt = -i H_nH psi, stage updates fused into single passes
            const cplx f(0.0, -dt_);
            const cplx half = 0.5 * f;
            h_.apply_padded(t, k);
            for (int i = 0; i < dim_; ++i) {
                acc[i] = k[i];
                t[i] = p[i] + half * k[i];
            }
            h_.apply_padded(t, k);
            for (int i = 0; i < dim_; ++i) {
                acc[i] += 2.0 * k[i];
                t[i] = p[i] + half * k[i];
            }
            h_.apply_padded(t, k);
            for (int i = 0; i < dim_; ++i) {
                acc[i] += 2.0 * k[i];
                t[i] = p[i] + f * k[i];
            }
            h_.apply_padded(t, k);
            const cplx sixth = f / 6.0;
            for (int i = 0; i < dim_; ++i) {
                const cplx v = p[i] + sixth * (acc[i] + k[i]);
                p[i] = v;
                const double a2 = std::norm(v);
                norm2 += a2;
                weighted += a2 * w[i];
            }
        }
        require(norm2 > 0.0 && std::isfinite(norm2), ErrorKind::zero_norm, "no-jump step produced a zero vector");
        psi *= 1.0 / std::sqrt(norm2);
        return weighted / norm2;
    }

private:
    BandedHamiltonian h_;
    double dt_;
    Integrator kind_;
    int dim_;
    std::vector<cplx> k_, acc_;
    std::vector<cplx> stage_;  // padded stage input
};

inline double edge_population(const StateVector& psi, const BasisSpec& b) {
    double acc = 0.0;
    for (int i = 0; i < b.dim; ++i) {
        const int k = b.k_of(i);
        if (std::abs(k) >= b.k_max - 2) acc += std::norm(psi[i]);
    }
    return acc;
}

inline double top_fock_population(const StateVector& psi, const BasisSpec& b) {
    double acc = 0.0;
    for (int k = b.k_min(); k < b.k_max; ++k) acc += std::norm(psi[b.index(k, b.n_max)]);
    return acc;
}

// Batches projectors so the accumulation runs as a rank-B update.
class ProjectorAccumulator {
public:
    ProjectorAccumulator(Eigen::MatrixXcd& target, int dim, int batch = 32)
        : target_(target), batch_(dim, batch) {}

    void add(const StateVector& psi) {
        batch_.col(used_++) = psi;
        if (used_ == batch_.cols()) flush();
    }

    void flush() {
        if (used_ == 0) return;
        target_.selfadjointView<Eigen::Lower>().rankUpdate(batch_.leftCols(used_));
        used_ = 0;
    }

private:
    Eigen::MatrixXcd& target_;
    Eigen::MatrixXcd batch_;
    Eigen::Index used_{0};
};

inline void fill_upper_from_lower(Eigen::MatrixXcd& m) {
    m.triangularView<Eigen::StrictlyUpper>() = m.adjoint().triangularView<Eigen::StrictlyUpper>();
}

} // namespace detail

inline TrajectoryRecord TrajectoryEngine::run(const EvolutionSchedule& schedule, std::uint64_t seed) const {
    schedule.validate();
    const double dt = schedule.kappa_dt / params_.kappa;
    const long n_steps = schedule.total_steps();
    const long per_sample = schedule.steps_per_sample();
    const int dim_n = basis_.dim_n;

    TrajectoryRecord rec;
    rec.seed = seed;
    rec.basis = basis_;
    rec.kappa_t_rel = schedule.kappa_t_rel;
    rec.frame_times = schedule.frame_times;
    if (schedule.accumulate_steady) rec.steady_sum = Eigen::MatrixXcd::Zero(basis_.dim, basis_.dim);

    std::vector<long> frame_steps;
    for (double t : schedule.frame_times) frame_steps.push_back(std::lround(t / schedule.kappa_dt));
    std::size_t next_frame = 0;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    detail::Propagator prop(BandedHamiltonian(params_, basis_), dt, schedule.integrator);
    detail::ProjectorAccumulator acc(rec.steady_sum, basis_.dim);

    StateVector psi = initial_state();
    double n_now = psi.cwiseAbs2().dot(photon_weight_);
    const std::size_t n_samples = std::size_t(n_steps / per_sample) + 1;
    rec.sample_times.reserve(n_samples);
    rec.mean_n.reserve(n_samples);
    rec.mean_a.reserve(n_samples);

    for (long s = 0;; ++s) {
        const double kt = double(s) * schedule.kappa_dt;
        while (next_frame < frame_steps.size() && frame_steps[next_frame] == s) {
            rec.frames.push_back(psi);
            ++next_frame;
        }
        if (s % per_sample == 0) {
            rec.sample_times.push_back(kt);
            rec.mean_n.push_back(mean_photon_number(psi, dim_n));
            rec.mean_a.push_back(mean_field(psi, dim_n));
            rec.max_norm_error = std::max(rec.max_norm_error, std::abs(psi.norm() - 1.0));
            if (kt > schedule.kappa_t_rel) {
                rec.max_edge_population = std::max(rec.max_edge_population, detail::edge_population(psi, basis_));
                rec.max_top_fock_population =
                    std::max(rec.max_top_fock_population, detail::top_fock_population(psi, basis_));
                if (schedule.accumulate_steady) {
                    acc.add(psi);
                    ++rec.steady_count;
                }
            }
        }
        if (s == n_steps) break;

        const double pc = 2.0 * params_.kappa * n_now * dt;
        if (!(pc < schedule.max_jump_probability)) {
            std::ostringstream msg;
            msg << "jump probability " << pc << " at kappa t = " << kt << " exceeds the ceiling "
                << schedule.max_jump_probability << " (seed " << seed << ")";
            throw Error(ErrorKind::step_size, msg.str());
        }
        if (uniform(rng) < pc) {
            detail::apply_jump(psi, dim_n);
            n_now = psi.cwiseAbs2().dot(photon_weight_);
            rec.jumps.push_back({kt + schedule.kappa_dt, n_now, mean_field(psi, dim_n)});
        } else {
            n_now = prop.no_jump(psi, photon_weight_);
        }
    }
    acc.flush();
    if (schedule.accumulate_steady) detail::fill_upper_from_lower(rec.steady_sum);
    return rec;
}

inline TrajectoryRecord run_trajectory(const ModelParams& params, const EvolutionSchedule& schedule,
                                       std::uint64_t seed) {
    return TrajectoryEngine(params).run(schedule, seed);
}

/// Runs one trajectory per seed on up to `workers` threads. Records come back
/// sorted by seed, so downstream reductions never depend on scheduling.
inline std::vector<TrajectoryRecord> run_ensemble(const TrajectoryEngine& engine, const EvolutionSchedule& schedule,
                                                  std::vector<std::uint64_t> seeds, int workers = 1) {
    std::sort(seeds.begin(), seeds.end());
    require(std::adjacent_find(seeds.begin(), seeds.end()) == seeds.end(), ErrorKind::invalid_argument,
            "duplicate trajectory seeds");
    std::vector<TrajectoryRecord> out(seeds.size());
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;

    auto work = [&] {
        for (std::size_t i = next++; i < seeds.size(); i = next++) {
            try {
                out[i] = engine.run(schedule, seeds[i]);
            } catch (...) {
                std::lock_guard lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    const int n_threads = std::clamp(workers, 1, int(std::max<std::size_t>(1, seeds.size())));
    if (n_threads == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);
    return out;
}

/// Kahan-compensated running sum of matrices; adding the same terms in the
/// same order always reproduces the same bits.
class CompensatedSum {
public:
    explicit CompensatedSum(Eigen::Index dim)
        : sum_(Eigen::MatrixXcd::Zero(dim, dim)), carry_(Eigen::MatrixXcd::Zero(dim, dim)) {}

    void add(const Eigen::MatrixXcd& term) {
        const Eigen::MatrixXcd y = term - carry_;
        const Eigen::MatrixXcd t = sum_ + y;
        carry_ = (t - sum_) - y;
        sum_ = t;
    }

    const Eigen::MatrixXcd& value() const { return sum_; }

private:
    Eigen::MatrixXcd sum_;
    Eigen::MatrixXcd carry_;
};

/// Time-averaged projector over samples past the relaxation cutoff,
/// pooled over all records (one record reproduces the single-trajectory average).
inline DensityMatrix steady_state_density(const std::vector<TrajectoryRecord>& records) {
    require(!records.empty(), ErrorKind::no_samples, "no trajectory records");
    const BasisSpec& b = records.front().basis;
    CompensatedSum sum(b.dim);
    long count = 0;
    for (const auto& r : records) {
        require(r.basis == b, ErrorKind::schedule_mismatch, "records use different bases");
        require(r.kappa_t_rel == records.front().kappa_t_rel, ErrorKind::schedule_mismatch,
                "records use different relaxation cutoffs");
        if (r.steady_count == 0) continue;
        sum.add(r.steady_sum);
        count += r.steady_count;
    }
    require(count > 0, ErrorKind::no_samples, "no samples after the relaxation cutoff");
    DensityMatrix rho{sum.value() / double(count), BasisTag::full, b};
    rho.data = 0.5 * (rho.data + rho.data.adjoint()).eval();
    return rho;
}

inline DensityMatrix steady_state_density(const std::vector<TrajectoryRecord>& records, double kappa_t_rel) {
    for (const auto& r : records)
        require(std::abs(r.kappa_t_rel - kappa_t_rel) < 1e-12, ErrorKind::invalid_argument,
                "records were accumulated with a different relaxation cutoff");
    return steady_state_density(records);
}

inline DensityMatrix steady_state_density(const TrajectoryRecord& record) {
    return steady_state_density(std::vector<TrajectoryRecord>{record});
}

/// rho(t) = (1/N) sum_i |psi_i(t)><psi_i(t)| at one of the stored frame times.
inline DensityMatrix ensemble_density(const std::vector<TrajectoryRecord>& records, double kappa_t) {
    require(!records.empty(), ErrorKind::no_samples, "no trajectory records");
    const auto& ref = records.front();
    std::vector<const TrajectoryRecord*> sorted;
    for (const auto& r : records) {
        require(r.basis == ref.basis && r.frame_times == ref.frame_times && r.frames.size() == ref.frames.size(),
                ErrorKind::schedule_mismatch, "trajectories do not share a schedule");
        sorted.push_back(&r);
    }
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->seed < b->seed; });
    const auto it = std::find_if(ref.frame_times.begin(), ref.frame_times.end(),
                                 [&](double t) { return std::abs(t - kappa_t) < 1e-9; });
    require(it != ref.frame_times.end(), ErrorKind::invalid_argument,
            "kappa t = " + std::to_string(kappa_t) + " is not a stored frame");
    const std::size_t frame = std::size_t(it - ref.frame_times.begin());
    require(frame < ref.frames.size(), ErrorKind::schedule_mismatch, "frame missing from record");

    const int dim = ref.basis.dim;
    constexpr std::size_t chunk = 32;
    CompensatedSum sum(dim);
    for (std::size_t start = 0; start < sorted.size(); start += chunk) {
        const std::size_t len = std::min(chunk, sorted.size() - start);
        Eigen::MatrixXcd block(dim, Eigen::Index(len));
        for (std::size_t j = 0; j < len; ++j) block.col(Eigen::Index(j)) = sorted[start + j]->frames[frame];
        Eigen::MatrixXcd partial = Eigen::MatrixXcd::Zero(dim, dim);
        partial.selfadjointView<Eigen::Lower>().rankUpdate(block);
        detail::fill_upper_from_lower(partial);
        sum.add(partial);
    }
    return {sum.value() / double(sorted.size()), BasisTag::full, ref.basis};
}

struct BatchedMean {
    cplx mean{0.0, 0.0};
    double standard_error{0.0};  // of |mean|, from the spread of batch means
    int batches{0};
};

/// Mean of <a> over post-relaxation samples with a batch-means error bar.
inline BatchedMean steady_field_mean(const std::vector<TrajectoryRecord>& records, int batches = 20) {
    std::vector<cplx> values;
    for (const auto& r : records)
        for (std::size_t i = 0; i < r.sample_times.size(); ++i)
            if (r.sample_times[i] > r.kappa_t_rel) values.push_back(r.mean_a[i]);
    require(!values.empty(), ErrorKind::no_samples, "no samples after the relaxation cutoff");
    BatchedMean out;
    out.batches = std::max(2, std::min<int>(batches, int(values.size())));
    const std::size_t per = values.size() / std::size_t(out.batches);
    std::vector<cplx> means(std::size_t(out.batches), cplx{});
    for (int b = 0; b < out.batches; ++b) {
        for (std::size_t i = 0; i < per; ++i) means[std::size_t(b)] += values[std::size_t(b) * per + i];
        means[std::size_t(b)] /= double(per);
        out.mean += means[std::size_t(b)];
    }
    out.mean /= double(out.batches);
    double var = 0.0;
    for (const auto& m : means) var += std::norm(m - out.mean);
    var /= double(out.batches - 1);
    out.standard_error = std::sqrt(var / double(out.batches));
    return out;
}

} // namespace cavmodes
