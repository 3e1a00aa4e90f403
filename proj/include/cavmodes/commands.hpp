// commands.hpp — the steady, dynamics, sweep, decompose and validate pipelines
// behind the command-line front end. Each command writes its artifacts under
// the configured output directory and returns a JSON summary plus a flag that
// is false when a runtime guard failed.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cavmodes/analysis.hpp"
#include "cavmodes/config.hpp"
#include "cavmodes/decompose.hpp"
#include "cavmodes/density.hpp"
#include "cavmodes/error.hpp"
#include "cavmodes/io.hpp"
#include "cavmodes/model.hpp"
#include "cavmodes/oracle.hpp"
#include "cavmodes/synthetic.hpp"
#include "cavmodes/trajectory.hpp"

namespace cavmodes::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

struct CommandResult {
    json summary;
    bool ok{true};
};

inline std::string format_number(double v) {
    std::ostringstream os;
    os << std::setprecision(12) << v;
    return os.str();
}

inline std::string seed_list(const std::vector<std::uint64_t>& seeds) {
    std::ostringstream os;
    os << "seeds = [";
    for (std::size_t i = 0; i < seeds.size(); ++i) os << (i ? ", " : "") << seeds[i];
    os << ']';
    return os.str();
}

/// Comment block shared by every artifact of one run.
inline std::vector<std::string> run_header(const std::string& command, const RunConfig& c,
                                           const std::vector<std::uint64_t>& seeds) {
    std::vector<std::string> lines{"cavmodes " + command};
    for (auto& l : c.describe()) lines.push_back(std::move(l));
    lines.push_back(seed_list(seeds));
    return lines;
}

inline void write_json(const fs::path& path, const std::vector<std::string>& header, json body) {
    body["header"] = header;
    io::write_text(path, body.dump(2) + "\n");
}

/// Named pass/fail entries collected while a command runs.
class GuardList {
public:
    void add(const std::string& name, bool passed, double value, double limit, const std::string& detail = {}) {
        json g{{"name", name}, {"passed", passed}, {"value", value}, {"limit", limit}};
        if (!detail.empty()) g["detail"] = detail;
        items_.push_back(std::move(g));
        ok_ = ok_ && passed;
    }

    void diagnostic(const std::string& name, double value, double limit, const std::string& detail = {}) {
        json g{{"name", name}, {"diagnostic", true}, {"within_limit", value < limit}, {"value", value}, {"limit", limit}};
        if (!detail.empty()) g["detail"] = detail;
        items_.push_back(std::move(g));
    }

    bool ok() const { return ok_; }
    const json& items() const { return items_; }

private:
    json items_ = json::array();
    bool ok_{true};
};

inline void density_guard(GuardList& g, const std::string& name, const DensityMatrix& rho) {
    const DensityCheck c = check_density(rho);
    std::ostringstream d;
    d << "hermiticity " << c.hermiticity_defect << ", trace error " << c.trace_error << ", min eigenvalue "
      << c.min_eigenvalue;
    g.add(name, c.ok(), std::max(c.hermiticity_defect, c.trace_error), 1e-9, d.str());
}

inline void trajectory_guards(GuardList& g, const std::vector<TrajectoryRecord>& records, const RunConfig& c) {
    double norm = 0.0, edge = 0.0, top = 0.0;
    for (const auto& r : records) {
        norm = std::max(norm, r.max_norm_error);
        edge = std::max(edge, r.max_edge_population);
        top = std::max(top, r.max_top_fock_population);
    }
    g.add("norm_preservation", norm < 1e-10, norm, 1e-10);
    g.add("truncation_edge_leakage", edge < c.edge_leakage_limit, edge, c.edge_leakage_limit,
          "largest population at |k| >= k_max - 2 after the relaxation cutoff");
    g.diagnostic("fock_ceiling", top, c.top_fock_limit, "largest population at n = n_max after the relaxation cutoff");
}

// ---------------------------------------------------------------------------
// steady-state analysis

/// Adiabatic field at Kx = pi/2: the +alpha side, paired with the odd mode.
inline cplx odd_well_field(const ModelParams& p) { return adiabatic_field(0.5 * std::numbers::pi, p); }

struct SteadyAnalysis {
    DensityMatrix rho, rho_at, rho_cav;
    PositionGrid grid;
    Eigen::VectorXd position;
    std::vector<double> chi_x, chi;
    double chi_pi{0.0}, chi_2pi{0.0};
    std::vector<double> photon;
    FieldMoments moments;
    double negativity{0.0};
    std::optional<double> mandel_q;
    std::optional<CoherentFit> fit;
    std::optional<ModeDecomposition> modes;
    std::optional<double> reconstruction_distance;
    std::string status{"ok"};  // ok | degenerate_field | decomposition_undefined | model_mismatch
    std::string status_detail;

    double chi_ratio() const { return chi_pi / chi_2pi; }
};

/// `reference` orients the fitted alpha (see fit_coherent_amplitude).
inline SteadyAnalysis analyze_density(const DensityMatrix& rho, int grid_points, cplx reference = {0.0, 0.0}) {
    detail::require_full(rho);
    SteadyAnalysis a;
    a.rho = rho;
    a.rho_at = reduce_atom(rho);
    a.rho_cav = reduce_field(rho);
    a.grid.points = grid_points;
    a.grid.validate(rho.basis);
    a.position = position_density(a.rho_at, a.grid);

    const CorrelationEvaluator chi(a.rho_at, a.grid);
    for (int j = 0; j <= a.grid.points; ++j) {
        const double x = a.grid.spacing() * j;
        a.chi_x.push_back(x);
        a.chi.push_back(chi(x));
    }
    a.chi_pi = chi(std::numbers::pi);
    a.chi_2pi = chi(two_pi);

    a.photon = photon_distribution(a.rho_cav);
    a.moments = field_moments(a.rho_cav);
    a.negativity = negativity(rho);
    try {
        a.mandel_q = mandel_q(a.rho_cav);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::undefined) throw;
    }

    try {
        a.fit = fit_coherent_amplitude(a.rho_cav, 1e-8, reference);
        a.modes = extract_modes(rho, a.fit->alpha, a.fit->epsilon);
        a.reconstruction_distance = trace_distance(reconstruct(*a.modes).data, rho.data);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::degenerate_field && e.kind() != ErrorKind::decomposition_undefined &&
            e.kind() != ErrorKind::model_mismatch)
            throw;
        a.status = std::string(to_string(e.kind()));
        a.status_detail = e.what();
    }
    return a;
}

inline json decomposition_json(const SteadyAnalysis& a) {
    json j{{"status", a.status}};
    if (!a.status_detail.empty()) j["detail"] = a.status_detail;
    if (a.status == "degenerate_field") j["degenerate_field"] = true;
    if (a.fit) {
        j["alpha"] = {a.fit->alpha.real(), a.fit->alpha.imag()};
        j["epsilon"] = a.fit->epsilon;
        j["epsilon_unclamped"] = a.fit->epsilon_unclamped;
        j["epsilon_clamped_by"] = a.fit->clamped_by;
        j["moment_ratio"] = {a.fit->moment_ratio.real(), a.fit->moment_ratio.imag()};
        j["fit_error"] = photon_distribution_error(a.rho_cav, a.fit->alpha, a.fit->epsilon);
        j["fit_error_trace_norm"] = trace_norm_fit_error(a.rho_cav, a.fit->alpha, a.fit->epsilon);
    } else {
        j["epsilon"] = 0.0;
        j["weights"] = {0.0, 0.0, 1.0};
    }
    if (a.modes) {
        const auto& m = *a.modes;
        j["weights"] = m.weights;
        j["extracted_weights"] = m.extracted_weights;
        j["weight_mismatch"] = m.weight_mismatch;
        j["hermiticity_defect"] = m.hermiticity_defect;
        j["reconstruction_trace_distance"] = *a.reconstruction_distance;
    }
    return j;
}

inline void write_density_outputs(const SteadyAnalysis& a, const fs::path& dir, const std::vector<std::string>& header) {
    {
        io::CsvWriter w(header, {"Kx", "density"});
        for (int j = 0; j < a.grid.points; ++j) w.row(a.grid.kx(j), a.position[j]);
        w.save(dir / "position_density.csv");
    }
    {
        io::CsvWriter w(header, {"Kx", "chi"});
        for (std::size_t j = 0; j < a.chi.size(); ++j) w.row(a.chi_x[j], a.chi[j]);
        w.save(dir / "chi.csv");
    }
    {
        std::vector<double> fit(a.photon.size(), std::numeric_limits<double>::quiet_NaN());
        if (a.fit) {
            const Eigen::MatrixXcd m = coherent_mixture_matrix(a.fit->alpha, a.fit->epsilon, a.rho_cav.dim());
            for (std::size_t n = 0; n < fit.size(); ++n) fit[n] = m(Eigen::Index(n), Eigen::Index(n)).real();
        }
        io::CsvWriter w(header, {"n", "P_sim", "P_fit"});
        for (std::size_t n = 0; n < a.photon.size(); ++n) w.row(n, a.photon[n], fit[n]);
        w.save(dir / "photon_distribution.csv");
    }
    write_json(dir / "decomposition.json", header, decomposition_json(a));
    {
        std::vector<std::string> h = header;
        if (!a.modes) h.push_back("no modes: " + a.status);
        io::CsvWriter w(h, {"Kx", "rho_O", "rho_E", "rho_R"});
        if (a.modes) {
            const Eigen::VectorXd o = position_density(a.modes->rho_odd, a.grid);
            const Eigen::VectorXd e = position_density(a.modes->rho_even, a.grid);
            const Eigen::VectorXd r = position_density(a.modes->rho_residual, a.grid);
            for (int j = 0; j < a.grid.points; ++j) w.row(a.grid.kx(j), o[j], e[j], r[j]);
        }
        w.save(dir / "mode_densities.csv");
    }
}

inline json observables_json(const SteadyAnalysis& a) {
    json j{{"mean_photon_number", a.moments.n},
           {"mean_field_from_rho", {a.moments.a.real(), a.moments.a.imag()}},
           {"a2", {a.moments.a2.real(), a.moments.a2.imag()}},
           {"a4", {a.moments.a4.real(), a.moments.a4.imag()}},
           {"negativity", a.negativity},
           {"chi_pi", a.chi_pi},
           {"chi_2pi", a.chi_2pi},
           {"chi_ratio", a.chi_ratio()},
           {"purity", purity(a.rho)}};
    j["mandel_q"] = a.mandel_q ? json(*a.mandel_q) : json(nullptr);
    return j;
}

inline void write_event_log(const TrajectoryRecord& r, const fs::path& path, const std::vector<std::string>& header) {
    io::CsvWriter w(header, {"kappa_t", "event", "n", "re_a", "im_a"});
    std::size_t j = 0;
    for (std::size_t i = 0; i < r.sample_times.size(); ++i) {
        for (; j < r.jumps.size() && r.jumps[j].kappa_t <= r.sample_times[i]; ++j)
            w.row(r.jumps[j].kappa_t, "jump", r.jumps[j].mean_n, r.jumps[j].mean_a.real(), r.jumps[j].mean_a.imag());
        w.row(r.sample_times[i], "sample", r.mean_n[i], r.mean_a[i].real(), r.mean_a[i].imag());
    }
    for (; j < r.jumps.size(); ++j)
        w.row(r.jumps[j].kappa_t, "jump", r.jumps[j].mean_n, r.jumps[j].mean_a.real(), r.jumps[j].mean_a.imag());
    w.save(path);
}

/// True when |mean| is within three batch standard errors of zero, or is zero
/// to rounding (parity makes <a> vanish identically on every trajectory).
inline bool consistent_with_zero(const BatchedMean& m) {
    return std::abs(m.mean) < 3.0 * m.standard_error || std::abs(m.mean) <= 1e-12;
}

struct SteadyRun {
    SteadyAnalysis analysis;
    BatchedMean field;
    long jumps{0};
    long samples{0};
    CommandResult result;
};

inline SteadyRun run_steady(const RunConfig& c) {
    c.validate();
    const auto seeds = c.seeds(c.trajectories);
    const auto header = run_header("steady", c, seeds);
    EvolutionSchedule s = c.schedule;
    s.accumulate_steady = true;
    s.frame_times.clear();

    const TrajectoryEngine engine(c.params);
    const auto records = run_ensemble(engine, s, seeds, c.workers);

    SteadyRun out;
    GuardList guards;
    trajectory_guards(guards, records, c);
    const DensityMatrix rho = steady_state_density(records, s.kappa_t_rel);
    density_guard(guards, "steady_density_valid", rho);
    out.analysis = analyze_density(rho, c.grid_points, odd_well_field(c.params));
    out.field = steady_field_mean(records);
    for (const auto& r : records) {
        out.jumps += long(r.jumps.size());
        out.samples += r.steady_count;
    }

    const fs::path dir = c.out_dir;
    write_density_outputs(out.analysis, dir, header);
    if (c.save_density) {
        json j = io::density_to_json(rho);
        j["header"] = header;
        io::write_text(dir / "rho_ss.json", j.dump() + "\n");
    }
    if (c.event_log)
        for (const auto& r : records) write_event_log(r, dir / ("events_seed" + std::to_string(r.seed) + ".csv"), header);

    json obs = observables_json(out.analysis);
    obs["field_batch_mean"] = {out.field.mean.real(), out.field.mean.imag()};
    obs["field_batch_standard_error"] = out.field.standard_error;
    obs["field_batches"] = out.field.batches;
    obs["field_consistent_with_zero"] = consistent_with_zero(out.field);
    obs["jumps"] = out.jumps;
    obs["steady_samples"] = out.samples;
    obs["guards"] = guards.items();
    obs["passed"] = guards.ok();
    write_json(dir / "observables.json", header, obs);

    out.result.ok = guards.ok();
    out.result.summary = {{"command", "steady"},
                          {"out", dir.string()},
                          {"ut", c.params.ut},
                          {"decomposition", decomposition_json(out.analysis)},
                          {"observables", obs}};
    return out;
}

inline CommandResult cmd_steady(const RunConfig& c) { return run_steady(c).result; }

// ---------------------------------------------------------------------------
// dynamics

inline std::string frame_tag(double kappa_t) { return "kt" + format_number(kappa_t); }

/// Frame times: the regular grid 0, dt_f, ..., horizon merged with the mode frames.
inline std::vector<double> dynamics_frames(const RunConfig& c) {
    std::vector<double> t;
    const long n = std::lround(c.dynamics_horizon / c.frame_interval);
    for (long i = 0; i <= n; ++i) t.push_back(std::min(c.dynamics_horizon, double(i) * c.frame_interval));
    for (double f : c.mode_frames) {
        require(f >= 0.0 && f <= c.dynamics_horizon + 1e-12, ErrorKind::config,
                "dynamics.mode_frames entry " + format_number(f) + " lies outside the horizon");
        t.push_back(f);
    }
    std::sort(t.begin(), t.end());
    std::vector<double> out;
    for (double x : t)
        if (out.empty() || x - out.back() > 1e-9) out.push_back(x);
    return out;
}

struct DynamicsFrame {
    double kappa_t{0.0};
    double negativity{0.0};
    std::optional<double> mandel_q;
    double mean_n{0.0};
    ModeWeightPoint weights;
};

struct DynamicsRun {
    std::vector<DynamicsFrame> frames;
    CommandResult result;
};

inline DynamicsRun run_dynamics(const RunConfig& c) {
    c.validate();
    const auto seeds = c.seeds(c.dynamics_trajectories);
    const auto header = run_header("dynamics", c, seeds);
    EvolutionSchedule s = c.schedule;
    s.kappa_horizon = c.dynamics_horizon;
    s.kappa_t_rel = 0.0;
    s.accumulate_steady = false;
    s.frame_times = dynamics_frames(c);

    const TrajectoryEngine engine(c.params);
    const auto records = run_ensemble(engine, s, seeds, c.workers);
    GuardList guards;
    trajectory_guards(guards, records, c);

    DynamicsRun out;
    std::vector<DensityMatrix> rhos;
    rhos.reserve(s.frame_times.size());
    double worst_herm = 0.0, worst_trace = 0.0, worst_eig = 0.0;
    for (double t : s.frame_times) {
        rhos.push_back(ensemble_density(records, t));
        const DensityCheck chk = check_density(rhos.back());
        worst_herm = std::max(worst_herm, chk.hermiticity_defect);
        worst_trace = std::max(worst_trace, chk.trace_error);
        worst_eig = std::min(worst_eig, chk.min_eigenvalue);
    }
    {
        const DensityCheck worst{worst_herm, worst_trace, worst_eig};
        std::ostringstream d;
        d << "worst over frames: hermiticity " << worst_herm << ", trace error " << worst_trace << ", min eigenvalue "
          << worst_eig;
        guards.add("frame_densities_valid", worst.ok(), std::max(worst_herm, worst_trace), 1e-9, d.str());
    }

    std::vector<TimedFrame> timed;
    for (std::size_t i = 0; i < rhos.size(); ++i) timed.push_back({s.frame_times[i], &rhos[i]});
    const auto weights = mode_weight_series(timed, 1e-8, odd_well_field(c.params));

    for (std::size_t i = 0; i < rhos.size(); ++i) {
        DynamicsFrame f;
        f.kappa_t = s.frame_times[i];
        f.negativity = negativity(rhos[i]);
        const DensityMatrix cav = reduce_field(rhos[i]);
        f.mean_n = field_moments(cav).n;
        try {
            f.mandel_q = mandel_q(cav);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::undefined) throw;
        }
        f.weights = weights[i];
        out.frames.push_back(std::move(f));
    }

    const fs::path dir = c.out_dir;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    io::CsvWriter neg(header, {"kappa_t", "value"}), mq(header, {"kappa_t", "value"}), pn(header, {"kappa_t", "value"});
    io::CsvWriter mw(header, {"kappa_t", "epsilon", "residual_weight"});
    json frame_errors = json::array();
    for (const auto& f : out.frames) {
        neg.row(f.kappa_t, f.negativity);
        mq.row(f.kappa_t, f.mandel_q ? *f.mandel_q : nan);
        pn.row(f.kappa_t, f.mean_n);
        mw.row(f.kappa_t, f.weights.epsilon, f.weights.residual_weight);
        if (!f.weights.error.empty()) frame_errors.push_back({{"kappa_t", f.kappa_t}, {"error", f.weights.error}});
    }
    neg.save(dir / "negativity.csv");
    mq.save(dir / "mandel_q.csv");
    pn.save(dir / "photon_number.csv");
    mw.save(dir / "mode_weights.csv");

    PositionGrid grid{c.grid_points};
    grid.validate(engine.basis());
    json mode_files = json::array();
    for (double t : c.mode_frames) {
        const auto it = std::find_if(out.frames.begin(), out.frames.end(),
                                     [&](const DynamicsFrame& f) { return std::abs(f.kappa_t - t) < 1e-9; });
        std::vector<std::string> h = header;
        h.push_back("kappa_t = " + format_number(t));
        const auto& w = it->weights;
        if (!w.modes) h.push_back("no modes: " + (w.error.empty() ? std::string("unavailable") : w.error));
        io::CsvWriter csv(h, {"Kx", "rho_O", "rho_E", "rho_R"});
        if (w.modes) {
            const Eigen::VectorXd o = position_density(w.modes->rho_odd, grid);
            const Eigen::VectorXd e = position_density(w.modes->rho_even, grid);
            const Eigen::VectorXd r = position_density(w.modes->rho_residual, grid);
            for (int j = 0; j < grid.points; ++j) csv.row(grid.kx(j), o[j], e[j], r[j]);
        }
        const std::string name = "mode_densities_" + frame_tag(t) + ".csv";
        csv.save(dir / name);
        mode_files.push_back(name);
    }

    json summary{{"command", "dynamics"},
                 {"out", dir.string()},
                 {"ut", c.params.ut},
                 {"trajectories", seeds.size()},
                 {"frames", out.frames.size()},
                 {"frame_errors", frame_errors},
                 {"mode_density_files", mode_files},
                 {"guards", guards.items()},
                 {"passed", guards.ok()}};
    write_json(dir / "dynamics.json", header, summary);
    out.result = {summary, guards.ok()};
    return out;
}

inline CommandResult cmd_dynamics(const RunConfig& c) { return run_dynamics(c).result; }

// ---------------------------------------------------------------------------
// sweep

inline std::string ut_tag(double ut) { return "ut_" + format_number(ut); }

inline CommandResult cmd_sweep(const RunConfig& c) {
    c.validate();
    const auto seeds = c.seeds(c.trajectories);
    const auto header = run_header("sweep", c, seeds);
    io::CsvWriter w(header, {"ut", "epsilon", "residual_weight", "fit_error", "fit_error_trace_norm", "mean_n",
                             "chi_ratio"});
    CommandResult res;
    res.summary = {{"command", "sweep"}, {"out", c.out_dir.string()}, {"runs", json::array()}};
    for (double ut : c.sweep_ut) {
        RunConfig one = c;
        one.params.ut = ut;
        one.out_dir = c.out_dir / ut_tag(ut);
        const SteadyRun run = run_steady(one);
        const auto& a = run.analysis;
        const double nan = std::numeric_limits<double>::quiet_NaN();
        const double eps = a.fit ? a.fit->epsilon : 0.0;
        w.row(ut, eps, 1.0 - 2.0 * eps, a.fit ? photon_distribution_error(a.rho_cav, a.fit->alpha, eps) : nan,
              a.fit ? trace_norm_fit_error(a.rho_cav, a.fit->alpha, eps) : nan, a.moments.n, a.chi_ratio());
        res.summary["runs"].push_back(run.result.summary);
        res.ok = res.ok && run.result.ok;
    }
    w.save(c.out_dir / "sweep.csv");
    res.summary["passed"] = res.ok;
    return res;
}

// ---------------------------------------------------------------------------
// decompose a saved density matrix

inline CommandResult cmd_decompose(const RunConfig& c, const fs::path& input) {
    const DensityMatrix rho = io::read_density(input);
    require(rho.tag == BasisTag::full, ErrorKind::basis_mismatch, "decompose needs a full-basis density matrix");
    std::vector<std::string> header{"cavmodes decompose", "input = " + input.string(),
                                    "analysis.grid_points = " + std::to_string(c.grid_points)};
    const cplx reference = odd_well_field(c.params);
    header.push_back("alpha reference (adiabatic field at Kx = pi/2, model.*) = " + format_number(reference.real()) +
                     " + " + format_number(reference.imag()) + "i");
    GuardList guards;
    density_guard(guards, "input_density_valid", rho);
    const SteadyAnalysis a = analyze_density(rho, c.grid_points, reference);
    write_density_outputs(a, c.out_dir, header);
    json obs = observables_json(a);
    obs["guards"] = guards.items();
    obs["passed"] = guards.ok();
    write_json(c.out_dir / "observables.json", header, obs);
    return {{{"command", "decompose"}, {"out", c.out_dir.string()}, {"decomposition", decomposition_json(a)},
             {"observables", obs}},
            guards.ok()};
}

// ---------------------------------------------------------------------------
// validation suite

namespace detail {

inline bool same_bits(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data(), b.data(), sizeof(cplx) * std::size_t(a.size())) == 0;
}

inline double max_abs(const SparseOperator& m) {
    double v = 0.0;
    for (int r = 0; r < m.outerSize(); ++r)
        for (SparseOperator::InnerIterator it(m, r); it; ++it) v = std::max(v, std::abs(it.value()));
    return v;
}

} // namespace detail

/// Each check: {name, passed, value, limit, detail}. Failures never throw;
/// they are recorded so one report covers the whole suite.
inline CommandResult cmd_validate(const RunConfig& c) {
    c.validate();
    const ValidationSettings& v = c.validation;
    const auto seeds = c.seeds(v.trajectories);
    std::vector<std::string> header = run_header("validate", c, seeds);
    header.push_back("validate.ut = " + format_number(v.params.ut));
    header.push_back("validate.k_max = " + std::to_string(v.params.k_max));
    header.push_back("validate.n_max = " + std::to_string(v.params.n_max));
    GuardList checks;

    auto guarded = [&](const std::string& name, auto&& body) {
        try {
            body();
        } catch (const Error& e) {
            checks.add(name, false, std::numeric_limits<double>::quiet_NaN(), 0.0,
                       std::string(to_string(e.kind())) + ": " + e.what());
        }
    };

    const ModelParams& p = v.params;
    guarded("operator_identities", [&] {
        const BasisSpec b = build_basis(p);
        const SparseOperator h = build_h_eff(p, b);
        const SparseOperator hnh = build_h_nh(p, b);
        const SparseOperator n = op_field(b, FieldOp::number);
        const double herm = detail::max_abs(SparseOperator(h - SparseOperator(h.adjoint())));
        const double decay = detail::max_abs(SparseOperator(hnh - h + cplx(0.0, p.kappa) * n));
        const Eigen::VectorXd s = parity_signs(b);
        const double parity = detail::max_abs(SparseOperator(s.asDiagonal() * h * s.asDiagonal() - h));
        bool banded = true;
        for (int r = 0; r < h.outerSize(); ++r)
            for (SparseOperator::InnerIterator it(h, r); it; ++it)
                banded = banded && std::abs(b.k_of(int(it.row())) - b.k_of(int(it.col()))) <= 2 &&
                         std::abs(b.n_of(int(it.row())) - b.n_of(int(it.col()))) <= 1;
        std::ostringstream d;
        d << "hermiticity " << herm << ", decay part " << decay << ", parity " << parity << ", banded " << banded;
        checks.add("operator_identities", herm == 0.0 && decay == 0.0 && parity == 0.0 && banded,
                   std::max({herm, decay, parity}), 0.0, d.str());
    });

    guarded("banded_kernel_agreement", [&] {
        const BasisSpec b = build_basis(p);
        BandedHamiltonian banded(p, b);
        const SparseOperator hnh = build_h_nh(p, b);
        std::mt19937_64 rng(c.master_seed);
        std::normal_distribution<double> g;
        StateVector psi(b.dim), out(b.dim);
        for (int i = 0; i < b.dim; ++i) psi[i] = cplx(g(rng), g(rng));
        banded.apply(psi, out);
        const StateVector ref = hnh * psi;
        const double err = (out - ref).cwiseAbs().maxCoeff() / ref.cwiseAbs().maxCoeff();
        checks.add("banded_kernel_agreement", err < 1e-13, err, 1e-13);
    });

    guarded("liouvillian_trace", [&] {
        const LiouvillianSpec spec(p);
        std::mt19937_64 rng(c.master_seed);
        const DensityMatrix rho = synthetic::random_density(spec.basis, BasisTag::full, rng);
        const Eigen::MatrixXcd d = liouvillian_apply(rho.data, spec);
        const double tr = std::abs(d.trace()) / p.kappa;
        const double herm = hermiticity_defect(d) / p.kappa;
        checks.add("liouvillian_trace", tr < 1e-12 && herm < 1e-12, std::max(tr, herm), 1e-12,
                   "|tr L(rho)| and max |L(rho) - L(rho)^dag|, in units of kappa");
    });

    std::vector<TrajectoryRecord> records;
    guarded("mcwf_vs_oracle", [&] {
        EvolutionSchedule s = c.schedule;
        s.kappa_horizon = v.kappa_horizon;
        s.kappa_t_rel = 0.0;
        s.accumulate_steady = false;
        s.frame_times = v.checkpoints;
        const TrajectoryEngine engine(p);
        records = run_ensemble(engine, s, seeds, c.workers);

        const LiouvillianSpec spec(p);
        const auto oracle = integrate_master_equation(spec, vacuum_density(spec.basis), v.kappa_horizon,
                                                      v.oracle_kappa_dt, v.checkpoints);
        double worst = 0.0;
        std::ostringstream d;
        d << "trace distance at kappa t";
        bool valid = true;
        for (std::size_t i = 0; i < v.checkpoints.size(); ++i) {
            const DensityMatrix rho = ensemble_density(records, v.checkpoints[i]);
            valid = valid && check_density(rho).ok() && check_density(oracle[i].rho).ok();
            const double td = trace_distance(rho.data, oracle[i].rho.data);
            worst = std::max(worst, td);
            d << ' ' << v.checkpoints[i] << ':' << td;
        }
        checks.add("mcwf_vs_oracle", worst < v.trace_distance_limit, worst, v.trace_distance_limit, d.str());
        checks.add("density_invariants", valid, valid ? 0.0 : 1.0, 0.0,
                   "ensemble and oracle densities at every checkpoint");
    });
    if (!records.empty()) {
        double norm = 0.0;
        for (const auto& r : records) norm = std::max(norm, r.max_norm_error);
        checks.add("norm_preservation", norm < 1e-10, norm, 1e-10);
    }

    guarded("decomposition_round_trip", [&] {
        ModelParams sp = p;
        sp.n_max = std::max(sp.n_max, 10);
        const BasisSpec b = build_basis(sp);
        const DensityMatrix rho = synthetic::mixture_state(1.2, 0.3, synthetic::odd_mode(b, 0.5),
                                                           synthetic::even_mode(b, 0.8), synthetic::uniform_mode(b));
        const ModeDecomposition d = decompose(rho);
        const double da = std::abs(d.alpha - cplx(1.2, 0.0));
        const double de = std::abs(d.epsilon - 0.3);
        const double rec = trace_distance(reconstruct(d).data, rho.data);
        const DensityMatrix cav = reduce_field(rho);
        const double fe = std::max(photon_distribution_error(cav, 1.2, 0.3), trace_norm_fit_error(cav, 1.2, 0.3));
        std::ostringstream s;
        s << "|alpha - 1.2| " << da << ", |eps - 0.3| " << de << ", reconstruction " << rec
          << ", fit error at the construction parameters " << fe;
        checks.add("decomposition_round_trip", da < 1e-3 && de < 1e-3 && rec < 1e-3 && fe < 1e-12,
                   std::max({da, de, rec}), 1e-3, s.str());

        // S exchanges the roles of +alpha and -alpha and shifts the atom by half a wavelength
        const ModeDecomposition m = decompose(apply_parity(rho));
        const double swap =
            std::max((m.rho_odd.data - translate_half_wavelength(d.rho_even).data).cwiseAbs().maxCoeff(),
                     (m.rho_even.data - translate_half_wavelength(d.rho_odd).data).cwiseAbs().maxCoeff());
        checks.add("mirror_symmetry", swap < 1e-6, swap, 1e-6,
                   "modes of S rho S^dag equal the shifted modes of rho with odd and even exchanged");
    });

    guarded("determinism", [&] {
        EvolutionSchedule s = c.schedule;
        s.kappa_horizon = std::min(2.0, v.kappa_horizon);
        s.kappa_t_rel = 0.5 * s.kappa_horizon;
        s.frame_times = {s.kappa_horizon};
        const TrajectoryEngine engine(p);
        const auto few = c.seeds(4);
        const auto a = run_ensemble(engine, s, few, 1);
        const auto b = run_ensemble(engine, s, std::vector<std::uint64_t>(few.rbegin(), few.rend()), 3);
        const bool same = detail::same_bits(steady_state_density(a).data, steady_state_density(b).data) &&
                          detail::same_bits(ensemble_density(a, s.kappa_horizon).data,
                                            ensemble_density(b, s.kappa_horizon).data);
        checks.add("determinism", same, same ? 0.0 : 1.0, 0.0, "1 worker vs 3 workers with reversed seed order");
    });

    // The oracle-sized model shares its truncation with the oracle, so the edge
    // bound is probed on the production model instead.
    guarded("truncation_edge_leakage", [&] {
        EvolutionSchedule s = c.schedule;
        s.kappa_horizon = v.leakage_horizon;
        s.kappa_t_rel = 0.0;
        s.accumulate_steady = false;
        const TrajectoryRecord r = run_trajectory(c.params, s, c.master_seed);
        checks.add("truncation_edge_leakage", r.max_edge_population < c.edge_leakage_limit, r.max_edge_population,
                   c.edge_leakage_limit, "largest population at |k| >= k_max - 2 of the model.* configuration");
        checks.diagnostic("fock_ceiling", r.max_top_fock_population, c.top_fock_limit,
                          "largest population at n = n_max of the model.* configuration");
    });

    json report{{"checks", checks.items()}, {"passed", checks.ok()}};
    write_json(c.out_dir / "validation.json", header, report);
    report["command"] = "validate";
    report["out"] = c.out_dir.string();
    return {report, checks.ok()};
}

// ---------------------------------------------------------------------------

/// File values, then CAVMODES_* environment variables, then --set assignments.
inline RunConfig resolve_config(const std::optional<fs::path>& file, const std::vector<std::string>& assignments,
                                const char* env_prefix = "CAVMODES_") {
    ConfigTable t = file ? ConfigTable::load(*file) : ConfigTable{};
    t.apply_environment(env_prefix);
    for (const auto& a : assignments) t.apply_assignment(a);
    return RunConfig::from_table(t);
}

inline json error_record(const std::string& command, const Error& e) {
    return {{"command", command}, {"status", "error"}, {"kind", std::string(to_string(e.kind()))}, {"message", e.what()}};
}

} // namespace cavmodes::cli
