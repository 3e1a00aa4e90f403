// config.hpp — run configuration: a TOML file (tables, scalars, one-line
// arrays), overridden by CAVMODES_<TABLE>_<KEY> environment variables and
// then by --set table.key=value flags.

#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cavmodes/error.hpp"
#include "cavmodes/io.hpp"
#include "cavmodes/model.hpp"
#include "cavmodes/trajectory.hpp"

extern char** environ;

namespace cavmodes {

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

// Drops a trailing comment that is not inside a string.
inline std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_string = !in_string;
        if (line[i] == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

inline std::string unquote(const std::string& v) {
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
    return v;
}

} // namespace detail

/// Flat "table.key" -> raw value text.
class ConfigTable {
public:
    static ConfigTable parse_toml(const std::string& text, const std::string& origin = "<string>") {
        ConfigTable t;
        std::istringstream in(text);
        std::string line, table;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string s = detail::trim(detail::strip_comment(line));
            if (s.empty()) continue;
            const std::string where = origin + ":" + std::to_string(lineno);
            if (s.front() == '[') {
                require(s.back() == ']' && s.size() > 2, ErrorKind::config, where + ": malformed table header");
                table = detail::trim(s.substr(1, s.size() - 2));
                continue;
            }
            const auto eq = s.find('=');
            require(eq != std::string::npos, ErrorKind::config, where + ": expected key = value");
            const std::string key = detail::trim(s.substr(0, eq));
            const std::string value = detail::trim(s.substr(eq + 1));
            require(!key.empty() && !value.empty(), ErrorKind::config, where + ": empty key or value");
            t.set(table.empty() ? key : table + "." + key, value);
        }
        return t;
    }

    static ConfigTable load(const std::filesystem::path& path) {
        return parse_toml(io::read_text(path), path.string());
    }

    void set(const std::string& key, const std::string& raw) { values_[key] = raw; }

    /// "table.key=value"
    void apply_assignment(const std::string& assignment) {
        const auto eq = assignment.find('=');
        require(eq != std::string::npos && eq > 0, ErrorKind::config,
                "override '" + assignment + "' is not of the form table.key=value");
        set(detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
    }

    /// CAVMODES_SCHEDULE_KAPPA_DT=1e-3 -> schedule.kappa_dt
    void apply_environment(const std::string& prefix = "CAVMODES_") {
        std::vector<std::pair<std::string, std::string>> found;
        for (char** env = environ; env && *env; ++env) {
            const std::string entry(*env);
            if (entry.rfind(prefix, 0) != 0) continue;
            const auto eq = entry.find('=');
            std::string name = entry.substr(prefix.size(), eq - prefix.size());
            std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
            const auto us = name.find('_');
            if (us == std::string::npos) continue;
            found.emplace_back(name.substr(0, us) + "." + name.substr(us + 1), entry.substr(eq + 1));
        }
        std::sort(found.begin(), found.end());
        for (const auto& [k, v] : found) set(k, v);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    double get_double(const std::string& key, double fallback) const {
        used_.insert(key);
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : to_double(key, it->second);
    }

    long get_long(const std::string& key, long fallback) const {
        used_.insert(key);
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        long v = 0;
        const std::string& s = it->second;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        require(res.ec == std::errc() && res.ptr == s.data() + s.size(), ErrorKind::config,
                key + ": expected an integer, got '" + s + "'");
        return v;
    }

    bool get_bool(const std::string& key, bool fallback) const {
        used_.insert(key);
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        require(it->second == "true" || it->second == "false", ErrorKind::config,
                key + ": expected true or false");
        return it->second == "true";
    }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        used_.insert(key);
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : detail::unquote(it->second);
    }

    std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const {
        used_.insert(key);
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        const std::string s = detail::trim(it->second);
        require(s.size() >= 2 && s.front() == '[' && s.back() == ']', ErrorKind::config,
                key + ": expected an array [a, b, ...]");
        std::vector<double> out;
        std::stringstream items(s.substr(1, s.size() - 2));
        std::string item;
        while (std::getline(items, item, ',')) {
            item = detail::trim(item);
            if (!item.empty()) out.push_back(to_double(key, item));
        }
        return out;
    }

    const std::map<std::string, std::string>& values() const { return values_; }

    /// Keys present in the table that no getter has asked for.
    std::vector<std::string> unused_keys() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : values_)
            if (!used_.count(k)) out.push_back(k);
        return out;
    }

private:
    static double to_double(const std::string& key, const std::string& s) {
        char* end = nullptr;
        const double v = std::strtod(s.c_str(), &end);
        require(end && *end == '\0' && !s.empty(), ErrorKind::config,
                key + ": expected a number, got '" + s + "'");
        return v;
    }

    std::map<std::string, std::string> values_;
    mutable std::set<std::string> used_;
};

/// Small-instance settings for the master-equation cross-checks.
struct ValidationSettings {
    ModelParams params{-390.0, -390.0, -22.0, 31.25, 8, 3};
    double kappa_horizon{5.0};
    int trajectories{500};
    std::vector<double> checkpoints{1.0, 2.0, 3.0, 4.0, 5.0};
    double trace_distance_limit{0.05};
    double oracle_kappa_dt{1e-3};
    double leakage_horizon{20.0};  // kappa t of the truncation-edge probe run
};

struct RunConfig {
    ModelParams params;  // defaults: kappa = 31.25, Delta_c = U_0 = -390, U_t = -38
    EvolutionSchedule schedule;
    int trajectories{1};
    std::uint64_t master_seed{1};
    int grid_points{256};
    int workers{1};
    std::filesystem::path out_dir{"out"};
    bool save_density{true};
    bool event_log{false};
    double edge_leakage_limit{1e-6};
    double top_fock_limit{1e-4};

    // dynamics
    double dynamics_horizon{50.0};
    int dynamics_trajectories{200};
    double frame_interval{0.5};
    std::vector<double> mode_frames{2.5, 5.0, 50.0};

    std::vector<double> sweep_ut{-22.0, -38.0, -49.0};

    ValidationSettings validation;

    std::vector<std::uint64_t> seeds(int count) const {
        std::vector<std::uint64_t> s;
        for (int i = 0; i < count; ++i) s.push_back(master_seed + std::uint64_t(i));
        return s;
    }

    static RunConfig from_table(const ConfigTable& t) {
        RunConfig c;
        auto& p = c.params;
        p.delta_c = t.get_double("model.delta_c", p.delta_c);
        p.u0 = t.get_double("model.u0", p.u0);
        p.ut = t.get_double("model.ut", p.ut);
        p.kappa = t.get_double("model.kappa", p.kappa);
        p.k_max = int(t.get_long("model.k_max", p.k_max));
        p.n_max = int(t.get_long("model.n_max", p.n_max));

        auto& s = c.schedule;
        s.kappa_dt = t.get_double("schedule.kappa_dt", s.kappa_dt);
        s.kappa_horizon = t.get_double("schedule.kappa_horizon", s.kappa_horizon);
        s.kappa_t_rel = t.get_double("schedule.kappa_t_rel", s.kappa_t_rel);
        s.sample_interval = t.get_double("schedule.sample_interval", s.sample_interval);
        s.max_jump_probability = t.get_double("schedule.max_jump_probability", s.max_jump_probability);
        const std::string integ = t.get_string("schedule.integrator", "rk4");
        require(integ == "first_order" || integ == "rk4", ErrorKind::config,
                "schedule.integrator must be first_order or rk4");
        s.integrator = integ == "rk4" ? Integrator::rk4 : Integrator::first_order;
        c.trajectories = int(t.get_long("schedule.trajectories", c.trajectories));
        c.master_seed = std::uint64_t(t.get_long("schedule.seed", long(c.master_seed)));

        c.grid_points = int(t.get_long("analysis.grid_points", c.grid_points));
        c.edge_leakage_limit = t.get_double("analysis.edge_leakage_limit", c.edge_leakage_limit);
        c.top_fock_limit = t.get_double("analysis.top_fock_limit", c.top_fock_limit);

        c.workers = int(t.get_long("run.workers", c.workers));
        c.out_dir = t.get_string("run.out", c.out_dir.string());
        c.save_density = t.get_bool("output.save_density", c.save_density);
        c.event_log = t.get_bool("output.event_log", c.event_log);

        c.dynamics_horizon = t.get_double("dynamics.kappa_horizon", c.dynamics_horizon);
        c.dynamics_trajectories = int(t.get_long("dynamics.trajectories", c.dynamics_trajectories));
        c.frame_interval = t.get_double("dynamics.frame_interval", c.frame_interval);
        c.mode_frames = t.get_doubles("dynamics.mode_frames", c.mode_frames);

        c.sweep_ut = t.get_doubles("sweep.ut_values", c.sweep_ut);

        auto& v = c.validation;
        v.params.delta_c = t.get_double("validate.delta_c", p.delta_c);
        v.params.u0 = t.get_double("validate.u0", p.u0);
        v.params.kappa = t.get_double("validate.kappa", p.kappa);
        v.params.ut = t.get_double("validate.ut", v.params.ut);
        v.params.k_max = int(t.get_long("validate.k_max", v.params.k_max));
        v.params.n_max = int(t.get_long("validate.n_max", v.params.n_max));
        v.kappa_horizon = t.get_double("validate.kappa_horizon", v.kappa_horizon);
        v.trajectories = int(t.get_long("validate.trajectories", v.trajectories));
        v.checkpoints = t.get_doubles("validate.checkpoints", v.checkpoints);
        v.trace_distance_limit = t.get_double("validate.trace_distance_limit", v.trace_distance_limit);
        v.oracle_kappa_dt = t.get_double("validate.oracle_kappa_dt", v.oracle_kappa_dt);
        v.leakage_horizon = t.get_double("validate.leakage_horizon", v.leakage_horizon);

        const auto unknown = t.unused_keys();
        require(unknown.empty(), ErrorKind::config,
                "unknown configuration key '" + (unknown.empty() ? std::string() : unknown.front()) + "'");
        c.validate();
        return c;
    }

    void validate() const {
        params.validate();
        schedule.validate();
        validation.params.validate();
        require(trajectories >= 1 && dynamics_trajectories >= 1 && validation.trajectories >= 1,
                ErrorKind::config, "trajectory counts must be positive");
        require(workers >= 1, ErrorKind::config, "run.workers must be at least 1");
        require(frame_interval > 0.0, ErrorKind::config, "dynamics.frame_interval must be positive");
        require(std::abs(frame_interval / schedule.kappa_dt - std::round(frame_interval / schedule.kappa_dt)) < 1e-6,
                ErrorKind::config, "dynamics.frame_interval must be a multiple of schedule.kappa_dt");
        require(grid_points >= 4 * params.k_max, ErrorKind::config, "analysis.grid_points must be >= 4 k_max");
    }

    /// Resolved configuration as "key = value" lines for output headers.
    std::vector<std::string> describe() const {
        std::vector<std::string> lines;
        auto add = [&](const std::string& k, const auto& v) {
            std::ostringstream os;
            os << std::setprecision(17) << k << " = " << v;
            lines.push_back(os.str());
        };
        auto list = [](const std::vector<double>& xs) {
            std::ostringstream os;
            os << std::setprecision(17) << '[';
            for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? ", " : "") << xs[i];
            os << ']';
            return os.str();
        };
        add("model.delta_c", params.delta_c);
        add("model.u0", params.u0);
        add("model.ut", params.ut);
        add("model.kappa", params.kappa);
        add("model.k_max", params.k_max);
        add("model.n_max", params.n_max);
        add("schedule.kappa_dt", schedule.kappa_dt);
        add("schedule.kappa_horizon", schedule.kappa_horizon);
        add("schedule.kappa_t_rel", schedule.kappa_t_rel);
        add("schedule.sample_interval", schedule.sample_interval);
        add("schedule.max_jump_probability", schedule.max_jump_probability);
        add("schedule.integrator", schedule.integrator == Integrator::rk4 ? "rk4" : "first_order");
        add("schedule.trajectories", trajectories);
        add("schedule.seed", master_seed);
        add("analysis.grid_points", grid_points);
        add("analysis.edge_leakage_limit", edge_leakage_limit);
        add("analysis.top_fock_limit", top_fock_limit);
        add("dynamics.kappa_horizon", dynamics_horizon);
        add("dynamics.trajectories", dynamics_trajectories);
        add("dynamics.frame_interval", frame_interval);
        add("dynamics.mode_frames", list(mode_frames));
        add("sweep.ut_values", list(sweep_ut));
        return lines;
    }
};

} // namespace cavmodes
