// io.hpp — density-matrix JSON, plot-ready CSV with a configuration header

#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cavmodes/density.hpp"
#include "cavmodes/error.hpp"

namespace cavmodes::io {

using json = nlohmann::json;

inline BasisTag parse_tag(const std::string& s) {
    if (s == "full") return BasisTag::full;
    if (s == "atom") return BasisTag::atom;
    if (s == "field") return BasisTag::field;
    throw Error(ErrorKind::io, "unknown basis tag '" + s + "'");
}

/// {"dim", "tag", "k_max", "n_max", "entries": row-major [re, im] pairs}
inline json density_to_json(const DensityMatrix& rho) {
    json entries = json::array();
    for (Eigen::Index r = 0; r < rho.data.rows(); ++r)
        for (Eigen::Index c = 0; c < rho.data.cols(); ++c)
            entries.push_back({rho.data(r, c).real(), rho.data(r, c).imag()});
    return {{"dim", rho.dim()},
            {"tag", to_string(rho.tag)},
            {"k_max", rho.basis.k_max},
            {"n_max", rho.basis.n_max},
            {"entries", std::move(entries)}};
}

inline DensityMatrix density_from_json(const json& j) {
    try {
        ModelParams p;
        p.k_max = j.at("k_max").get<int>();
        p.n_max = j.at("n_max").get<int>();
        DensityMatrix rho;
        rho.basis = build_basis(p);
        rho.tag = parse_tag(j.at("tag").get<std::string>());
        const int dim = j.at("dim").get<int>();
        require(dim == DensityMatrix::expected_dim(rho.basis, rho.tag), ErrorKind::io,
                "dim does not match k_max/n_max/tag");
        const json& e = j.at("entries");
        require(e.size() == std::size_t(dim) * std::size_t(dim), ErrorKind::io, "entry count != dim^2");
        rho.data.resize(dim, dim);
        std::size_t i = 0;
        for (int r = 0; r < dim; ++r)
            for (int c = 0; c < dim; ++c, ++i) rho.data(r, c) = cplx(e[i].at(0).get<double>(), e[i].at(1).get<double>());
        return rho;
    } catch (const json::exception& ex) {
        throw Error(ErrorKind::io, std::string("malformed density matrix JSON: ") + ex.what());
    }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    require(bool(os), ErrorKind::io, "cannot open " + path.string() + " for writing");
    os << text;
    require(bool(os), ErrorKind::io, "write failed for " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    require(bool(is), ErrorKind::io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline void write_density(const std::filesystem::path& path, const DensityMatrix& rho) {
    write_text(path, density_to_json(rho).dump() + "\n");
}

inline DensityMatrix read_density(const std::filesystem::path& path) {
    try {
        return density_from_json(json::parse(read_text(path)));
    } catch (const json::parse_error& ex) {
        throw Error(ErrorKind::io, path.string() + ": " + ex.what());
    }
}

/// Comma-separated table. `header` lines are emitted first, each prefixed with "# ".
class CsvWriter {
public:
    CsvWriter(const std::vector<std::string>& header, const std::vector<std::string>& columns) {
        out_ << std::setprecision(12);
        for (const auto& line : header) out_ << "# " << line << '\n';
        for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
        out_ << '\n';
    }

    template <typename... Ts>
    void row(const Ts&... values) {
        std::size_t i = 0;
        ((out_ << (i++ ? "," : "") << values), ...);
        out_ << '\n';
    }

    void row(const std::vector<double>& values) {
        for (std::size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << values[i];
        out_ << '\n';
    }

    std::string str() const { return out_.str(); }
    void save(const std::filesystem::path& path) const { write_text(path, str()); }

private:
    std::ostringstream out_;
};

} // namespace cavmodes::io
