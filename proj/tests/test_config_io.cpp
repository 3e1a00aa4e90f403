#include <cstdlib>
#include <filesystem>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "cavmodes/commands.hpp"
#include "cavmodes/config.hpp"
#include "cavmodes/io.hpp"
#include "cavmodes/synthetic.hpp"

using namespace cavmodes;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("cavmodes_test_config_io_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

} // namespace

TEST(Toml, TablesScalarsArraysComments) {
    const ConfigTable t = ConfigTable::parse_toml(R"(
# comment line
[model]
ut = -49.0   # trailing comment
k_max = 16
[schedule]
integrator = "rk4"
[dynamics]
mode_frames = [2.5, 5, 50]
[output]
event_log = true
)");
    const RunConfig c = RunConfig::from_table(t);
    EXPECT_EQ(c.params.ut, -49.0);
    EXPECT_EQ(c.params.k_max, 16);
    EXPECT_EQ(c.schedule.integrator, Integrator::rk4);
    EXPECT_EQ(c.mode_frames, (std::vector<double>{2.5, 5.0, 50.0}));
    EXPECT_TRUE(c.event_log);
}

TEST(Toml, Defaults) {
    const RunConfig c = RunConfig::from_table(ConfigTable{});
    EXPECT_EQ(c.params.k_max, 32);
    EXPECT_EQ(c.params.n_max, 10);
    EXPECT_EQ(c.params.kappa, 31.25);
    EXPECT_EQ(c.params.delta_c, -390.0);
    EXPECT_EQ(c.params.u0, -390.0);
    EXPECT_EQ(c.schedule.integrator, Integrator::rk4);
    EXPECT_EQ(c.schedule.kappa_horizon, 25000.0);
    EXPECT_EQ(c.schedule.kappa_t_rel, 20.0);
}

TEST(Toml, Errors) {
    EXPECT_THROW(ConfigTable::parse_toml("[model\nut = 1"), Error);
    EXPECT_THROW(ConfigTable::parse_toml("[model]\nut"), Error);
    EXPECT_THROW(RunConfig::from_table(ConfigTable::parse_toml("[model]\nut = abc")), Error);
    EXPECT_THROW(RunConfig::from_table(ConfigTable::parse_toml("[model]\nk_max = 2.5")), Error);
    EXPECT_THROW(RunConfig::from_table(ConfigTable::parse_toml("[schedule]\nintegrator = \"euler\"")), Error);
    try {
        RunConfig::from_table(ConfigTable::parse_toml("[model]\nkmax = 8"));
        FAIL() << "expected a config error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::config);
        EXPECT_NE(std::string(e.what()).find("model.kmax"), std::string::npos);
    }
}

TEST(Toml, FrameIntervalMustBeWholeSteps) {
    ConfigTable t;
    t.apply_assignment("dynamics.frame_interval=0.00075");
    EXPECT_THROW(RunConfig::from_table(t), Error);
}

TEST(Resolve, FileThenEnvironmentThenFlags) {
    const fs::path dir = scratch("resolve");
    io::write_text(dir / "c.toml", "[model]\nut = -22\nk_max = 16\nn_max = 6\n");
    ::setenv("CAVMODESTEST_MODEL_UT", "-38", 1);
    ::setenv("CAVMODESTEST_MODEL_K_MAX", "12", 1);
    const RunConfig c = cli::resolve_config(dir / "c.toml", {"model.ut=-49"}, "CAVMODESTEST_");
    ::unsetenv("CAVMODESTEST_MODEL_UT");
    ::unsetenv("CAVMODESTEST_MODEL_K_MAX");
    EXPECT_EQ(c.params.ut, -49.0);
    EXPECT_EQ(c.params.k_max, 12);
    EXPECT_EQ(c.params.n_max, 6);
    EXPECT_THROW(cli::resolve_config(dir / "missing.toml", {}, "CAVMODESTEST_"), Error);
    EXPECT_THROW(cli::resolve_config(std::nullopt, {"model.ut"}, "CAVMODESTEST_"), Error);
}

TEST(Resolve, ShippedConfigsParse) {
    const fs::path root = CAVMODES_SOURCE_DIR;
    int count = 0;
    for (const auto& e : fs::directory_iterator(root / "configs")) {
        if (e.path().extension() != ".toml") continue;
        EXPECT_NO_THROW(cli::resolve_config(e.path(), {}, "CAVMODESTEST_")) << e.path();
        ++count;
    }
    EXPECT_GE(count, 5);
}

TEST(DensityJson, RoundTripIsExact) {
    ModelParams p;
    p.k_max = 3;
    p.n_max = 2;
    const BasisSpec b = build_basis(p);
    std::mt19937_64 rng(1);
    const fs::path dir = scratch("json");
    for (BasisTag tag : {BasisTag::full, BasisTag::atom, BasisTag::field}) {
        const DensityMatrix rho = synthetic::random_density(b, tag, rng);
        io::write_density(dir / "rho.json", rho);
        const DensityMatrix back = io::read_density(dir / "rho.json");
        EXPECT_EQ(back.tag, tag);
        EXPECT_EQ(back.basis.k_max, 3);
        EXPECT_EQ(back.basis.n_max, 2);
        EXPECT_EQ(back.data, rho.data);
    }
}

TEST(DensityJson, MalformedInputs) {
    const fs::path dir = scratch("bad");
    io::write_text(dir / "a.json", "{not json");
    io::write_text(dir / "b.json", R"({"dim": 3, "tag": "full", "k_max": 2, "n_max": 1, "entries": []})");
    io::write_text(dir / "c.json", R"({"dim": 4, "tag": "atom", "k_max": 2, "n_max": 1, "entries": [[1,0]]})");
    for (const char* f : {"a.json", "b.json", "c.json", "missing.json"}) {
        try {
            io::read_density(dir / f);
            FAIL() << f;
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::io) << f;
        }
    }
}

TEST(Csv, HeaderThenColumnsThenRows) {
    io::CsvWriter w({"model.ut = -22", "seeds = 1"}, {"n", "P"});
    w.row(0, 0.5);
    w.row(std::vector<double>{1.0, 0.25});
    EXPECT_EQ(w.str(), "# model.ut = -22\n# seeds = 1\nn,P\n0,0.5\n1,0.25\n");
}
