#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "olg/cli/commands.hpp"
#include "olg/io/config.hpp"
#include "olg/io/csv.hpp"
#include "olg/io/manifest.hpp"

namespace fs = std::filesystem;
using namespace olg;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path temp_root(const std::string& name) {
    const fs::path root = fs::temp_directory_path() / ("olg-test-" + name);
    fs::remove_all(root);
    fs::create_directories(root);
    return root;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
    const fs::path p = dir / "config.json";
    std::ofstream(p) << text;
    return p;
}

int run(std::vector<std::string> args) {
    std::vector<const char*> argv{"olgsim"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli::run_cli(static_cast<int>(argv.size()), argv.data());
}

const char* kSmall = R"({
  "income": {"mu": 0.01, "sigma": 0.1, "eta0": 1},
  "population": {"initial_wealth": 10, "n_paths": 200, "seed": 5},
  "grid": {"L": 5, "M": 50}
})";

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

TEST(Config, DefaultsMatchBaseline) {
    const auto c = io::parse_config_text("{}");
    EXPECT_EQ(c.model.gamma1, 2.0);
    EXPECT_EQ(c.model.delta, 0.02);
    EXPECT_EQ(c.model.lambda, 100.0);
    EXPECT_EQ(c.grid.L, 60.0);
    EXPECT_EQ(c.grid.M, 600);
}

TEST(Config, RejectsUnknownKeys) {
    EXPECT_THROW(io::parse_config_text(R"({"modle": {}})"), io::ConfigError);
    EXPECT_THROW(io::parse_config_text(R"({"model": {"gama1": 2}})"), io::ConfigError);
    EXPECT_THROW(io::parse_config_text(R"({"income": {"eta0": {"kind": "weibull"}}})"), io::ConfigError);
}

TEST(Config, RejectsInvalidValues) {
    EXPECT_THROW(io::parse_config_text(R"({"grid": {"L": -1}})"), io::ConfigError);
    EXPECT_THROW(io::parse_config_text(R"({"grid": {"M": 0}})"), io::ConfigError);
    EXPECT_THROW(io::parse_config_text(R"({"model": {"gamma1": "two"}})"), io::ConfigError);
    EXPECT_THROW(io::parse_config_text(R"({"population": {"seed": -3}})"), io::ConfigError);
    EXPECT_THROW(io::parse_config_text("not json"), io::ConfigError);
}

TEST(Config, DistributionsParse) {
    const auto c = io::parse_config_text(R"({
      "income": {"eta0": {"kind": "lognormal", "mu": 0, "sigma": 0.5}},
      "population": {"initial_wealth": {"kind": "pareto", "scale": 10, "shape": 3}}
    })");
    EXPECT_EQ(c.income.initial.kind, Distribution::Kind::lognormal);
    EXPECT_EQ(c.population.initial_wealth.kind, Distribution::Kind::pareto);
    EXPECT_DOUBLE_EQ(c.population.initial_wealth.mean(), 15.0);
}

TEST(Config, CanonicalRoundTripKeepsHash) {
    const auto c = io::parse_config_text(kSmall);
    const auto again = io::parse_config(io::to_json(c));
    EXPECT_EQ(io::to_json(c).dump(), io::to_json(again).dump());
    EXPECT_EQ(io::config_hash(c), io::config_hash(again));
    auto d = c;
    d.population.seed = 6;
    EXPECT_NE(io::config_hash(c), io::config_hash(d));
}

TEST(Config, NblStaticTimesScaleWithLifespan) {
    const auto c = io::parse_config_text(kSmall);
    const auto t = io::nbl_static_times(c);
    ASSERT_EQ(t.size(), 3u);
    EXPECT_NEAR(t[0], 5.0 / 6.0, 1e-12);
    EXPECT_NEAR(t[2], 25.0 / 6.0, 1e-12);
}

// ---------------------------------------------------------------------------
// Output helpers

TEST(Csv, NumbersRoundTrip) {
    for (double v : {0.1, 1.0 / 3.0, -34.9403, 6.0496474644129465, 1e-300}) EXPECT_EQ(std::stod(io::format_number(v)), v);
    EXPECT_EQ(io::format_number(-0.0), "0");
    EXPECT_EQ(io::format_number(2.0), "2");
}

TEST(Csv, WriterProducesHeaderAndRows) {
    const auto dir = temp_root("csv");
    {
        io::CsvWriter w(dir / "a.csv", {"t", "x"});
        w.row({0.5, 2.0});
        w.close();
    }
    EXPECT_EQ(slurp(dir / "a.csv"), "t,x\n0.5,2\n");
}

TEST(Manifest, Fnv1aReferenceValues) {
    EXPECT_EQ(io::fnv1a64(""), 0xcbf29ce484222325ull);
    EXPECT_EQ(io::fnv1a64("a"), 0xaf63dc4c8601ec8cull);
    EXPECT_EQ(io::hex64(0xabcull), "0000000000000abc");
}

TEST(Manifest, RunDirectoryIsAtomic) {
    const auto root = temp_root("rundir");
    {
        io::RunDirectory d(root / "run", false);
        io::write_atomic(d.file("x.txt"), "hello");
    }  // not committed: nothing appears
    EXPECT_FALSE(fs::exists(root / "run"));
    {
        io::RunDirectory d(root / "run", false);
        io::write_atomic(d.file("x.txt"), "hello");
        d.commit();
    }
    EXPECT_EQ(slurp(root / "run" / "x.txt"), "hello");
    EXPECT_THROW(io::RunDirectory(root / "run", false), io::OutputExists);
    {
        io::RunDirectory d(root / "run", true);
        io::write_atomic(d.file("y.txt"), "again");
        d.commit();
    }
    EXPECT_FALSE(fs::exists(root / "run" / "x.txt"));
    EXPECT_EQ(slurp(root / "run" / "y.txt"), "again");
}

// ---------------------------------------------------------------------------
// Command line

TEST(Cli, ConfigErrorsExit64) {
    const auto dir = temp_root("cli-bad");
    const auto cfg = write_config(dir, R"({"grid": {"L": 5, "M": 50, "N": 3}})");
    EXPECT_EQ(run({"validate", "--config", cfg.string()}), cli::kConfigError);
    EXPECT_EQ(run({"validate", "--config", (dir / "missing.json").string()}), cli::kConfigError);
    EXPECT_EQ(run({"frobnicate"}), cli::kConfigError);
    EXPECT_EQ(run({"equilibrium", "sideways", "--config", cfg.string()}), cli::kConfigError);
}

TEST(Cli, DeterministicLifecycleWritesTrajectories) {
    const auto dir = temp_root("cli-det");
    const auto cfg = write_config(dir, R"({"grid": {"L": 60, "M": 600}})");
    EXPECT_EQ(run({"det-lifecycle", "--config", cfg.string(), "--out", (dir / "runs").string()}), cli::kOk);
    const auto runs = dir / "runs";
    ASSERT_EQ(std::distance(fs::directory_iterator(runs), fs::directory_iterator{}), 1);
    const auto run_dir = fs::directory_iterator(runs)->path();
    EXPECT_TRUE(fs::exists(run_dir / "manifest.json"));
    std::ifstream in(run_dir / "det_trajectories.csv");
    std::string line, last;
    std::getline(in, line);
    EXPECT_EQ(line, "t,income,consumption,wealth");
    while (std::getline(in, line)) last = line;
    EXPECT_GT(std::stod(last.substr(last.rfind(',') + 1)), 0.0);

    // Same config and seed: existing directory refused unless --force.
    EXPECT_EQ(run({"det-lifecycle", "--config", cfg.string(), "--out", runs.string()}), cli::kConfigError);
    EXPECT_EQ(run({"det-lifecycle", "--config", cfg.string(), "--out", runs.string(), "--force"}), cli::kOk);
}

TEST(Cli, EmptyEconomyIsAllZero) {
    const auto dir = temp_root("cli-zero");
    const auto cfg = write_config(dir, R"({"income": {"eta0": 0, "sigma": 0}, "population": {"initial_wealth": 0},
                                          "grid": {"L": 10, "M": 100}})");
    ASSERT_EQ(run({"det-lifecycle", "--config", cfg.string(), "--out", (dir / "runs").string()}), cli::kOk);
    const auto run_dir = fs::directory_iterator(dir / "runs")->path();
    std::ifstream in(run_dir / "det_trajectories.csv");
    std::string line;
    std::getline(in, line);
    int rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        EXPECT_EQ(line.substr(line.find(',')), ",0,0,0");
    }
    EXPECT_EQ(rows, 101);
}

TEST(Cli, EmptySweepIsHeaderOnly) {
    const auto dir = temp_root("cli-sweep");
    const auto cfg = write_config(dir, R"({"grid": {"L": 5, "M": 50}, "population": {"n_paths": 50},
                                          "sweep": {"rates": []}})");
    ASSERT_EQ(run({"sweep", "--config", cfg.string(), "--out", (dir / "runs").string()}), cli::kOk);
    const auto run_dir = fs::directory_iterator(dir / "runs")->path();
    EXPECT_EQ(slurp(run_dir / "sweep.csv"), "r,mean_wealth,std_error,converged\n");
}

TEST(Cli, StochasticRunIsReproducible) {
    const auto dir = temp_root("cli-sto");
    const auto cfg = write_config(dir, kSmall);
    ASSERT_EQ(run({"sto-lifecycle", "--config", cfg.string(), "--out", (dir / "a").string()}), cli::kOk);
    ASSERT_EQ(run({"sto-lifecycle", "--config", cfg.string(), "--out", (dir / "b").string(), "--threads", "4"}),
              cli::kOk);
    const auto a = fs::directory_iterator(dir / "a")->path();
    const auto b = fs::directory_iterator(dir / "b")->path();
    EXPECT_EQ(a.filename(), b.filename());
    for (const char* f : {"ensemble_stats.csv", "sample_paths.csv", "nbl.csv", "iterations.csv"})
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    const auto manifest = io::json::parse(slurp(a / "manifest.json"));
    EXPECT_EQ(manifest["command"], "sto-lifecycle");
    EXPECT_EQ(manifest["converged"], true);
    EXPECT_EQ(manifest["config_hash"], io::config_hash(io::parse_config_text(kSmall)));

    // A different seed changes the run directory.
    ASSERT_EQ(run({"sto-lifecycle", "--config", cfg.string(), "--out", (dir / "a").string(), "--seed", "9"}),
              cli::kOk);
    EXPECT_EQ(std::distance(fs::directory_iterator(dir / "a"), fs::directory_iterator{}), 2);
}

TEST(Cli, ValidateDefaultsAtShortLifespan) {
    const auto dir = temp_root("cli-validate");
    const auto cfg = write_config(dir, kSmall);
    std::ostringstream sink;
    cli::CommandOptions o;
    o.console = &sink;
    std::vector<cli::CheckRow> rows;
    EXPECT_EQ(cli::cmd_validate(io::parse_config_text(kSmall), o, &rows), cli::kOk) << sink.str();
    EXPECT_GE(rows.size(), 10u);
}

TEST(Cli, ValidateLoosensOracleOnCoarseGrid) {
    std::ostringstream sink;
    cli::CommandOptions o;
    o.console = &sink;
    std::vector<cli::CheckRow> rows;
    const auto c = io::parse_config_text(R"({"income": {"sigma": 0}, "population": {"n_paths": 1},
                                             "grid": {"L": 5, "M": 10}})");
    cli::cmd_validate(c, o, &rows);
    for (const auto& r : rows)
        if (r.name == "sigma0_oracle") {
            EXPECT_TRUE(r.passed) << r.value;
            EXPECT_GT(r.threshold, 1e-2);
        }
}

TEST(Cli, ValidateFailsAtLongLifespan) {
    std::ostringstream sink;
    cli::CommandOptions o;
    o.console = &sink;
    std::vector<cli::CheckRow> rows;
    const auto c = io::parse_config_text(R"({"population": {"n_paths": 50}, "grid": {"L": 500, "M": 5000}})");
    EXPECT_EQ(cli::cmd_validate(c, o, &rows), cli::kValidationFailure);
    ASSERT_FALSE(rows.empty());
    EXPECT_EQ(rows.front().name, "contraction");
    EXPECT_FALSE(rows.front().passed);
}
