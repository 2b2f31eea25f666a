#include "lobregime/config.hpp"
#include "lobregime/harness.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace lobregime;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("lobregime_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

ExperimentConfig small_benchmark(const fs::path& dir) {
    ExperimentConfig c = load_config(default_config_path());
    c.experiment = Experiment::Benchmark;
    c.bench.n_runs = 3;
    c.bench.hmm_restarts = 2;
    c.bench.hmm_iters = 30;
    c.output_dir = dir.string();
    return c;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(LOBREGIME_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

// ===========================================================================
// Configuration
// ===========================================================================

TEST(Config, DefaultFileMatchesBuiltInDefaults) {
    const ExperimentConfig c = load_config(default_config_path());
    EXPECT_EQ(c.bench.n_runs, 50u);
    EXPECT_EQ(c.bench.seed, 42u);
    EXPECT_DOUBLE_EQ(c.bench.dgp.p01, 0.02);
    EXPECT_DOUBLE_EQ(c.bench.dgp.p12, 0.05);
    EXPECT_DOUBLE_EQ(c.bench.dgp.p20, 0.10);
    EXPECT_DOUBLE_EQ(c.bench.dgp.alpha, 0.03);
    EXPECT_EQ(c.bench.dgp.T, 3000u);
    EXPECT_EQ(c.bench.signal.w, 20u);
    EXPECT_DOUBLE_EQ(c.bench.trigger.percentile_p, 85.0);
    EXPECT_EQ(c.bench.trigger.suppression_L, 50);
    EXPECT_EQ(c.replay.cfg.signal.w, 60u);
    EXPECT_EQ(c.replay.cfg.trigger.suppression_L, 120);
    EXPECT_EQ(c.replay.cfg.trigger.threshold_update_interval, 1800u);
    EXPECT_EQ(config_hash(c), config_hash(ExperimentConfig{}));
}

TEST(Config, JsonRoundTrip) {
    ExperimentConfig c;
    c.experiment = Experiment::Sweep;
    c.bench.seed = 7;
    c.bench.dgp.p12 = 0.025;
    c.bench.dgp.set_noise(0.25);
    c.bench.signal.aggregation = Aggregation::Sum;
    c.bench.trigger.variant = TriggerVariant::Multi;
    c.sweep.percentiles = {70, 80};
    const ExperimentConfig d = config_from_json(config_to_json(c));
    EXPECT_EQ(config_to_json(d), config_to_json(c));
    EXPECT_EQ(config_hash(d), config_hash(c));
    EXPECT_NE(config_hash(d), config_hash(ExperimentConfig{}));
}

TEST(Config, Errors) {
    auto j = config_to_json(ExperimentConfig{});
    j["bogus_key"] = 1;
    EXPECT_THROW(config_from_json(j), ConfigError);

    j = config_to_json(ExperimentConfig{});
    j["experiment"] = "nonsense";
    EXPECT_THROW(config_from_json(j), UnknownExperimentError);

    j = config_to_json(ExperimentConfig{});
    j["n_runs"] = -3;
    EXPECT_THROW(config_from_json(j), ConfigError);

    EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);

    ExperimentConfig c;
    c.bench.n_runs = 0;
    EXPECT_THROW(c.validate(), ParameterError);
}

TEST(Config, ExperimentNames) {
    for (auto e : {Experiment::Simulate, Experiment::Detect, Experiment::Benchmark, Experiment::Sweep,
                   Experiment::Grid, Experiment::Ablation, Experiment::Bounds, Experiment::Replay}) {
        EXPECT_EQ(parse_experiment(experiment_name(e)), e);
    }
    EXPECT_THROW(parse_experiment("table9"), UnknownExperimentError);
}

TEST(OutputRoot, RelativeUsesEnvironment) {
    ::setenv(kOutputRootEnv, "/tmp/root_here", 1);
    EXPECT_EQ(resolve_output_dir("out"), fs::path("/tmp/root_here/out"));
    EXPECT_EQ(resolve_output_dir("/abs/out"), fs::path("/abs/out"));
    ::unsetenv(kOutputRootEnv);
    EXPECT_EQ(resolve_output_dir("out"), fs::path("out"));
}

// ===========================================================================
// Tables
// ===========================================================================

TEST(FormatSig, FourDigits) {
    EXPECT_EQ(format_sig(0.123456), "0.1235");
    EXPECT_EQ(format_sig(18.6444), "18.64");
    EXPECT_EQ(format_sig(0.0), "0");
    EXPECT_EQ(format_sig(std::nan("")), "");
    EXPECT_EQ(format_cell(std::nullopt), "");
    EXPECT_EQ(format_cell(1.0), "1");
}

TEST(WriteTables, EmptyIsHeaderOnly) {
    std::stringstream ss;
    write_tables(std::span<const NamedReport>{}, ss);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(ss, line)) lines.push_back(line);
    ASSERT_EQ(lines.size(), 1u);
    const auto cols = split(lines[0]);
    ASSERT_EQ(cols.size(), report_columns().size());
    for (std::size_t i = 0; i < cols.size(); ++i) EXPECT_EQ(cols[i], report_columns()[i]);
}

TEST(WriteTables, NullPrecisionIsEmptyCell) {
    NamedReport r{"quiet", {}};
    r.report.n_events = 4;
    r.report.coverage = {0.0, 0.0};
    std::stringstream ss;
    write_tables(std::vector<NamedReport>{r}, ss);
    std::string header, row;
    std::getline(ss, header);
    std::getline(ss, row);
    const auto h = split(header);
    const auto v = split(row);
    ASSERT_EQ(v.size(), h.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
        if (h[i] == "precision") EXPECT_EQ(v[i], "");
        if (h[i] == "coverage") EXPECT_EQ(v[i], "0");
        if (h[i] == "n_triggers") EXPECT_EQ(v[i], "0");
    }
}

TEST(WriteTables, RoundTripWithinRounding) {
    NamedReport r{"adaptive", {}};
    r.report.mean_lead = {18.63721, 3.2149};
    r.report.precision = {0.987654, 0.0123};
    r.report.coverage = {0.5432109, 0.061};
    r.report.n_triggers = 412;
    r.report.n_events = 1875;
    r.report.n_matched = 407;
    r.report.n_runs = 50;
    const fs::path dir = scratch_dir("tables");
    fs::create_directories(dir);
    write_tables(std::vector<NamedReport>{r}, dir / "t.csv");
    std::ifstream in(dir / "t.csv");
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    const auto h = split(header);
    const auto v = split(row);
    auto col = [&](const std::string& name) {
        for (std::size_t i = 0; i < h.size(); ++i) {
            if (h[i] == name) return v[i];
        }
        return std::string("?");
    };
    EXPECT_EQ(col("detector"), "adaptive");
    auto close4 = [](double parsed, double truth) { return std::abs(parsed - truth) <= 5e-4 * std::abs(truth); };
    EXPECT_TRUE(close4(std::stod(col("mean_lead")), 18.63721));
    EXPECT_TRUE(close4(std::stod(col("mean_lead_ci")), 3.2149));
    EXPECT_TRUE(close4(std::stod(col("precision")), 0.987654));
    EXPECT_TRUE(close4(std::stod(col("coverage")), 0.5432109));
    EXPECT_EQ(col("n_triggers"), "412");
    EXPECT_EQ(col("n_matched"), "407");
    EXPECT_EQ(col("n_runs"), "50");
    EXPECT_THROW(write_tables(std::vector<NamedReport>{r}, fs::path("/proc/no_such_dir/t.csv")), OutputError);
    fs::remove_all(dir);
}

// ===========================================================================
// Experiments
// ===========================================================================

TEST(RunExperiment, BenchmarkFilesAndDeterminism) {
    const fs::path a = scratch_dir("bench_a");
    const fs::path b = scratch_dir("bench_b");
    std::stringstream log;
    const ExperimentOutput oa = run_experiment(small_benchmark(a), log);
    ExperimentConfig cb = small_benchmark(b);
    cb.bench.threads = 3;  // the reduce is independent of the worker count
    run_experiment(cb, log);
    for (const char* f : {"table1.csv", "conditional.csv", "channels.csv", "events.jsonl", "runs.jsonl",
                          "config.json", "manifest.json"}) {
        EXPECT_TRUE(fs::exists(a / f)) << f;
    }
    for (const char* f : {"table1.csv", "conditional.csv", "channels.csv", "events.jsonl", "runs.jsonl"}) {
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
    // The manifest records the producing config.
    const auto manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
    EXPECT_EQ(manifest.at("config_hash").get<std::string>(), config_hash(small_benchmark(a)));
    EXPECT_EQ(manifest.at("seed").get<std::uint64_t>(), 42u);
    EXPECT_TRUE(manifest.contains("git_describe"));
    EXPECT_TRUE(manifest.contains("wall_seconds"));
    const ExperimentConfig back = load_config(a / "config.json");
    EXPECT_EQ(config_hash(back), config_hash(small_benchmark(a)));
    EXPECT_FALSE(oa.files.empty());
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(RunExperiment, BoundsHaveNoCouplingViolations) {
    const fs::path dir = scratch_dir("bounds");
    ExperimentConfig c = load_config(default_config_path());
    c.experiment = Experiment::Bounds;
    c.bounds.mc_samples = 10000;
    c.output_dir = dir.string();
    std::stringstream log;
    run_experiment(c, log);
    std::ifstream in(dir / "bounds_vs_mc.csv");
    std::string header, row;
    std::getline(in, header);
    const auto h = split(header);
    const auto idx = static_cast<std::size_t>(std::find(h.begin(), h.end(), "coupling_violations") - h.begin());
    ASSERT_LT(idx, h.size());
    int rows = 0;
    while (std::getline(in, row)) {
        EXPECT_EQ(split(row)[idx], "0");
        ++rows;
    }
    EXPECT_EQ(rows, 12);
    fs::remove_all(dir);
}

TEST(RunExperiment, ErrorsMapToExitCodes) {
    std::stringstream log, err;
    ExperimentConfig c = load_config(default_config_path());
    c.bench.n_runs = 0;
    c.output_dir = scratch_dir("bad_config").string();
    EXPECT_EQ(run_experiment_main(c, log, err), kExitConfigError);
    EXPECT_FALSE(fs::exists(c.output_dir));

    c = small_benchmark("/proc/lobregime_unwritable");
    EXPECT_EQ(run_experiment_main(c, log, err), kExitOutputError);

    c = load_config(default_config_path());
    c.experiment = Experiment::Detect;
    c.input = "/nonexistent/run.csv";
    c.output_dir = scratch_dir("bad_input").string();
    EXPECT_EQ(run_experiment_main(c, log, err), kExitInputError);
    EXPECT_FALSE(fs::exists(c.output_dir));
}

TEST(Cli, ExitCodes) {
    const fs::path dir = scratch_dir("cli");
    EXPECT_EQ(run_cli("benchmark --config /nonexistent/cfg.json -o " + dir.string()), kExitConfigError);
    EXPECT_FALSE(fs::exists(dir));

    const fs::path cfg = fs::temp_directory_path() / "lobregime_test_bad_experiment.json";
    {
        auto j = nlohmann::json::parse(slurp(default_config_path()), nullptr, true, true);
        j["experiment"] = "table9";
        std::ofstream(cfg) << j.dump();
    }
    EXPECT_EQ(run_cli("benchmark --config " + cfg.string() + " -o " + dir.string()), kExitUnknownExperiment);
    fs::remove(cfg);

    EXPECT_EQ(run_cli("simulate -o " + dir.string() + " --seed 5"), kExitOk);
    EXPECT_TRUE(fs::exists(dir / "run.csv"));
    EXPECT_TRUE(fs::exists(dir / "episodes.csv"));
    EXPECT_EQ(run_cli("detect --input " + (dir / "run.csv").string() + " --hmm-restarts 2 -o " +
                      (dir / "detect").string()),
              kExitOk);
    EXPECT_TRUE(fs::exists(dir / "detect" / "triggers.jsonl"));
    fs::remove_all(dir);
}
