#pragma once

#include "lobregime/benchmark.hpp"
#include "lobregime/hmm.hpp"
#include "lobregime/pipeline.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lobregime {

// Malformed or unreadable configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UnknownExperimentError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

enum class Experiment : std::uint8_t { Simulate, Detect, Benchmark, Sweep, Grid, Ablation, Bounds, Replay };

std::string_view experiment_name(Experiment e);
Experiment parse_experiment(std::string_view name);  // throws UnknownExperimentError

struct SweepSettings {
    std::vector<double> percentiles{70, 75, 80, 85, 90, 93, 95};
    bool with_baselines = true;
};

struct GridSettings {
    std::vector<double> p12{0.10, 0.05, 0.025};  // short, medium, long delay
    std::vector<double> noise{0.25, 0.5, 1.0};
    std::size_t runs_per_cell = 50;
};

struct BoundsSettings {
    std::vector<double> eta{0.3, 0.5, 1.0};
    std::vector<double> t1{20, 50};
    std::vector<double> delta{0.05, 0.1};
    std::uint64_t mc_samples = 100000;
};

struct ReplaySettings {
    ReplayConfig cfg;
    std::vector<std::string> inputs;             // snapshot CSV files
    std::optional<std::int64_t> test_start_epoch_s;  // default: first UTC midnight after train_window
    bool fixture = false;                        // generate the synthetic fixture instead
    FixtureSpec fixture_spec;
};

struct ExperimentConfig {
    Experiment experiment = Experiment::Benchmark;
    BenchmarkConfig bench;
    SweepSettings sweep;
    GridSettings grid;
    BoundsSettings bounds;
    ReplaySettings replay;
    std::string output_dir = "out";
    std::string input;       // detect: run CSV (empty = simulate one run)
    std::string model_path;  // detect: HMM JSON (empty = fit on burn-in)
    std::size_t run_index = 0;  // simulate / detect

    // Throws ParameterError.
    void validate() const;
};

// Missing keys keep their defaults; unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

ExperimentConfig load_config(const std::filesystem::path& path);

// Built-in default configuration file shipped with the sources.
std::filesystem::path default_config_path();

nlohmann::json model_to_json(const HmmModel& m);
HmmModel model_from_json(const nlohmann::json& j);

}  // namespace lobregime
