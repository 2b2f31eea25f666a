#pragma once

#include "lobregime/config.hpp"
#include "lobregime/evaluation.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lobregime {

// Process exit codes.
enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,            // unexpected runtime failure
    kExitConfigError = 2,        // missing / malformed config or invalid parameter
    kExitUnknownExperiment = 3,
    kExitOutputError = 4,        // output directory or file not writable
    kExitInputError = 5,         // malformed input data
};

class OutputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Relative output directories are placed under $LOBREGIME_OUTPUT_ROOT when set.
inline constexpr const char* kOutputRootEnv = "LOBREGIME_OUTPUT_ROOT";
std::filesystem::path resolve_output_dir(const std::string& output_dir);

struct ExperimentOutput {
    std::filesystem::path dir;
    std::vector<std::string> files;  // relative to dir, in write order
    double wall_seconds = 0.0;
};

// Runs the configured experiment and writes its files plus manifest.json and
// config.json. Throws ConfigError / ParameterError / InputError / OutputError.
ExperimentOutput run_experiment(const ExperimentConfig& cfg, std::ostream& log);

// run_experiment with exceptions mapped to exit codes and messages on err.
int run_experiment_main(const ExperimentConfig& cfg, std::ostream& log, std::ostream& err);

// ===========================================================================
// Tables
// ===========================================================================

// %.4g; empty string for a missing value.
std::string format_sig(double x, int digits = 4);
std::string format_cell(const std::optional<double>& x, int digits = 4);

struct NamedReport {
    std::string name;
    EvalReport report;
};

// One row per report, stable column order (see report_columns()).
std::span<const char* const> report_columns();
void write_tables(std::span<const NamedReport> rows, std::ostream& out);
void write_tables(std::span<const NamedReport> rows, const std::filesystem::path& path);

// SNR bin x T1 bin long form.
void write_conditional(const CoverageGrid& grid, std::ostream& out);

// Fraction of matched triggers whose first-crossing channel is each channel.
void write_channels(std::span<const NamedReport> rows, std::ostream& out);

// Long-form rows: detector, parameter, metric, value, ci.
void write_long_form_header(std::ostream& out);
void write_long_form(const std::string& detector, const std::string& parameter, const EvalReport& r,
                     std::ostream& out);

// 64-bit FNV-1a of the canonical config dump, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

// Source revision the binary was built from ("unknown" outside a checkout).
std::string git_describe();

}  // namespace lobregime
