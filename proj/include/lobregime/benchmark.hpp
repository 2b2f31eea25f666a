#pragma once

#include "lobregime/dgp.hpp"
#include "lobregime/evaluation.hpp"
#include "lobregime/hmm.hpp"
#include "lobregime/signals.hpp"
#include "lobregime/trigger.hpp"

#include <functional>
#include <string>
#include <vector>

namespace lobregime {

enum class Detector : std::uint8_t { Trigger, HmmPosterior, Cusum, Bocpd, Imbalance, Volatility };

std::string_view detector_name(Detector d);

struct BaselineConfig {
    // Every baseline threshold is this percentile of its own burn-in statistic.
    // Negative means "use the trigger percentile".
    double percentile = -1.0;
    double bocpd_hazard = 0.0;  // 0 selects (p01 + p12) / 2
    std::size_t bocpd_max_run = 2000;
    std::size_t smooth_window = 20;  // trailing mean for imbalance / volatility
};

struct BenchmarkConfig {
    DgpParams dgp = DgpParams::defaults();
    SignalConfig signal;
    TriggerConfig trigger;
    BaselineConfig baselines;
    std::size_t n_runs = 50;
    std::uint64_t seed = 42;
    std::size_t hmm_restarts = 10;
    std::size_t hmm_iters = 100;
    std::size_t threads = 0;  // 0 = hardware concurrency

    void validate() const;
};

// One configuration of the trigger detector evaluated on the shared runs.
struct TriggerArm {
    std::string name;
    SignalConfig signal;
    TriggerConfig trigger;
};

struct BaselineThresholds {
    double hmm_theta = 0.0;
    double cusum_mu0 = 0.0;
    double cusum_k = 0.0;
    double cusum_h = 0.0;
    double bocpd_hazard = 0.0;
    double bocpd_threshold = 0.0;
    double imbalance_theta = 0.0;
    double volatility_theta = 0.0;
};

struct DetectorOutput {
    std::string name;
    std::vector<Timestep> alarms;
    std::vector<TriggerEvent> triggers;  // empty for baselines
    std::vector<MatchResult> matches;
    RunOutcome outcome;
};

struct RunResult {
    std::size_t run_index = 0;
    std::uint64_t seed = 0;
    std::vector<Episode> episodes;
    std::vector<DetectorOutput> detectors;  // arms first, then baselines
    std::vector<EpisodeRecord> episode_records;  // first arm, evaluated episodes
    BaselineThresholds thresholds;
    double label_accuracy = 0.0;  // posterior argmax vs. ground truth after alignment
};

// Reference means for alignment: stable, mid build-up, stress.
std::array<Eigen::VectorXd, kNumRegimes> alignment_reference(const DgpParams& p);

// Fits the HMM on the burn-in prefix and returns it in regime order.
HmmModel fit_aligned_model(std::span<const LobFrame> frames, const BenchmarkConfig& cfg, std::uint64_t seed);

BaselineThresholds calibrate_baselines(std::span<const LobFrame> burn_in, const HmmModel& model,
                                       std::span<const PosteriorState> burn_in_post, const BenchmarkConfig& cfg);

// Baseline alarm streams over the full run (alarms only from burn_in on).
std::vector<DetectorOutput> run_baselines(std::span<const LobFrame> frames, const HmmModel& model,
                                          std::span<const PosteriorState> posteriors,
                                          const BaselineThresholds& th, const BenchmarkConfig& cfg);

RunResult run_single(const BenchmarkConfig& cfg, std::span<const TriggerArm> arms, bool with_baselines,
                     std::size_t run_index);

struct BenchmarkResult {
    std::vector<std::string> names;
    std::vector<EvalReport> reports;  // one per detector, same order as names
    std::vector<RunResult> runs;
    CoverageGrid grid;  // conditional coverage of the first arm
    double mean_label_accuracy = 0.0;
};

// Runs are independent and reduced in run-index order, so results do not
// depend on the thread count.
BenchmarkResult run_benchmark(const BenchmarkConfig& cfg, std::span<const TriggerArm> arms, bool with_baselines);

TriggerArm default_arm(const BenchmarkConfig& cfg);

// Applies fn(i) for i in [0, n) on a pool of worker threads.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

// ===========================================================================
// Sweeps
// ===========================================================================

struct PrPoint {
    std::string detector;
    double percentile = 0.0;
    EvalReport report;
};

std::vector<PrPoint> pr_frontier(const BenchmarkConfig& cfg, std::span<const double> percentiles,
                                 bool with_baselines = true);

struct GridCell {
    double p12 = 0.0;
    double noise = 0.0;
    EvalReport report;
    bool lead_ci_includes_zero = false;
};

std::vector<GridCell> robustness_grid(const BenchmarkConfig& cfg, std::span<const double> delay_p12,
                                      std::span<const double> noise_levels, std::size_t runs_per_cell);

struct AblationRow {
    std::string arm;
    EvalReport report;
    std::optional<double> d_precision;
    std::optional<double> d_coverage;
    std::optional<double> d_lead;
};

// Full method first, then: no rising edge, SUM aggregation, fixed threshold,
// no entropy channel.
std::vector<TriggerArm> ablation_arms(const BenchmarkConfig& cfg);
std::vector<AblationRow> ablation_suite(const BenchmarkConfig& cfg);

}  // namespace lobregime
