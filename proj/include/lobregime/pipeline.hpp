#pragma once

#include "lobregime/evaluation.hpp"
#include "lobregime/signals.hpp"
#include "lobregime/trigger.hpp"
#include "lobregime/types.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace lobregime {

inline constexpr std::size_t kBookLevels = 20;
inline constexpr Timestep kSecondsPerDay = 86400;

// ===========================================================================
// Snapshots
// ===========================================================================

struct BookLevel {
    double price = 0.0;
    double volume = 0.0;
};

struct RawSnapshot {
    std::int64_t timestamp_ms = 0;
    std::vector<BookLevel> bids;  // best first, descending prices
    std::vector<BookLevel> asks;  // best first, ascending prices

    double best_bid() const { return bids.front().price; }
    double best_ask() const { return asks.front().price; }
    bool crossed() const;
    // Sorting, positive volumes, level count; crossing is checked separately.
    void validate() const;
};

// timestamp_ms, bid_px_1, bid_qty_1, ..., bid_px_20, bid_qty_20, ask_px_1, ..., ask_qty_20.
// Absent levels are empty fields.
std::string snapshot_csv_header();
void write_snapshots_csv(std::span<const RawSnapshot> snaps, std::ostream& out);
std::vector<RawSnapshot> read_snapshots_csv(std::istream& in);
std::vector<RawSnapshot> read_snapshot_files(std::span<const std::filesystem::path> paths);

// ===========================================================================
// Binning
// ===========================================================================

struct BinnedFeatures {
    Timestep t = 0;               // bin index from the origin
    std::int64_t epoch_s = 0;     // bin start, seconds since the Unix epoch
    double spread = 0.0;
    double depth = 0.0;
    double imbalance = 0.0;
    double vol = 0.0;
    double d_spread = 0.0;
    double d_depth = 0.0;
    bool missing = true;
    bool filled = false;          // forward-carried from an earlier bin

    LobFrame frame() const { return {spread, depth, imbalance, vol}; }
};

struct BinningOptions {
    std::size_t depth_levels = 5;
    std::size_t vol_window = 60;    // bins
    std::size_t max_fill = 3;       // bins carried forward across a gap
    double smooth_sigma = 5.0;      // causal Gaussian kernel for d_spread / d_depth, bins
};

struct BinningStats {
    std::size_t crossed_dropped = 0;
    std::size_t filled = 0;
    std::size_t missing = 0;
};

// One bin per second from the first snapshot's second to the last one's.
// The last valid snapshot in a bin defines its book features.
std::vector<BinnedFeatures> bin_snapshots(std::span<const RawSnapshot> snaps, const BinningOptions& opts = {},
                                          BinningStats* stats = nullptr);

// ===========================================================================
// Normalization
// ===========================================================================

struct ZScoreOptions {
    std::size_t window = 1800;  // bins
    double epsilon = 1e-8;
};

// (x - mean) / max(std, epsilon) over the non-missing bins in [t - window, t).
// Bins with fewer than `window` bins of history are marked missing.
std::vector<BinnedFeatures> causal_zscore(std::span<const BinnedFeatures> features, const ZScoreOptions& opts = {});

int weekday_of(std::int64_t epoch_s);  // 0 = Sunday
int hour_of(std::int64_t epoch_s);

struct SeasonalProfile {
    // (weekday, hour) cells and hour-of-day fallback; [0] spread, [1] depth.
    std::array<std::array<std::optional<std::array<double, 2>>, 24>, 7> cell{};
    std::array<std::optional<std::array<double, 2>>, 24> hour{};
    std::array<double, 2> overall{};
    std::int64_t last_training_epoch_s = 0;

    static SeasonalProfile fit(std::span<const BinnedFeatures> training);
    // Median for a bin; `fallback` reports use of the hour-of-day median.
    std::array<double, 2> median_at(std::int64_t epoch_s, bool* fallback = nullptr) const;
};

struct DeseasonalizeResult {
    std::vector<BinnedFeatures> adjusted;
    std::size_t fallback_bins = 0;
};

// Subtracts the training (weekday, hour) median from spread and depth.
// Evaluation bins must lie strictly after the training bins.
DeseasonalizeResult deseasonalize(std::span<const BinnedFeatures> features, const SeasonalProfile& profile);
DeseasonalizeResult deseasonalize(std::span<const BinnedFeatures> features,
                                  std::span<const BinnedFeatures> training);

// ===========================================================================
// Stress labels
// ===========================================================================

struct StressLabel {
    Timestep onset = 0;
    Timestep duration = 0;  // seconds
};

struct LabelOptions {
    std::size_t median_window = 600;  // bins
    double multiple = 3.0;
    Timestep min_duration = 30;
};

// Maximal spans with spread > multiple x median of the preceding window,
// lasting at least min_duration. Missing bins break spans.
std::vector<StressLabel> label_stress(std::span<const BinnedFeatures> features, const LabelOptions& opts = {});

// ===========================================================================
// Replay
// ===========================================================================

struct ReplayConfig {
    SignalConfig signal{60, 100};
    TriggerConfig trigger{85.0, 120, TriggerVariant::Adaptive, 0, 1800, true};
    Timestep match_window = 300;      // seconds before onset
    Timestep train_window = kSecondsPerDay;
    Timestep exclude_open = 3600;     // seconds excluded at the start of each day
    std::size_t hmm_restarts = 10;
    std::size_t hmm_iters = 100;
    std::uint64_t seed = 42;
    BinningOptions binning;
    ZScoreOptions zscore;
    LabelOptions labels;
};

struct ReplayTrigger {
    TriggerEvent event;
    std::int64_t epoch_s = 0;
};

struct ReplayResult {
    std::vector<ReplayTrigger> triggers;  // evaluated bins only
    std::vector<StressLabel> labels;      // evaluated days only
    std::vector<MatchResult> matches;
    RunOutcome outcome;
    EvalReport report;
    BinningStats binning;
    std::size_t seasonal_fallback_bins = 0;
    std::size_t test_days = 0;
};

// Streams every test day after the training span. Each day refits the HMM on
// the preceding train_window of normalized features; nothing at or after the
// day start enters the fit. Bins are seconds since the first snapshot's
// UTC midnight.
ReplayResult replay_run(std::span<const RawSnapshot> snaps, std::int64_t test_start_epoch_s,
                        const ReplayConfig& cfg);

// replay_run plus the check that the evaluation span covers at least one
// refit period.
ReplayResult replay_detect(std::span<const RawSnapshot> snaps, std::int64_t test_start_epoch_s,
                           const ReplayConfig& cfg);

// ===========================================================================
// Synthetic fixture
// ===========================================================================

struct FixtureSpec {
    std::int64_t start_epoch_s = 1704067200;  // Monday 2024-01-01 00:00 UTC
    std::size_t train_days = 1;
    std::size_t test_days = 1;
    std::size_t episodes_per_day = 5;
    bool plant_test_episodes = true;
    Timestep buildup_s = 60;
    std::vector<Timestep> stress_s{45, 60, 75, 90, 50};
    double train_noise = 1.0;  // multiplies the training-day noise scales
    double test_noise = 0.0;
    std::uint64_t seed = 7;
};

struct PlantedEpisode {
    std::int64_t buildup_start_epoch_s = 0;
    std::int64_t onset_epoch_s = 0;
    std::int64_t end_epoch_s = 0;  // inclusive
};

struct Fixture {
    std::vector<std::vector<RawSnapshot>> days;
    std::vector<PlantedEpisode> test_episodes;
    std::int64_t test_start_epoch_s = 0;
};

// Regime paths with planted build-up -> stress episodes, emitted by the
// simulator and rendered as 1 Hz snapshot books on a dyadic tick grid.
Fixture make_replay_fixture(const FixtureSpec& spec);

// Writes one CSV per day (day_000.csv, ...) and returns the paths.
std::vector<std::filesystem::path> write_fixture(const Fixture& fx, const std::filesystem::path& dir);

}  // namespace lobregime
