#pragma once

#include "lobregime/dgp.hpp"
#include "lobregime/signals.hpp"
#include "lobregime/trigger.hpp"
#include "lobregime/types.hpp"

#include <array>
#include <optional>
#include <span>
#include <vector>

namespace lobregime {

enum class MatchMode : std::uint8_t { Simulation, Replay };

struct StressEvent {
    Timestep onset = 0;
    Timestep end = 0;
    // Simulation: index into the episode list. Replay: label id.
    std::size_t id = 0;
};

struct MatchResult {
    StressEvent stress;
    Timestep window_start = 0;
    std::optional<std::size_t> trigger_index;  // into the trigger list
    std::optional<Timestep> tau;
    std::optional<Timestep> lead_time;  // sigma - tau > 0 when matched
    // sigma - tau for the first alarm in [window_start, end]; may be <= 0
    // for alarms raised after the onset.
    std::optional<Timestep> response_lead;
};

std::vector<StressEvent> events_from_episodes(std::span<const Episode> episodes, Timestep eval_start = 0);

// Simulation: tau in [buildup_start, sigma). Replay: tau in [sigma - window, sigma).
// Each event takes the closest prior unused trigger. Triggers must be sorted.
std::vector<MatchResult> match_triggers(std::span<const Timestep> triggers, std::span<const StressEvent> events,
                                        std::span<const Episode> episodes, MatchMode mode,
                                        Timestep replay_window = 300);

std::vector<Timestep> trigger_times(std::span<const TriggerEvent> events);

// Per-run tallies; the unit of aggregation.
struct RunOutcome {
    std::size_t n_triggers = 0;
    std::size_t n_events = 0;
    std::size_t n_matched = 0;
    std::vector<double> response_leads;
    std::vector<double> matched_leads;
    std::array<std::size_t, kNumChannels> first_channel{};  // over matched triggers
};

RunOutcome summarize_run(std::span<const MatchResult> matches, std::size_t n_triggers,
                         std::span<const TriggerEvent> triggers = {});

struct Estimate {
    std::optional<double> value;
    double ci = 0.0;  // half-width of the 95% interval
};

struct CoverageGrid {
    // Rows: SNR low / medium / high. Columns: T1 short / medium / long.
    std::array<std::array<std::optional<double>, 3>, 3> coverage{};
    std::array<std::array<double, 3>, 3> se{};
    std::array<std::array<std::size_t, 3>, 3> count{};
};

struct EvalReport {
    Estimate mean_lead;          // over response leads
    Estimate mean_matched_lead;  // over early detections only
    Estimate precision;
    Estimate coverage;
    std::size_t n_triggers = 0;
    std::size_t n_events = 0;
    std::size_t n_matched = 0;
    std::size_t n_runs = 0;
    std::array<std::optional<double>, kNumChannels> per_channel_first{};
    std::optional<CoverageGrid> per_cell;
};

// Pooled point estimates; intervals are 1.96 standard errors across runs
// (across events for lead-times). Undefined ratios stay empty.
EvalReport compute_report(std::span<const RunOutcome> runs);

struct EpisodeRecord {
    Timestep t1_obs = 0;
    double snr = 0.0;  // episode-level estimate used for binning
    bool covered = false;
};

int t1_bin(Timestep t1_obs);
int snr_bin(double snr);

CoverageGrid conditional_breakdown(std::span<const EpisodeRecord> episodes);

struct EpisodeSnr {
    double per_step = 0.0;       // OLS slope / residual std
    double episode_level = 0.0;  // per_step * sqrt(t1_obs)
};

// OLS of v'X_t on within-episode time over the build-up segment.
EpisodeSnr estimate_episode_snr(std::span<const LobFrame> frames, const Episode& ep,
                                const Eigen::Vector4d& v);

}  // namespace lobregime
