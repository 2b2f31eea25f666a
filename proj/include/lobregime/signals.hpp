#pragma once

#include "lobregime/hmm.hpp"
#include "lobregime/types.hpp"

#include <array>
#include <deque>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace lobregime {

enum class Channel : std::uint8_t { Entropy = 0, Depth = 1, Spread = 2, Ofi = 3 };
inline constexpr std::size_t kNumChannels = 4;

std::string_view channel_name(Channel c);

enum class Aggregation : std::uint8_t { Max, Sum };

struct SignalConfig {
    std::size_t w = 20;                 // lookback window
    std::size_t baseline_window = 100;  // rolling depth baseline and spread-change scale
    double epsilon = 1e-8;
    Aggregation aggregation = Aggregation::Max;
    bool use_entropy = true;
    double squash_cap = 3.0;  // normalized channels live in [0, squash_cap]

    void validate() const;
};

struct ChannelScores {
    double ent = 0.0;
    double dep = 0.0;
    double spr = 0.0;
    double ofi = 0.0;
    double composite = 0.0;
    Channel first = Channel::Entropy;
    Timestep t = 0;

    std::array<double, kNumChannels> as_array() const { return {ent, dep, spr, ofi}; }
};

double entropy_channel(const PosteriorState& post);

// History ends at t. The rolling baseline uses the baseline_window values
// strictly before t, so the history must hold at least baseline_window + 1
// values. *degenerate is set when the baseline depth is at or below epsilon.
double depth_erosion_channel(std::span<const double> depth_history, const SignalConfig& cfg,
                             bool* degenerate = nullptr);

// Mean of the last w spread changes divided by the population standard
// deviation of the changes among the baseline_window values before t.
double spread_drift_channel(std::span<const double> spread_history, const SignalConfig& cfg);

// |mean of the last w imbalances|; throws InputError if one lies outside [-1, 1].
double ofi_momentum_channel(std::span<const double> imbalance_history, const SignalConfig& cfg);

struct Aggregate {
    double value = 0.0;
    Channel channel = Channel::Entropy;
};

// Exact maximum; ties go to the earlier channel in ent > dep > spr > ofi order.
Aggregate max_aggregate(const ChannelScores& scores);

// Composite under cfg (MAX or SUM, entropy optionally dropped). Writes
// composite and first into the returned copy.
ChannelScores aggregate(ChannelScores scores, const SignalConfig& cfg);

// Streaming raw-channel computation over per-stream ring buffers.
class ChannelEngine {
public:
    explicit ChannelEngine(SignalConfig cfg);

    // Raw (unnormalized) scores for frame t. Channels whose history is still
    // too short report 0.
    ChannelScores push(const LobFrame& frame, const PosteriorState& post);

    bool warm() const { return depth_.size() > cfg_.baseline_window; }
    std::size_t degenerate_count() const { return degenerate_; }

private:
    SignalConfig cfg_;
    std::deque<double> depth_, spread_, imbalance_;
    std::vector<double> scratch_;
    std::size_t degenerate_ = 0;
    Timestep t_ = 0;
};

// Robust z-score against a reference sample, then clipped to [0, cap].
// Location is the median; scale is the 84.13th percentile minus the median
// (one sigma for Gaussian data), falling back to the standard deviation when
// that gap is below epsilon.
class ChannelNormalizer {
public:
    ChannelNormalizer() = default;

    // One sample per channel; fitted once at the end of burn-in.
    static ChannelNormalizer fit(std::span<const ChannelScores> reference, const SignalConfig& cfg);

    ChannelScores apply(const ChannelScores& raw) const;

    const std::array<double, kNumChannels>& location() const { return loc_; }
    const std::array<double, kNumChannels>& scale() const { return scale_; }

private:
    std::array<double, kNumChannels> loc_{};
    std::array<double, kNumChannels> scale_{1.0, 1.0, 1.0, 1.0};
    double cap_ = 3.0;
};

}  // namespace lobregime
