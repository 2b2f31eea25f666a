#pragma once

#include "lobregime/hmm.hpp"
#include "lobregime/signals.hpp"
#include "lobregime/types.hpp"

#include <functional>
#include <optional>
#include <queue>
#include <span>
#include <string_view>
#include <array>
#include <vector>

namespace lobregime {

enum class TriggerVariant : std::uint8_t { Standard, Adaptive, Multi };

std::string_view variant_name(TriggerVariant v);
TriggerVariant parse_variant(std::string_view name);

struct TriggerConfig {
    double percentile_p = 85.0;
    Timestep suppression_L = 50;
    TriggerVariant variant = TriggerVariant::Adaptive;
    std::size_t burn_in = 500;
    std::size_t threshold_update_interval = 1;
    bool rising_edge = true;  // false only for the ablation arm

    void validate(const SignalConfig& sig) const;
};

struct TriggerEvent {
    Timestep tau = 0;
    double score = 0.0;
    double prev_score = 0.0;
    double threshold = 0.0;
    Channel first_channel = Channel::Entropy;
    TriggerVariant variant = TriggerVariant::Adaptive;
};

// Smallest sample value whose empirical CDF reaches p/100; +inf when empty.
double adaptive_threshold(std::span<const double> score_history, double p);

// Running p-th percentile of every value inserted so far (same order
// statistic as adaptive_threshold). O(log n) per insert.
class EmpiricalQuantile {
public:
    explicit EmpiricalQuantile(double p = 85.0) : p_(p) {}

    void insert(double x);
    double value() const;  // +inf when empty
    std::size_t size() const { return lower_.size() + upper_.size(); }

private:
    double p_;
    std::priority_queue<double> lower_;                                        // k smallest
    std::priority_queue<double, std::vector<double>, std::greater<>> upper_;  // the rest
};

// Eqs. (i)-(iii) of the rising-edge rule. t_last empty means no prior trigger.
bool rising_edge_fire(double s_t, double s_prev, double theta, Timestep t,
                      std::optional<Timestep> t_last, Timestep L);

// Per-step record for trace output.
struct DetectorStep {
    ChannelScores raw;
    ChannelScores normalized;  // composite holds S_t (0 during burn-in)
    double threshold = 0.0;
    PosteriorState posterior;
    bool fired = false;
};

// Streaming detector for one stream. Frames before burn_in seed the channel
// normalizer and the score distribution; triggers are only emitted from
// t = burn_in on.
class TriggerDetector {
public:
    TriggerDetector(HmmModel model, SignalConfig sig, TriggerConfig trig);

    std::optional<TriggerEvent> step(const LobFrame& frame);
    // Channels read `frame`; the HMM filter reads `hmm_input`. Times must
    // increase; suppression and tau use them.
    std::optional<TriggerEvent> step(const LobFrame& frame, const Eigen::VectorXd& hmm_input, Timestep t);

    const DetectorStep& last_step() const { return last_; }
    std::size_t steps() const { return n_; }

private:
    void finish_burn_in();
    std::optional<TriggerEvent> evaluate(const ChannelScores& s);

    HmmModel model_;
    SignalConfig sig_;
    TriggerConfig trig_;
    ChannelEngine engine_;
    ChannelNormalizer normalizer_;
    PosteriorState post_;
    std::vector<ChannelScores> burn_in_raw_;

    // Composite history (index 0) and per-channel histories (1..4, Multi).
    std::array<EmpiricalQuantile, kNumChannels + 1> history_;
    std::array<double, kNumChannels + 1> theta_{};
    std::array<double, kNumChannels + 1> prev_{};
    std::optional<Timestep> t_last_;
    std::size_t since_update_ = 0;
    std::size_t n_ = 0;
    Timestep t_ = 0;
    DetectorStep last_;
};

std::vector<TriggerEvent> run_detector(std::span<const LobFrame> frames, const HmmModel& model,
                                       const SignalConfig& sig_cfg, const TriggerConfig& trig_cfg,
                                       std::vector<DetectorStep>* trace = nullptr);

}  // namespace lobregime
