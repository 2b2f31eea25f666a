#include "lobregime/trigger.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace lobregime {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1-based rank of the p-th percentile order statistic in a sample of n.
std::size_t percentile_rank(std::size_t n, double p) {
    const double raw = std::ceil(p / 100.0 * static_cast<double>(n) - 1e-9);
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(raw, 1.0)), 1, n);
}

}  // namespace

std::string_view variant_name(TriggerVariant v) {
    switch (v) {
        case TriggerVariant::Standard: return "standard";
        case TriggerVariant::Adaptive: return "adaptive";
        case TriggerVariant::Multi: return "multi";
    }
    return "unknown";
}

TriggerVariant parse_variant(std::string_view name) {
    if (name == "standard") return TriggerVariant::Standard;
    if (name == "adaptive") return TriggerVariant::Adaptive;
    if (name == "multi") return TriggerVariant::Multi;
    throw ParameterError("unknown trigger variant: " + std::string(name));
}

void TriggerConfig::validate(const SignalConfig& sig) const {
    if (!(percentile_p >= 50.0 && percentile_p <= 99.9)) {
        throw ParameterError("percentile must lie in [50, 99.9]");
    }
    if (suppression_L < 1) throw ParameterError("suppression window must be >= 1");
    if (burn_in < sig.baseline_window) throw ParameterError("burn_in must be >= baseline_window");
    if (threshold_update_interval < 1) throw ParameterError("threshold update interval must be >= 1");
}

double adaptive_threshold(std::span<const double> score_history, double p) {
    if (score_history.empty()) return kInf;
    std::vector<double> sorted(score_history.begin(), score_history.end());
    const std::size_t k = percentile_rank(sorted.size(), p);
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end());
    return sorted[k - 1];
}

void EmpiricalQuantile::insert(double x) {
    if (!lower_.empty() && x <= lower_.top()) {
        lower_.push(x);
    } else {
        upper_.push(x);
    }
    const std::size_t k = percentile_rank(size(), p_);
    while (lower_.size() > k) {
        upper_.push(lower_.top());
        lower_.pop();
    }
    while (lower_.size() < k) {
        lower_.push(upper_.top());
        upper_.pop();
    }
}

double EmpiricalQuantile::value() const { return lower_.empty() ? kInf : lower_.top(); }

bool rising_edge_fire(double s_t, double s_prev, double theta, Timestep t,
                      std::optional<Timestep> t_last, Timestep L) {
    const bool above = s_t > theta;
    const bool rising = s_t - s_prev > 0.0;
    const bool clear = !t_last || t - *t_last > L;
    return above && rising && clear;
}

TriggerDetector::TriggerDetector(HmmModel model, SignalConfig sig, TriggerConfig trig)
    : model_(std::move(model)), sig_(sig), trig_(trig), engine_(sig) {
    history_.fill(EmpiricalQuantile(trig_.percentile_p));
    sig_.validate();
    trig_.validate(sig_);
    theta_.fill(kInf);
    last_.threshold = kInf;
}

void TriggerDetector::finish_burn_in() {
    normalizer_ = ChannelNormalizer::fit(burn_in_raw_, sig_);
    for (const auto& raw : burn_in_raw_) {
        const ChannelScores s = aggregate(normalizer_.apply(raw), sig_);
        history_[0].insert(s.composite);
        const auto ch = s.as_array();
        for (std::size_t c = 0; c < kNumChannels; ++c) history_[c + 1].insert(ch[c]);
        prev_[0] = s.composite;
        for (std::size_t c = 0; c < kNumChannels; ++c) prev_[c + 1] = ch[c];
    }
    for (std::size_t i = 0; i < theta_.size(); ++i) theta_[i] = history_[i].value();
    burn_in_raw_.clear();
    burn_in_raw_.shrink_to_fit();
}

std::optional<TriggerEvent> TriggerDetector::evaluate(const ChannelScores& s) {
    const auto ch = s.as_array();
    if (trig_.variant != TriggerVariant::Standard) {
        history_[0].insert(s.composite);
        for (std::size_t c = 0; c < kNumChannels; ++c) history_[c + 1].insert(ch[c]);
        if (since_update_ % trig_.threshold_update_interval == 0) {
            for (std::size_t i = 0; i < theta_.size(); ++i) {
                theta_[i] = history_[i].value();
            }
        }
        ++since_update_;
    }

    std::optional<TriggerEvent> ev;
    auto check = [&](double cur, double prev, double theta) {
        const double effective_prev = trig_.rising_edge ? prev : -kInf;
        return rising_edge_fire(cur, effective_prev, theta, t_, t_last_, trig_.suppression_L);
    };
    if (trig_.variant == TriggerVariant::Multi) {
        for (std::size_t c = 0; c < kNumChannels; ++c) {
            if (c == 0 && !sig_.use_entropy) continue;
            if (check(ch[c], prev_[c + 1], theta_[c + 1])) {
                ev = TriggerEvent{t_, ch[c], prev_[c + 1], theta_[c + 1], static_cast<Channel>(c), trig_.variant};
                break;
            }
        }
    } else if (check(s.composite, prev_[0], theta_[0])) {
        ev = TriggerEvent{t_, s.composite, prev_[0], theta_[0], s.first, trig_.variant};
    }

    prev_[0] = s.composite;
    for (std::size_t c = 0; c < kNumChannels; ++c) prev_[c + 1] = ch[c];
    if (ev) t_last_ = t_;
    last_.threshold = trig_.variant == TriggerVariant::Multi ? theta_[1] : theta_[0];
    return ev;
}

std::optional<TriggerEvent> TriggerDetector::step(const LobFrame& frame) {
    return step(frame, frame.vector(), static_cast<Timestep>(n_));
}

std::optional<TriggerEvent> TriggerDetector::step(const LobFrame& frame, const Eigen::VectorXd& hmm_input,
                                                  Timestep t) {
    if (n_ > 0 && t <= t_) throw InputError("detector times must increase");
    t_ = t;
    post_ = n_ == 0 ? initial_posterior(model_, hmm_input, t) : forward_filter_step(model_, post_, hmm_input);

    last_ = DetectorStep{};
    last_.raw = engine_.push(frame, post_);
    last_.raw.t = t;
    last_.posterior = post_;
    last_.threshold = kInf;

    std::optional<TriggerEvent> ev;
    if (n_ < trig_.burn_in) {
        if (engine_.warm()) burn_in_raw_.push_back(last_.raw);
    } else {
        if (n_ == trig_.burn_in) finish_burn_in();
        last_.normalized = aggregate(normalizer_.apply(last_.raw), sig_);
        last_.normalized.t = t;
        ev = evaluate(last_.normalized);
        last_.fired = ev.has_value();
    }
    ++n_;
    return ev;
}

std::vector<TriggerEvent> run_detector(std::span<const LobFrame> frames, const HmmModel& model,
                                       const SignalConfig& sig_cfg, const TriggerConfig& trig_cfg,
                                       std::vector<DetectorStep>* trace) {
    if (frames.size() < trig_cfg.burn_in) throw ParameterError("frames shorter than burn-in");
    TriggerDetector det(model, sig_cfg, trig_cfg);
    std::vector<TriggerEvent> events;
    if (trace) trace->reserve(frames.size());
    for (const auto& f : frames) {
        if (auto ev = det.step(f)) events.push_back(*ev);
        if (trace) trace->push_back(det.last_step());
    }
    return events;
}

}  // namespace lobregime
