#include "lobregime/signals.hpp"

#include <algorithm>
#include <utility>
#include <cmath>
#include <numeric>

namespace lobregime {

std::string_view channel_name(Channel c) {
    switch (c) {
        case Channel::Entropy: return "entropy";
        case Channel::Depth: return "depth";
        case Channel::Spread: return "spread";
        case Channel::Ofi: return "ofi";
    }
    return "unknown";
}

void SignalConfig::validate() const {
    if (w < 2) throw ParameterError("signal lookback w must be >= 2");
    if (baseline_window < w) throw ParameterError("baseline_window must be >= w");
    if (!(epsilon > 0.0)) throw ParameterError("epsilon must be positive");
    if (!(squash_cap > 0.0)) throw ParameterError("squash_cap must be positive");
}

double entropy_channel(const PosteriorState& post) { return posterior_entropy(post.pi); }

double depth_erosion_channel(std::span<const double> h, const SignalConfig& cfg, bool* degenerate) {
    const std::size_t n = h.size();
    if (n < cfg.baseline_window + 1) throw ParameterError("depth history shorter than baseline_window + 1");
    if (degenerate) *degenerate = false;

    const std::size_t t = n - 1;
    const auto base = h.subspan(t - cfg.baseline_window, cfg.baseline_window);
    const double d_bar = std::accumulate(base.begin(), base.end(), 0.0) / static_cast<double>(base.size());
    if (d_bar <= cfg.epsilon) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    // Mean of the last w first differences telescopes to (D_t - D_{t-w}) / w.
    const double mean_diff = (h[t] - h[t - cfg.w]) / static_cast<double>(cfg.w);
    if (!(mean_diff < 0.0)) return 0.0;
    return (d_bar - h[t]) / d_bar;
}

double spread_drift_channel(std::span<const double> h, const SignalConfig& cfg) {
    const std::size_t n = h.size();
    if (n < cfg.baseline_window + 1) throw ParameterError("spread history shorter than baseline_window + 1");
    const std::size_t t = n - 1;

    // Population std of the changes among A_{t-bw} .. A_{t-1}.
    const std::size_t first = t - cfg.baseline_window;
    const std::size_t m = cfg.baseline_window - 1;
    double sigma = 0.0;
    if (m > 0) {
        double mean = 0.0;
        for (std::size_t i = first + 1; i < t; ++i) mean += h[i] - h[i - 1];
        mean /= static_cast<double>(m);
        double ss = 0.0;
        for (std::size_t i = first + 1; i < t; ++i) {
            const double dlt = h[i] - h[i - 1] - mean;
            ss += dlt * dlt;
        }
        sigma = std::sqrt(ss / static_cast<double>(m));
    }
    sigma = std::max(sigma, cfg.epsilon);
    return (h[t] - h[t - cfg.w]) / static_cast<double>(cfg.w) / sigma;
}

double ofi_momentum_channel(std::span<const double> h, const SignalConfig& cfg) {
    if (h.size() < cfg.w) throw ParameterError("imbalance history shorter than w");
    const auto last = h.last(cfg.w);
    double sum = 0.0;
    for (const double x : last) {
        if (!(x >= -1.0 && x <= 1.0)) throw InputError("imbalance outside [-1, 1]");
        sum += x;
    }
    return std::abs(sum / static_cast<double>(cfg.w));
}

Aggregate max_aggregate(const ChannelScores& s) {
    const auto a = s.as_array();
    Aggregate out{a[0], Channel::Entropy};
    for (std::size_t i = 1; i < kNumChannels; ++i) {
        if (a[i] > out.value) out = {a[i], static_cast<Channel>(i)};
    }
    return out;
}

ChannelScores aggregate(ChannelScores s, const SignalConfig& cfg) {
    ChannelScores view = s;
    if (!cfg.use_entropy) view.ent = 0.0;
    const Aggregate m = max_aggregate(view);
    s.first = m.channel;
    if (cfg.aggregation == Aggregation::Max) {
        s.composite = m.value;
    } else {
        s.composite = view.ent + view.dep + view.spr + view.ofi;
    }
    return s;
}

ChannelEngine::ChannelEngine(SignalConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    scratch_.reserve(cfg_.baseline_window + 1);
}

ChannelScores ChannelEngine::push(const LobFrame& frame, const PosteriorState& post) {
    const std::size_t cap = cfg_.baseline_window + 1;
    auto push_capped = [cap](std::deque<double>& q, double x) {
        q.push_back(x);
        if (q.size() > cap) q.pop_front();
    };
    push_capped(depth_, frame.depth);
    push_capped(spread_, frame.spread);
    push_capped(imbalance_, std::clamp(frame.imbalance, -1.0, 1.0));

    ChannelScores s;
    s.t = t_++;
    s.ent = entropy_channel(post);
    if (depth_.size() == cap) {
        scratch_.assign(depth_.begin(), depth_.end());
        bool degenerate = false;
        s.dep = depth_erosion_channel(scratch_, cfg_, &degenerate);
        if (degenerate) ++degenerate_;
        scratch_.assign(spread_.begin(), spread_.end());
        s.spr = spread_drift_channel(scratch_, cfg_);
    }
    if (imbalance_.size() >= cfg_.w) {
        scratch_.assign(imbalance_.begin(), imbalance_.end());
        s.ofi = ofi_momentum_channel(scratch_, cfg_);
    }
    return s;
}

namespace {

double quantile_sorted(const std::vector<double>& v, double q) {
    if (v.empty()) return 0.0;
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

ChannelNormalizer ChannelNormalizer::fit(std::span<const ChannelScores> reference,
                                         const SignalConfig& cfg) {
    ChannelNormalizer n;
    n.cap_ = cfg.squash_cap;
    for (std::size_t c = 0; c < kNumChannels; ++c) {
        std::vector<double> xs;
        xs.reserve(reference.size());
        for (const auto& s : reference) xs.push_back(s.as_array()[c]);
        // Min-max over the reference maps its range onto [0, cap]; later values are clipped.
        const auto [lo, hi] = xs.empty() ? std::pair{0.0, 0.0} : std::pair{*std::min_element(xs.begin(), xs.end()),
                                                                           *std::max_element(xs.begin(), xs.end())};
        const double scale = (hi - lo) / cfg.squash_cap;
        n.loc_[c] = lo;
        n.scale_[c] = std::max(scale, cfg.epsilon);
    }
    return n;
}

ChannelScores ChannelNormalizer::apply(const ChannelScores& raw) const {
    ChannelScores out = raw;
    auto squash = [this](double x, std::size_t c) {
        return std::clamp((x - loc_[c]) / scale_[c], 0.0, cap_);
    };
    out.ent = squash(raw.ent, 0);
    out.dep = squash(raw.dep, 1);
    out.spr = squash(raw.spr, 2);
    out.ofi = squash(raw.ofi, 3);
    return out;
}

}  // namespace lobregime
