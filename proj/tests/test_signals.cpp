#include "lobregime/signals.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace lobregime;

namespace {

SignalConfig small_cfg(std::size_t w, std::size_t bw) {
    SignalConfig c;
    c.w = w;
    c.baseline_window = bw;
    return c;
}

PosteriorState post_of(double a, double b, double c) {
    PosteriorState p;
    p.pi = Eigen::Vector3d(a, b, c);
    p.entropy = posterior_entropy(p.pi);
    return p;
}

}  // namespace

TEST(SignalConfig, Validation) {
    EXPECT_NO_THROW(SignalConfig{}.validate());
    EXPECT_THROW(small_cfg(1, 10).validate(), ParameterError);
    EXPECT_THROW(small_cfg(20, 10).validate(), ParameterError);
    SignalConfig c;
    c.epsilon = 0.0;
    EXPECT_THROW(c.validate(), ParameterError);
}

TEST(EntropyChannel, Values) {
    EXPECT_EQ(entropy_channel(post_of(1, 0, 0)), 0.0);
    EXPECT_NEAR(entropy_channel(post_of(1.0 / 3, 1.0 / 3, 1.0 / 3)), 1.0986122886681098, 1e-12);
    EXPECT_NEAR(entropy_channel(post_of(0.5, 0.5, 0)), 0.6931471805599453, 1e-12);
}

// ===========================================================================
// Depth erosion
// ===========================================================================

TEST(DepthErosion, ConstantDepthIsZero) {
    const SignalConfig c;
    const std::vector<double> h(c.baseline_window + 1, 50.0);
    EXPECT_EQ(depth_erosion_channel(h, c), 0.0);
}

TEST(DepthErosion, RampToEighty) {
    // Baseline values average exactly 100 and decline; D_t = 80.
    const SignalConfig c;  // w 20, baseline 100
    std::vector<double> h;
    for (int i = 0; i < 100; ++i) h.push_back(100.0 + 0.1 * (49.5 - i));
    h.push_back(80.0);
    EXPECT_NEAR(depth_erosion_channel(h, c), 0.2, 1e-12);

    const SignalConfig tiny = small_cfg(2, 2);
    const std::vector<double> g = {101.0, 99.0, 80.0};
    EXPECT_NEAR(depth_erosion_channel(g, tiny), 0.2, 1e-15);
}

TEST(DepthErosion, RecoveryGatesToZero) {
    const SignalConfig c = small_cfg(5, 10);
    // Below the baseline (77.5) but rising over the last w steps.
    const std::vector<double> h = {100, 100, 100, 100, 100, 40, 50, 55, 60, 70, 75};
    EXPECT_EQ(depth_erosion_channel(h, c), 0.0);
}

TEST(DepthErosion, UsesOnlyTrailingHistory) {
    const SignalConfig c = small_cfg(2, 3);
    const std::vector<double> h = {1e6, 100.0, 100.0, 100.0, 90.0};
    // Baseline = mean(100, 100, 100); the leading value is outside the window.
    EXPECT_NEAR(depth_erosion_channel(h, c), 0.1, 1e-15);
}

TEST(DepthErosion, DegenerateBaseline) {
    const SignalConfig c = small_cfg(2, 3);
    const std::vector<double> h = {0.0, 0.0, 0.0, -1.0};
    bool degenerate = false;
    EXPECT_EQ(depth_erosion_channel(h, c, &degenerate), 0.0);
    EXPECT_TRUE(degenerate);
}

TEST(DepthErosion, ShortHistoryRejected) {
    const SignalConfig c = small_cfg(2, 3);
    const std::vector<double> h = {1.0, 2.0, 3.0};
    EXPECT_THROW(depth_erosion_channel(h, c), ParameterError);
}

// ===========================================================================
// Spread drift
// ===========================================================================

TEST(SpreadDrift, ConstantIsZero) {
    const SignalConfig c;
    const std::vector<double> h(c.baseline_window + 1, 2.0);
    EXPECT_EQ(spread_drift_channel(h, c), 0.0);
}

TEST(SpreadDrift, OneSigmaPerStepGivesOne) {
    const SignalConfig c;  // w 20, baseline 100
    std::mt19937 gen(4);
    std::normal_distribution<double> n(0.0, 0.3);
    std::vector<double> h = {5.0};
    for (std::size_t i = 1; i < c.baseline_window; ++i) h.push_back(h.back() + n(gen));
    // Population std of the changes strictly before t.
    std::vector<double> d;
    for (std::size_t i = 1; i < h.size(); ++i) d.push_back(h[i] - h[i - 1]);
    double mean = 0.0;
    for (double x : d) mean += x;
    mean /= static_cast<double>(d.size());
    double ss = 0.0;
    for (double x : d) ss += (x - mean) * (x - mean);
    const double sigma = std::sqrt(ss / static_cast<double>(d.size()));
    // Choose A_t so that the last w changes average exactly sigma.
    h.push_back(h[h.size() - c.w] + static_cast<double>(c.w) * sigma);
    EXPECT_NEAR(spread_drift_channel(h, c), 1.0, 1e-10);
}

TEST(SpreadDrift, DecreasingIsNegative) {
    const SignalConfig c = small_cfg(3, 6);
    const std::vector<double> h = {10, 10.5, 10, 10.5, 10, 9, 8};
    EXPECT_LT(spread_drift_channel(h, c), 0.0);
}

TEST(SpreadDrift, ZeroVarianceUsesFloor) {
    SignalConfig c = small_cfg(2, 4);
    c.epsilon = 1e-3;
    const std::vector<double> h = {1.0, 1.0, 1.0, 1.0, 1.002};
    EXPECT_NEAR(spread_drift_channel(h, c), 0.001 / 1e-3, 1e-9);
}

// ===========================================================================
// OFI momentum
// ===========================================================================

TEST(OfiMomentum, Values) {
    const SignalConfig c4 = small_cfg(4, 4);
    EXPECT_EQ(ofi_momentum_channel(std::vector<double>{0.5, -0.5, 0.5, -0.5}, c4), 0.0);
    EXPECT_NEAR(ofi_momentum_channel(std::vector<double>{0.3, 0.3, 0.3, 0.3}, c4), 0.3, 1e-15);
    const SignalConfig c3 = small_cfg(3, 3);
    EXPECT_NEAR(ofi_momentum_channel(std::vector<double>{0.9, 0.2, 0.4, 0.6}, c3), 0.4, 1e-15);
    EXPECT_NEAR(ofi_momentum_channel(std::vector<double>{-0.2, -0.4, -0.6}, c3), 0.4, 1e-15);
}

TEST(OfiMomentum, Errors) {
    const SignalConfig c = small_cfg(3, 3);
    EXPECT_THROW(ofi_momentum_channel(std::vector<double>{0.1, 1.5, 0.0}, c), InputError);
    EXPECT_THROW(ofi_momentum_channel(std::vector<double>{0.1, 0.2}, c), ParameterError);
}

// ===========================================================================
// Aggregation
// ===========================================================================

TEST(MaxAggregate, ValueAndAttribution) {
    ChannelScores s{0.1, 0.9, 0.2, 0.3};
    Aggregate a = max_aggregate(s);
    EXPECT_EQ(a.value, 0.9);
    EXPECT_EQ(a.channel, Channel::Depth);

    s = ChannelScores{0.5, 0.5, 0.5, 0.5};
    EXPECT_EQ(max_aggregate(s).channel, Channel::Entropy);
    s = ChannelScores{0.1, 0.7, 0.7, 0.2};
    EXPECT_EQ(max_aggregate(s).channel, Channel::Depth);
    s = ChannelScores{0.1, 0.2, 0.7, 0.7};
    EXPECT_EQ(max_aggregate(s).channel, Channel::Spread);

    a = max_aggregate(ChannelScores{});
    EXPECT_EQ(a.value, 0.0);
}

TEST(Aggregate, CompositeRules) {
    SignalConfig c;
    const ChannelScores s{1.5, 0.2, 2.5, 0.4};
    const ChannelScores m = aggregate(s, c);
    EXPECT_EQ(m.composite, 2.5);
    EXPECT_EQ(m.first, Channel::Spread);
    for (double x : m.as_array()) EXPECT_GE(m.composite, x);

    c.aggregation = Aggregation::Sum;
    EXPECT_NEAR(aggregate(s, c).composite, 4.6, 1e-12);

    c.aggregation = Aggregation::Max;
    c.use_entropy = false;
    const ChannelScores e = aggregate(ChannelScores{2.9, 0.2, 0.1, 0.4}, c);
    EXPECT_EQ(e.composite, 0.4);
    EXPECT_EQ(e.first, Channel::Ofi);
}

TEST(ChannelNames, Stable) {
    EXPECT_EQ(channel_name(Channel::Entropy), "entropy");
    EXPECT_EQ(channel_name(Channel::Depth), "depth");
    EXPECT_EQ(channel_name(Channel::Spread), "spread");
    EXPECT_EQ(channel_name(Channel::Ofi), "ofi");
}

// ===========================================================================
// Streaming engine and normalizer
// ===========================================================================

TEST(ChannelEngine, MatchesPureFunctions) {
    const SignalConfig c = small_cfg(4, 10);
    ChannelEngine eng(c);
    std::mt19937 gen(1);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> dep, spr, imb;
    for (int t = 0; t < 40; ++t) {
        const LobFrame f{2.0 + 0.1 * n(gen), 50.0 + n(gen), 0.4 * n(gen), 1.0};
        dep.push_back(f.depth);
        spr.push_back(f.spread);
        imb.push_back(std::clamp(f.imbalance, -1.0, 1.0));
        const PosteriorState post = post_of(0.7, 0.2, 0.1);
        const ChannelScores s = eng.push(f, post);
        EXPECT_EQ(s.t, t);
        EXPECT_DOUBLE_EQ(s.ent, entropy_channel(post));
        if (dep.size() >= c.baseline_window + 1) {
            EXPECT_TRUE(eng.warm());
            EXPECT_DOUBLE_EQ(s.dep, depth_erosion_channel(std::span(dep).last(c.baseline_window + 1), c));
            EXPECT_DOUBLE_EQ(s.spr, spread_drift_channel(std::span(spr).last(c.baseline_window + 1), c));
        } else {
            EXPECT_FALSE(eng.warm());
            EXPECT_EQ(s.dep, 0.0);
            EXPECT_EQ(s.spr, 0.0);
        }
        if (imb.size() >= c.w) {
            EXPECT_DOUBLE_EQ(s.ofi, ofi_momentum_channel(std::span(imb).last(c.w), c));
        }
    }
}

TEST(ChannelNormalizer, MinMaxScaleAndClip) {
    SignalConfig c;  // cap 3
    std::vector<ChannelScores> ref;
    for (int i = 0; i <= 100; ++i) {
        const double x = i;
        ref.push_back(ChannelScores{x, 2.0 * x - 10.0, 7.0, -x});
    }
    const ChannelNormalizer n = ChannelNormalizer::fit(ref, c);
    EXPECT_EQ(n.location()[0], 0.0);
    EXPECT_NEAR(n.scale()[0], 100.0 / 3.0, 1e-12);
    EXPECT_EQ(n.location()[1], -10.0);
    EXPECT_NEAR(n.scale()[1], 200.0 / 3.0, 1e-12);
    // Constant channel: zero range, so the epsilon floor applies.
    EXPECT_EQ(n.scale()[2], c.epsilon);

    const ChannelScores out = n.apply(ChannelScores{50.0, -20.0, 7.0, 1000.0});
    EXPECT_NEAR(out.ent, 1.5, 1e-12);
    EXPECT_EQ(out.dep, 0.0);  // below the reference minimum clips to 0
    EXPECT_EQ(out.spr, 0.0);
    EXPECT_EQ(out.ofi, c.squash_cap);
    // Every reference value lands in [0, cap], with the extremes on the ends.
    for (const auto& r : ref) {
        const ChannelScores z = n.apply(r);
        EXPECT_GE(z.ent, 0.0);
        EXPECT_LE(z.ent, c.squash_cap);
    }
    EXPECT_NEAR(n.apply(ref.back()).ent, c.squash_cap, 1e-12);
}
