#include "lobregime/pipeline.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace lobregime;

namespace {

constexpr std::int64_t kMonday = 1704067200;  // 2024-01-01 00:00 UTC

RawSnapshot book(std::int64_t ts_ms, double bid, double ask, double bid_vol = 1.0, double ask_vol = 1.0,
                 std::size_t levels = 5) {
    RawSnapshot s;
    s.timestamp_ms = ts_ms;
    for (std::size_t i = 0; i < levels; ++i) {
        s.bids.push_back({bid - 0.5 * static_cast<double>(i), bid_vol});
        s.asks.push_back({ask + 0.5 * static_cast<double>(i), ask_vol});
    }
    return s;
}

BinnedFeatures bin(Timestep t, double spread, std::int64_t epoch_s = kMonday) {
    BinnedFeatures b;
    b.t = t;
    b.epoch_s = epoch_s + t;
    b.spread = spread;
    b.depth = 10.0;
    b.missing = false;
    return b;
}

}  // namespace

// ===========================================================================
// Snapshots and binning
// ===========================================================================

TEST(Snapshots, CsvRoundTrip) {
    std::vector<RawSnapshot> snaps = {book(1000, 100.0, 101.0, 2.0, 3.0, 20), book(2500, 99.5, 100.5, 1.5, 1.0, 3)};
    std::stringstream ss;
    write_snapshots_csv(snaps, ss);
    std::string header;
    std::getline(std::stringstream(ss.str()), header);
    EXPECT_EQ(header, snapshot_csv_header());
    const auto back = read_snapshots_csv(ss);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].timestamp_ms, 1000);
    EXPECT_EQ(back[0].bids.size(), 20u);
    EXPECT_EQ(back[1].asks.size(), 3u);
    EXPECT_EQ(back[1].asks[2].price, 101.5);
    EXPECT_EQ(back[0].bids[0].volume, 2.0);
}

TEST(Snapshots, Validation) {
    RawSnapshot s = book(0, 100.0, 101.0);
    EXPECT_NO_THROW(s.validate());
    EXPECT_FALSE(s.crossed());
    std::swap(s.bids[0], s.bids[1]);
    EXPECT_THROW(s.validate(), InputError);
    s = book(0, 100.0, 101.0);
    s.asks[1].volume = 0.0;
    EXPECT_THROW(s.validate(), InputError);
    EXPECT_TRUE(book(0, 101.0, 101.0).crossed());
    std::stringstream bad("nonsense\n");
    EXPECT_THROW(read_snapshots_csv(bad), InputError);
}

TEST(BinSnapshots, SpreadConvention) {
    const std::vector<RawSnapshot> snaps = {book(5000, 100.0, 101.0)};
    const auto b = bin_snapshots(snaps);
    ASSERT_EQ(b.size(), 1u);
    EXPECT_DOUBLE_EQ(b[0].spread, 1.0);  // 2 * (100.5 - 100)
    EXPECT_EQ(b[0].epoch_s, 5);
    EXPECT_FALSE(b[0].missing);
}

TEST(BinSnapshots, TopFiveDepthAndImbalance) {
    RawSnapshot s = book(0, 100.0, 101.0, 2.0, 2.0, 8);
    s.bids[6].volume = 100.0;  // beyond level 5
    const auto b = bin_snapshots(std::vector<RawSnapshot>{s});
    EXPECT_DOUBLE_EQ(b[0].depth, 20.0);
    EXPECT_DOUBLE_EQ(b[0].imbalance, 0.0);
    const auto c = bin_snapshots(std::vector<RawSnapshot>{book(0, 100.0, 101.0, 3.0, 1.0)});
    EXPECT_DOUBLE_EQ(c[0].imbalance, 0.5);
}

TEST(BinSnapshots, LastSnapshotInBinWins) {
    const std::vector<RawSnapshot> snaps = {book(1000, 100.0, 101.0), book(1900, 100.0, 103.0)};
    const auto b = bin_snapshots(snaps);
    ASSERT_EQ(b.size(), 1u);
    EXPECT_DOUBLE_EQ(b[0].spread, 3.0);
}

TEST(BinSnapshots, GapFillRule) {
    const std::vector<RawSnapshot> snaps = {book(0, 100.0, 101.0), book(6000, 100.0, 102.0)};
    BinningStats st;
    const auto b = bin_snapshots(snaps, {}, &st);
    ASSERT_EQ(b.size(), 7u);
    for (int t : {1, 2, 3}) {
        EXPECT_FALSE(b[t].missing);
        EXPECT_TRUE(b[t].filled);
        EXPECT_DOUBLE_EQ(b[t].spread, 1.0);
    }
    EXPECT_TRUE(b[4].missing);
    EXPECT_TRUE(b[5].missing);
    EXPECT_FALSE(b[6].missing);
    EXPECT_EQ(st.filled, 3u);
    EXPECT_EQ(st.missing, 2u);
}

TEST(BinSnapshots, CrossedBookDropped) {
    const std::vector<RawSnapshot> snaps = {book(0, 100.0, 101.0), book(1000, 101.0, 100.5)};
    BinningStats st;
    const auto b = bin_snapshots(snaps, {}, &st);
    EXPECT_EQ(st.crossed_dropped, 1u);
    EXPECT_TRUE(b[1].filled);
    const std::vector<RawSnapshot> unsorted = {book(1000, 100.0, 101.0), book(0, 100.0, 101.0)};
    EXPECT_THROW(bin_snapshots(unsorted), InputError);
}

TEST(BinSnapshots, RollingLogReturnVolatility) {
    std::vector<RawSnapshot> snaps;
    std::vector<double> mids;
    std::mt19937 gen(3);
    std::normal_distribution<double> n(0.0, 0.2);
    double bid = 100.0;
    for (int t = 0; t < 100; ++t) {
        bid += n(gen);
        snaps.push_back(book(1000LL * t, bid, bid + 1.0));
        mids.push_back(bid + 0.5);
    }
    BinningOptions o;
    o.vol_window = 10;
    const auto b = bin_snapshots(snaps, o);
    // Sample std of the last 10 log returns ending at t = 80.
    std::vector<double> r;
    for (int t = 71; t <= 80; ++t) r.push_back(std::log(mids[t] / mids[t - 1]));
    double m = 0.0;
    for (double x : r) m += x;
    m /= 10.0;
    double ss = 0.0;
    for (double x : r) ss += (x - m) * (x - m);
    EXPECT_NEAR(b[80].vol, std::sqrt(ss / 9.0), 1e-12);
}

// ===========================================================================
// Normalization
// ===========================================================================

TEST(CausalZScore, ConstantIsZero) {
    std::vector<BinnedFeatures> f;
    for (Timestep t = 0; t < 100; ++t) f.push_back(bin(t, 2.0));
    ZScoreOptions o;
    o.window = 20;
    const auto z = causal_zscore(f, o);
    for (Timestep t = 0; t < 20; ++t) EXPECT_TRUE(z[static_cast<std::size_t>(t)].missing);
    for (Timestep t = 20; t < 100; ++t) {
        EXPECT_FALSE(z[static_cast<std::size_t>(t)].missing);
        EXPECT_EQ(z[static_cast<std::size_t>(t)].spread, 0.0);
    }
}

TEST(CausalZScore, StepOfThreeStds) {
    // Alternating +-1 has rolling mean 0 and population std 1 on even windows.
    std::vector<BinnedFeatures> f;
    const Timestep step = 1900;
    for (Timestep t = 0; t < 2000; ++t) {
        const double base = t % 2 == 0 ? 1.0 : -1.0;
        f.push_back(bin(t, base + (t >= step ? 3.0 : 0.0)));
    }
    const auto z = causal_zscore(f);  // 1800-bin window
    const double at_step = z[step].spread;
    EXPECT_NEAR(at_step, 4.0, 1e-9);  // base +1 plus the 3-std step
    const double pair = 0.5 * (z[step].spread + z[step + 1].spread);
    EXPECT_NEAR(pair, 3.0, 0.02);
    // Decays as the window absorbs the shift.
    const double late = 0.5 * (z[1998].spread + z[1999].spread);
    EXPECT_LT(late, pair);
}

TEST(CausalZScore, FutureBinsDoNotMatter) {
    std::mt19937 gen(9);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<BinnedFeatures> f;
    for (Timestep t = 0; t < 400; ++t) f.push_back(bin(t, n(gen)));
    ZScoreOptions o;
    o.window = 50;
    const auto a = causal_zscore(f, o);
    auto g = f;
    std::shuffle(g.begin() + 300, g.end(), gen);
    for (std::size_t i = 300; i < g.size(); ++i) g[i].spread += 5.0;
    const auto b = causal_zscore(g, o);
    for (std::size_t t = 0; t < 300; ++t) ASSERT_EQ(a[t].spread, b[t].spread);
}

// ===========================================================================
// Seasonality
// ===========================================================================

TEST(Calendar, WeekdayAndHour) {
    EXPECT_EQ(weekday_of(kMonday), 1);
    EXPECT_EQ(weekday_of(0), 4);
    EXPECT_EQ(weekday_of(kMonday - 1), 0);
    EXPECT_EQ(hour_of(kMonday + 3 * 3600 + 59), 3);
    EXPECT_EQ(hour_of(kMonday - 1), 23);
}

namespace {

std::vector<BinnedFeatures> seasonal_series(std::int64_t start, int days, double noise, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> n(0.0, noise);
    std::vector<BinnedFeatures> out;
    for (std::int64_t s = 0; s < days * kSecondsPerDay; s += 30) {
        BinnedFeatures b;
        b.epoch_s = start + s;
        b.t = s;
        const double phase = 2.0 * std::numbers::pi * static_cast<double>(s % kSecondsPerDay) / kSecondsPerDay;
        b.spread = 5.0 + std::sin(phase) + n(gen);
        b.depth = 50.0 + 10.0 * std::cos(phase) + n(gen);
        b.missing = false;
        out.push_back(b);
    }
    return out;
}

double sd_of(const std::vector<double>& x) {
    double m = 0.0;
    for (double v : x) m += v;
    m /= static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(x.size()));
}

}  // namespace

TEST(Deseasonalize, AtMedianIsZero) {
    std::vector<BinnedFeatures> train;
    for (std::int64_t s = 0; s < kSecondsPerDay; s += 60) {
        BinnedFeatures b;
        b.epoch_s = kMonday + s;
        b.spread = 1.0 + hour_of(b.epoch_s);
        b.depth = 2.0 * hour_of(b.epoch_s);
        b.missing = false;
        train.push_back(b);
    }
    auto test = train;
    for (auto& b : test) b.epoch_s += 7 * kSecondsPerDay;  // same weekday, next week
    const auto r = deseasonalize(test, train);
    EXPECT_EQ(r.fallback_bins, 0u);
    for (const auto& b : r.adjusted) {
        EXPECT_EQ(b.spread, 0.0);
        EXPECT_EQ(b.depth, 0.0);
    }
}

TEST(Deseasonalize, RemovesDailyPattern) {
    const auto train = seasonal_series(kMonday, 7, 0.02, 1);
    const auto test = seasonal_series(kMonday + 7 * kSecondsPerDay, 2, 0.02, 2);
    const auto r = deseasonalize(test, train);
    std::vector<double> sp, dp;
    for (const auto& b : r.adjusted) {
        sp.push_back(b.spread);
        dp.push_back(b.depth);
    }
    EXPECT_LT(sd_of(sp), 0.1 * 1.0);
    EXPECT_LT(sd_of(dp), 0.1 * 10.0);
    EXPECT_EQ(r.fallback_bins, 0u);
}

TEST(Deseasonalize, HourFallbackWhenCellMissing) {
    const auto train = seasonal_series(kMonday, 1, 0.02, 1);  // Monday only
    const auto test = seasonal_series(kMonday + kSecondsPerDay, 1, 0.02, 2);  // Tuesday
    const auto r = deseasonalize(test, train);
    EXPECT_EQ(r.fallback_bins, test.size());
    std::vector<double> sp;
    for (const auto& b : r.adjusted) sp.push_back(b.spread);
    EXPECT_LT(sd_of(sp), 0.1);
}

TEST(Deseasonalize, TestBinsNeverEnterMedians) {
    const auto train = seasonal_series(kMonday, 2, 0.05, 1);
    auto test = seasonal_series(kMonday + 2 * kSecondsPerDay, 1, 0.05, 2);
    const auto a = deseasonalize(test, train);
    for (std::size_t i = 0; i < test.size(); i += 3) test[i].spread += 100.0;
    const auto b = deseasonalize(test, train);
    for (std::size_t i = 0; i < test.size(); ++i) {
        const double shift = i % 3 == 0 ? 100.0 : 0.0;
        ASSERT_NEAR(b.adjusted[i].spread - a.adjusted[i].spread, shift, 1e-9);
    }
    EXPECT_THROW(deseasonalize(train, test), ParameterError);
}

// ===========================================================================
// Stress labels
// ===========================================================================

TEST(LabelStress, PersistenceRule) {
    auto series = [](Timestep spike_len) {
        std::vector<BinnedFeatures> f;
        for (Timestep t = 0; t < 1000; ++t) f.push_back(bin(t, (t >= 700 && t < 700 + spike_len) ? 5.0 : 1.0));
        return f;
    };
    EXPECT_TRUE(label_stress(series(29)).empty());
    const auto l = label_stress(series(45));
    ASSERT_EQ(l.size(), 1u);
    EXPECT_EQ(l[0].onset, 700);
    EXPECT_EQ(l[0].duration, 45);
    EXPECT_EQ(label_stress(series(30)).size(), 1u);
}

TEST(LabelStress, NeedsMedianHistoryAndDisjoint) {
    std::vector<BinnedFeatures> f;
    for (Timestep t = 0; t < 2000; ++t) {
        const bool spike = (t >= 100 && t < 200) || (t >= 900 && t < 960) || (t >= 1000 && t < 1040);
        f.push_back(bin(t, spike ? 4.0 : 1.0));
    }
    const auto l = label_stress(f);
    ASSERT_EQ(l.size(), 2u);  // the early spike precedes a full median window
    EXPECT_EQ(l[0].onset, 900);
    EXPECT_EQ(l[1].onset, 1000);
    EXPECT_LT(l[0].onset + l[0].duration, l[1].onset);
}

TEST(LabelStress, MissingBinBreaksSpan) {
    std::vector<BinnedFeatures> f;
    for (Timestep t = 0; t < 1000; ++t) f.push_back(bin(t, (t >= 700 && t < 750) ? 5.0 : 1.0));
    f[720].missing = true;
    EXPECT_TRUE(label_stress(f).empty());  // 20 + 29 seconds
}

// ===========================================================================
// Replay on the synthetic fixture
// ===========================================================================

class ReplayFixture : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        fx_ = new Fixture(make_replay_fixture(FixtureSpec{}));
        for (const auto& d : fx_->days) snaps_.insert(snaps_.end(), d.begin(), d.end());
    }
    static void TearDownTestSuite() {
        delete fx_;
        snaps_.clear();
    }
    static Fixture* fx_;
    static std::vector<RawSnapshot> snaps_;
};

Fixture* ReplayFixture::fx_ = nullptr;
std::vector<RawSnapshot> ReplayFixture::snaps_;

TEST_F(ReplayFixture, PlantedEpisodesAreLabelled) {
    ASSERT_EQ(fx_->test_episodes.size(), 5u);
    const auto bins = bin_snapshots(snaps_);
    const auto labels = label_stress(bins);
    std::size_t found = 0;
    for (const auto& ep : fx_->test_episodes) {
        for (const auto& l : labels) {
            const std::int64_t onset = bins[static_cast<std::size_t>(l.onset)].epoch_s;
            if (std::abs(onset - ep.onset_epoch_s) <= 2) ++found;
        }
    }
    EXPECT_EQ(found, 5u);
}

TEST_F(ReplayFixture, EarlyAndClean) {
    const ReplayResult r = replay_detect(snaps_, fx_->test_start_epoch_s, ReplayConfig{});
    EXPECT_EQ(r.labels.size(), 5u);
    ASSERT_TRUE(r.report.precision.value.has_value());
    EXPECT_EQ(*r.report.precision.value, 1.0);
    EXPECT_GE(*r.report.coverage.value, 0.8);
    ASSERT_TRUE(r.report.mean_matched_lead.value.has_value());
    EXPECT_GT(*r.report.mean_matched_lead.value, 0.0);
    for (const auto& t : r.triggers) EXPECT_GE(t.epoch_s, fx_->test_start_epoch_s + 3600);
}

TEST_F(ReplayFixture, TruncationReproducesPrefix) {
    const ReplayConfig cfg;
    const ReplayResult full = replay_run(snaps_, fx_->test_start_epoch_s, cfg);
    const std::int64_t cut_s = fx_->test_start_epoch_s + kSecondsPerDay / 2;
    std::vector<RawSnapshot> head;
    for (const auto& s : snaps_) {
        if (s.timestamp_ms < cut_s * 1000) head.push_back(s);
    }
    const ReplayResult half = replay_run(head, fx_->test_start_epoch_s, cfg);
    std::vector<ReplayTrigger> expect;
    for (const auto& t : full.triggers) {
        if (t.epoch_s < cut_s) expect.push_back(t);
    }
    ASSERT_EQ(half.triggers.size(), expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) {
        EXPECT_EQ(half.triggers[i].epoch_s, expect[i].epoch_s);
        EXPECT_EQ(half.triggers[i].event.score, expect[i].event.score);
        EXPECT_EQ(half.triggers[i].event.threshold, expect[i].event.threshold);
    }
    EXPECT_THROW(replay_detect(head, fx_->test_start_epoch_s, cfg), ParameterError);
}

TEST(ReplayNoEvents, NothingLabelledNothingMatched) {
    FixtureSpec spec;
    spec.plant_test_episodes = false;
    const Fixture fx = make_replay_fixture(spec);
    std::vector<RawSnapshot> snaps;
    for (const auto& d : fx.days) snaps.insert(snaps.end(), d.begin(), d.end());
    const ReplayResult r = replay_detect(snaps, fx.test_start_epoch_s, ReplayConfig{});
    EXPECT_TRUE(r.labels.empty());
    EXPECT_EQ(r.outcome.n_matched, 0u);
    EXPECT_FALSE(r.report.coverage.value.has_value());
}

TEST(ReplayErrors, NeedsTrainingWindow) {
    const Fixture fx = make_replay_fixture(FixtureSpec{});
    EXPECT_THROW(replay_detect(fx.days[1], fx.test_start_epoch_s, ReplayConfig{}), ParameterError);
}
