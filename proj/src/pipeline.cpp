#include "lobregime/pipeline.hpp"

#include "lobregime/dgp.hpp"
#include "lobregime/hmm.hpp"
#include "lobregime/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <set>
#include <sstream>
#include <string>

namespace lobregime {

// ===========================================================================
// Snapshots
// ===========================================================================

bool RawSnapshot::crossed() const { return best_bid() >= best_ask(); }

void RawSnapshot::validate() const {
    if (bids.empty() || asks.empty()) throw InputError("snapshot needs at least one level per side");
    if (bids.size() > kBookLevels || asks.size() > kBookLevels) throw InputError("snapshot has more than 20 levels");
    for (std::size_t i = 0; i < bids.size(); ++i) {
        if (!(bids[i].volume > 0.0)) throw InputError("bid volume must be positive");
        if (i > 0 && !(bids[i].price < bids[i - 1].price)) throw InputError("bids must be price-descending");
    }
    for (std::size_t i = 0; i < asks.size(); ++i) {
        if (!(asks[i].volume > 0.0)) throw InputError("ask volume must be positive");
        if (i > 0 && !(asks[i].price > asks[i - 1].price)) throw InputError("asks must be price-ascending");
    }
}

std::string snapshot_csv_header() {
    std::string h = "timestamp_ms";
    for (const char* side : {"bid", "ask"}) {
        for (std::size_t i = 1; i <= kBookLevels; ++i) {
            h += ",";
            h += side;
            h += "_px_" + std::to_string(i) + "," + side + "_qty_" + std::to_string(i);
        }
    }
    return h;
}

void write_snapshots_csv(std::span<const RawSnapshot> snaps, std::ostream& out) {
    out << snapshot_csv_header() << '\n';
    out << std::setprecision(17);
    for (const auto& s : snaps) {
        out << s.timestamp_ms;
        for (const auto* side : {&s.bids, &s.asks}) {
            for (std::size_t i = 0; i < kBookLevels; ++i) {
                if (i < side->size()) {
                    out << ',' << (*side)[i].price << ',' << (*side)[i].volume;
                } else {
                    out << ",,";
                }
            }
        }
        out << '\n';
    }
}

std::vector<RawSnapshot> read_snapshots_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw InputError("snapshot CSV is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != snapshot_csv_header()) throw InputError("unexpected snapshot CSV header");

    std::vector<RawSnapshot> out;
    std::vector<std::string> fields;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        fields.clear();
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            fields.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (fields.size() != 1 + 4 * kBookLevels) {
            throw InputError("snapshot CSV line " + std::to_string(line_no) + " has the wrong field count");
        }
        RawSnapshot s;
        try {
            s.timestamp_ms = std::stoll(fields[0]);
            for (int side = 0; side < 2; ++side) {
                auto& levels = side == 0 ? s.bids : s.asks;
                for (std::size_t i = 0; i < kBookLevels; ++i) {
                    const auto& px = fields[1 + side * 2 * kBookLevels + 2 * i];
                    const auto& qty = fields[2 + side * 2 * kBookLevels + 2 * i];
                    if (px.empty() && qty.empty()) continue;
                    levels.push_back({std::stod(px), std::stod(qty)});
                }
            }
        } catch (const std::logic_error&) {
            throw InputError("snapshot CSV line " + std::to_string(line_no) + " is malformed");
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<RawSnapshot> read_snapshot_files(std::span<const std::filesystem::path> paths) {
    std::vector<RawSnapshot> all;
    for (const auto& p : paths) {
        std::ifstream in(p);
        if (!in) throw InputError("cannot open snapshot file " + p.string());
        auto part = read_snapshots_csv(in);
        all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    std::stable_sort(all.begin(), all.end(),
                     [](const RawSnapshot& a, const RawSnapshot& b) { return a.timestamp_ms < b.timestamp_ms; });
    return all;
}

// ===========================================================================
// Binning
// ===========================================================================

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

struct BookFeatures {
    double spread = 0.0;
    double depth = 0.0;
    double imbalance = 0.0;
    double mid = 0.0;
};

BookFeatures book_features(const RawSnapshot& s, std::size_t levels) {
    BookFeatures f;
    f.mid = 0.5 * (s.best_bid() + s.best_ask());
    f.spread = 2.0 * (f.mid - s.best_bid());
    double vb = 0.0, va = 0.0;
    for (std::size_t i = 0; i < std::min(levels, s.bids.size()); ++i) vb += s.bids[i].volume;
    for (std::size_t i = 0; i < std::min(levels, s.asks.size()); ++i) va += s.asks[i].volume;
    f.depth = vb + va;
    f.imbalance = vb + va > 0.0 ? (vb - va) / (vb + va) : 0.0;
    return f;
}

}  // namespace

std::vector<BinnedFeatures> bin_snapshots(std::span<const RawSnapshot> snaps, const BinningOptions& opts,
                                          BinningStats* stats) {
    BinningStats local;
    std::vector<BinnedFeatures> bins;
    if (snaps.empty()) {
        if (stats) *stats = local;
        return bins;
    }
    for (std::size_t i = 1; i < snaps.size(); ++i) {
        if (snaps[i].timestamp_ms < snaps[i - 1].timestamp_ms) throw InputError("snapshots must be time-sorted");
    }

    const std::int64_t first_s = floor_div(snaps.front().timestamp_ms, 1000);
    const std::int64_t last_s = floor_div(snaps.back().timestamp_ms, 1000);
    const auto n = static_cast<std::size_t>(last_s - first_s + 1);

    // Last valid snapshot per bin.
    std::vector<std::optional<BookFeatures>> book(n);
    for (const auto& s : snaps) {
        s.validate();
        if (s.crossed()) {
            ++local.crossed_dropped;
            continue;
        }
        book[static_cast<std::size_t>(floor_div(s.timestamp_ms, 1000) - first_s)] =
            book_features(s, opts.depth_levels);
    }

    bins.resize(n);
    std::vector<double> mid(n, 0.0);
    std::optional<std::size_t> last_valid;
    for (std::size_t t = 0; t < n; ++t) {
        auto& b = bins[t];
        b.t = static_cast<Timestep>(t);
        b.epoch_s = first_s + static_cast<std::int64_t>(t);
        if (book[t]) {
            b.spread = book[t]->spread;
            b.depth = book[t]->depth;
            b.imbalance = book[t]->imbalance;
            mid[t] = book[t]->mid;
            b.missing = false;
            last_valid = t;
        } else if (last_valid && t - *last_valid <= opts.max_fill) {
            const auto& src = bins[*last_valid];
            b.spread = src.spread;
            b.depth = src.depth;
            b.imbalance = src.imbalance;
            mid[t] = mid[*last_valid];
            b.missing = false;
            b.filled = true;
            ++local.filled;
        } else {
            b.missing = true;
            ++local.missing;
        }
    }

    // Rolling volatility of log mid returns over the trailing window.
    std::vector<std::optional<double>> ret(n);
    for (std::size_t t = 1; t < n; ++t) {
        if (!bins[t].missing && !bins[t - 1].missing) ret[t] = std::log(mid[t] / mid[t - 1]);
    }
    // Smoothed first differences with a causal half-Gaussian kernel.
    const auto reach = static_cast<std::size_t>(std::ceil(3.0 * opts.smooth_sigma));
    std::vector<double> kernel(reach + 1);
    for (std::size_t k = 0; k <= reach; ++k) {
        const double z = static_cast<double>(k) / opts.smooth_sigma;
        kernel[k] = std::exp(-0.5 * z * z);
    }
    for (std::size_t t = 0; t < n; ++t) {
        auto& b = bins[t];
        if (b.missing) continue;
        double s = 0.0, ss = 0.0;
        std::size_t m = 0;
        for (std::size_t k = 0; k < opts.vol_window && k <= t; ++k) {
            if (const auto& r = ret[t - k]) {
                s += *r;
                ss += *r * *r;
                ++m;
            }
        }
        if (m >= 2) {
            const double mean = s / static_cast<double>(m);
            b.vol = std::sqrt(std::max(0.0, (ss - static_cast<double>(m) * mean * mean) / static_cast<double>(m - 1)));
        }
        double ws = 0.0, ds = 0.0, dd = 0.0;
        for (std::size_t k = 0; k <= reach && k + 1 <= t; ++k) {
            const auto& cur = bins[t - k];
            const auto& prev = bins[t - k - 1];
            if (cur.missing || prev.missing) continue;
            ws += kernel[k];
            ds += kernel[k] * (cur.spread - prev.spread);
            dd += kernel[k] * (cur.depth - prev.depth);
        }
        if (ws > 0.0) {
            b.d_spread = ds / ws;
            b.d_depth = dd / ws;
        }
    }
    if (stats) *stats = local;
    return bins;
}

// ===========================================================================
// Normalization
// ===========================================================================

namespace {

constexpr std::size_t kZFeatures = 6;

std::array<double, kZFeatures> z_values(const BinnedFeatures& b) {
    return {b.spread, b.depth, b.imbalance, b.vol, b.d_spread, b.d_depth};
}

void set_z_values(BinnedFeatures& b, const std::array<double, kZFeatures>& v) {
    b.spread = v[0];
    b.depth = v[1];
    b.imbalance = v[2];
    b.vol = v[3];
    b.d_spread = v[4];
    b.d_depth = v[5];
}

}  // namespace

std::vector<BinnedFeatures> causal_zscore(std::span<const BinnedFeatures> features, const ZScoreOptions& opts) {
    if (opts.window < 2) throw ParameterError("z-score window must be at least 2");
    std::vector<BinnedFeatures> out(features.begin(), features.end());
    const std::size_t n = features.size();

    // Running sums over [t - window, t), rebuilt every `window` bins so that
    // rounding error cannot accumulate.
    std::array<long double, kZFeatures> sum{}, sumsq{};
    std::size_t count = 0;
    auto add = [&](const BinnedFeatures& b, long double sign) {
        if (b.missing) return;
        const auto v = z_values(b);
        for (std::size_t j = 0; j < kZFeatures; ++j) {
            sum[j] += sign * v[j];
            sumsq[j] += sign * static_cast<long double>(v[j]) * v[j];
        }
        count = sign > 0 ? count + 1 : count - 1;
    };
    auto rebuild = [&](std::size_t t) {
        sum.fill(0.0L);
        sumsq.fill(0.0L);
        count = 0;
        for (std::size_t k = t - std::min(t, opts.window); k < t; ++k) add(features[k], 1.0L);
    };

    for (std::size_t t = 0; t < n; ++t) {
        if (t % opts.window == 0) {
            rebuild(t);
        } else {
            add(features[t - 1], 1.0L);
            if (t > opts.window) add(features[t - 1 - opts.window], -1.0L);
        }
        auto& o = out[t];
        if (features[t].missing || t < opts.window || count < 2) {
            o.missing = true;
            set_z_values(o, {});
            continue;
        }
        const auto x = z_values(features[t]);
        std::array<double, kZFeatures> z{};
        for (std::size_t j = 0; j < kZFeatures; ++j) {
            const long double mean = sum[j] / static_cast<long double>(count);
            const long double var = std::max(0.0L, sumsq[j] / static_cast<long double>(count) - mean * mean);
            const double sd = std::max(static_cast<double>(std::sqrt(var)), opts.epsilon);
            z[j] = static_cast<double>((x[j] - mean) / sd);
        }
        set_z_values(o, z);
    }
    return out;
}

int weekday_of(std::int64_t epoch_s) {
    const std::int64_t days = floor_div(epoch_s, kSecondsPerDay);
    return static_cast<int>(((days % 7) + 7 + 4) % 7);  // 1970-01-01 was a Thursday
}

int hour_of(std::int64_t epoch_s) {
    const std::int64_t in_day = epoch_s - floor_div(epoch_s, kSecondsPerDay) * kSecondsPerDay;
    return static_cast<int>(in_day / 3600);
}

namespace {

double median_of(std::vector<double>& xs) {
    const std::size_t mid = xs.size() / 2;
    std::nth_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid), xs.end());
    const double upper = xs[mid];
    if (xs.size() % 2 == 1) return upper;
    const double lower = *std::max_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

std::optional<std::array<double, 2>> medians(std::array<std::vector<double>, 2>& v) {
    if (v[0].empty()) return std::nullopt;
    return std::array<double, 2>{median_of(v[0]), median_of(v[1])};
}

}  // namespace

SeasonalProfile SeasonalProfile::fit(std::span<const BinnedFeatures> training) {
    std::array<std::array<std::array<std::vector<double>, 2>, 24>, 7> cells;
    std::array<std::array<std::vector<double>, 2>, 24> hours;
    std::array<std::vector<double>, 2> all;
    SeasonalProfile p;
    for (const auto& b : training) {
        p.last_training_epoch_s = std::max(p.last_training_epoch_s, b.epoch_s);
        if (b.missing) continue;
        const int wd = weekday_of(b.epoch_s);
        const int hr = hour_of(b.epoch_s);
        for (int j = 0; j < 2; ++j) {
            const double x = j == 0 ? b.spread : b.depth;
            cells[wd][hr][j].push_back(x);
            hours[hr][j].push_back(x);
            all[j].push_back(x);
        }
    }
    if (all[0].empty()) throw ParameterError("seasonality needs at least one training bin");
    for (int wd = 0; wd < 7; ++wd) {
        for (int hr = 0; hr < 24; ++hr) p.cell[wd][hr] = medians(cells[wd][hr]);
    }
    for (int hr = 0; hr < 24; ++hr) p.hour[hr] = medians(hours[hr]);
    p.overall = *medians(all);
    return p;
}

std::array<double, 2> SeasonalProfile::median_at(std::int64_t epoch_s, bool* fallback) const {
    const int wd = weekday_of(epoch_s);
    const int hr = hour_of(epoch_s);
    if (fallback) *fallback = false;
    if (cell[wd][hr]) return *cell[wd][hr];
    if (fallback) *fallback = true;
    if (hour[hr]) return *hour[hr];
    return overall;
}

DeseasonalizeResult deseasonalize(std::span<const BinnedFeatures> features, const SeasonalProfile& profile) {
    DeseasonalizeResult res;
    res.adjusted.assign(features.begin(), features.end());
    for (auto& b : res.adjusted) {
        if (b.missing) continue;
        bool fb = false;
        const auto m = profile.median_at(b.epoch_s, &fb);
        if (fb) ++res.fallback_bins;
        b.spread -= m[0];
        b.depth -= m[1];
    }
    return res;
}

DeseasonalizeResult deseasonalize(std::span<const BinnedFeatures> features,
                                  std::span<const BinnedFeatures> training) {
    const auto profile = SeasonalProfile::fit(training);
    for (const auto& b : features) {
        if (b.epoch_s <= profile.last_training_epoch_s) {
            throw ParameterError("training days must precede the evaluation span");
        }
    }
    return deseasonalize(features, profile);
}

// ===========================================================================
// Stress labels
// ===========================================================================

namespace {

// Median of a sliding multiset.
class SlidingMedian {
public:
    void insert(double x) {
        if (lo_.empty() || x <= *lo_.rbegin()) {
            lo_.insert(x);
        } else {
            hi_.insert(x);
        }
        rebalance();
    }
    void erase(double x) {
        if (auto it = lo_.find(x); it != lo_.end() && x <= *lo_.rbegin()) {
            lo_.erase(it);
        } else {
            hi_.erase(hi_.find(x));
        }
        rebalance();
    }
    std::size_t size() const { return lo_.size() + hi_.size(); }
    double median() const {
        if (lo_.size() > hi_.size()) return *lo_.rbegin();
        return 0.5 * (*lo_.rbegin() + *hi_.begin());
    }

private:
    void rebalance() {
        while (lo_.size() > hi_.size() + 1) {
            hi_.insert(*lo_.rbegin());
            lo_.erase(std::prev(lo_.end()));
        }
        while (hi_.size() > lo_.size()) {
            lo_.insert(*hi_.begin());
            hi_.erase(hi_.begin());
        }
    }
    std::multiset<double> lo_, hi_;
};

}  // namespace

std::vector<StressLabel> label_stress(std::span<const BinnedFeatures> features, const LabelOptions& opts) {
    if (opts.median_window == 0 || opts.min_duration < 1) throw ParameterError("invalid stress label options");
    std::vector<StressLabel> out;
    SlidingMedian med;
    Timestep run_start = -1;  // -1: no open span
    auto close_run = [&](Timestep end_exclusive) {
        if (run_start >= 0 && end_exclusive - run_start >= opts.min_duration) {
            out.push_back({features[static_cast<std::size_t>(run_start)].t, end_exclusive - run_start});
        }
        run_start = -1;
    };

    for (std::size_t t = 0; t < features.size(); ++t) {
        if (t >= opts.median_window + 1 && !features[t - opts.median_window - 1].missing) {
            med.erase(features[t - opts.median_window - 1].spread);
        }
        if (t >= 1 && !features[t - 1].missing) med.insert(features[t - 1].spread);

        const auto& b = features[t];
        const bool exceed = !b.missing && t >= opts.median_window && med.size() > 0 &&
                            b.spread > opts.multiple * med.median();
        if (exceed) {
            if (run_start < 0) run_start = static_cast<Timestep>(t);
        } else {
            close_run(static_cast<Timestep>(t));
        }
    }
    close_run(static_cast<Timestep>(features.size()));
    return out;
}

// ===========================================================================
// Replay
// ===========================================================================

ReplayResult replay_run(std::span<const RawSnapshot> snaps, std::int64_t test_start_epoch_s,
                        const ReplayConfig& cfg) {
    cfg.signal.validate();
    ReplayResult res;
    const auto bins = bin_snapshots(snaps, cfg.binning, &res.binning);
    if (bins.empty()) throw InputError("no snapshots to replay");
    const std::int64_t origin = bins.front().epoch_s;
    if (test_start_epoch_s - origin < cfg.train_window) {
        throw ParameterError("replay needs a full training window before the first test day");
    }
    const auto test_start = static_cast<std::size_t>(std::min<std::int64_t>(
        test_start_epoch_s - origin, static_cast<std::int64_t>(bins.size())));

    const auto profile = SeasonalProfile::fit(std::span(bins).first(test_start));
    auto des = deseasonalize(bins, profile);
    res.seasonal_fallback_bins = des.fallback_bins;
    const auto z = causal_zscore(des.adjusted, cfg.zscore);

    // Channels read deseasonalized levels re-anchored at the training median
    // so that ratio-type channels keep their units.
    std::vector<LobFrame> channel_frames(bins.size());
    for (std::size_t t = 0; t < bins.size(); ++t) {
        const auto& a = des.adjusted[t];
        channel_frames[t] = {a.spread + profile.overall[0], a.depth + profile.overall[1], a.imbalance, a.vol};
    }
    auto usable = [&](std::size_t t) { return !bins[t].missing && !z[t].missing; };

    std::vector<Timestep> trigger_bins;
    std::vector<TriggerEvent> trigger_events;
    const auto n = static_cast<std::int64_t>(bins.size());
    for (std::int64_t day = static_cast<std::int64_t>(test_start); day < n; day += kSecondsPerDay) {
        ++res.test_days;
        const std::int64_t train_lo = day - cfg.train_window;
        const std::int64_t day_end = std::min(n, day + kSecondsPerDay);

        std::vector<LobFrame> train;
        std::vector<std::size_t> train_idx;
        for (std::int64_t t = train_lo; t < day; ++t) {
            if (usable(static_cast<std::size_t>(t))) {
                train.push_back(z[static_cast<std::size_t>(t)].frame());
                train_idx.push_back(static_cast<std::size_t>(t));
            }
        }
        if (train.size() <= cfg.signal.baseline_window + 1) {
            throw ParameterError("training window has too few usable bins");
        }
        const HmmModel model = fit_hmm(train, cfg.hmm_restarts, cfg.hmm_iters,
                                       derive_seed(cfg.seed, static_cast<std::uint64_t>(day)));

        TriggerConfig trig = cfg.trigger;
        trig.burn_in = train.size();
        TriggerDetector det(model, cfg.signal, trig);
        for (const std::size_t t : train_idx) {
            det.step(channel_frames[t], z[t].frame().vector(), static_cast<Timestep>(t));
        }
        for (std::int64_t t = day; t < day_end; ++t) {
            const auto ut = static_cast<std::size_t>(t);
            if (!usable(ut)) continue;
            auto ev = det.step(channel_frames[ut], z[ut].frame().vector(), static_cast<Timestep>(t));
            if (ev && t - day >= cfg.exclude_open) {
                trigger_bins.push_back(ev->tau);
                trigger_events.push_back(*ev);
                res.triggers.push_back({*ev, bins[ut].epoch_s});
            }
        }
    }

    std::vector<StressEvent> events;
    for (const auto& lab : label_stress(bins, cfg.labels)) {
        if (lab.onset < static_cast<Timestep>(test_start)) continue;
        const Timestep day_offset = (lab.onset - static_cast<Timestep>(test_start)) % kSecondsPerDay;
        if (day_offset < cfg.exclude_open) continue;
        events.push_back({lab.onset, lab.onset + lab.duration - 1, res.labels.size()});
        res.labels.push_back(lab);
    }
    res.matches = match_triggers(trigger_bins, events, {}, MatchMode::Replay, cfg.match_window);
    res.outcome = summarize_run(res.matches, trigger_bins.size(), trigger_events);
    res.report = compute_report(std::span(&res.outcome, 1));
    return res;
}

ReplayResult replay_detect(std::span<const RawSnapshot> snaps, std::int64_t test_start_epoch_s,
                           const ReplayConfig& cfg) {
    if (snaps.empty()) throw InputError("no snapshots to replay");
    const std::int64_t last_s = floor_div(snaps.back().timestamp_ms, 1000);
    if (last_s - test_start_epoch_s + 1 < kSecondsPerDay) {
        throw ParameterError("evaluation span is shorter than one refit period");
    }
    return replay_run(snaps, test_start_epoch_s, cfg);
}

// ===========================================================================
// Synthetic fixture
// ===========================================================================

namespace {

constexpr double kTick = 0.125;
constexpr double kBaseMid = 100.0;
constexpr std::size_t kFixtureLevels = 10;

DgpParams fixture_params(const FixtureSpec& spec, double noise) {
    DgpParams p = DgpParams::defaults();
    p.T = static_cast<std::size_t>(kSecondsPerDay);
    p.mu[0] = Eigen::Vector4d(1.0, 200.0, 0.0, 0.0);
    p.mu[1] = p.mu[0];
    p.mu[2] = Eigen::Vector4d(5.0, 60.0, -0.5, 0.0);
    const Eigen::Vector4d excursion(1.0, -60.0, -0.1, 0.0);
    p.v = excursion.normalized();
    p.alpha = excursion.norm() / static_cast<double>(spec.buildup_s);
    const Eigen::Vector4d scale(0.15, 3.0, 0.08, 0.5);
    const double floor = 1e-6;  // keeps the covariance positive definite at zero noise
    p.sigma = (scale * std::max(noise, floor)).array().square().matrix().asDiagonal();
    return p;
}

}  // namespace

Fixture make_replay_fixture(const FixtureSpec& spec) {
    if (spec.buildup_s < 1 || spec.stress_s.empty()) throw ParameterError("fixture needs build-up and stress lengths");
    if (spec.episodes_per_day == 0 || spec.episodes_per_day > 5) {
        throw ParameterError("fixture supports 1 to 5 episodes per day");
    }
    Fixture fx;
    const std::size_t n_days = spec.train_days + spec.test_days;
    fx.test_start_epoch_s = spec.start_epoch_s + static_cast<std::int64_t>(spec.train_days) * kSecondsPerDay;
    Rng mid_rng(derive_seed(spec.seed, 1000));
    double mid = kBaseMid;

    for (std::size_t d = 0; d < n_days; ++d) {
        const bool is_test = d >= spec.train_days;
        const std::int64_t day_start = spec.start_epoch_s + static_cast<std::int64_t>(d) * kSecondsPerDay;
        std::vector<RegimeLabel> labels(static_cast<std::size_t>(kSecondsPerDay), RegimeLabel::Stable);
        if (!is_test || spec.plant_test_episodes) {
            // Episodes at fixed hours after the excluded opening window;
            // training days are offset so that hours differ.
            const Timestep offset = is_test ? 0 : 3000;
            for (std::size_t k = 0; k < spec.episodes_per_day; ++k) {
                const Timestep b = 5400 + offset + static_cast<Timestep>(k) * 15000;
                const Timestep onset = b + spec.buildup_s;
                const Timestep dur = spec.stress_s[k % spec.stress_s.size()];
                for (Timestep t = b; t < onset; ++t) labels[static_cast<std::size_t>(t)] = RegimeLabel::BuildUp;
                for (Timestep t = onset; t < onset + dur; ++t) labels[static_cast<std::size_t>(t)] = RegimeLabel::Stress;
                if (is_test) fx.test_episodes.push_back({day_start + b, day_start + onset, day_start + onset + dur - 1});
            }
        }
        const auto params = fixture_params(spec, is_test ? spec.test_noise : spec.train_noise);
        const auto frames = emit_observations(labels, params, derive_seed(spec.seed, d));

        std::vector<RawSnapshot> day;
        day.reserve(frames.size());
        for (std::size_t s = 0; s < frames.size(); ++s) {
            const auto& f = frames[s];
            mid += kTick * std::round(std::abs(f.vol) * mid_rng.normal());
            const double spread = std::max(2.0 * kTick, std::round(f.spread / (2.0 * kTick)) * 2.0 * kTick);
            const double depth = std::max(20.0, std::round(f.depth));
            const double imb = std::clamp(f.imbalance, -0.9, 0.9);
            const double vb = std::round(depth * (1.0 + imb) / 2.0);
            const double va = depth - vb;

            RawSnapshot snap;
            snap.timestamp_ms = (day_start + static_cast<std::int64_t>(s)) * 1000 + 500;
            const double bb = mid - spread / 2.0;
            const double ba = mid + spread / 2.0;
            auto split = [](double total, std::size_t k) {
                // Integer volumes over the top 5 levels; remainder on the best level.
                const double base = std::floor(total / 5.0);
                return k == 0 ? total - 4.0 * base : base;
            };
            for (std::size_t k = 0; k < kFixtureLevels; ++k) {
                const double vb_k = k < 5 ? split(vb, k) : 50.0;
                const double va_k = k < 5 ? split(va, k) : 50.0;
                snap.bids.push_back({bb - kTick * static_cast<double>(k), std::max(1.0, vb_k)});
                snap.asks.push_back({ba + kTick * static_cast<double>(k), std::max(1.0, va_k)});
            }
            day.push_back(std::move(snap));
        }
        fx.days.push_back(std::move(day));
    }
    return fx;
}

std::vector<std::filesystem::path> write_fixture(const Fixture& fx, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> paths;
    for (std::size_t d = 0; d < fx.days.size(); ++d) {
        std::ostringstream name;
        name << "day_" << std::setw(3) << std::setfill('0') << d << ".csv";
        const auto path = dir / name.str();
        std::ofstream out(path);
        if (!out) throw InputError("cannot write fixture file " + path.string());
        write_snapshots_csv(fx.days[d], out);
        if (!out) throw InputError("failed writing fixture file " + path.string());
        paths.push_back(path);
    }
    return paths;
}

}  // namespace lobregime
