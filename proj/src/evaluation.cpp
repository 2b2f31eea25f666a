#include "lobregime/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lobregime {

namespace {

double mean_of(std::span<const double> xs) {
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double ci95(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean_of(xs);
    double ss = 0.0;
    for (const double x : xs) ss += (x - m) * (x - m);
    const double sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    return 1.96 * sd / std::sqrt(static_cast<double>(xs.size()));
}

}  // namespace

std::vector<StressEvent> events_from_episodes(std::span<const Episode> episodes, Timestep eval_start) {
    std::vector<StressEvent> out;
    for (std::size_t i = 0; i < episodes.size(); ++i) {
        if (episodes[i].stress_onset < eval_start) continue;
        out.push_back({episodes[i].stress_onset, episodes[i].stress_end, i});
    }
    return out;
}

std::vector<Timestep> trigger_times(std::span<const TriggerEvent> events) {
    std::vector<Timestep> out;
    out.reserve(events.size());
    for (const auto& e : events) out.push_back(e.tau);
    return out;
}

std::vector<MatchResult> match_triggers(std::span<const Timestep> triggers, std::span<const StressEvent> events,
                                        std::span<const Episode> episodes, MatchMode mode,
                                        Timestep replay_window) {
    if (!std::is_sorted(triggers.begin(), triggers.end())) throw InputError("triggers must be time-sorted");
    for (std::size_t i = 0; i < events.size(); ++i) {
        if (events[i].onset > events[i].end) throw InputError("stress event ends before onset");
        if (i > 0 && events[i].onset <= events[i - 1].end) {
            throw InputError("stress events overlap or are unsorted");
        }
    }

    std::vector<bool> used(triggers.size(), false);
    std::vector<MatchResult> out;
    out.reserve(events.size());
    for (const auto& ev : events) {
        MatchResult m;
        m.stress = ev;
        if (mode == MatchMode::Simulation) {
            if (ev.id >= episodes.size()) throw InputError("stress event refers to a missing episode");
            m.window_start = episodes[ev.id].buildup_start;
        } else {
            m.window_start = ev.onset - replay_window;
        }

        const auto lo = std::lower_bound(triggers.begin(), triggers.end(), m.window_start);
        const auto hi = std::lower_bound(triggers.begin(), triggers.end(), ev.onset);
        for (auto it = hi; it != lo;) {
            --it;
            const auto idx = static_cast<std::size_t>(it - triggers.begin());
            if (!used[idx]) {
                used[idx] = true;
                m.trigger_index = idx;
                m.tau = *it;
                m.lead_time = ev.onset - *it;
                break;
            }
        }
        if (lo != triggers.end() && *lo <= ev.end) m.response_lead = ev.onset - *lo;
        out.push_back(m);
    }
    return out;
}

RunOutcome summarize_run(std::span<const MatchResult> matches, std::size_t n_triggers,
                         std::span<const TriggerEvent> triggers) {
    RunOutcome r;
    r.n_triggers = n_triggers;
    r.n_events = matches.size();
    for (const auto& m : matches) {
        if (m.response_lead) r.response_leads.push_back(static_cast<double>(*m.response_lead));
        if (m.lead_time) {
            ++r.n_matched;
            r.matched_leads.push_back(static_cast<double>(*m.lead_time));
            if (m.trigger_index && *m.trigger_index < triggers.size()) {
                ++r.first_channel[static_cast<std::size_t>(triggers[*m.trigger_index].first_channel)];
            }
        }
    }
    return r;
}

EvalReport compute_report(std::span<const RunOutcome> runs) {
    EvalReport rep;
    rep.n_runs = runs.size();
    std::vector<double> leads, matched_leads, run_prec, run_cov;
    std::array<std::size_t, kNumChannels> first{};
    for (const auto& r : runs) {
        rep.n_triggers += r.n_triggers;
        rep.n_events += r.n_events;
        rep.n_matched += r.n_matched;
        leads.insert(leads.end(), r.response_leads.begin(), r.response_leads.end());
        matched_leads.insert(matched_leads.end(), r.matched_leads.begin(), r.matched_leads.end());
        if (r.n_triggers > 0) run_prec.push_back(static_cast<double>(r.n_matched) / static_cast<double>(r.n_triggers));
        if (r.n_events > 0) run_cov.push_back(static_cast<double>(r.n_matched) / static_cast<double>(r.n_events));
        for (std::size_t c = 0; c < kNumChannels; ++c) first[c] += r.first_channel[c];
    }
    if (!leads.empty()) rep.mean_lead = {mean_of(leads), ci95(leads)};
    if (!matched_leads.empty()) rep.mean_matched_lead = {mean_of(matched_leads), ci95(matched_leads)};
    if (rep.n_triggers > 0) {
        rep.precision = {static_cast<double>(rep.n_matched) / static_cast<double>(rep.n_triggers), ci95(run_prec)};
    }
    if (rep.n_events > 0) {
        rep.coverage = {static_cast<double>(rep.n_matched) / static_cast<double>(rep.n_events), ci95(run_cov)};
    }
    const std::size_t total_first = std::accumulate(first.begin(), first.end(), std::size_t{0});
    if (total_first > 0) {
        for (std::size_t c = 0; c < kNumChannels; ++c) {
            rep.per_channel_first[c] = static_cast<double>(first[c]) / static_cast<double>(total_first);
        }
    }
    return rep;
}

int t1_bin(Timestep t1) {
    if (t1 < 10) return 0;
    if (t1 <= 25) return 1;
    return 2;
}

int snr_bin(double snr) {
    if (snr < 0.15) return 0;
    if (snr <= 0.30) return 1;
    return 2;
}

CoverageGrid conditional_breakdown(std::span<const EpisodeRecord> episodes) {
    CoverageGrid g;
    std::array<std::array<std::size_t, 3>, 3> hits{};
    for (const auto& e : episodes) {
        const int r = snr_bin(e.snr);
        const int c = t1_bin(e.t1_obs);
        ++g.count[r][c];
        if (e.covered) ++hits[r][c];
    }
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            const auto n = g.count[r][c];
            if (n == 0) continue;
            const double p = static_cast<double>(hits[r][c]) / static_cast<double>(n);
            g.coverage[r][c] = p;
            g.se[r][c] = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
        }
    }
    return g;
}

EpisodeSnr estimate_episode_snr(std::span<const LobFrame> frames, const Episode& ep, const Eigen::Vector4d& v) {
    const Timestep n = ep.stress_onset - ep.buildup_start;
    if (n < 3) return {};
    double sx = 0.0, sy = 0.0;
    std::vector<double> y(static_cast<std::size_t>(n));
    for (Timestep s = 0; s < n; ++s) {
        y[static_cast<std::size_t>(s)] = project(frames[static_cast<std::size_t>(ep.buildup_start + s)], v);
        sx += static_cast<double>(s);
        sy += y[static_cast<std::size_t>(s)];
    }
    const double mx = sx / static_cast<double>(n);
    const double my = sy / static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (Timestep s = 0; s < n; ++s) {
        const double dx = static_cast<double>(s) - mx;
        sxx += dx * dx;
        sxy += dx * (y[static_cast<std::size_t>(s)] - my);
    }
    const double slope = sxy / sxx;
    double rss = 0.0;
    for (Timestep s = 0; s < n; ++s) {
        const double r = y[static_cast<std::size_t>(s)] - my - slope * (static_cast<double>(s) - mx);
        rss += r * r;
    }
    const double resid_sd = std::sqrt(rss / static_cast<double>(n - 2));
    if (!(resid_sd > 0.0)) return {};
    EpisodeSnr out;
    out.per_step = slope / resid_sd;
    out.episode_level = out.per_step * std::sqrt(static_cast<double>(n));
    return out;
}

}  // namespace lobregime
