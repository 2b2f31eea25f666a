#include "lobregime/benchmark.hpp"

#include "lobregime/baselines.hpp"
#include "lobregime/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace lobregime {

std::string_view detector_name(Detector d) {
    switch (d) {
        case Detector::Trigger: return "trigger";
        case Detector::HmmPosterior: return "hmm_posterior";
        case Detector::Cusum: return "cusum";
        case Detector::Bocpd: return "bocpd";
        case Detector::Imbalance: return "imbalance";
        case Detector::Volatility: return "volatility";
    }
    return "unknown";
}

void BenchmarkConfig::validate() const {
    dgp.validate();
    trigger.validate(signal);
    if (n_runs == 0) throw ParameterError("n_runs must be at least 1");
    if (trigger.burn_in >= dgp.T) throw ParameterError("burn-in must be shorter than the run");
    if (hmm_restarts == 0 || hmm_iters == 0) throw ParameterError("HMM fit needs restarts and iterations");
    if (baselines.percentile >= 0.0 && !(baselines.percentile > 0.0 && baselines.percentile < 100.0)) {
        throw ParameterError("baseline percentile must lie in (0, 100)");
    }
    if (baselines.bocpd_hazard < 0.0 || baselines.bocpd_hazard >= 1.0) {
        throw ParameterError("BOCPD hazard must lie in [0, 1)");
    }
    if (baselines.smooth_window == 0) throw ParameterError("smoothing window must be positive");
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mu);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

std::array<Eigen::VectorXd, kNumRegimes> alignment_reference(const DgpParams& p) {
    // Build-up reference sits halfway along the mean drift excursion.
    const double mean_len = 1.0 / p.p12;
    std::array<Eigen::VectorXd, kNumRegimes> ref;
    ref[0] = p.mu[0];
    ref[1] = p.mu[1] + p.alpha * (mean_len / 2.0) * p.v;
    ref[2] = p.mu[2];
    return ref;
}

HmmModel fit_aligned_model(std::span<const LobFrame> frames, const BenchmarkConfig& cfg, std::uint64_t seed) {
    const auto burn = frames.first(std::min(frames.size(), cfg.trigger.burn_in));
    const HmmModel raw = fit_hmm(burn, cfg.hmm_restarts, cfg.hmm_iters, seed);
    return permute_states(raw, align_states(raw, alignment_reference(cfg.dgp)));
}

namespace {

double percentile_of(std::vector<double> xs, double p) {
    return adaptive_threshold(xs, p);
}

double baseline_percentile(const BenchmarkConfig& cfg) {
    return cfg.baselines.percentile >= 0.0 ? cfg.baselines.percentile : cfg.trigger.percentile_p;
}

std::vector<double> projected(std::span<const LobFrame> frames, const Eigen::Vector4d& v) {
    std::vector<double> y(frames.size());
    for (std::size_t t = 0; t < frames.size(); ++t) y[t] = project(frames[t], v);
    return y;
}

std::vector<double> abs_imbalance(std::span<const LobFrame> frames) {
    std::vector<double> x(frames.size());
    for (std::size_t t = 0; t < frames.size(); ++t) x[t] = std::abs(std::clamp(frames[t].imbalance, -1.0, 1.0));
    return x;
}

std::vector<double> vols(std::span<const LobFrame> frames) {
    std::vector<double> x(frames.size());
    for (std::size_t t = 0; t < frames.size(); ++t) x[t] = frames[t].vol;
    return x;
}

std::vector<Timestep> from_burn_in(std::vector<Timestep> alarms, std::size_t burn_in) {
    std::erase_if(alarms, [&](Timestep t) { return t < static_cast<Timestep>(burn_in); });
    return alarms;
}

}  // namespace

BaselineThresholds calibrate_baselines(std::span<const LobFrame> burn_in, const HmmModel& model,
                                       std::span<const PosteriorState> burn_in_post, const BenchmarkConfig& cfg) {
    const double p = baseline_percentile(cfg);
    const auto& v = cfg.dgp.v;
    BaselineThresholds th;

    std::vector<double> nonstable;
    nonstable.reserve(burn_in_post.size());
    for (const auto& post : burn_in_post) nonstable.push_back(post.pi(1) + post.pi(2));
    th.hmm_theta = std::clamp(percentile_of(nonstable, p), 0.01, 0.99);

    // Reference value from the fitted stable / stress means on the drift axis.
    th.cusum_mu0 = v.dot(model.means[0]);
    th.cusum_k = std::abs(v.dot(model.means[2]) - th.cusum_mu0) / 2.0;
    const auto y = projected(burn_in, v);
    std::vector<double> c_path;
    c_path.reserve(y.size());
    double c = 0.0;
    for (const double yt : y) {
        c = std::max(0.0, c + yt - th.cusum_mu0 - th.cusum_k);
        c_path.push_back(c);
    }
    th.cusum_h = std::max(percentile_of(c_path, p), 1e-6);

    th.bocpd_hazard = cfg.baselines.bocpd_hazard > 0.0 ? cfg.baselines.bocpd_hazard
                                                       : (cfg.dgp.p01 + cfg.dgp.p12) / 2.0;
    double mean = 0.0, var = 0.0;
    for (const double yt : y) mean += yt;
    mean /= static_cast<double>(y.size());
    for (const double yt : y) var += (yt - mean) * (yt - mean);
    var = std::max(var / static_cast<double>(y.size()), 1e-12);
    std::vector<double> cp;
    bocpd_detect(y, th.bocpd_hazard, 0.999999, NormalGammaPrior::from_moments(mean, var), 0, &cp);
    cp.erase(cp.begin());  // t = 0 has no changepoint probability
    th.bocpd_threshold = std::clamp(percentile_of(cp, p), 1e-6, 1.0 - 1e-6);

    th.imbalance_theta = std::max(percentile_of(trailing_mean(abs_imbalance(burn_in), cfg.baselines.smooth_window), p), 1e-9);
    th.volatility_theta = percentile_of(trailing_mean(vols(burn_in), cfg.baselines.smooth_window), p);
    return th;
}

std::vector<DetectorOutput> run_baselines(std::span<const LobFrame> frames, const HmmModel& model,
                                          std::span<const PosteriorState> posteriors,
                                          const BaselineThresholds& th, const BenchmarkConfig& cfg) {
    const std::size_t burn = cfg.trigger.burn_in;
    const Timestep L = cfg.trigger.suppression_L;
    const auto y = projected(frames, cfg.dgp.v);
    std::vector<DetectorOutput> out;

    auto add = [&](Detector d, std::vector<Timestep> alarms) {
        DetectorOutput o;
        o.name = std::string(detector_name(d));
        o.alarms = from_burn_in(std::move(alarms), burn);
        out.push_back(std::move(o));
    };

    // Detectors start from burn-in so their suppression state is not seeded
    // by calibration-period alarms.
    const auto eval_post = posteriors.subspan(burn);
    auto shift = [&](std::vector<Timestep> a) {
        for (auto& t : a) t += static_cast<Timestep>(burn);
        return a;
    };
    add(Detector::HmmPosterior, shift(hmm_posterior_detect(eval_post, th.hmm_theta, L)));

    {
        CusumState st{0.0, th.cusum_mu0, th.cusum_k, th.cusum_h};
        std::vector<Timestep> alarms;
        std::optional<Timestep> last;
        for (std::size_t t = 0; t < y.size(); ++t) {
            const bool hit = st.update(y[t]);
            if (t < burn || !hit) continue;
            const auto tt = static_cast<Timestep>(t);
            if (last && tt - *last < L) continue;
            alarms.push_back(tt);
            last = tt;
        }
        add(Detector::Cusum, std::move(alarms));
    }

    {
        const auto burn_y = std::span<const double>(y).first(burn);
        double mean = 0.0, var = 0.0;
        for (const double v : burn_y) mean += v;
        mean /= static_cast<double>(burn_y.size());
        for (const double v : burn_y) var += (v - mean) * (v - mean);
        var = std::max(var / static_cast<double>(burn_y.size()), 1e-12);
        BocpdState st(th.bocpd_hazard, NormalGammaPrior::from_moments(mean, var), cfg.baselines.bocpd_max_run);
        std::vector<Timestep> alarms;
        std::optional<Timestep> last;
        for (std::size_t t = 0; t < y.size(); ++t) {
            const double p0 = st.update(y[t]);
            if (t < burn || !(p0 > th.bocpd_threshold)) continue;
            const auto tt = static_cast<Timestep>(t);
            if (last && tt - *last < L) continue;
            alarms.push_back(tt);
            last = tt;
        }
        add(Detector::Bocpd, std::move(alarms));
    }

    const auto imb = trailing_mean(abs_imbalance(frames), cfg.baselines.smooth_window);
    add(Detector::Imbalance,
        shift(imbalance_detect(std::span<const double>(imb).subspan(burn), th.imbalance_theta, L)));
    const auto vol = trailing_mean(vols(frames), cfg.baselines.smooth_window);
    add(Detector::Volatility,
        shift(volatility_detect(std::span<const double>(vol).subspan(burn), th.volatility_theta, L)));
    (void)model;
    return out;
}

TriggerArm default_arm(const BenchmarkConfig& cfg) {
    return {std::string(variant_name(cfg.trigger.variant)), cfg.signal, cfg.trigger};
}

RunResult run_single(const BenchmarkConfig& cfg, std::span<const TriggerArm> arms, bool with_baselines,
                     std::size_t run_index) {
    RunResult res;
    res.run_index = run_index;
    res.seed = derive_seed(cfg.seed, run_index);
    const SimRun run = simulate_run(cfg.dgp, res.seed);
    res.episodes = extract_episodes(run.labels);
    const std::size_t burn = cfg.trigger.burn_in;

    const HmmModel model = fit_aligned_model(run.frames, cfg, derive_seed(res.seed, 2));
    const auto posteriors = filter_sequence(model, frames_to_matrix(run.frames));

    std::size_t correct = 0;
    for (std::size_t t = 0; t < posteriors.size(); ++t) {
        Eigen::Index k = 0;
        posteriors[t].pi.maxCoeff(&k);
        if (static_cast<int>(k) == to_int(run.labels[t])) ++correct;
    }
    res.label_accuracy = posteriors.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(posteriors.size());

    const auto events = events_from_episodes(res.episodes, static_cast<Timestep>(burn));

    for (std::size_t a = 0; a < arms.size(); ++a) {
        DetectorOutput o;
        o.name = arms[a].name;
        o.triggers = run_detector(run.frames, model, arms[a].signal, arms[a].trigger);
        o.alarms = trigger_times(o.triggers);
        o.matches = match_triggers(o.alarms, events, res.episodes, MatchMode::Simulation);
        o.outcome = summarize_run(o.matches, o.alarms.size(), o.triggers);
        if (a == 0) {
            for (const auto& m : o.matches) {
                const Episode& ep = res.episodes[m.stress.id];
                EpisodeRecord rec;
                rec.t1_obs = ep.stress_onset - ep.buildup_start;
                rec.snr = estimate_episode_snr(run.frames, ep, cfg.dgp.v).episode_level;
                rec.covered = m.lead_time.has_value();
                res.episode_records.push_back(rec);
            }
        }
        res.detectors.push_back(std::move(o));
    }

    if (with_baselines) {
        res.thresholds = calibrate_baselines(std::span<const LobFrame>(run.frames).first(burn), model,
                                             std::span<const PosteriorState>(posteriors).first(burn), cfg);
        for (auto& o : run_baselines(run.frames, model, posteriors, res.thresholds, cfg)) {
            o.matches = match_triggers(o.alarms, events, res.episodes, MatchMode::Simulation);
            o.outcome = summarize_run(o.matches, o.alarms.size());
            res.detectors.push_back(std::move(o));
        }
    }
    return res;
}

BenchmarkResult run_benchmark(const BenchmarkConfig& cfg, std::span<const TriggerArm> arms, bool with_baselines) {
    cfg.validate();
    for (const auto& arm : arms) arm.trigger.validate(arm.signal);

    BenchmarkResult out;
    out.runs.resize(cfg.n_runs);
    parallel_for(cfg.n_runs, cfg.threads, [&](std::size_t i) { out.runs[i] = run_single(cfg, arms, with_baselines, i); });

    const std::size_t n_det = out.runs.front().detectors.size();
    std::vector<EpisodeRecord> records;
    double acc = 0.0;
    for (std::size_t d = 0; d < n_det; ++d) {
        std::vector<RunOutcome> outcomes;
        outcomes.reserve(out.runs.size());
        for (const auto& r : out.runs) outcomes.push_back(r.detectors[d].outcome);
        out.names.push_back(out.runs.front().detectors[d].name);
        out.reports.push_back(compute_report(outcomes));
    }
    for (const auto& r : out.runs) {
        records.insert(records.end(), r.episode_records.begin(), r.episode_records.end());
        acc += r.label_accuracy;
    }
    out.grid = conditional_breakdown(records);
    if (!out.reports.empty()) out.reports.front().per_cell = out.grid;
    out.mean_label_accuracy = acc / static_cast<double>(out.runs.size());
    return out;
}

std::vector<PrPoint> pr_frontier(const BenchmarkConfig& cfg, std::span<const double> percentiles,
                                 bool with_baselines) {
    std::vector<PrPoint> out;
    for (const double p : percentiles) {
        if (!(p >= 70.0 && p <= 95.0)) throw ParameterError("sweep percentiles must lie in [70, 95]");
    }
    if (!with_baselines) {
        // Trigger-only sweeps share the simulated runs and fitted models.
        std::vector<TriggerArm> arms;
        for (const double p : percentiles) {
            TriggerArm a = default_arm(cfg);
            a.trigger.percentile_p = p;
            arms.push_back(a);
        }
        const auto res = run_benchmark(cfg, arms, false);
        for (std::size_t i = 0; i < arms.size(); ++i) out.push_back({res.names[i], percentiles[i], res.reports[i]});
        return out;
    }
    for (const double p : percentiles) {
        BenchmarkConfig c = cfg;
        c.trigger.percentile_p = p;
        c.baselines.percentile = p;
        const TriggerArm arm = default_arm(c);
        const auto res = run_benchmark(c, std::span(&arm, 1), with_baselines);
        for (std::size_t d = 0; d < res.names.size(); ++d) out.push_back({res.names[d], p, res.reports[d]});
    }
    return out;
}

std::vector<GridCell> robustness_grid(const BenchmarkConfig& cfg, std::span<const double> delay_p12,
                                      std::span<const double> noise_levels, std::size_t runs_per_cell) {
    std::vector<GridCell> out;
    for (const double p12 : delay_p12) {
        for (const double noise : noise_levels) {
            BenchmarkConfig c = cfg;
            c.dgp.p12 = p12;
            c.dgp.set_noise(noise);
            c.n_runs = runs_per_cell;
            const TriggerArm arm = default_arm(c);
            const auto res = run_benchmark(c, std::span(&arm, 1), false);
            GridCell cell{p12, noise, res.reports.front(), true};
            if (const auto& ml = cell.report.mean_lead; ml.value) {
                cell.lead_ci_includes_zero = *ml.value - ml.ci <= 0.0 && *ml.value + ml.ci >= 0.0;
            }
            out.push_back(cell);
        }
    }
    return out;
}

std::vector<TriggerArm> ablation_arms(const BenchmarkConfig& cfg) {
    std::vector<TriggerArm> arms;
    arms.push_back({"full", cfg.signal, cfg.trigger});
    TriggerArm a = arms.front();
    a.name = "no_rising_edge";
    a.trigger.rising_edge = false;
    arms.push_back(a);
    a = arms.front();
    a.name = "sum_aggregation";
    a.signal.aggregation = Aggregation::Sum;
    arms.push_back(a);
    a = arms.front();
    a.name = "fixed_threshold";
    a.trigger.variant = TriggerVariant::Standard;
    arms.push_back(a);
    a = arms.front();
    a.name = "no_entropy";
    a.signal.use_entropy = false;
    arms.push_back(a);
    return arms;
}

std::vector<AblationRow> ablation_suite(const BenchmarkConfig& cfg) {
    const auto arms = ablation_arms(cfg);
    const auto res = run_benchmark(cfg, arms, false);
    auto delta = [](const Estimate& x, const Estimate& base) -> std::optional<double> {
        if (!x.value || !base.value) return std::nullopt;
        return *x.value - *base.value;
    };
    std::vector<AblationRow> rows;
    const EvalReport& full = res.reports.front();
    for (std::size_t i = 0; i < arms.size(); ++i) {
        const EvalReport& r = res.reports[i];
        rows.push_back({arms[i].name, r, delta(r.precision, full.precision), delta(r.coverage, full.coverage),
                        delta(r.mean_lead, full.mean_lead)});
    }
    return rows;
}

}  // namespace lobregime
