#include "lobregime/harness.hpp"

#include "lobregime/baselines.hpp"
#include "lobregime/benchmark.hpp"
#include "lobregime/rng.hpp"
#include "lobregime/theory.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

namespace lobregime {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<const char*, 13> kReportColumns = {
    "detector", "mean_lead",  "mean_lead_ci", "precision", "precision_ci", "coverage",   "coverage_ci",
    "mean_matched_lead", "mean_matched_lead_ci", "n_triggers", "n_events", "n_matched", "n_runs"};

const std::array<std::string, 3> kSnrBins = {"low", "medium", "high"};
const std::array<std::string, 3> kT1Bins = {"short", "medium", "long"};

// Collects files in memory; nothing touches disk until commit().
class OutputSet {
public:
    std::ostream& open(const std::string& name) {
        order_.push_back(name);
        return files_[name];
    }

    ExperimentOutput commit(const fs::path& dir, double wall_seconds) const {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw OutputError("cannot create output directory " + dir.string() + ": " + ec.message());
        for (const auto& name : order_) write(dir / name, files_.at(name).str());
        return {dir, order_, wall_seconds};
    }

    static void write(const fs::path& path, const std::string& content) {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw OutputError("cannot write " + path.string());
        out << content;
        out.flush();
        if (!out) throw OutputError("write failed: " + path.string());
    }

private:
    std::vector<std::string> order_;
    std::map<std::string, std::ostringstream> files_;
};

std::string csv_opt(const std::optional<double>& x) { return format_cell(x); }

// Report columns without the trailing newline.
void write_report_row(const std::string& name, const EvalReport& r, std::ostream& out) {
    out << name << "," << format_cell(r.mean_lead.value) << ","
        << (r.mean_lead.value ? format_sig(r.mean_lead.ci) : "") << "," << format_cell(r.precision.value)
        << "," << (r.precision.value ? format_sig(r.precision.ci) : "") << ","
        << format_cell(r.coverage.value) << "," << (r.coverage.value ? format_sig(r.coverage.ci) : "") << ","
        << format_cell(r.mean_matched_lead.value) << ","
        << (r.mean_matched_lead.value ? format_sig(r.mean_matched_lead.ci) : "") << "," << r.n_triggers
        << "," << r.n_events << "," << r.n_matched << "," << r.n_runs;
}

json opt_json(const std::optional<double>& x) { return x ? json(*x) : json(nullptr); }

json report_json(const EvalReport& r) {
    json ch = json::object();
    for (std::size_t c = 0; c < kNumChannels; ++c) {
        ch[std::string(channel_name(static_cast<Channel>(c)))] = opt_json(r.per_channel_first[c]);
    }
    return {{"mean_lead", opt_json(r.mean_lead.value)},
            {"mean_lead_ci", r.mean_lead.ci},
            {"mean_matched_lead", opt_json(r.mean_matched_lead.value)},
            {"mean_matched_lead_ci", r.mean_matched_lead.ci},
            {"precision", opt_json(r.precision.value)},
            {"precision_ci", r.precision.ci},
            {"coverage", opt_json(r.coverage.value)},
            {"coverage_ci", r.coverage.ci},
            {"n_triggers", r.n_triggers},
            {"n_events", r.n_events},
            {"n_matched", r.n_matched},
            {"n_runs", r.n_runs},
            {"first_channel", ch}};
}

void log_report_line(std::ostream& log, const std::string& name, const EvalReport& r) {
    log << "  " << std::left << std::setw(18) << name << std::right << " lead=" << std::setw(8)
        << csv_opt(r.mean_lead.value) << " +- " << std::setw(6) << format_sig(r.mean_lead.ci)
        << "  precision=" << std::setw(6) << csv_opt(r.precision.value) << "  coverage=" << std::setw(6)
        << csv_opt(r.coverage.value) << "  triggers=" << r.n_triggers << "\n";
}

// One JSON object per alarm, full precision.
void write_events(const RunResult& run, std::ostream& out) {
    for (const auto& d : run.detectors) {
        std::vector<std::optional<Timestep>> onset(d.alarms.size());
        for (const auto& m : d.matches) {
            if (m.trigger_index) onset[*m.trigger_index] = m.stress.onset;
        }
        for (std::size_t i = 0; i < d.alarms.size(); ++i) {
            json e = {{"run", run.run_index}, {"seed", run.seed}, {"detector", d.name}, {"tau", d.alarms[i]}};
            if (i < d.triggers.size()) {
                const auto& t = d.triggers[i];
                e["score"] = t.score;
                e["prev_score"] = t.prev_score;
                e["threshold"] = t.threshold;
                e["channel"] = std::string(channel_name(t.first_channel));
            }
            e["matched"] = onset[i].has_value();
            e["stress_onset"] = onset[i] ? json(*onset[i]) : json(nullptr);
            out << e.dump() << "\n";
        }
    }
}

void write_runs(const BenchmarkResult& res, std::ostream& out) {
    for (const auto& r : res.runs) {
        const auto& th = r.thresholds;
        json j = {{"run", r.run_index},
                  {"seed", r.seed},
                  {"episodes", r.episodes.size()},
                  {"label_accuracy", r.label_accuracy},
                  {"thresholds",
                   {{"hmm_theta", th.hmm_theta},
                    {"cusum_mu0", th.cusum_mu0},
                    {"cusum_k", th.cusum_k},
                    {"cusum_h", th.cusum_h},
                    {"bocpd_hazard", th.bocpd_hazard},
                    {"bocpd_threshold", th.bocpd_threshold},
                    {"imbalance_theta", th.imbalance_theta},
                    {"volatility_theta", th.volatility_theta}}}};
        json det = json::object();
        for (const auto& d : r.detectors) {
            det[d.name] = {{"triggers", d.outcome.n_triggers},
                           {"events", d.outcome.n_events},
                           {"matched", d.outcome.n_matched}};
        }
        j["detectors"] = det;
        out << j.dump() << "\n";
    }
}

std::vector<NamedReport> named(const BenchmarkResult& res) {
    std::vector<NamedReport> rows;
    for (std::size_t i = 0; i < res.names.size(); ++i) rows.push_back({res.names[i], res.reports[i]});
    return rows;
}

void write_episodes_csv(std::span<const Episode> eps, std::ostream& out) {
    out << "buildup_start,stress_onset,stress_end,t1_obs\n";
    for (const auto& e : eps) {
        out << e.buildup_start << "," << e.stress_onset << "," << e.stress_end << "," << e.t1_obs << "\n";
    }
}

// ===========================================================================
// Experiments
// ===========================================================================

json experiment_simulate(const ExperimentConfig& cfg, OutputSet& out, std::ostream& log) {
    const std::uint64_t seed = derive_seed(cfg.bench.seed, cfg.run_index);
    const SimRun run = simulate_run(cfg.bench.dgp, seed);
    const auto eps = extract_episodes(run.labels);
    write_run_csv(run, out.open("run.csv"));
    write_episodes_csv(eps, out.open("episodes.csv"));
    log << "simulated " << run.frames.size() << " steps, " << eps.size() << " episodes (seed " << seed << ")\n";
    return {{"run_seed", seed}, {"episodes", eps.size()}};
}

json experiment_detect(const ExperimentConfig& cfg, OutputSet& out, std::ostream& log) {
    const BenchmarkConfig& b = cfg.bench;
    const std::uint64_t run_seed = derive_seed(b.seed, cfg.run_index);
    SimRun run;
    if (cfg.input.empty()) {
        run = simulate_run(b.dgp, run_seed);
    } else {
        std::ifstream in(cfg.input);
        if (!in) throw InputError("cannot open input run: " + cfg.input);
        run = read_run_csv(in);
    }
    if (run.frames.size() <= b.trigger.burn_in) throw InputError("input run is shorter than the burn-in");

    HmmModel model;
    if (cfg.model_path.empty()) {
        model = fit_aligned_model(run.frames, b, derive_seed(run_seed, 2));
    } else {
        std::ifstream in(cfg.model_path);
        if (!in) throw ConfigError("cannot open model file: " + cfg.model_path);
        try {
            model = model_from_json(json::parse(in));
        } catch (const json::parse_error& e) {
            throw ConfigError(cfg.model_path + ": " + e.what());
        }
    }

    std::vector<DetectorStep> trace;
    const TriggerArm arm = default_arm(b);
    const auto triggers = run_detector(run.frames, model, arm.signal, arm.trigger, &trace);

    std::vector<NamedReport> rows;
    if (!run.labels.empty()) {
        const auto eps = extract_episodes(run.labels);
        const auto events = events_from_episodes(eps, static_cast<Timestep>(b.trigger.burn_in));
        const auto times = trigger_times(triggers);
        const auto matches = match_triggers(times, events, eps, MatchMode::Simulation);
        const RunOutcome o = summarize_run(matches, times.size(), triggers);
        rows.push_back({arm.name, compute_report(std::span(&o, 1))});
    }

    auto& tj = out.open("triggers.jsonl");
    for (const auto& t : triggers) {
        tj << json{{"tau", t.tau},
                   {"score", t.score},
                   {"prev_score", t.prev_score},
                   {"threshold", t.threshold},
                   {"channel", std::string(channel_name(t.first_channel))},
                   {"variant", std::string(variant_name(t.variant))}}
                  .dump()
           << "\n";
    }
    auto& tr = out.open("trace.csv");
    tr << "t,score,threshold,ent,dep,spr,ofi,pi_stable,pi_buildup,pi_stress,fired\n";
    for (const auto& s : trace) {
        tr << s.raw.t << "," << format_sig(s.normalized.composite, 8) << ","
           << (std::isfinite(s.threshold) ? format_sig(s.threshold, 8) : "") << ","
           << format_sig(s.normalized.ent, 8) << "," << format_sig(s.normalized.dep, 8) << ","
           << format_sig(s.normalized.spr, 8) << "," << format_sig(s.normalized.ofi, 8) << ","
           << format_sig(s.posterior.pi(0), 8) << "," << format_sig(s.posterior.pi(1), 8) << ","
           << format_sig(s.posterior.pi(2), 8) << "," << (s.fired ? 1 : 0) << "\n";
    }
    out.open("model.json") << model_to_json(model).dump(2) << "\n";
    write_tables(rows, out.open("table1.csv"));
    log << "detect: " << triggers.size() << " triggers over " << run.frames.size() << " steps\n";
    for (const auto& r : rows) log_report_line(log, r.name, r.report);
    return {{"run_seed", run_seed}, {"triggers", triggers.size()}};
}

json experiment_benchmark(const ExperimentConfig& cfg, OutputSet& out, std::ostream& log) {
    const TriggerArm arm = default_arm(cfg.bench);
    const BenchmarkResult res = run_benchmark(cfg.bench, std::span(&arm, 1), true);
    const auto rows = named(res);
    write_tables(rows, out.open("table1.csv"));
    write_conditional(res.grid, out.open("conditional.csv"));
    write_channels(std::span(rows).first(1), out.open("channels.csv"));
    auto& ev = out.open("events.jsonl");
    for (const auto& r : res.runs) write_events(r, ev);
    write_runs(res, out.open("runs.jsonl"));

    log << "benchmark: " << cfg.bench.n_runs << " runs\n";
    for (const auto& r : rows) log_report_line(log, r.name, r.report);
    log << "  mean label accuracy (burn-in fit) = " << format_sig(res.mean_label_accuracy) << "\n";
    json reports = json::object();
    for (const auto& r : rows) reports[r.name] = report_json(r.report);
    return {{"reports", reports}, {"mean_label_accuracy", res.mean_label_accuracy}};
}

json experiment_sweep(const ExperimentConfig& cfg, OutputSet& out, std::ostream& log) {
    const auto points = pr_frontier(cfg.bench, cfg.sweep.percentiles, cfg.sweep.with_baselines);
    auto& csv = out.open("pr_frontier.csv");
    write_long_form_header(csv);
    for (const auto& p : points) {
        write_long_form(p.detector, "percentile=" + format_sig(p.percentile), p.report, csv);
    }
    log << "sweep: " << points.size() << " points\n";
    for (const auto& p : points) log_report_line(log, p.detector + "@" + format_sig(p.percentile), p.report);
    return {{"points", points.size()}};
}

json experiment_grid(const ExperimentConfig& cfg, OutputSet& out, std::ostream& log) {
    const auto cells = robustness_grid(cfg.bench, cfg.grid.p12, cfg.grid.noise, cfg.grid.runs_per_cell);
    auto& csv = out.open("robustness_grid.csv");
    write_long_form_header(csv);
    std::size_t positive = 0;
    const std::string name(variant_name(cfg.bench.trigger.variant));
    for (const auto& c : cells) {
        const std::string param = "p12=" + format_sig(c.p12) + ";noise=" + format_sig(c.noise);
        write_long_form(name, param, c.report, csv);
        csv << name << "," << param << ",lead_ci_includes_zero," << (c.lead_ci_includes_zero ? 1 : 0) << ",\n";
        if (c.report.mean_lead.value && *c.report.mean_lead.value > 0.0) ++positive;
        log_report_line(log, param, c.report);
    }
    log << "grid: mean lead positive in " << positive << " of " << cells.size() << " cells\n";
    return {{"cells", cells.size()}, {"positive_lead_cells", positive}};
}

json experiment_ablation(const ExperimentConfig& cfg, OutputSet& out, std::ostream& log) {
    const auto rows = ablation_suite(cfg.bench);
    auto& csv = out.open("ablation.csv");
    for (const char* c : report_columns()) csv << (std::string(c) == "detector" ? "arm" : c) << ",";
    csv << "d_precision,d_coverage,d_lead\n";
    for (const auto& row : rows) {
        write_report_row(row.arm, row.report, csv);
        csv << "," << csv_opt(row.d_precision) << "," << csv_opt(row.d_coverage) << ","
            << csv_opt(row.d_lead) << "\n";
        log_report_line(log, row.arm, row.report);
    }
    return {{"arms", rows.size()}};
}

json experiment_bounds(const ExperimentConfig& cfg, OutputSet& out, std::ostream& log) {
    const BoundsSettings& g = cfg.bounds;
    struct Point {
        theory::BoundInputs in;
        std::size_t index;
    };
    std::vector<Point> points;
    for (double eta : g.eta) {
        for (double t1 : g.t1) {
            for (double delta : g.delta) points.push_back({{eta, t1, delta, 0.0}, points.size()});
        }
    }
    for (const auto& p : points) p.in.validate();
    std::vector<theory::McEstimate> mc(points.size());
    parallel_for(points.size(), cfg.bench.threads, [&](std::size_t i) {
        mc[i] = theory::mc_stopping_probability(points[i].in, g.mc_samples, derive_seed(cfg.bench.seed, i));
    });

    auto& csv = out.open("bounds_vs_mc.csv");
    csv << "eta,t1,delta,critical_eta,snr_sufficient,bound,bound_raw,mc_estimate,mc_se,bound_holds,"
           "coupling_violations\n";
    std::uint64_t violations = 0;
    std::size_t failures = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& in = points[i].in;
        const double bound = theory::early_detection_bound(in);
        const bool holds = bound <= 0.0 || mc[i].p >= bound - 3.0 * mc[i].se;
        violations += mc[i].coupling_violations;
        failures += holds ? 0 : 1;
        csv << format_sig(in.eta) << "," << format_sig(in.t1) << "," << format_sig(in.delta) << ","
            << format_sig(theory::critical_eta(in.t1, in.delta)) << "," << (theory::snr_sufficient(in) ? 1 : 0)
            << "," << format_sig(bound) << "," << format_sig(theory::early_detection_bound_raw(in)) << ","
            << format_sig(mc[i].p) << "," << format_sig(mc[i].se) << "," << (holds ? 1 : 0) << ","
            << mc[i].coupling_violations << "\n";
    }

    // Coverage ceiling for a few target lead-times.
    auto& tr = out.open("tradeoff.csv");
    tr << "eta,t1,ell,coverage_upper_bound\n";
    for (double eta : g.eta) {
        for (double t1 : g.t1) {
            for (double ell : {5.0, 10.0, 20.0, 50.0}) {
                const theory::BoundInputs in{eta, t1, 0.1, ell};
                tr << format_sig(eta) << "," << format_sig(t1) << "," << format_sig(ell) << ","
                   << format_sig(theory::coverage_upper_bound(in)) << "\n";
            }
        }
    }
    log << "bounds: " << points.size() << " grid points, " << failures << " bound failures, " << violations
        << " coupling violations\n";
    return {{"points", points.size()}, {"bound_failures", failures}, {"coupling_violations", violations}};
}

std::int64_t default_test_start(std::span<const RawSnapshot> snaps, Timestep train_window) {
    std::int64_t first = snaps.front().timestamp_ms;
    for (const auto& s : snaps) first = std::min(first, s.timestamp_ms);
    const std::int64_t origin = first >= 0 ? first / 1000 : -((-first + 999) / 1000);
    const std::int64_t day0 = origin - ((origin % kSecondsPerDay) + kSecondsPerDay) % kSecondsPerDay;
    const std::int64_t need = origin - day0 + train_window;
    return day0 + (need + kSecondsPerDay - 1) / kSecondsPerDay * kSecondsPerDay;
}

json experiment_replay(const ExperimentConfig& cfg, OutputSet& out, std::ostream& log) {
    const ReplaySettings& r = cfg.replay;
    std::vector<RawSnapshot> snaps;
    std::int64_t test_start = 0;
    json extra = json::object();
    if (r.fixture) {
        const Fixture fx = make_replay_fixture(r.fixture_spec);
        for (const auto& day : fx.days) snaps.insert(snaps.end(), day.begin(), day.end());
        test_start = fx.test_start_epoch_s;
        auto& pe = out.open("planted_episodes.csv");
        pe << "buildup_start_epoch_s,onset_epoch_s,end_epoch_s\n";
        for (const auto& e : fx.test_episodes) {
            pe << e.buildup_start_epoch_s << "," << e.onset_epoch_s << "," << e.end_epoch_s << "\n";
        }
        extra["planted_episodes"] = fx.test_episodes.size();
    } else {
        std::vector<fs::path> paths(r.inputs.begin(), r.inputs.end());
        for (const auto& p : paths) {
            if (!fs::exists(p)) throw InputError("replay input not found: " + p.string());
        }
        snaps = read_snapshot_files(paths);
        if (snaps.empty()) throw InputError("replay inputs contain no snapshots");
        test_start = default_test_start(snaps, r.cfg.train_window);
    }
    if (r.test_start_epoch_s) test_start = *r.test_start_epoch_s;

    const ReplayResult res = replay_detect(snaps, test_start, r.cfg);
    const NamedReport row{"replay_" + std::string(variant_name(r.cfg.trigger.variant)), res.report};
    write_tables(std::span(&row, 1), out.open("table1.csv"));
    write_channels(std::span(&row, 1), out.open("channels.csv"));

    auto& tj = out.open("replay_triggers.jsonl");
    std::vector<std::optional<Timestep>> onset(res.triggers.size());
    for (const auto& m : res.matches) {
        if (m.trigger_index) onset[*m.trigger_index] = m.stress.onset;
    }
    const std::int64_t origin = res.triggers.empty() ? 0 : res.triggers.front().epoch_s - res.triggers.front().event.tau;
    for (std::size_t i = 0; i < res.triggers.size(); ++i) {
        const auto& t = res.triggers[i];
        tj << json{{"tau", t.event.tau},
                   {"epoch_s", t.epoch_s},
                   {"score", t.event.score},
                   {"prev_score", t.event.prev_score},
                   {"threshold", t.event.threshold},
                   {"channel", std::string(channel_name(t.event.first_channel))},
                   {"matched", onset[i].has_value()},
                   {"stress_onset", onset[i] ? json(*onset[i]) : json(nullptr)}}
                  .dump()
           << "\n";
    }
    auto& lab = out.open("stress_labels.csv");
    lab << "onset,duration,matched,lead_time,response_lead\n";
    for (std::size_t i = 0; i < res.labels.size() && i < res.matches.size(); ++i) {
        const auto& m = res.matches[i];
        auto opt = [](const std::optional<Timestep>& x) { return x ? std::to_string(*x) : std::string(); };
        lab << res.labels[i].onset << "," << res.labels[i].duration << "," << (m.trigger_index ? 1 : 0) << ","
            << opt(m.lead_time) << "," << opt(m.response_lead) << "\n";
    }
    log << "replay: " << res.test_days << " test day(s), " << res.labels.size() << " stress labels, "
        << res.triggers.size() << " triggers, " << res.seasonal_fallback_bins << " seasonal fallback bins\n";
    log_report_line(log, row.name, row.report);
    extra["report"] = report_json(res.report);
    extra["test_start_epoch_s"] = test_start;
    extra["origin_epoch_s"] = origin;
    extra["binning"] = {{"crossed_dropped", res.binning.crossed_dropped},
                        {"filled", res.binning.filled},
                        {"missing", res.binning.missing}};
    return extra;
}

}  // namespace

// ===========================================================================
// Public API
// ===========================================================================

std::string format_sig(double x, int digits) {
    if (std::isnan(x)) return "";
    if (x == 0.0) return "0";  // also folds -0
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", digits, x);
    return buf;
}

std::string format_cell(const std::optional<double>& x, int digits) {
    return x ? format_sig(*x, digits) : std::string();
}

std::span<const char* const> report_columns() { return kReportColumns; }

void write_tables(std::span<const NamedReport> rows, std::ostream& out) {
    for (std::size_t i = 0; i < kReportColumns.size(); ++i) out << (i ? "," : "") << kReportColumns[i];
    out << "\n";
    for (const auto& row : rows) {
        write_report_row(row.name, row.report, out);
        out << "\n";
    }
}

void write_tables(std::span<const NamedReport> rows, const fs::path& path) {
    std::ostringstream ss;
    write_tables(rows, ss);
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw OutputError("cannot create " + path.parent_path().string() + ": " + ec.message());
    }
    OutputSet::write(path, ss.str());
}

void write_conditional(const CoverageGrid& grid, std::ostream& out) {
    out << "snr_bin,t1_bin,coverage,se,count\n";
    for (std::size_t s = 0; s < 3; ++s) {
        for (std::size_t t = 0; t < 3; ++t) {
            out << kSnrBins[s] << "," << kT1Bins[t] << "," << format_cell(grid.coverage[s][t]) << ","
                << (grid.coverage[s][t] ? format_sig(grid.se[s][t]) : "") << "," << grid.count[s][t] << "\n";
        }
    }
}

void write_channels(std::span<const NamedReport> rows, std::ostream& out) {
    out << "detector,channel,fraction\n";
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < kNumChannels; ++c) {
            out << row.name << "," << channel_name(static_cast<Channel>(c)) << ","
                << format_cell(row.report.per_channel_first[c]) << "\n";
        }
    }
}

void write_long_form_header(std::ostream& out) { out << "detector,parameter,metric,value,ci\n"; }

void write_long_form(const std::string& detector, const std::string& parameter, const EvalReport& r,
                     std::ostream& out) {
    auto est = [&](const char* metric, const Estimate& e) {
        out << detector << "," << parameter << "," << metric << "," << format_cell(e.value) << ","
            << (e.value ? format_sig(e.ci) : "") << "\n";
    };
    auto count = [&](const char* metric, std::size_t n) {
        out << detector << "," << parameter << "," << metric << "," << n << ",\n";
    };
    est("mean_lead", r.mean_lead);
    est("mean_matched_lead", r.mean_matched_lead);
    est("precision", r.precision);
    est("coverage", r.coverage);
    count("n_triggers", r.n_triggers);
    count("n_events", r.n_events);
    count("n_matched", r.n_matched);
}

std::string config_hash(const ExperimentConfig& cfg) {
    const std::string s = config_to_json(cfg).dump();
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string git_describe() {
#ifdef LOBREGIME_GIT_DESCRIBE
    return LOBREGIME_GIT_DESCRIBE;
#else
    return "unknown";
#endif
}

fs::path resolve_output_dir(const std::string& output_dir) {
    fs::path p(output_dir);
    if (p.is_relative()) {
        if (const char* root = std::getenv(kOutputRootEnv); root && *root) p = fs::path(root) / p;
    }
    return p;
}

ExperimentOutput run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
    try {
        cfg.validate();
    } catch (const ParameterError& e) {
        throw ConfigError(e.what());
    }
    const auto start = std::chrono::steady_clock::now();
    OutputSet out;
    json summary;
    switch (cfg.experiment) {
        case Experiment::Simulate: summary = experiment_simulate(cfg, out, log); break;
        case Experiment::Detect: summary = experiment_detect(cfg, out, log); break;
        case Experiment::Benchmark: summary = experiment_benchmark(cfg, out, log); break;
        case Experiment::Sweep: summary = experiment_sweep(cfg, out, log); break;
        case Experiment::Grid: summary = experiment_grid(cfg, out, log); break;
        case Experiment::Ablation: summary = experiment_ablation(cfg, out, log); break;
        case Experiment::Bounds: summary = experiment_bounds(cfg, out, log); break;
        case Experiment::Replay: summary = experiment_replay(cfg, out, log); break;
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const json config = config_to_json(cfg);
    out.open("config.json") << config.dump(2) << "\n";
    json manifest = {{"experiment", std::string(experiment_name(cfg.experiment))},
                     {"config_hash", config_hash(cfg)},
                     {"seed", cfg.bench.seed},
                     {"git_describe", git_describe()},
                     {"wall_seconds", wall},
                     {"summary", summary},
                     {"config", config}};
    out.open("manifest.json") << manifest.dump(2) << "\n";
    return out.commit(resolve_output_dir(cfg.output_dir), wall);
}

int run_experiment_main(const ExperimentConfig& cfg, std::ostream& log, std::ostream& err) {
    try {
        const auto res = run_experiment(cfg, log);
        log << "wrote " << res.files.size() << " files to " << res.dir.string() << " in "
            << format_sig(res.wall_seconds, 3) << " s\n";
        return kExitOk;
    } catch (const UnknownExperimentError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUnknownExperiment;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const ParameterError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const OutputError& e) {
        err << "output error: " << e.what() << "\n";
        return kExitOutputError;
    } catch (const InputError& e) {
        err << "input error: " << e.what() << "\n";
        return kExitInputError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

}  // namespace lobregime
