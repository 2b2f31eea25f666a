#include "lobregime/config.hpp"
#include "lobregime/theory.hpp"

#include <fstream>
#include <set>
#include <type_traits>

namespace lobregime {

using nlohmann::json;

namespace {

// Reads keys from one JSON object and remembers which ones were consumed so
// that typos surface as errors instead of silently using defaults.
class Section {
public:
    Section(json j, std::string path) : j_(std::move(j)), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    template <class T>
    void get(const std::string& key, T& out) {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) return;
        if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
            if (!it->is_number_unsigned()) throw ConfigError(where(key) + ": expected a non-negative integer");
        }
        try {
            out = it->template get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(where(key) + ": " + e.what());
        }
    }

    const json* find(const std::string& key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    Section sub(const std::string& key) {
        const json* p = find(key);
        return Section(p ? *p : json::object(), where(key));
    }

    std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!seen_.count(item.key())) throw ConfigError("unknown config key '" + where(item.key()) + "'");
        }
    }

private:
    json j_;
    std::string path_;
    std::set<std::string> seen_;
};

std::vector<double> to_vec(const Eigen::VectorXd& x) { return {x.data(), x.data() + x.size()}; }

Eigen::VectorXd vec_from(const json& j, std::size_t n, const std::string& where) {
    std::vector<double> v;
    try {
        v = j.get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw ConfigError(where + ": " + e.what());
    }
    if (n != 0 && v.size() != n) throw ConfigError(where + ": expected " + std::to_string(n) + " values");
    return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json mat_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_vec(m.row(r).transpose()));
    return rows;
}

Eigen::MatrixXd mat_from(const json& j, std::size_t n, const std::string& where) {
    if (!j.is_array() || (n != 0 && j.size() != n)) {
        throw ConfigError(where + ": expected a " + std::to_string(n) + "-row matrix");
    }
    const std::size_t rows = j.size();
    Eigen::MatrixXd m(rows, rows);
    for (std::size_t r = 0; r < rows; ++r) {
        m.row(static_cast<Eigen::Index>(r)) = vec_from(j[r], rows, where).transpose();
    }
    return m;
}

template <class F>
auto rethrow_as_config(const std::string& where, F&& f) {
    try {
        return f();
    } catch (const ParameterError& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

Aggregation parse_aggregation(const std::string& s) {
    if (s == "max") return Aggregation::Max;
    if (s == "sum") return Aggregation::Sum;
    throw ConfigError("signal.aggregation: expected \"max\" or \"sum\", got \"" + s + "\"");
}

// ---------------------------------------------------------------------------

void read_dgp(Section s, DgpParams& p) {
    s.get("p01", p.p01);
    s.get("p12", p.p12);
    s.get("p20", p.p20);
    s.get("alpha", p.alpha);
    s.get("T", p.T);
    if (const json* n = s.find("noise")) {
        if (!n->is_number()) throw ConfigError(s.where("noise") + ": expected a number");
        p.set_noise(n->get<double>());
    }
    if (const json* m = s.find("sigma")) p.sigma = mat_from(*m, 4, s.where("sigma"));
    if (const json* m = s.find("mu")) {
        if (!m->is_array() || m->size() != kNumRegimes) throw ConfigError(s.where("mu") + ": expected 3 mean vectors");
        for (std::size_t k = 0; k < kNumRegimes; ++k) p.mu[k] = vec_from((*m)[k], 4, s.where("mu"));
    }
    if (const json* v = s.find("v")) {
        Eigen::Vector4d dir = vec_from(*v, 4, s.where("v"));
        if (!(dir.norm() > 0.0)) throw ConfigError(s.where("v") + ": drift direction must be nonzero");
        // Leave already-unit vectors untouched so a dumped config reloads bit-identically.
        p.v = std::abs(dir.norm() - 1.0) < 1e-12 ? dir : dir.normalized();
    }
    s.finish();
}

json dgp_json(const DgpParams& p) {
    json mu = json::array();
    for (const auto& m : p.mu) mu.push_back(to_vec(m));
    return {{"p01", p.p01}, {"p12", p.p12}, {"p20", p.p20}, {"alpha", p.alpha}, {"T", p.T},
            {"mu", mu},     {"v", to_vec(p.v)}, {"sigma", mat_to_json(p.sigma)}};
}

void read_signal(Section s, SignalConfig& c) {
    s.get("w", c.w);
    s.get("baseline_window", c.baseline_window);
    s.get("epsilon", c.epsilon);
    s.get("use_entropy", c.use_entropy);
    s.get("squash_cap", c.squash_cap);
    std::string agg;
    s.get("aggregation", agg);
    if (!agg.empty()) c.aggregation = parse_aggregation(agg);
    s.finish();
}

json signal_json(const SignalConfig& c) {
    return {{"w", c.w},
            {"baseline_window", c.baseline_window},
            {"epsilon", c.epsilon},
            {"aggregation", c.aggregation == Aggregation::Max ? "max" : "sum"},
            {"use_entropy", c.use_entropy},
            {"squash_cap", c.squash_cap}};
}

void read_trigger(Section s, TriggerConfig& c) {
    s.get("percentile", c.percentile_p);
    s.get("suppression", c.suppression_L);
    s.get("burn_in", c.burn_in);
    s.get("threshold_update_interval", c.threshold_update_interval);
    s.get("rising_edge", c.rising_edge);
    std::string variant;
    s.get("variant", variant);
    if (!variant.empty()) c.variant = rethrow_as_config(s.where("variant"), [&] { return parse_variant(variant); });
    s.finish();
}

json trigger_json(const TriggerConfig& c) {
    return {{"percentile", c.percentile_p},
            {"suppression", c.suppression_L},
            {"variant", std::string(variant_name(c.variant))},
            {"burn_in", c.burn_in},
            {"threshold_update_interval", c.threshold_update_interval},
            {"rising_edge", c.rising_edge}};
}

void read_hmm(Section s, std::size_t& restarts, std::size_t& iters) {
    s.get("restarts", restarts);
    s.get("iters", iters);
    s.finish();
}

void read_replay(Section s, ReplaySettings& r) {
    ReplayConfig& c = r.cfg;
    s.get("inputs", r.inputs);
    std::int64_t start = 0;
    if (s.find("test_start_epoch_s")) {
        s.get("test_start_epoch_s", start);
        r.test_start_epoch_s = start;
    }
    s.get("fixture", r.fixture);
    read_signal(s.sub("signal"), c.signal);
    read_trigger(s.sub("trigger"), c.trigger);
    s.get("match_window", c.match_window);
    s.get("train_window", c.train_window);
    s.get("exclude_open", c.exclude_open);
    s.get("seed", c.seed);
    read_hmm(s.sub("hmm"), c.hmm_restarts, c.hmm_iters);
    {
        Section b = s.sub("binning");
        b.get("depth_levels", c.binning.depth_levels);
        b.get("vol_window", c.binning.vol_window);
        b.get("max_fill", c.binning.max_fill);
        b.get("smooth_sigma", c.binning.smooth_sigma);
        b.finish();
    }
    {
        Section z = s.sub("zscore");
        z.get("window", c.zscore.window);
        z.get("epsilon", c.zscore.epsilon);
        z.finish();
    }
    {
        Section l = s.sub("labels");
        l.get("median_window", c.labels.median_window);
        l.get("multiple", c.labels.multiple);
        l.get("min_duration", c.labels.min_duration);
        l.finish();
    }
    {
        FixtureSpec& f = r.fixture_spec;
        Section x = s.sub("fixture_spec");
        x.get("start_epoch_s", f.start_epoch_s);
        x.get("train_days", f.train_days);
        x.get("test_days", f.test_days);
        x.get("episodes_per_day", f.episodes_per_day);
        x.get("plant_test_episodes", f.plant_test_episodes);
        x.get("buildup_s", f.buildup_s);
        x.get("stress_s", f.stress_s);
        x.get("train_noise", f.train_noise);
        x.get("test_noise", f.test_noise);
        x.get("seed", f.seed);
        x.finish();
    }
    s.finish();
}

json replay_json(const ReplaySettings& r) {
    const ReplayConfig& c = r.cfg;
    const FixtureSpec& f = r.fixture_spec;
    json j = {{"inputs", r.inputs},
              {"fixture", r.fixture},
              {"signal", signal_json(c.signal)},
              {"trigger", trigger_json(c.trigger)},
              {"match_window", c.match_window},
              {"train_window", c.train_window},
              {"exclude_open", c.exclude_open},
              {"seed", c.seed},
              {"hmm", {{"restarts", c.hmm_restarts}, {"iters", c.hmm_iters}}},
              {"binning",
               {{"depth_levels", c.binning.depth_levels},
                {"vol_window", c.binning.vol_window},
                {"max_fill", c.binning.max_fill},
                {"smooth_sigma", c.binning.smooth_sigma}}},
              {"zscore", {{"window", c.zscore.window}, {"epsilon", c.zscore.epsilon}}},
              {"labels",
               {{"median_window", c.labels.median_window},
                {"multiple", c.labels.multiple},
                {"min_duration", c.labels.min_duration}}},
              {"fixture_spec",
               {{"start_epoch_s", f.start_epoch_s},
                {"train_days", f.train_days},
                {"test_days", f.test_days},
                {"episodes_per_day", f.episodes_per_day},
                {"plant_test_episodes", f.plant_test_episodes},
                {"buildup_s", f.buildup_s},
                {"stress_s", f.stress_s},
                {"train_noise", f.train_noise},
                {"test_noise", f.test_noise},
                {"seed", f.seed}}}};
    if (r.test_start_epoch_s) j["test_start_epoch_s"] = *r.test_start_epoch_s;
    return j;
}

}  // namespace

// ===========================================================================

std::string_view experiment_name(Experiment e) {
    switch (e) {
        case Experiment::Simulate: return "simulate";
        case Experiment::Detect: return "detect";
        case Experiment::Benchmark: return "benchmark";
        case Experiment::Sweep: return "sweep";
        case Experiment::Grid: return "grid";
        case Experiment::Ablation: return "ablation";
        case Experiment::Bounds: return "bounds";
        case Experiment::Replay: return "replay";
    }
    return "unknown";
}

Experiment parse_experiment(std::string_view name) {
    for (auto e : {Experiment::Simulate, Experiment::Detect, Experiment::Benchmark, Experiment::Sweep,
                   Experiment::Grid, Experiment::Ablation, Experiment::Bounds, Experiment::Replay}) {
        if (experiment_name(e) == name) return e;
    }
    throw UnknownExperimentError("unknown experiment: " + std::string(name));
}

void ExperimentConfig::validate() const {
    bench.validate();
    if (output_dir.empty()) throw ParameterError("output_dir must not be empty");
    for (double p : sweep.percentiles) {
        if (!(p >= 70.0 && p <= 95.0)) throw ParameterError("sweep percentiles must lie in [70, 95]");
    }
    for (double p : grid.p12) {
        if (!(p > 0.0 && p < 1.0)) throw ParameterError("grid delays (p12) must lie in (0, 1)");
    }
    for (double s : grid.noise) {
        if (!(s > 0.0)) throw ParameterError("grid noise levels must be positive");
    }
    if (grid.runs_per_cell == 0) throw ParameterError("grid runs_per_cell must be at least 1");
    if (bounds.mc_samples < theory::kMinMcSamples) throw ParameterError("bounds mc_samples must be at least 10000");
    for (double e : bounds.eta) {
        if (!(e >= 0.0)) throw ParameterError("bounds eta must be non-negative");
    }
    for (double t : bounds.t1) {
        if (!(t >= 1.0)) throw ParameterError("bounds t1 must be at least 1");
    }
    for (double d : bounds.delta) {
        if (!(d > 0.0 && d < 1.0)) throw ParameterError("bounds delta must lie in (0, 1)");
    }
    if (experiment == Experiment::Replay && !replay.fixture && replay.inputs.empty()) {
        throw ParameterError("replay needs input files or fixture = true");
    }
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig cfg;
    Section root(j, "");
    std::string exp;
    root.get("experiment", exp);
    if (!exp.empty()) cfg.experiment = parse_experiment(exp);
    root.get("output_dir", cfg.output_dir);
    root.get("n_runs", cfg.bench.n_runs);
    root.get("seed", cfg.bench.seed);
    root.get("threads", cfg.bench.threads);
    read_hmm(root.sub("hmm"), cfg.bench.hmm_restarts, cfg.bench.hmm_iters);
    read_dgp(root.sub("dgp"), cfg.bench.dgp);
    read_signal(root.sub("signal"), cfg.bench.signal);
    read_trigger(root.sub("trigger"), cfg.bench.trigger);
    {
        Section b = root.sub("baselines");
        b.get("percentile", cfg.bench.baselines.percentile);
        b.get("bocpd_hazard", cfg.bench.baselines.bocpd_hazard);
        b.get("bocpd_max_run", cfg.bench.baselines.bocpd_max_run);
        b.get("smooth_window", cfg.bench.baselines.smooth_window);
        b.finish();
    }
    {
        Section s = root.sub("sweep");
        s.get("percentiles", cfg.sweep.percentiles);
        s.get("with_baselines", cfg.sweep.with_baselines);
        s.finish();
    }
    {
        Section g = root.sub("grid");
        g.get("p12", cfg.grid.p12);
        g.get("noise", cfg.grid.noise);
        g.get("runs_per_cell", cfg.grid.runs_per_cell);
        g.finish();
    }
    {
        Section b = root.sub("bounds");
        b.get("eta", cfg.bounds.eta);
        b.get("t1", cfg.bounds.t1);
        b.get("delta", cfg.bounds.delta);
        b.get("mc_samples", cfg.bounds.mc_samples);
        b.finish();
    }
    {
        Section d = root.sub("detect");
        d.get("input", cfg.input);
        d.get("model", cfg.model_path);
        d.get("run_index", cfg.run_index);
        d.finish();
    }
    read_replay(root.sub("replay"), cfg.replay);
    root.finish();
    return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
    const BaselineConfig& b = cfg.bench.baselines;
    return {{"experiment", std::string(experiment_name(cfg.experiment))},
            {"output_dir", cfg.output_dir},
            {"n_runs", cfg.bench.n_runs},
            {"seed", cfg.bench.seed},
            {"threads", cfg.bench.threads},
            {"hmm", {{"restarts", cfg.bench.hmm_restarts}, {"iters", cfg.bench.hmm_iters}}},
            {"dgp", dgp_json(cfg.bench.dgp)},
            {"signal", signal_json(cfg.bench.signal)},
            {"trigger", trigger_json(cfg.bench.trigger)},
            {"baselines",
             {{"percentile", b.percentile},
              {"bocpd_hazard", b.bocpd_hazard},
              {"bocpd_max_run", b.bocpd_max_run},
              {"smooth_window", b.smooth_window}}},
            {"sweep", {{"percentiles", cfg.sweep.percentiles}, {"with_baselines", cfg.sweep.with_baselines}}},
            {"grid", {{"p12", cfg.grid.p12}, {"noise", cfg.grid.noise}, {"runs_per_cell", cfg.grid.runs_per_cell}}},
            {"bounds",
             {{"eta", cfg.bounds.eta},
              {"t1", cfg.bounds.t1},
              {"delta", cfg.bounds.delta},
              {"mc_samples", cfg.bounds.mc_samples}}},
            {"detect", {{"input", cfg.input}, {"model", cfg.model_path}, {"run_index", cfg.run_index}}},
            {"replay", replay_json(cfg.replay)}};
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

std::filesystem::path default_config_path() {
#ifdef LOBREGIME_DEFAULT_CONFIG
    return LOBREGIME_DEFAULT_CONFIG;
#else
    return "config/default.json";
#endif
}

// ===========================================================================
// HMM parameters
// ===========================================================================

json model_to_json(const HmmModel& m) {
    json means = json::array();
    json covs = json::array();
    for (std::size_t k = 0; k < HmmModel::n_states; ++k) {
        means.push_back(to_vec(m.means[k]));
        covs.push_back(mat_to_json(m.covs[k]));
    }
    return {{"trans", mat_to_json(m.trans)},
            {"init", to_vec(m.init)},
            {"means", means},
            {"covs", covs},
            {"log_likelihood", m.log_likelihood}};
}

HmmModel model_from_json(const json& j) {
    HmmModel m;
    Section s(j, "model");
    const json* trans = s.find("trans");
    const json* init = s.find("init");
    const json* means = s.find("means");
    const json* covs = s.find("covs");
    if (!trans || !init || !means || !covs) throw ConfigError("model: needs trans, init, means and covs");
    m.trans = mat_from(*trans, 3, "model.trans");
    m.init = vec_from(*init, 3, "model.init");
    if (!means->is_array() || means->size() != 3 || !covs->is_array() || covs->size() != 3) {
        throw ConfigError("model: expected 3 means and 3 covariances");
    }
    for (std::size_t k = 0; k < HmmModel::n_states; ++k) {
        m.means[k] = vec_from((*means)[k], 0, "model.means");
        m.covs[k] = mat_from((*covs)[k], static_cast<std::size_t>(m.means[k].size()), "model.covs");
    }
    s.get("log_likelihood", m.log_likelihood);
    s.finish();
    rethrow_as_config("model", [&] {
        m.validate();
        m.prepare();
        return 0;
    });
    return m;
}

}  // namespace lobregime
