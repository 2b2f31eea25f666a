// Command-line front end: one subcommand per experiment.
#include "lobregime/config.hpp"
#include "lobregime/harness.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

using namespace lobregime;

namespace {

// Flag values; unset flags leave the config file value alone.
struct Overrides {
    std::string config;
    std::optional<std::string> output;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> runs;
    std::optional<std::size_t> threads;
    std::optional<std::size_t> hmm_restarts;
    std::optional<std::size_t> hmm_iters;

    std::optional<double> p01, p12, p20, alpha, noise;
    std::optional<std::size_t> T;

    std::optional<std::size_t> w;
    std::optional<std::string> aggregation;
    std::optional<bool> no_entropy;

    std::optional<double> percentile;
    std::optional<Timestep> suppression;
    std::optional<std::string> variant;
    std::optional<std::size_t> burn_in;

    // experiment specific
    std::optional<std::string> input;
    std::optional<std::string> model;
    std::optional<std::size_t> run_index;
    std::vector<double> percentiles;
    std::optional<std::size_t> runs_per_cell;
    std::optional<std::string> bounds_grid;
    std::optional<std::uint64_t> mc_samples;
    std::vector<std::string> replay_inputs;
    bool fixture = false;
    std::optional<std::int64_t> test_start;
};

void add_common(CLI::App* sub, Overrides& o) {
    sub->add_option("-c,--config", o.config, "JSON config file (default: shipped config/default.json)");
    sub->add_option("-o,--output", o.output, "output directory");
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--runs", o.runs, "number of simulated runs");
    sub->add_option("--threads", o.threads, "worker threads (0 = all cores)");
    sub->add_option("--hmm-restarts", o.hmm_restarts, "Baum-Welch restarts");
    sub->add_option("--hmm-iters", o.hmm_iters, "Baum-Welch iterations per restart");

    sub->add_option("--p01", o.p01, "stable -> build-up probability");
    sub->add_option("--p12", o.p12, "build-up -> stress probability");
    sub->add_option("--p20", o.p20, "stress -> stable probability");
    sub->add_option("--alpha", o.alpha, "build-up drift per step");
    sub->add_option("--noise", o.noise, "isotropic noise standard deviation");
    sub->add_option("--T", o.T, "steps per run");

    sub->add_option("--w", o.w, "signal lookback window");
    sub->add_option("--aggregation", o.aggregation, "channel aggregation")->check(CLI::IsMember({"max", "sum"}));
    sub->add_flag("--no-entropy", o.no_entropy, "drop the entropy channel");

    sub->add_option("--percentile", o.percentile, "trigger threshold percentile");
    sub->add_option("--suppression", o.suppression, "minimum spacing between triggers");
    sub->add_option("--variant", o.variant, "trigger variant")
        ->check(CLI::IsMember({"standard", "adaptive", "multi"}));
    sub->add_option("--burn-in", o.burn_in, "burn-in steps");
}

template <class T>
void apply(const std::optional<T>& src, T& dst) {
    if (src) dst = *src;
}

void apply_overrides(const Overrides& o, ExperimentConfig& cfg) {
    BenchmarkConfig& b = cfg.bench;
    apply(o.output, cfg.output_dir);
    apply(o.seed, b.seed);
    apply(o.runs, b.n_runs);
    apply(o.threads, b.threads);
    apply(o.hmm_restarts, b.hmm_restarts);
    apply(o.hmm_iters, b.hmm_iters);
    apply(o.p01, b.dgp.p01);
    apply(o.p12, b.dgp.p12);
    apply(o.p20, b.dgp.p20);
    apply(o.alpha, b.dgp.alpha);
    if (o.noise) b.dgp.set_noise(*o.noise);
    apply(o.T, b.dgp.T);
    apply(o.w, b.signal.w);
    if (o.aggregation) b.signal.aggregation = *o.aggregation == "sum" ? Aggregation::Sum : Aggregation::Max;
    if (o.no_entropy && *o.no_entropy) b.signal.use_entropy = false;
    apply(o.percentile, b.trigger.percentile_p);
    apply(o.suppression, b.trigger.suppression_L);
    if (o.variant) b.trigger.variant = parse_variant(*o.variant);
    apply(o.burn_in, b.trigger.burn_in);

    apply(o.input, cfg.input);
    apply(o.model, cfg.model_path);
    apply(o.run_index, cfg.run_index);
    if (!o.percentiles.empty()) cfg.sweep.percentiles = o.percentiles;
    apply(o.runs_per_cell, cfg.grid.runs_per_cell);
    if (o.bounds_grid && *o.bounds_grid == "quick") cfg.bounds.mc_samples = 10000;
    apply(o.mc_samples, cfg.bounds.mc_samples);

    if (cfg.experiment == Experiment::Replay) {
        ReplayConfig& r = cfg.replay.cfg;
        if (!o.replay_inputs.empty()) cfg.replay.inputs = o.replay_inputs;
        if (o.fixture) cfg.replay.fixture = true;
        if (o.test_start) cfg.replay.test_start_epoch_s = o.test_start;
        apply(o.seed, r.seed);
        apply(o.hmm_restarts, r.hmm_restarts);
        apply(o.hmm_iters, r.hmm_iters);
        apply(o.w, r.signal.w);
        apply(o.percentile, r.trigger.percentile_p);
        apply(o.suppression, r.trigger.suppression_L);
        if (o.variant) r.trigger.variant = parse_variant(*o.variant);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Regime early-warning detector and benchmark harness"};
    app.require_subcommand(1);
    Overrides o;

    struct Entry {
        Experiment exp;
        const char* help;
        CLI::App* sub = nullptr;
    };
    std::vector<Entry> entries = {
        {Experiment::Simulate, "simulate one labelled run"},
        {Experiment::Detect, "run the trigger detector on one run"},
        {Experiment::Benchmark, "trigger vs. baselines over many runs"},
        {Experiment::Sweep, "threshold sweep / precision-coverage frontier"},
        {Experiment::Grid, "delay x noise robustness grid"},
        {Experiment::Ablation, "trigger ablations"},
        {Experiment::Bounds, "analytical bounds vs. Monte Carlo"},
        {Experiment::Replay, "replay recorded order-book snapshots"},
    };
    for (auto& e : entries) {
        e.sub = app.add_subcommand(std::string(experiment_name(e.exp)), e.help);
        add_common(e.sub, o);
    }
    CLI::App* detect = entries[1].sub;
    detect->add_option("--input", o.input, "run CSV written by simulate (default: simulate one)");
    detect->add_option("--model", o.model, "HMM parameters as JSON (default: fit on burn-in)");
    detect->add_option("--run-index", o.run_index, "run index for the derived seed");
    entries[0].sub->add_option("--run-index", o.run_index, "run index for the derived seed");
    entries[3].sub->add_option("--percentiles", o.percentiles, "percentiles to sweep")->delimiter(',');
    entries[4].sub->add_option("--runs-per-cell", o.runs_per_cell, "runs per grid cell");
    entries[6].sub->add_option("--grid", o.bounds_grid, "bound grid preset")->check(CLI::IsMember({"default", "quick"}));
    entries[6].sub->add_option("--samples", o.mc_samples, "Monte-Carlo trials per grid point");
    CLI::App* replay = entries[7].sub;
    replay->add_option("--input", o.replay_inputs, "snapshot CSV files");
    replay->add_flag("--fixture", o.fixture, "generate the synthetic planted-episode fixture");
    replay->add_option("--test-start", o.test_start, "first evaluated UTC midnight (epoch seconds)");

    CLI11_PARSE(app, argc, argv);

    Experiment exp = Experiment::Benchmark;
    for (const auto& e : entries) {
        if (e.sub->parsed()) exp = e.exp;
    }

    ExperimentConfig cfg;
    try {
        cfg = load_config(o.config.empty() ? default_config_path() : std::filesystem::path(o.config));
        cfg.experiment = exp;
        apply_overrides(o, cfg);
    } catch (const UnknownExperimentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUnknownExperiment;
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    }
    return run_experiment_main(cfg, std::cout, std::cerr);
}
