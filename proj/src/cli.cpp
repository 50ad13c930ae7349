#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "excon/error.hpp"
#include "excon/harness.hpp"

namespace excon {

namespace {

// Writes to the named file, or to `fallback` when the name is empty or "-".
class Sink {
public:
    Sink(const std::string& path, std::ostream& fallback) : out_(&fallback) {
        if (!path.empty() && path != "-") {
            file_ = std::make_unique<std::ofstream>(path);
            if (!*file_) throw Error("cannot open '" + path + "' for writing");
            out_ = file_.get();
        }
    }
    std::ostream& stream() { return *out_; }
    void finish() {
        out_->flush();
        if (!*out_) throw Error("write failed");
    }

private:
    std::unique_ptr<std::ofstream> file_;
    std::ostream* out_;
};

ConfigDocument load_or_empty(const std::string& path) {
    return path.empty() ? ConfigDocument{} : ConfigDocument::load(path);
}

struct GenerateArgs {
    std::string config, out, target_out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> n;
    bool decimal = false;
};

void cmd_generate(const GenerateArgs& a) {
    const ConfigDocument doc = load_or_empty(a.config);
    GeneratorConfig g;
    if (const auto* s = doc.section("generator")) g = read_generator_config(*s);
    if (a.seed) g.seed = *a.seed;
    if (a.n) g.n = *a.n;
    const SyntheticTask task = gen_synthetic(g);
    write_csv_dataset(a.out, task.data, !a.decimal);
    if (!a.target_out.empty()) {
        std::ofstream f(a.target_out);
        if (!f) throw Error("cannot open '" + a.target_out + "' for writing");
        write_model(f, task.target);
    }
}

struct TrainArgs {
    std::string data, config, out, metrics, method;
    std::optional<std::uint64_t> seed;
};

void cmd_train(const TrainArgs& a, std::ostream& out) {
    const ConfigDocument doc = load_or_empty(a.config);
    TrainConfig tc;
    if (const auto* s = doc.section("train")) tc = read_train_config(*s);
    if (!a.method.empty()) tc.method = parse_method(a.method);
    if (const auto* s = doc.section("train." + to_string(tc.method))) tc = read_train_config(*s, tc);
    if (a.seed) tc.seed = *a.seed;
    SurrogateSpec spec = SurrogateSpec::grad_l2();
    if (const auto* s = doc.section("surrogate")) spec = read_surrogate_spec(*s);
    const DatasetBundle data = read_csv_dataset(a.data);
    const Monitor mon{data.test.size() ? &data.test : nullptr, nullptr, nullptr};
    const TrainRun run = train(data, spec, tc, mon);
    {
        Sink sink(a.out, out);
        write_model(sink.stream(), run.model);
        sink.finish();
    }
    if (!a.metrics.empty()) {
        Sink sink(a.metrics, out);
        write_metrics_csv(sink.stream(), {run}, data.labeled.size(), data.unlabeled.size(),
                          data.explanations.size());
        sink.finish();
    }
    for (const std::string& w : run.warnings) std::cerr << "warning: " << w << '\n';
}

struct ExperimentArgs {
    std::string config, out;
    std::optional<std::uint64_t> seed;
    std::size_t jobs = 1;
    bool timing = false;
};

void cmd_experiment(const ExperimentArgs& a, std::ostream& out) {
    ExperimentConfig cfg = read_experiment_config(ConfigDocument::load(a.config));
    if (a.seed) cfg.seeds = {*a.seed};
    const ResultsTable table = run_experiment(cfg, a.jobs);
    Sink sink(a.out.empty() ? cfg.output : a.out, out);
    table.write_csv(sink.stream(), a.timing || cfg.include_timing);
    sink.finish();
}

struct BoundsArgs {
    std::string config, out;
    std::optional<std::uint64_t> seed;
};

void cmd_bounds(const BoundsArgs& a, std::ostream& out) {
    const ConfigDocument doc = load_or_empty(a.config);
    BoundsConfig c;
    if (const auto* s = doc.section("bounds")) c = read_bounds_config(*s);
    if (a.seed) c.seed = *a.seed;
    Sink sink(a.out, out);
    bounds_report(c).write_csv(sink.stream());
    sink.finish();
}

struct RecoverArgs {
    std::string samples, out, report;
    std::optional<double> eq_tol;
};

void cmd_recover(const RecoverArgs& a, std::ostream& out) {
    const RecoverReport rep = recover_cmd(a.samples, a.eq_tol, a.out);
    Sink sink(a.report, out);
    rep.write(sink.stream());
    sink.finish();
}

struct GradientsArgs {
    std::string model, out;
    std::size_t n = 1000;
    std::uint64_t seed = 0;
    double variance = 1.0;
    bool decimal = false;
};

void cmd_gradients(const GradientsArgs& a, std::ostream& out) {
    std::ifstream f(a.model);
    if (!f) throw Error("cannot open '" + a.model + "'");
    const Model h = read_model(f);
    RngStream rng(a.seed);
    std::vector<GradientSample> samples;
    for (std::size_t i = 0; i < a.n; ++i) {
        Vec x = gaussian_vector(rng, input_dim(h), std::sqrt(a.variance));
        Vec g = input_gradient(h, x);
        samples.push_back({std::move(x), std::move(g)});
    }
    Sink sink(a.out, out);
    write_gradient_samples(sink.stream(), samples, !a.decimal);
    sink.finish();
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Learning with explanation constraints: training, bounds and recovery"};
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "Write a synthetic dataset as CSV");
    g->add_option("--config", gen.config, "Config file with a [generator] section");
    g->add_option("--seed", gen.seed, "Override the generator seed");
    g->add_option("--n", gen.n, "Override the labeled count");
    g->add_option("--out", gen.out, "Dataset CSV path")->required();
    g->add_option("--target-out", gen.target_out, "Also write the target model here");
    g->add_flag("--decimal", gen.decimal, "Write %.17g decimals instead of hex floats");

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train one model on a dataset CSV");
    t->add_option("--data", tr.data, "Dataset CSV")->required();
    t->add_option("--config", tr.config, "Config with [train] and [surrogate] sections");
    t->add_option("--method", tr.method, "supervised | lagrangian | self_training | variational | epac_erm");
    t->add_option("--seed", tr.seed, "Override the training seed");
    t->add_option("--out", tr.out, "Model output path (stdout when omitted)");
    t->add_option("--metrics", tr.metrics, "Per-iteration metrics CSV path");

    ExperimentArgs ex;
    auto* e = app.add_subcommand("experiment", "Run an experiment grid");
    e->add_option("--config", ex.config, "Experiment config file")->required();
    e->add_option("--seed", ex.seed, "Run a single seed instead of the configured list");
    e->add_option("--out", ex.out, "Results CSV path (overrides the config)");
    e->add_option("--jobs", ex.jobs, "Worker threads")->check(CLI::PositiveNumber);
    e->add_flag("--timing", ex.timing, "Add the wall_ms column");

    BoundsArgs bo;
    auto* b = app.add_subcommand("bounds", "Write the bound report CSV");
    b->add_option("--config", bo.config, "Config with a [bounds] section");
    b->add_option("--seed", bo.seed, "Monte Carlo seed");
    b->add_option("--out", bo.out, "Report CSV path (stdout when omitted)");

    RecoverArgs re;
    auto* r = app.add_subcommand("recover", "Recover a two-layer network from gradient samples");
    r->add_option("--samples", re.samples, "Gradient sample CSV")->required();
    r->add_option("--eq-tol", re.eq_tol, "Absolute vector equality tolerance");
    r->add_option("--out", re.out, "Recovered model path");
    r->add_option("--report", re.report, "Report path (stdout when omitted)");

    GradientsArgs gr;
    auto* s = app.add_subcommand("gradients", "Sample exact gradients of a model");
    s->add_option("--model", gr.model, "Model file")->required();
    s->add_option("--n", gr.n, "Number of samples");
    s->add_option("--seed", gr.seed, "Sampling seed");
    s->add_option("--variance", gr.variance, "Per-coordinate input variance")->check(CLI::NonNegativeNumber);
    s->add_option("--out", gr.out, "Sample CSV path (stdout when omitted)");
    s->add_flag("--decimal", gr.decimal, "Write %.17g decimals instead of hex floats");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& pe) {
        const int code = app.exit(pe, out, err);
        return code == 0 ? 0 : 1;
    }

    try {
        if (g->parsed()) cmd_generate(gen);
        else if (t->parsed()) cmd_train(tr, out);
        else if (e->parsed()) cmd_experiment(ex, out);
        else if (b->parsed()) cmd_bounds(bo, out);
        else if (r->parsed()) cmd_recover(re, out);
        else if (s->parsed()) cmd_gradients(gr, out);
    } catch (const std::exception& ex_) {
        err << "error: " << ex_.what() << '\n';
        return 2;
    }
    return 0;
}

}  // namespace excon
