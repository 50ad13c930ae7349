#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "excon/error.hpp"
#include "excon/harness.hpp"

using namespace excon;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    f << text;
}

// Runs the CLI binary; returns its exit status.
int cli(const std::string& args) {
    const std::string cmd = std::string(EXCON_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("excon_harness_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

const char* kSmallExperiment = R"(
[experiment]
methods = ["supervised", "lagrangian", "self_training", "variational"]
n = [2, 3, 4]
seeds = [0, 1, 2, 3, 4]

[generator]
d = 4
target = "two_layer:2"
m = 12
k = 5
n_test = 20

[train]
student = "two_layer:2"
epochs = 5
proj_epochs = 3
T = 1
)";

std::string extract_readme_example() {
    const std::string text = slurp(EXCON_README_PATH);
    const std::string marker = "<!-- annotated-config -->";
    const auto at = text.find(marker);
    REQUIRE(at != std::string::npos);
    const auto open = text.find("```toml\n", at);
    REQUIRE(open != std::string::npos);
    const auto close = text.find("```", open + 8);
    REQUIRE(close != std::string::npos);
    return text.substr(open + 8, close - open - 8);
}

std::vector<GradientSample> planted_samples(std::size_t count, std::uint64_t seed) {
    const TwoLayerRelu h({1.5, -0.5}, {{1, 0, 0}, {0, 1, 0}});
    RngStream rng(seed);
    std::vector<GradientSample> out;
    for (std::size_t i = 0; i < count; ++i) {
        Vec x = gaussian_vector(rng, 3);
        out.push_back({x, input_gradient(h, x)});
    }
    return out;
}

}  // namespace

TEST_CASE("config grammar") {
    const ConfigDocument doc = ConfigDocument::parse_string(R"(
top = 1            # before any section
[a]
x = 2.5e-1
s = "quote \" and \\ slash"   # trailing comment
flag = true
list = [1, 2, "three"]
[a.b]
y = -4
)");
    CHECK(doc.section_names() == std::vector<std::string>{"", "a", "a.b"});
    const auto& a = *doc.section("a");
    CHECK(config_number(a.at("x"), "x") == 0.25);
    CHECK(config_string(a.at("s"), "s") == "quote \" and \\ slash");
    CHECK(config_bool(a.at("flag"), "flag"));
    CHECK(a.at("list").items.size() == 3);
    CHECK(a.at("x").line == 4);
    CHECK(config_count(doc.section("")->at("top"), "top") == 1);
    CHECK(doc.section("missing") == nullptr);
    CHECK_THROWS_AS(config_count(doc.section("a.b")->at("y"), "y"), ParseError);
    CHECK_THROWS_AS(config_numbers(a.at("list"), "list"), ParseError);
    CHECK_THROWS_AS(config_string(a.at("x"), "x"), ParseError);

    for (const char* bad : {"[open\nx=1", "x\n", "x = \"unterminated\n", "[a]\nx = 1\nx = 2\n", "x = [1, 2\n", "x = nan\n"}) {
        CHECK_THROWS_AS(ConfigDocument::parse_string(bad), ParseError);
    }
    try {
        ConfigDocument::parse_string("[a]\nok = 1\n\n= 3\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 4);
    }
}

TEST_CASE("section readers") {
    const ConfigDocument doc = ConfigDocument::parse_string(R"(
[generator]
d = 7
target = "linear"
noise = "gradient_gaussian"
noise_std = 0.1
[train]
method = "variational"
lambda_proj = 100
T = 4
teacher = "two_layer:3"
[surrogate]
kind = "set_membership_hinge"
set = "box"
lo = [-1, -1]
hi = [1, 2]
[bad]
epochz = 3
)");
    const GeneratorConfig g = read_generator_config(*doc.section("generator"));
    CHECK(g.d == 7);
    CHECK(g.target == ModelKind::linear());
    CHECK(g.noise.kind == NoiseKind::GradientGaussian);
    CHECK(g.noise.std == 0.1);
    CHECK(g.m == GeneratorConfig{}.m);
    const TrainConfig t = read_train_config(*doc.section("train"));
    CHECK(t.method == Method::Variational);
    CHECK(t.lambda_proj == 100.0);
    CHECK(t.T == 4);
    CHECK(t.teacher_kind() == ModelKind::two_layer(3));
    const SurrogateSpec s = read_surrogate_spec(*doc.section("surrogate"));
    CHECK(s.kind == SurrogateKind::SetMembershipHinge);
    CHECK(std::get<BoxSet>(*s.set).hi == Vec{1, 2});
    try {
        read_train_config(*doc.section("bad"));
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 18);
    }
    CHECK_THROWS_AS(read_experiment_config(ConfigDocument::parse_string("[experiment]\nmethods=[\"supervised\"]\n[trian]\n")),
                    ParseError);
    CHECK_THROWS_AS(read_experiment_config(ConfigDocument::parse_string("[experiment]\nmethods=[]\n")), DomainError);
}

TEST_CASE("annotated example in the README parses and runs") {
    const ExperimentConfig cfg = read_experiment_config(ConfigDocument::parse_string(extract_readme_example()));
    CHECK(cfg.methods == std::vector<Method>{Method::Supervised, Method::Lagrangian});
    CHECK(cfg.n_values == std::vector<std::size_t>{2, 5});
    CHECK(cfg.seeds == std::vector<std::uint64_t>{0, 1});
    CHECK(cfg.generator.d == 20);
    CHECK(cfg.generator.target == ModelKind::linear());
    CHECK(cfg.surrogate.kind == SurrogateKind::GradL2);
    CHECK(cfg.config_for(Method::Supervised, 0).epochs == 200);
    CHECK(cfg.config_for(Method::Lagrangian, 0).epochs == 400);
    CHECK(cfg.config_for(Method::Lagrangian, 0).lambda == 10.0);
    CHECK(cfg.output == "results.csv");
    CHECK(run_experiment(cfg).rows.size() == 8);
}

TEST_CASE("experiment grid shape, determinism and worker parity") {
    ExperimentConfig cfg = read_experiment_config(ConfigDocument::parse_string(kSmallExperiment));
    const ResultsTable full = run_experiment(cfg);
    CHECK(full.rows.size() == 60);
    std::ostringstream a, b, c;
    full.write_csv(a);
    run_experiment(cfg).write_csv(b);
    run_experiment(cfg, 3).write_csv(c);
    CHECK(a.str() == b.str());
    CHECK(a.str() == c.str());
    CHECK(a.str().rfind("method,seed,n,test_mse,emp_phi_test,feasible\n", 0) == 0);

    std::ostringstream timed;
    full.write_csv(timed, true);
    CHECK(timed.str().rfind("method,seed,n,test_mse,emp_phi_test,feasible,wall_ms\n", 0) == 0);

    cfg.methods = {Method::Supervised};
    cfg.n_values = {3};
    cfg.seeds = {4};
    const ResultsTable one = run_experiment(cfg);
    REQUIRE(one.rows.size() == 1);
    // Same numbers as calling the library directly on the cell's data.
    GeneratorConfig g = cfg.generator;
    g.n = 3;
    g.seed = 4;
    const SyntheticTask task = gen_synthetic(g);
    const TrainRun run = train_supervised(task.data.labeled, cfg.config_for(Method::Supervised, 4));
    CHECK(one.rows[0].test_mse == mean_squared_error(run.model, task.data.test));
    CHECK(one.rows[0].emp_phi_test == mean_gradient_distance(run.model, task.target, task.data.test.x));
    CHECK(mean_gradient_distance(task.target, task.target, task.data.test.x) == 0.0);
}

TEST_CASE("trainer errors carry the cell coordinates") {
    ExperimentConfig cfg = read_experiment_config(ConfigDocument::parse_string(kSmallExperiment));
    cfg.methods = {Method::Supervised};
    cfg.n_values = {2};
    cfg.seeds = {0};
    cfg.train.learning_rate = 1e30;
    cfg.train.student = ModelKind::linear();
    cfg.train.epochs = 50;
    cfg.per_method.clear();
    try {
        run_experiment(cfg);
        FAIL("expected DomainError");
    } catch (const DomainError& e) {
        CHECK(std::string(e.what()).find("method=supervised, n=2, seed=0") != std::string::npos);
    }
}

TEST_CASE("bounds report") {
    BoundsConfig c;
    c.n_mc = 3000;
    const BoundReport r = bounds_report(c);
    std::size_t sphere = 0;
    for (const BoundRow& row : r.rows) {
        CHECK(std::isfinite(row.value));
        CHECK(row.value >= 0.0);
        if (row.formula_id == "constrained_linear_sphere") {
            ++sphere;
            REQUIRE(row.within_bound);
            CHECK(*row.within_bound);
            if (row.inputs.tau == 0.0) CHECK(row.value == doctest::Approx(c.B / (2 * std::sqrt(100.0))));
        }
    }
    CHECK(sphere == 4);
    CHECK(r.rows.size() == 10);

    c.k = 50;
    const BoundReport full = bounds_report(c);
    bool eps = false, agn = false, real = false;
    for (const BoundRow& row : full.rows) {
        eps = eps || row.formula_id == "epsilon_k";
        agn = agn || row.formula_id == "agnostic_linear_sphere";
        real = real || row.formula_id == "realizable_linear_sphere";
    }
    CHECK(eps);
    CHECK(agn);
    CHECK(real);
}

TEST_CASE("recover command") {
    TempDir tmp;
    {
        std::ofstream f(tmp / "s.csv");
        write_gradient_samples(f, planted_samples(200, 1));
    }
    const RecoverReport rep = recover_cmd(tmp / "s.csv", std::nullopt, tmp / "model.txt");
    CHECK(rep.nodes == 2);
    CHECK(rep.samples == 200);
    CHECK(rep.distinct_gradients == 4);
    CHECK(rep.max_residual <= 1e-9);
    std::ifstream mf(tmp / "model.txt");
    const Model m = read_model(mf);
    CHECK(std::get<TwoLayerRelu>(m).hidden() == 2);
    std::ostringstream out;
    rep.write(out);
    CHECK(out.str().find("distinct_gradients=4") != std::string::npos);
}

TEST_CASE("CLI subcommands match the library") {
    TempDir tmp;
    spit(tmp / "exp.toml", kSmallExperiment);

    // generate
    REQUIRE(cli("generate --config " + (tmp / "exp.toml") + " --seed 3 --n 2 --out " + (tmp / "d.csv") +
                " --target-out " + (tmp / "t.txt")) == 0);
    GeneratorConfig g = read_experiment_config(ConfigDocument::load(tmp / "exp.toml")).generator;
    g.seed = 3;
    g.n = 2;
    const SyntheticTask task = gen_synthetic(g);
    std::ostringstream want;
    write_csv_dataset(want, task.data);
    CHECK(slurp(tmp / "d.csv") == want.str());
    CHECK(model_from_string(slurp(tmp / "t.txt")) == task.target);

    // train
    REQUIRE(cli("train --data " + (tmp / "d.csv") + " --config " + (tmp / "exp.toml") + " --method lagrangian --out " +
                (tmp / "m.txt") + " --metrics " + (tmp / "metrics.csv")) == 0);
    TrainConfig tc = read_train_config(*ConfigDocument::load(tmp / "exp.toml").section("train"));
    tc.method = Method::Lagrangian;
    const DatasetBundle data = read_csv_dataset(tmp / "d.csv");
    const TrainRun run = train(data, SurrogateSpec::grad_l2(), tc, Monitor{&data.test});
    CHECK(slurp(tmp / "m.txt") == model_to_string(run.model));
    CHECK(slurp(tmp / "metrics.csv").rfind("method,seed,n,m,k,", 0) == 0);

    // experiment, sequential and threaded
    REQUIRE(cli("experiment --config " + (tmp / "exp.toml") + " --out " + (tmp / "r1.csv")) == 0);
    REQUIRE(cli("experiment --config " + (tmp / "exp.toml") + " --jobs 2 --out " + (tmp / "r2.csv")) == 0);
    std::ostringstream table;
    run_experiment(read_experiment_config(ConfigDocument::load(tmp / "exp.toml"))).write_csv(table);
    CHECK(slurp(tmp / "r1.csv") == table.str());
    CHECK(slurp(tmp / "r2.csv") == table.str());

    // bounds
    spit(tmp / "b.toml", "[bounds]\nn_mc = 200\nk = 10\n");
    REQUIRE(cli("bounds --config " + (tmp / "b.toml") + " --seed 5 --out " + (tmp / "b.csv")) == 0);
    BoundsConfig bc = read_bounds_config(*ConfigDocument::load(tmp / "b.toml").section("bounds"));
    bc.seed = 5;
    std::ostringstream bounds;
    bounds_report(bc).write_csv(bounds);
    CHECK(slurp(tmp / "b.csv") == bounds.str());

    // gradients then recover
    spit(tmp / "h.txt", model_to_string(TwoLayerRelu({2.0, 1.0}, {{1, 0}, {0, 1}})));
    REQUIRE(cli("gradients --model " + (tmp / "h.txt") + " --n 300 --seed 2 --out " + (tmp / "g.csv")) == 0);
    REQUIRE(cli("recover --samples " + (tmp / "g.csv") + " --out " + (tmp / "r.txt") + " --report " + (tmp / "rep.txt")) == 0);
    std::ostringstream rep;
    recover_cmd(tmp / "g.csv", std::nullopt, "").write(rep);
    CHECK(slurp(tmp / "rep.txt") == rep.str());
    CHECK(slurp(tmp / "r.txt") == model_to_string(recover_two_layer_detailed([&] {
                                     std::ifstream f(tmp / "g.csv");
                                     return read_gradient_samples(f);
                                 }()).model));
}

TEST_CASE("CLI exit codes") {
    TempDir tmp;
    CHECK(cli("") == 1);
    CHECK(cli("frobnicate") == 1);
    CHECK(cli("generate") == 1);
    CHECK(cli("--help") == 0);
    // Samples that never show both nodes active at once.
    std::vector<GradientSample> partial;
    for (const auto& s : planted_samples(400, 3))
        if (!(s.x[0] > 0 && s.x[1] > 0)) partial.push_back(s);
    {
        std::ofstream f(tmp / "partial.csv");
        write_gradient_samples(f, partial);
    }
    CHECK(cli("recover --samples " + (tmp / "partial.csv")) == 2);
    CHECK(cli("train --data " + (tmp / "missing.csv")) == 2);
    spit(tmp / "bad.toml", "[experiment]\nmethods = [\"supervised\"]\nbogus = 1\n");
    CHECK(cli("experiment --config " + (tmp / "bad.toml")) == 2);

    std::ostringstream out, err;
    const char* argv[] = {"excon", "recover", "--samples", "/nonexistent/file.csv"};
    CHECK(run_cli(4, argv, out, err) == 2);
    CHECK(err.str().find("error:") == 0);
}
