#include "excon/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <thread>

#include "excon/error.hpp"
#include "text_util.hpp"

namespace excon {

// --- config parsing -------------------------------------------------------------

namespace {

bool is_key_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (in_string && c == '\\') {
            ++i;
        } else if (c == '"') {
            in_string = !in_string;
        } else if (c == '#' && !in_string) {
            return line.substr(0, i);
        }
    }
    return line;
}

ConfigValue parse_scalar(std::string_view tok, std::size_t line) {
    ConfigValue v;
    v.line = line;
    tok = detail::trim(tok);
    if (tok.empty()) throw ParseError("missing value", line);
    if (tok.front() == '"') {
        if (tok.size() < 2 || tok.back() != '"') throw ParseError("unterminated string", line);
        v.type = ConfigValue::Type::String;
        for (std::size_t i = 1; i + 1 < tok.size(); ++i) {
            char c = tok[i];
            if (c == '\\') {
                if (i + 2 >= tok.size()) throw ParseError("dangling escape in string", line);
                c = tok[++i];
                if (c == 'n') c = '\n';
                else if (c == 't') c = '\t';
                else if (c != '"' && c != '\\') throw ParseError("unsupported escape in string", line);
            } else if (c == '"') {
                throw ParseError("unexpected quote inside string", line);
            }
            v.text.push_back(c);
        }
        return v;
    }
    if (tok == "true" || tok == "false") {
        v.type = ConfigValue::Type::Bool;
        v.boolean = tok == "true";
        return v;
    }
    v.type = ConfigValue::Type::Number;
    v.number = detail::parse_real(tok, line);
    v.text = std::string(tok);
    return v;
}

ConfigValue parse_value(std::string_view tok, std::size_t line) {
    tok = detail::trim(tok);
    if (tok.empty() || tok.front() != '[') return parse_scalar(tok, line);
    if (tok.back() != ']') throw ParseError("unterminated array", line);
    ConfigValue v;
    v.type = ConfigValue::Type::Array;
    v.line = line;
    const std::string_view body = detail::trim(tok.substr(1, tok.size() - 2));
    if (body.empty()) return v;
    bool in_string = false;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= body.size(); ++i) {
        if (i < body.size()) {
            const char c = body[i];
            if (in_string && c == '\\') {
                ++i;
                continue;
            }
            if (c == '"') in_string = !in_string;
            if (c == '[') throw ParseError("nested arrays are not supported", line);
            if (c != ',' || in_string) continue;
        }
        const std::string_view item = detail::trim(body.substr(start, i - start));
        if (item.empty()) {
            if (i == body.size() && !v.items.empty()) break;  // trailing comma
            throw ParseError("empty array element", line);
        }
        v.items.push_back(parse_scalar(item, line));
        start = i + 1;
    }
    return v;
}

}  // namespace

ConfigDocument ConfigDocument::parse(std::istream& in) {
    ConfigDocument doc;
    std::string current;
    doc.sections_[current];
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const std::string stripped = strip_comment(raw);
        const std::string_view t = detail::trim(stripped);
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ParseError("malformed section header", line);
            const std::string name(detail::trim(t.substr(1, t.size() - 2)));
            if (name.empty()) throw ParseError("empty section name", line);
            for (char c : name) {
                if (!is_key_char(c) && c != '.') throw ParseError("invalid section name '" + name + "'", line);
            }
            current = name;
            doc.sections_[current];
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string_view::npos) throw ParseError("expected key = value", line);
        const std::string key(detail::trim(t.substr(0, eq)));
        if (key.empty() || !std::all_of(key.begin(), key.end(), is_key_char)) {
            throw ParseError("invalid key '" + key + "'", line);
        }
        auto& sec = doc.sections_[current];
        if (sec.count(key)) throw ParseError("duplicate key '" + key + "'", line);
        sec[key] = parse_value(t.substr(eq + 1), line);
    }
    return doc;
}

ConfigDocument ConfigDocument::parse_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
}

ConfigDocument ConfigDocument::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open config '" + path + "'");
    return parse(f);
}

const ConfigDocument::Section* ConfigDocument::section(const std::string& name) const {
    const auto it = sections_.find(name);
    return it == sections_.end() ? nullptr : &it->second;
}

std::vector<std::string> ConfigDocument::section_names() const {
    std::vector<std::string> out;
    for (const auto& [name, sec] : sections_) {
        if (!name.empty() || !sec.empty()) out.push_back(name);
    }
    return out;
}

double config_number(const ConfigValue& v, const std::string& key) {
    if (v.type != ConfigValue::Type::Number) throw ParseError("'" + key + "' must be a number", v.line);
    return v.number;
}

std::size_t config_count(const ConfigValue& v, const std::string& key) {
    const double x = config_number(v, key);
    if (x < 0.0 || x != std::floor(x) || x > 9.0e15) {
        throw ParseError("'" + key + "' must be a non-negative integer", v.line);
    }
    return static_cast<std::size_t>(x);
}

std::string config_string(const ConfigValue& v, const std::string& key) {
    if (v.type != ConfigValue::Type::String) throw ParseError("'" + key + "' must be a string", v.line);
    return v.text;
}

bool config_bool(const ConfigValue& v, const std::string& key) {
    if (v.type != ConfigValue::Type::Bool) throw ParseError("'" + key + "' must be true or false", v.line);
    return v.boolean;
}

std::vector<double> config_numbers(const ConfigValue& v, const std::string& key) {
    if (v.type == ConfigValue::Type::Number) return {v.number};
    if (v.type != ConfigValue::Type::Array) throw ParseError("'" + key + "' must be an array of numbers", v.line);
    std::vector<double> out;
    for (const ConfigValue& item : v.items) out.push_back(config_number(item, key));
    return out;
}

namespace {

std::vector<std::string> config_strings(const ConfigValue& v, const std::string& key) {
    if (v.type == ConfigValue::Type::String) return {v.text};
    if (v.type != ConfigValue::Type::Array) throw ParseError("'" + key + "' must be an array of strings", v.line);
    std::vector<std::string> out;
    for (const ConfigValue& item : v.items) out.push_back(config_string(item, key));
    return out;
}

std::vector<std::size_t> config_counts(const ConfigValue& v, const std::string& key) {
    if (v.type == ConfigValue::Type::Number) return {config_count(v, key)};
    if (v.type != ConfigValue::Type::Array) throw ParseError("'" + key + "' must be an array of integers", v.line);
    std::vector<std::size_t> out;
    for (const ConfigValue& item : v.items) out.push_back(config_count(item, key));
    return out;
}

// Runs parse(text) and re-raises its ParseError with the value's line.
template <class F>
auto at_line(const ConfigValue& v, F&& parse) -> decltype(parse()) {
    try {
        return parse();
    } catch (const ParseError& e) {
        if (e.line() != 0) throw;
        throw ParseError(e.what(), v.line);
    }
}

[[noreturn]] void unknown_key(const std::string& section, const std::string& key, const ConfigValue& v) {
    throw ParseError("unknown key '" + key + "' in [" + section + "]", v.line);
}

}  // namespace

GeneratorConfig read_generator_config(const ConfigDocument::Section& s, GeneratorConfig g) {
    for (const auto& [key, v] : s) {
        if (key == "d") g.d = config_count(v, key);
        else if (key == "input_variance") g.input_variance = config_number(v, key);
        else if (key == "target") g.target = at_line(v, [&] { return parse_model_kind(config_string(v, key)); });
        else if (key == "target_scale") g.target_scale = config_number(v, key);
        else if (key == "noise") g.noise.kind = at_line(v, [&] { return parse_noise_kind(config_string(v, key)); });
        else if (key == "noise_std") g.noise.std = config_number(v, key);
        else if (key == "n") g.n = config_count(v, key);
        else if (key == "m") g.m = config_count(v, key);
        else if (key == "k") g.k = config_count(v, key);
        else if (key == "n_test") g.n_test = config_count(v, key);
        else if (key == "seed") g.seed = config_count(v, key);
        else unknown_key("generator", key, v);
    }
    return g;
}

TrainConfig read_train_config(const ConfigDocument::Section& s, TrainConfig c) {
    for (const auto& [key, v] : s) {
        if (key == "method") c.method = at_line(v, [&] { return parse_method(config_string(v, key)); });
        else if (key == "student") c.student = at_line(v, [&] { return parse_model_kind(config_string(v, key)); });
        else if (key == "teacher") c.teacher = at_line(v, [&] { return parse_model_kind(config_string(v, key)); });
        else if (key == "lambda") c.lambda = config_number(v, key);
        else if (key == "lambda_proj") c.lambda_proj = config_number(v, key);
        else if (key == "tau") c.tau = config_number(v, key);
        else if (key == "T") c.T = config_count(v, key);
        else if (key == "learning_rate") c.learning_rate = config_number(v, key);
        else if (key == "epochs") c.epochs = config_count(v, key);
        else if (key == "proj_epochs") c.proj_epochs = config_count(v, key);
        else if (key == "proj_learning_rate") c.proj_learning_rate = config_number(v, key);
        else if (key == "init_scale") c.init_scale = config_number(v, key);
        else if (key == "seed") c.seed = config_count(v, key);
        else if (key == "epac_lambda0") c.epac_lambda0 = config_number(v, key);
        else if (key == "epac_max_doublings") c.epac_max_doublings = config_count(v, key);
        else unknown_key("train", key, v);
    }
    return c;
}

SurrogateSpec read_surrogate_spec(const ConfigDocument::Section& s, SurrogateSpec spec) {
    std::optional<std::string> set_kind;
    double radius = 0.0;
    Vec lo, hi, below, above;
    std::size_t set_i = 0, set_j = 1;
    for (const auto& [key, v] : s) {
        if (key == "kind") spec.kind = at_line(v, [&] { return parse_surrogate_kind(config_string(v, key)); });
        else if (key == "tau") spec.tau = config_number(v, key);
        else if (key == "penalty_scale") spec.penalty_scale = config_number(v, key);
        else if (key == "feature_i") spec.feature_i = config_count(v, key);
        else if (key == "feature_j") spec.feature_j = config_count(v, key);
        else if (key == "set") set_kind = config_string(v, key);
        else if (key == "radius") radius = config_number(v, key);
        else if (key == "lo") lo = config_numbers(v, key);
        else if (key == "hi") hi = config_numbers(v, key);
        else if (key == "below") below = config_numbers(v, key);
        else if (key == "above") above = config_numbers(v, key);
        else if (key == "set_i") set_i = config_count(v, key);
        else if (key == "set_j") set_j = config_count(v, key);
        else unknown_key("surrogate", key, v);
    }
    if (set_kind) {
        if (*set_kind == "box") spec.set = BoxSet{lo, hi};
        else if (*set_kind == "ball") spec.set = BallSet{radius};
        else if (*set_kind == "shifted_rect") spec.set = ShiftedRectSet{below, above};
        else if (*set_kind == "feature_order") spec.set = FeatureOrderSet{set_i, set_j};
        else throw ParseError("unknown constraint set '" + *set_kind + "' (gradient balls need a reference model)",
                              s.at("set").line);
    }
    if (spec.kind == SurrogateKind::SetMembershipHinge && !spec.set) {
        throw ParseError("set_membership_hinge needs a 'set' key", s.count("kind") ? s.at("kind").line : 0);
    }
    return spec;
}

// --- experiments ------------------------------------------------------------------

TrainConfig ExperimentConfig::config_for(Method m, std::uint64_t seed) const {
    const auto it = per_method.find(m);
    TrainConfig c = it != per_method.end() ? it->second : train;
    c.method = m;
    c.seed = seed;
    return c;
}

void ExperimentConfig::validate() const {
    if (methods.empty()) throw DomainError("experiment: method list is empty");
    if (seeds.empty()) throw DomainError("experiment: seed list is empty");
    if (n_values.empty()) throw DomainError("experiment: n grid is empty");
    generator.validate();
    for (Method m : methods) config_for(m, 0).validate();
}

ExperimentConfig read_experiment_config(const ConfigDocument& doc) {
    ExperimentConfig cfg;
    for (const std::string& name : doc.section_names()) {
        const bool known = name == "experiment" || name == "generator" || name == "surrogate" || name == "train" ||
                           name.rfind("train.", 0) == 0;
        if (!known) throw ParseError("unknown section [" + name + "]", 0);
    }
    if (const auto* g = doc.section("generator")) cfg.generator = read_generator_config(*g);
    if (const auto* s = doc.section("surrogate")) cfg.surrogate = read_surrogate_spec(*s);
    if (const auto* t = doc.section("train")) cfg.train = read_train_config(*t);
    if (const auto* e = doc.section("experiment")) {
        for (const auto& [key, v] : *e) {
            if (key == "methods") {
                for (const std::string& m : config_strings(v, key)) {
                    cfg.methods.push_back(at_line(v, [&] { return parse_method(m); }));
                }
            } else if (key == "n") {
                cfg.n_values = config_counts(v, key);
            } else if (key == "seeds") {
                for (std::size_t s : config_counts(v, key)) cfg.seeds.push_back(s);
            } else if (key == "output") {
                cfg.output = config_string(v, key);
            } else if (key == "include_timing") {
                cfg.include_timing = config_bool(v, key);
            } else {
                unknown_key("experiment", key, v);
            }
        }
    }
    if (cfg.n_values.empty()) cfg.n_values = {cfg.generator.n};
    if (cfg.seeds.empty()) cfg.seeds = {cfg.generator.seed};
    for (const std::string& name : doc.section_names()) {
        if (name.rfind("train.", 0) != 0) continue;
        const Method m = parse_method(name.substr(6));
        cfg.per_method[m] = read_train_config(*doc.section(name), cfg.train);
    }
    cfg.validate();
    return cfg;
}

double mean_gradient_distance(const Model& h, const Model& ref, const std::vector<Vec>& xs) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (const Vec& x : xs) s += distance(input_gradient(h, x), input_gradient(ref, x));
    return s / static_cast<double>(xs.size());
}

void ResultsTable::write_csv(std::ostream& out, bool include_timing) const {
    out << "method,seed,n,test_mse,emp_phi_test,feasible" << (include_timing ? ",wall_ms" : "") << '\n';
    for (const ResultRow& r : rows) {
        out << to_string(r.method) << ',' << r.seed << ',' << r.n << ',' << detail::format_real(r.test_mse, false)
            << ',' << detail::format_real(r.emp_phi_test, false) << ',' << (r.feasible ? "true" : "false");
        if (include_timing) out << ',' << detail::format_real(r.wall_ms, false);
        out << '\n';
    }
}

namespace {

[[noreturn]] void rethrow_with_context(const std::string& ctx) {
    try {
        throw;
    } catch (const ParseError& e) {
        throw ParseError(ctx + e.what(), 0);
    } catch (const SchemaError& e) {
        throw SchemaError(ctx + e.what());
    } catch (const UnsupportedError& e) {
        throw UnsupportedError(ctx + e.what());
    } catch (const StructureError& e) {
        throw StructureError(ctx + e.what());
    } catch (const CoverageError& e) {
        throw CoverageError(ctx + e.what());
    } catch (const InconsistencyError& e) {
        throw InconsistencyError(ctx + e.what());
    } catch (const DomainError& e) {
        throw DomainError(ctx + e.what());
    } catch (const std::exception& e) {
        throw Error(ctx + e.what());
    }
}

struct CellGroup {
    std::size_t n;
    std::uint64_t seed;
};

std::vector<ResultRow> run_group(const ExperimentConfig& cfg, const CellGroup& g) {
    GeneratorConfig gen = cfg.generator;
    gen.n = g.n;
    gen.seed = g.seed;
    const SyntheticTask task = gen_synthetic(gen);
    std::vector<ResultRow> rows;
    for (Method m : cfg.methods) {
        try {
            const TrainConfig tc = cfg.config_for(m, g.seed);
            const Monitor mon{&task.data.test, &task.data.explanations, &cfg.surrogate};
            const auto t0 = std::chrono::steady_clock::now();
            const TrainRun run = train(task.data, cfg.surrogate, tc, mon);
            const auto t1 = std::chrono::steady_clock::now();
            ResultRow r;
            r.method = m;
            r.seed = g.seed;
            r.n = g.n;
            r.test_mse = mean_squared_error(run.model, task.data.test);
            r.emp_phi_test = mean_gradient_distance(run.model, task.target, task.data.test.x);
            r.feasible = run.iterations.back().feasible;
            r.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
            rows.push_back(r);
        } catch (...) {
            rethrow_with_context("cell (method=" + to_string(m) + ", n=" + std::to_string(g.n) +
                                 ", seed=" + std::to_string(g.seed) + "): ");
        }
    }
    return rows;
}

}  // namespace

ResultsTable run_experiment(const ExperimentConfig& config, std::size_t jobs) {
    config.validate();
    std::vector<CellGroup> groups;
    for (std::size_t n : config.n_values) {
        for (std::uint64_t s : config.seeds) groups.push_back({n, s});
    }
    std::vector<std::vector<ResultRow>> results(groups.size());
    std::vector<std::exception_ptr> errors(groups.size());
    const std::size_t workers = std::max<std::size_t>(1, std::min(jobs, groups.size()));
    if (workers == 1) {
        for (std::size_t i = 0; i < groups.size(); ++i) results[i] = run_group(config, groups[i]);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < groups.size(); i = next++) {
                    try {
                        results[i] = run_group(config, groups[i]);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
        for (std::thread& t : pool) t.join();
        for (const auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }
    ResultsTable table;
    for (auto& r : results) table.rows.insert(table.rows.end(), r.begin(), r.end());
    return table;
}

// --- bounds ------------------------------------------------------------------------

BoundsConfig read_bounds_config(const ConfigDocument::Section& s, BoundsConfig c) {
    for (const auto& [key, v] : s) {
        if (key == "B") c.B = config_number(v, key);
        else if (key == "C") c.C = config_number(v, key);
        else if (key == "d") c.d = config_count(v, key);
        else if (key == "n") c.n = config_count(v, key);
        else if (key == "taus" || key == "tau") c.taus = config_numbers(v, key);
        else if (key == "n_mc") c.n_mc = config_count(v, key);
        else if (key == "seed") c.seed = config_count(v, key);
        else if (key == "k") c.k = config_count(v, key);
        else if (key == "delta") c.delta = config_number(v, key);
        else if (key == "err_best") c.err_best = config_number(v, key);
        else if (key == "m_nodes") c.m_nodes = config_count(v, key);
        else if (key == "q") c.q = config_count(v, key);
        else unknown_key("bounds", key, v);
    }
    return c;
}

BoundReport bounds_report(const BoundsConfig& c) {
    BoundReport report;
    const RngStream root(c.seed);
    RngStream data_rng = root.child(1);
    std::vector<Vec> S(c.n);
    for (Vec& x : S) x = unit_sphere_point(data_rng, c.d);
    const RngStream mc_rng = root.child(2);
    Vec w_ref(c.d, 0.0);
    w_ref[0] = 1.0;

    BoundInputs base;
    base.B = c.B;
    base.C = 1.0;
    base.d = c.d;
    base.n = c.n;
    base.delta = c.delta;

    auto with_mc = [](BoundRow row, const McEstimate& est) {
        row.mc_estimate = est.estimate;
        row.mc_std_error = est.std_error;
        row.within_bound = est.estimate <= row.value + 3.0 * est.std_error;
        return row;
    };

    {
        RngStream r = mc_rng;
        BoundRow row{"std_linear", base, std_linear_bound(c.B, 1.0, c.n), {}, {}, {}};
        report.rows.push_back(with_mc(row, mc_empirical_rademacher(LinearUnconstrainedClass{c.B}, S, c.n_mc, r)));
    }
    for (double tau : c.taus) {
        RngStream r = mc_rng;
        BoundInputs in = base;
        in.tau = tau;
        BoundRow row{"constrained_linear_sphere", in, constrained_linear_sphere_bound(c.B, c.d, tau, c.n), {}, {}, {}};
        report.rows.push_back(with_mc(row, mc_constrained_linear_empirical(S, w_ref, tau, c.B, c.n_mc, r)));
    }

    BoundInputs nn = base;
    nn.C = c.C;
    nn.m_nodes = c.m_nodes;
    nn.q = c.q;
    report.rows.push_back({"std_2nn", nn, std_2nn_bound(c.B, c.C, c.n), {}, {}, {}});
    for (double tau : c.taus) {
        BoundInputs in = nn;
        in.tau = tau;
        report.rows.push_back({"constrained_2nn", in, constrained_2nn_bound(tau, c.m_nodes, c.C, c.n, c.q), {}, {}, {}});
    }

    if (c.k > 0) {
        const double R_kG = surrogate_class_bound(LinearGradAngleSurrogate{c.k});
        BoundInputs in = base;
        in.k = c.k;
        in.R_kG = R_kG;
        report.rows.push_back({"surrogate_class_linear_grad_angle", in, R_kG, {}, {}, {}});
        report.rows.push_back({"epsilon_k", in, epsilon_k(R_kG, c.k, c.delta), {}, {}, {}});
        const auto R_at = [&](double t) { return constrained_linear_sphere_envelope(c.B, c.d, std::max(t, 0.0), c.n); };
        const auto err_at = [&](double) { return c.err_best; };
        for (double tau : c.taus) {
            BoundInputs t_in = in;
            t_in.tau = tau;
            const AgnosticBound ab = agnostic_generalization_bound({c.n, c.k, tau, c.delta, R_kG}, R_at, err_at);
            report.rows.push_back({"agnostic_linear_sphere", t_in, ab.value, {}, {}, {}});
        }
        report.rows.push_back({"realizable_linear_sphere", in, realizable_bound(R_at, R_kG, c.k, c.n, c.delta), {}, {}, {}});
    }
    return report;
}

// --- recovery ------------------------------------------------------------------------

void RecoverReport::write(std::ostream& out) const {
    out << "nodes=" << nodes << '\n'
        << "samples=" << samples << '\n'
        << "distinct_gradients=" << distinct_gradients << '\n'
        << "regions_covered=" << regions_covered << '\n'
        << "boundary_samples=" << boundary_samples << '\n'
        << "max_residual=" << detail::format_real(max_residual, false) << '\n';
}

RecoverReport recover_cmd(const std::string& samples_path, std::optional<double> eq_tol,
                          const std::string& model_path) {
    std::ifstream in(samples_path);
    if (!in) throw Error("cannot open '" + samples_path + "'");
    const std::vector<GradientSample> samples = read_gradient_samples(in);
    const RecoveryResult res = recover_two_layer_detailed(samples, eq_tol);
    if (!model_path.empty()) {
        std::ofstream out(model_path);
        if (!out) throw Error("cannot open '" + model_path + "' for writing");
        write_model(out, res.model);
    }
    RecoverReport rep;
    rep.nodes = res.model.hidden();
    rep.samples = samples.size();
    rep.distinct_gradients = res.distinct_gradients;
    rep.regions_covered = res.regions_covered;
    rep.boundary_samples = res.boundary_samples;
    rep.max_residual = res.max_residual;
    return rep;
}

}  // namespace excon
