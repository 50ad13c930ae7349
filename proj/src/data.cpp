#include "excon/data.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "excon/error.hpp"
#include "text_util.hpp"

namespace excon {

std::size_t DatasetBundle::dim() const {
    if (!labeled.x.empty()) return labeled.x.front().size();
    if (!unlabeled.empty()) return unlabeled.front().size();
    if (!explanations.points.empty()) return explanations.points.front().size();
    if (!test.x.empty()) return test.x.front().size();
    return 0;
}

std::string to_string(NoiseKind kind) {
    switch (kind) {
        case NoiseKind::None: return "none";
        case NoiseKind::GradientGaussian: return "gradient_gaussian";
        case NoiseKind::LabelGaussian: return "label_gaussian";
        case NoiseKind::WeightGaussian: return "weight_gaussian";
        case NoiseKind::OutputGaussian: return "output_gaussian";
    }
    return "none";
}

NoiseKind parse_noise_kind(const std::string& text) {
    for (auto k : {NoiseKind::None, NoiseKind::GradientGaussian, NoiseKind::LabelGaussian,
                   NoiseKind::WeightGaussian, NoiseKind::OutputGaussian}) {
        if (to_string(k) == text) return k;
    }
    throw ParseError("unknown noise kind '" + text + "'", 0);
}

void GeneratorConfig::validate() const {
    if (d == 0) throw DomainError("generator: d must be positive");
    if (!(input_variance >= 0.0)) throw DomainError("generator: input variance must be non-negative");
    if (!(target_scale >= 0.0)) throw DomainError("generator: target scale must be non-negative");
    if (!(noise.std >= 0.0)) throw DomainError("generator: noise std must be non-negative");
    if (target.family == ModelKind::Family::TwoLayer && target.hidden == 0) {
        throw DomainError("generator: two-layer target needs at least one hidden node");
    }
}

std::string GeneratorConfig::describe() const {
    std::ostringstream s;
    s << "d=" << d << " input_variance=" << detail::format_real(input_variance, false)
      << " target=" << to_string(target) << " target_scale=" << detail::format_real(target_scale, false)
      << " noise=" << to_string(noise.kind) << ":" << detail::format_real(noise.std, false) << " n=" << n
      << " m=" << m << " k=" << k << " n_test=" << n_test << " seed=" << seed;
    return s.str();
}

namespace {

std::vector<Vec> draw_points(RngStream rng, std::size_t count, std::size_t d, double sd) {
    std::vector<Vec> pts(count);
    for (Vec& p : pts) p = gaussian_vector(rng, d, sd);
    return pts;
}

LabeledSet label(std::vector<Vec> xs, const Model& h) {
    LabeledSet s;
    s.y.reserve(xs.size());
    for (const Vec& x : xs) s.y.push_back(predict(h, x));
    s.x = std::move(xs);
    return s;
}

}  // namespace

SyntheticTask gen_synthetic(const GeneratorConfig& cfg) {
    cfg.validate();
    const RngStream root(cfg.seed);
    RngStream target_rng = root.child(stream::kTarget);
    Model target = random_init(cfg.target, cfg.d, cfg.target_scale, target_rng);
    RngStream noise_rng = root.child(stream::kNoise);
    const double sd = std::sqrt(cfg.input_variance);

    DatasetBundle b;
    b.provenance = cfg.describe();
    b.labeled = label(draw_points(root.child(stream::kLabeled), cfg.n, cfg.d, sd), target);
    b.unlabeled = draw_points(root.child(stream::kUnlabeled), cfg.m, cfg.d, sd);
    b.test = label(draw_points(root.child(stream::kTest), cfg.n_test, cfg.d, sd), target);

    if (cfg.noise.kind == NoiseKind::LabelGaussian) {
        for (double& y : b.labeled.y) y += noise_rng.normal(0.0, cfg.noise.std);
    }

    const Model source = cfg.noise.kind == NoiseKind::WeightGaussian
                             ? perturb_weights(target, cfg.noise.std, noise_rng)
                             : target;
    ExplanationSet& e = b.explanations;
    e.points = draw_points(root.child(stream::kExplanations), cfg.k, cfg.d, sd);
    for (const Vec& x : e.points) {
        Vec g = input_gradient(source, x);
        double out = predict(source, x);
        if (cfg.noise.kind == NoiseKind::GradientGaussian) {
            for (double& v : g) v += noise_rng.normal(0.0, cfg.noise.std);
        } else if (cfg.noise.kind == NoiseKind::OutputGaussian) {
            out += noise_rng.normal(0.0, cfg.noise.std);
        }
        e.gradient_targets.push_back(std::move(g));
        e.output_targets.push_back(out);
    }
    return {std::move(b), std::move(target)};
}

std::vector<std::vector<std::size_t>> split_indices(std::size_t n_points,
                                                    const std::vector<std::size_t>& counts,
                                                    std::uint64_t seed) {
    const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    if (total > n_points) {
        throw DomainError("split: requested " + std::to_string(total) + " points but only " +
                          std::to_string(n_points) + " are available");
    }
    std::vector<std::size_t> perm(n_points);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    RngStream rng(seed);
    for (std::size_t i = n_points; i > 1; --i) {
        const std::size_t j = rng.below(i);
        std::swap(perm[i - 1], perm[j]);
    }
    std::vector<std::vector<std::size_t>> parts;
    std::size_t pos = 0;
    for (std::size_t c : counts) {
        parts.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(pos),
                           perm.begin() + static_cast<std::ptrdiff_t>(pos + c));
        pos += c;
    }
    return parts;
}

DatasetBundle split(const LabeledSet& pool, const SplitCounts& counts, std::uint64_t seed) {
    if (pool.y.size() != pool.x.size()) throw DomainError("split: pool labels and points differ in count");
    const auto parts = split_indices(
        pool.size(), {counts.labeled, counts.unlabeled, counts.explanations, counts.test}, seed);
    DatasetBundle b;
    for (std::size_t i : parts[0]) {
        b.labeled.x.push_back(pool.x[i]);
        b.labeled.y.push_back(pool.y[i]);
    }
    for (std::size_t i : parts[1]) b.unlabeled.push_back(pool.x[i]);
    for (std::size_t i : parts[2]) b.explanations.points.push_back(pool.x[i]);
    for (std::size_t i : parts[3]) {
        b.test.x.push_back(pool.x[i]);
        b.test.y.push_back(pool.y[i]);
    }
    b.provenance = "split seed=" + std::to_string(seed);
    return b;
}

// --- CSV ----------------------------------------------------------------------

CsvSchema schema_of(const DatasetBundle& bundle) {
    return {bundle.dim(), bundle.explanations.has_gradient_targets(), bundle.explanations.has_output_targets()};
}

namespace {

std::vector<std::string> header_for(const CsvSchema& s) {
    std::vector<std::string> h{"role", "y"};
    for (std::size_t i = 0; i < s.d; ++i) h.push_back("x_" + std::to_string(i));
    if (s.gradients) {
        for (std::size_t i = 0; i < s.d; ++i) h.push_back("g_" + std::to_string(i));
    }
    if (s.outputs) h.push_back("out");
    return h;
}

CsvSchema schema_from_header(const std::vector<std::string>& cells, std::size_t line) {
    if (cells.size() < 2 || cells[0] != "role" || cells[1] != "y") {
        throw SchemaError("line " + std::to_string(line) + ": header must start with role,y");
    }
    CsvSchema s;
    std::size_t i = 2;
    while (i < cells.size() && cells[i].rfind("x_", 0) == 0) ++i;
    s.d = i - 2;
    std::size_t g = 0;
    while (i < cells.size() && cells[i].rfind("g_", 0) == 0) {
        ++g;
        ++i;
    }
    if (g != 0 && g != s.d) throw SchemaError("gradient columns do not match the input dimension");
    s.gradients = g != 0;
    if (i < cells.size() && cells[i] == "out") {
        s.outputs = true;
        ++i;
    }
    if (i != cells.size()) throw SchemaError("line " + std::to_string(line) + ": unexpected column '" + cells[i] + "'");
    if (cells != header_for(s)) throw SchemaError("line " + std::to_string(line) + ": columns are out of order");
    return s;
}

void write_row(std::ostream& out, const char* role, const double* y, const Vec& x, const Vec* g,
               const double* o, const CsvSchema& s, bool hex) {
    out << role << ',';
    if (y) out << detail::format_real(*y, hex);
    for (double v : x) out << ',' << detail::format_real(v, hex);
    if (s.gradients) {
        for (std::size_t i = 0; i < s.d; ++i) {
            out << ',';
            if (g) out << detail::format_real((*g)[i], hex);
        }
    }
    if (s.outputs) {
        out << ',';
        if (o) out << detail::format_real(*o, hex);
    }
    out << '\n';
}

}  // namespace

void write_csv_dataset(std::ostream& out, const DatasetBundle& b, bool hex) {
    b.explanations.validate();
    const CsvSchema s = schema_of(b);
    if (!b.provenance.empty()) {
        std::string p = b.provenance;
        for (char& c : p) {
            if (c == '\n' || c == '\r') c = ' ';
        }
        out << "# provenance: " << p << '\n';
    }
    const auto header = header_for(s);
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    auto check = [&](const Vec& x) {
        if (x.size() != s.d) throw DomainError("write_csv_dataset: points have unequal dimension");
    };
    for (std::size_t i = 0; i < b.labeled.size(); ++i) {
        check(b.labeled.x[i]);
        write_row(out, "labeled", &b.labeled.y.at(i), b.labeled.x[i], nullptr, nullptr, s, hex);
    }
    for (const Vec& x : b.unlabeled) {
        check(x);
        write_row(out, "unlabeled", nullptr, x, nullptr, nullptr, s, hex);
    }
    const ExplanationSet& e = b.explanations;
    for (std::size_t i = 0; i < e.size(); ++i) {
        check(e.points[i]);
        write_row(out, "explanation", nullptr, e.points[i], s.gradients ? &e.gradient_targets[i] : nullptr,
                  s.outputs ? &e.output_targets[i] : nullptr, s, hex);
    }
    for (std::size_t i = 0; i < b.test.size(); ++i) {
        check(b.test.x[i]);
        write_row(out, "test", &b.test.y.at(i), b.test.x[i], nullptr, nullptr, s, hex);
    }
}

void write_csv_dataset(const std::string& path, const DatasetBundle& bundle, bool hex) {
    std::ofstream f(path);
    if (!f) throw Error("cannot open '" + path + "' for writing");
    write_csv_dataset(f, bundle, hex);
    if (!f) throw Error("failed writing '" + path + "'");
}

DatasetBundle read_csv_dataset(std::istream& in, std::optional<CsvSchema> expected) {
    DatasetBundle b;
    std::string line;
    std::size_t line_no = 0;
    std::optional<CsvSchema> s;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view t = detail::trim(line);
        if (t.empty()) continue;
        if (t.front() == '#') {
            constexpr std::string_view tag = "# provenance:";
            if (!s && t.substr(0, tag.size()) == tag) b.provenance = std::string(detail::trim(t.substr(tag.size())));
            continue;
        }
        const std::vector<std::string> cells = detail::split_commas(t);
        if (!s) {
            s = schema_from_header(cells, line_no);
            if (expected && !(*expected == *s)) {
                throw SchemaError("line " + std::to_string(line_no) + ": header does not match the expected schema (d=" +
                                  std::to_string(expected->d) + ")");
            }
            continue;
        }
        const std::size_t width = 2 + s->d * (s->gradients ? 2 : 1) + (s->outputs ? 1 : 0);
        if (cells.size() != width) {
            throw SchemaError("line " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                              " fields, got " + std::to_string(cells.size()));
        }
        Vec x(s->d);
        for (std::size_t i = 0; i < s->d; ++i) x[i] = detail::parse_real(cells[2 + i], line_no);
        const std::string& role = cells[0];
        if (role == "labeled" || role == "test") {
            LabeledSet& dst = role == "labeled" ? b.labeled : b.test;
            dst.x.push_back(std::move(x));
            dst.y.push_back(detail::parse_real(cells[1], line_no));
        } else if (role == "unlabeled") {
            b.unlabeled.push_back(std::move(x));
        } else if (role == "explanation") {
            b.explanations.points.push_back(std::move(x));
            std::size_t pos = 2 + s->d;
            if (s->gradients) {
                Vec g(s->d);
                for (std::size_t i = 0; i < s->d; ++i) g[i] = detail::parse_real(cells[pos + i], line_no);
                b.explanations.gradient_targets.push_back(std::move(g));
                pos += s->d;
            }
            if (s->outputs) b.explanations.output_targets.push_back(detail::parse_real(cells[pos], line_no));
        } else {
            throw ParseError("unknown role '" + role + "'", line_no);
        }
    }
    if (!s) throw SchemaError("dataset CSV has no header line");
    return b;
}

DatasetBundle read_csv_dataset(const std::string& path, std::optional<CsvSchema> expected) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open '" + path + "'");
    return read_csv_dataset(f, expected);
}

}  // namespace excon
