#include "excon/models.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>

#include "excon/error.hpp"

namespace excon {

namespace {

constexpr double kBoundaryTol = 1e-12;

void check_dim(std::size_t expected, std::size_t got, const char* op) {
    if (expected != got) {
        throw DomainError(std::string(op) + ": input has dimension " + std::to_string(got) +
                          ", model expects " + std::to_string(expected));
    }
}

void check_finite(std::span<const double> v, const char* what) {
    if (!all_finite(v)) throw DomainError(std::string(what) + ": non-finite parameter");
}

std::string hex(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

double parse_double(const std::string& tok) {
    const char* begin = tok.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0' || !std::isfinite(v)) {
        throw ParseError("invalid model parameter '" + tok + "'", 0);
    }
    return v;
}

}  // namespace

LinearModel::LinearModel(Vec weights, double bias) : w_(std::move(weights)), b_(bias) {
    check_finite(w_, "LinearModel");
    if (!std::isfinite(b_)) throw DomainError("LinearModel: non-finite bias");
}

TwoLayerRelu::TwoLayerRelu(Vec outer, std::vector<Vec> rows) : w_(std::move(outer)) {
    if (rows.size() != w_.size()) {
        throw DomainError("TwoLayerRelu: outer weight count differs from row count");
    }
    d_ = rows.empty() ? 0 : rows.front().size();
    u_.reserve(rows.size() * d_);
    for (std::size_t j = 0; j < rows.size(); ++j) {
        const Vec& r = rows[j];
        if (r.size() != d_) throw DomainError("TwoLayerRelu: rows have unequal length");
        const double n = norm(r);
        if (n > 0.0) {
            w_[j] *= n;
            for (double v : r) u_.push_back(v / n);
        } else {
            w_[j] = 0.0;
            for (std::size_t i = 0; i < d_; ++i) u_.push_back(i == 0 ? 1.0 : 0.0);
        }
    }
    check_finite(w_, "TwoLayerRelu");
    check_finite(u_, "TwoLayerRelu");
}

TwoLayerRelu TwoLayerRelu::from_unit_rows(Vec outer, std::vector<Vec> rows) {
    if (rows.size() != outer.size()) {
        throw DomainError("TwoLayerRelu: outer weight count differs from row count");
    }
    TwoLayerRelu h;
    h.w_ = std::move(outer);
    h.d_ = rows.empty() ? 0 : rows.front().size();
    for (const Vec& r : rows) {
        if (r.size() != h.d_) throw DomainError("TwoLayerRelu: rows have unequal length");
        if (std::abs(norm(r) - 1.0) > 1e-9) throw DomainError("TwoLayerRelu: row is not unit norm");
        h.u_.insert(h.u_.end(), r.begin(), r.end());
    }
    check_finite(h.w_, "TwoLayerRelu");
    check_finite(h.u_, "TwoLayerRelu");
    return h;
}

ModelKind kind_of(const Model& h) {
    if (const auto* t = std::get_if<TwoLayerRelu>(&h)) return ModelKind::two_layer(t->hidden());
    return ModelKind::linear();
}

std::size_t input_dim(const Model& h) {
    return std::visit([](const auto& m) { return m.dim(); }, h);
}

std::string to_string(const ModelKind& kind) {
    if (kind.family == ModelKind::Family::Linear) return "linear";
    return "two_layer:" + std::to_string(kind.hidden);
}

ModelKind parse_model_kind(const std::string& text) {
    if (text == "linear") return ModelKind::linear();
    const std::string prefix = "two_layer:";
    if (text.rfind(prefix, 0) == 0) {
        const std::string rest = text.substr(prefix.size());
        char* end = nullptr;
        const unsigned long v = std::strtoul(rest.c_str(), &end, 10);
        if (!rest.empty() && *end == '\0' && v > 0) return ModelKind::two_layer(v);
    }
    throw ParseError("unknown model kind '" + text + "' (expected linear or two_layer:<hidden>)", 0);
}

double predict(const Model& h, std::span<const double> x) {
    if (const auto* lin = std::get_if<LinearModel>(&h)) {
        check_dim(lin->dim(), x.size(), "predict");
        return dot(lin->weights(), x) + lin->bias();
    }
    const auto& net = std::get<TwoLayerRelu>(h);
    check_dim(net.dim(), x.size(), "predict");
    double out = 0.0;
    for (std::size_t j = 0; j < net.hidden(); ++j) {
        const double a = dot(net.row(j), x);
        if (a > 0.0) out += net.outer()[j] * a;
    }
    return out;
}

InputGradient input_gradient_flagged(const Model& h, std::span<const double> x) {
    if (const auto* lin = std::get_if<LinearModel>(&h)) {
        check_dim(lin->dim(), x.size(), "input_gradient");
        return {lin->weights(), false};
    }
    const auto& net = std::get<TwoLayerRelu>(h);
    check_dim(net.dim(), x.size(), "input_gradient");
    InputGradient g{Vec(net.dim(), 0.0), false};
    for (std::size_t j = 0; j < net.hidden(); ++j) {
        const double a = dot(net.row(j), x);
        if (std::abs(a) <= kBoundaryTol) g.on_boundary = true;
        if (a > 0.0) axpy(net.outer()[j], net.row(j), g.value);
    }
    return g;
}

Vec input_gradient(const Model& h, std::span<const double> x) {
    return input_gradient_flagged(h, x).value;
}

std::size_t param_count(const Model& h) {
    if (const auto* lin = std::get_if<LinearModel>(&h)) return lin->dim() + 1;
    const auto& net = std::get<TwoLayerRelu>(h);
    return net.hidden() * (net.dim() + 1);
}

ParamVec flatten(const Model& h) {
    if (const auto* lin = std::get_if<LinearModel>(&h)) {
        ParamVec p = lin->weights();
        p.push_back(lin->bias());
        return p;
    }
    const auto& net = std::get<TwoLayerRelu>(h);
    ParamVec p = net.outer();
    p.insert(p.end(), net.rows_flat().begin(), net.rows_flat().end());
    return p;
}

Model with_params(const Model& like, std::span<const double> params) {
    if (params.size() != param_count(like)) {
        throw DomainError("with_params: expected " + std::to_string(param_count(like)) +
                          " parameters, got " + std::to_string(params.size()));
    }
    if (const auto* lin = std::get_if<LinearModel>(&like)) {
        const std::size_t d = lin->dim();
        return LinearModel(Vec(params.begin(), params.begin() + d), params[d]);
    }
    const auto& net = std::get<TwoLayerRelu>(like);
    const std::size_t m = net.hidden();
    const std::size_t d = net.dim();
    Vec outer(params.begin(), params.begin() + m);
    std::vector<Vec> rows(m);
    for (std::size_t j = 0; j < m; ++j) {
        const auto first = params.begin() + m + j * d;
        rows[j].assign(first, first + d);
        const double len = norm(rows[j]);
        if (len > 0.0 && std::isfinite(len)) {
            for (double& v : rows[j]) v /= len;
        } else {
            const auto prev = net.row(j);
            rows[j].assign(prev.begin(), prev.end());
        }
    }
    if (!all_finite(outer)) throw DomainError("TwoLayerRelu: non-finite parameter");
    return TwoLayerRelu::from_unit_rows(std::move(outer), std::move(rows));
}

void accumulate_param_gradient(const Model& h, std::span<const double> x, double upstream,
                               std::span<double> out) {
    if (out.size() != param_count(h)) throw DomainError("param_gradient: output size mismatch");
    if (const auto* lin = std::get_if<LinearModel>(&h)) {
        check_dim(lin->dim(), x.size(), "param_gradient");
        const std::size_t d = lin->dim();
        for (std::size_t i = 0; i < d; ++i) out[i] += upstream * x[i];
        out[d] += upstream;
        return;
    }
    const auto& net = std::get<TwoLayerRelu>(h);
    check_dim(net.dim(), x.size(), "param_gradient");
    const std::size_t m = net.hidden();
    const std::size_t d = net.dim();
    for (std::size_t j = 0; j < m; ++j) {
        const double a = dot(net.row(j), x);
        if (!(a > 0.0)) continue;
        out[j] += upstream * a;
        const double s = upstream * net.outer()[j];
        double* uj = out.data() + m + j * d;
        for (std::size_t i = 0; i < d; ++i) uj[i] += s * x[i];
    }
}

ParamVec param_gradient(const Model& h, std::span<const double> x, double upstream) {
    ParamVec g(param_count(h), 0.0);
    accumulate_param_gradient(h, x, upstream, g);
    return g;
}

void accumulate_input_gradient_param_jacobian(const Model& h, std::span<const double> x,
                                              std::span<const double> upstream_vec,
                                              double scale, std::span<double> out) {
    if (out.size() != param_count(h)) {
        throw DomainError("input_gradient_param_jacobian: output size mismatch");
    }
    if (const auto* lin = std::get_if<LinearModel>(&h)) {
        check_dim(lin->dim(), x.size(), "input_gradient_param_jacobian");
        check_dim(lin->dim(), upstream_vec.size(), "input_gradient_param_jacobian");
        for (std::size_t i = 0; i < lin->dim(); ++i) out[i] += scale * upstream_vec[i];
        return;
    }
    const auto& net = std::get<TwoLayerRelu>(h);
    check_dim(net.dim(), x.size(), "input_gradient_param_jacobian");
    check_dim(net.dim(), upstream_vec.size(), "input_gradient_param_jacobian");
    const std::size_t m = net.hidden();
    const std::size_t d = net.dim();
    for (std::size_t j = 0; j < m; ++j) {
        if (!(dot(net.row(j), x) > 0.0)) continue;
        out[j] += scale * dot(upstream_vec, net.row(j));
        const double s = scale * net.outer()[j];
        double* uj = out.data() + m + j * d;
        for (std::size_t i = 0; i < d; ++i) uj[i] += s * upstream_vec[i];
    }
}

ParamVec input_gradient_param_jacobian(const Model& h, std::span<const double> x,
                                       std::span<const double> upstream_vec) {
    ParamVec g(param_count(h), 0.0);
    accumulate_input_gradient_param_jacobian(h, x, upstream_vec, 1.0, g);
    return g;
}

namespace {

std::vector<Vec> unit_rows(std::size_t m, std::size_t d, const Vec& flat_rows) {
    std::vector<Vec> rows(m);
    for (std::size_t j = 0; j < m; ++j) {
        rows[j].assign(flat_rows.begin() + j * d, flat_rows.begin() + (j + 1) * d);
        const double n = norm(rows[j]);
        if (n > 0.0) {
            for (double& v : rows[j]) v /= n;
        }
    }
    return rows;
}

}  // namespace

Model random_init(const ModelKind& kind, std::size_t d, double scale, RngStream& rng) {
    if (!(scale >= 0.0)) throw DomainError("random_init: scale must be non-negative");
    if (kind.family == ModelKind::Family::Linear) {
        Vec w = gaussian_vector(rng, d, scale);
        const double b = scale * rng.normal();
        return LinearModel(std::move(w), b);
    }
    const std::size_t m = kind.hidden;
    Vec outer = gaussian_vector(rng, m, scale);
    // Row directions do not depend on scale; scale = 0 still yields unit rows.
    Vec flat = gaussian_vector(rng, m * d, 1.0);
    return TwoLayerRelu(std::move(outer), unit_rows(m, d, flat));
}

Model perturb_weights(const Model& h, double noise_std, RngStream& rng) {
    if (!(noise_std >= 0.0)) throw DomainError("perturb_weights: noise_std must be non-negative");
    if (noise_std == 0.0) return h;
    if (const auto* lin = std::get_if<LinearModel>(&h)) {
        Vec w = lin->weights();
        for (double& v : w) v += noise_std * rng.normal();
        const double b = lin->bias() + noise_std * rng.normal();
        return LinearModel(std::move(w), b);
    }
    const auto& net = std::get<TwoLayerRelu>(h);
    Vec outer = net.outer();
    for (double& v : outer) v += noise_std * rng.normal();
    Vec flat = net.rows_flat();
    for (double& v : flat) v += noise_std * rng.normal();
    return TwoLayerRelu(std::move(outer), unit_rows(net.hidden(), net.dim(), flat));
}

void write_model(std::ostream& out, const Model& h) {
    if (const auto* lin = std::get_if<LinearModel>(&h)) {
        out << "linear " << lin->dim() << " 0\n";
        for (double v : lin->weights()) out << hex(v) << ' ';
        out << hex(lin->bias()) << '\n';
        return;
    }
    const auto& net = std::get<TwoLayerRelu>(h);
    out << "two_layer " << net.dim() << ' ' << net.hidden() << '\n';
    for (std::size_t j = 0; j < net.hidden(); ++j) {
        out << hex(net.outer()[j]) << (j + 1 < net.hidden() ? ' ' : '\n');
    }
    for (std::size_t j = 0; j < net.hidden(); ++j) {
        const auto r = net.row(j);
        for (std::size_t i = 0; i < r.size(); ++i) out << hex(r[i]) << (i + 1 < r.size() ? ' ' : '\n');
    }
}

Model read_model(std::istream& in) {
    std::string kind;
    std::size_t d = 0;
    std::size_t m = 0;
    if (!(in >> kind >> d >> m)) throw ParseError("model header must be '<kind> <d> <m>'", 1);
    auto next = [&in]() {
        std::string tok;
        if (!(in >> tok)) throw ParseError("model file ended early", 0);
        return parse_double(tok);
    };
    if (kind == "linear") {
        if (m != 0) throw SchemaError("linear model header must have m = 0");
        Vec w(d);
        for (double& v : w) v = next();
        const double b = next();
        return LinearModel(std::move(w), b);
    }
    if (kind == "two_layer") {
        Vec outer(m);
        for (double& v : outer) v = next();
        std::vector<Vec> rows(m, Vec(d));
        for (auto& r : rows) {
            for (double& v : r) v = next();
        }
        return TwoLayerRelu::from_unit_rows(std::move(outer), std::move(rows));
    }
    throw ParseError("unknown model kind '" + kind + "'", 1);
}

std::string model_to_string(const Model& h) {
    std::ostringstream os;
    write_model(os, h);
    return os.str();
}

Model model_from_string(const std::string& text) {
    std::istringstream is(text);
    return read_model(is);
}

}  // namespace excon
