#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "excon/core_math.hpp"

namespace excon {

// h(x) = <w, x> + b
class LinearModel {
public:
    LinearModel(Vec weights, double bias);

    const Vec& weights() const { return w_; }
    double bias() const { return b_; }
    std::size_t dim() const { return w_.size(); }

    bool operator==(const LinearModel&) const = default;

private:
    Vec w_;
    double b_;
};

// h(x) = sum_j w_j relu(<u_j, x>) with every ||u_j|| = 1.
//
// The public constructor rescales each row to unit length and multiplies the
// matching outer weight by the row's norm, which leaves h unchanged (ReLU is
// positively homogeneous). A zero row becomes e_0 with outer weight 0.
class TwoLayerRelu {
public:
    TwoLayerRelu(Vec outer, std::vector<Vec> rows);

    // Keeps the given bits exactly; each row must already have unit norm
    // within 1e-9. Used when reading serialized models.
    static TwoLayerRelu from_unit_rows(Vec outer, std::vector<Vec> rows);

    std::size_t hidden() const { return w_.size(); }
    std::size_t dim() const { return d_; }
    const Vec& outer() const { return w_; }
    std::span<const double> row(std::size_t j) const { return {u_.data() + j * d_, d_}; }
    // Row-major hidden() x dim() matrix of unit rows.
    const Vec& rows_flat() const { return u_; }

    bool operator==(const TwoLayerRelu&) const = default;

private:
    TwoLayerRelu() = default;

    Vec w_;
    Vec u_;
    std::size_t d_ = 0;
};

using Model = std::variant<LinearModel, TwoLayerRelu>;

// Describes a model family; hidden is ignored for linear models.
struct ModelKind {
    enum class Family { Linear, TwoLayer };
    Family family = Family::Linear;
    std::size_t hidden = 0;

    static ModelKind linear() { return {Family::Linear, 0}; }
    static ModelKind two_layer(std::size_t hidden) { return {Family::TwoLayer, hidden}; }

    bool operator==(const ModelKind&) const = default;
};

ModelKind kind_of(const Model& h);
std::size_t input_dim(const Model& h);
std::string to_string(const ModelKind& kind);
ModelKind parse_model_kind(const std::string& text);

// ---------------------------------------------------------------------------
// Evaluation and derivatives. Every function throws DomainError when dim(x)
// does not match the model. ReLU activity uses the strict test <u_j, x> > 0.
// ---------------------------------------------------------------------------

double predict(const Model& h, std::span<const double> x);

struct InputGradient {
    Vec value;
    // True when some |<u_j, x>| <= 1e-12; the strict-inequality convention
    // was used for that node.
    bool on_boundary = false;
};

InputGradient input_gradient_flagged(const Model& h, std::span<const double> x);
Vec input_gradient(const Model& h, std::span<const double> x);

// Flat parameter layout shared by param_gradient, flatten and with_params:
//   linear:    [w_0 .. w_{d-1}, b]
//   two-layer: [w_1 .. w_m, u_1 (d entries), .., u_m (d entries)]
using ParamVec = Vec;

std::size_t param_count(const Model& h);
ParamVec flatten(const Model& h);
// Rebuilds a model of the same kind from flat parameters. Two-layer rows are
// projected back onto the unit sphere and the outer weights are kept as
// given (a zero row keeps the row of `like`). This is the retraction used
// after every gradient step.
Model with_params(const Model& like, std::span<const double> params);

// d(upstream * h(x)) / d(params); accumulates into out when given.
ParamVec param_gradient(const Model& h, std::span<const double> x, double upstream);
void accumulate_param_gradient(const Model& h, std::span<const double> x, double upstream,
                               std::span<double> out);

// d<upstream_vec, grad_x h(x)> / d(params) with activation indicators held
// constant. For linear models this is (upstream_vec, 0).
ParamVec input_gradient_param_jacobian(const Model& h, std::span<const double> x,
                                       std::span<const double> upstream_vec);
void accumulate_input_gradient_param_jacobian(const Model& h, std::span<const double> x,
                                              std::span<const double> upstream_vec,
                                              double scale, std::span<double> out);

// w, b, u entries i.i.d. N(0, scale^2); u rows are then scaled to unit norm
// (the outer weights are left as drawn).
Model random_init(const ModelKind& kind, std::size_t d, double scale, RngStream& rng);

// Adds N(0, noise_std^2) to every parameter, then scales u rows back to unit
// norm. noise_std = 0 returns an identical model.
Model perturb_weights(const Model& h, double noise_std, RngStream& rng);

// ---------------------------------------------------------------------------
// Text format:
//   line 1:  "<kind> <d> <m>"   kind in {linear, two_layer}; m = 0 for linear
//   linear:     d weights then the bias
//   two-layer:  m outer weights, then m rows of d entries
// Values are written as hexadecimal float literals so a round trip is
// bit-exact; the reader also accepts decimal literals.
// ---------------------------------------------------------------------------

void write_model(std::ostream& out, const Model& h);
Model read_model(std::istream& in);
std::string model_to_string(const Model& h);
Model model_from_string(const std::string& text);

}  // namespace excon
