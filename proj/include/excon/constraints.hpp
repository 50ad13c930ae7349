#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "excon/core_math.hpp"
#include "excon/models.hpp"

namespace excon {

// ---------------------------------------------------------------------------
// Constraint sets C(x) over explanation values g(h, x) = grad_x h(x).
// ---------------------------------------------------------------------------

// C(x) = prod_i [lo_i, hi_i], independent of x.
struct BoxSet {
    Vec lo;
    Vec hi;
};

// C(x) = { v : ||v - x|| <= radius }.
struct BallSet {
    double radius = 0.0;
};

// C(x) = { v : x_i/3 - below_i <= v_i <= x_i/3 + above_i }.
struct ShiftedRectSet {
    Vec below;
    Vec above;
};

// C(x) = { v : v_i > v_j }, "feature i matters more than feature j".
struct FeatureOrderSet {
    std::size_t i = 0;
    std::size_t j = 0;
};

// C(x) = { v : ||v - grad_x h'(x)|| <= radius }.
struct GradBallSet {
    Model reference;
    double radius = 0.0;
};

using ConstraintSet = std::variant<BoxSet, BallSet, ShiftedRectSet, FeatureOrderSet, GradBallSet>;

// Throws DomainError on negative radii, inverted intervals or size mismatch.
void validate(const ConstraintSet& set);

bool set_contains(const ConstraintSet& set, std::span<const double> x,
                  std::span<const double> value);

// Euclidean projection of value onto the closure of C(x).
Vec project_onto_set(const ConstraintSet& set, std::span<const double> x,
                     std::span<const double> value);

// Euclidean distance from value to the closure of C(x); 0 on members.
double distance_to_set(const ConstraintSet& set, std::span<const double> x,
                       std::span<const double> value);

// ---------------------------------------------------------------------------
// Explanation sample S_E: points plus optional per-point targets. Gradient
// targets feed the gradient surrogates when a spec has no reference model;
// output targets feed the output surrogates.
// ---------------------------------------------------------------------------
struct ExplanationSet {
    std::vector<Vec> points;
    std::vector<Vec> gradient_targets;  // empty or one per point
    Vec output_targets;                 // empty or one per point

    std::size_t size() const { return points.size(); }
    bool has_gradient_targets() const { return !gradient_targets.empty(); }
    bool has_output_targets() const { return !output_targets.empty(); }

    void validate() const;

    bool operator==(const ExplanationSet&) const = default;
};

// ---------------------------------------------------------------------------
// Surrogate losses phi(h, x) >= 0, zero whenever g(h, x) lies in C(x).
// ---------------------------------------------------------------------------
enum class SurrogateKind {
    GradAngle,           // angle(w_h, w_h')             (linear models only)
    GradL2,              // ||grad h(x) - grad h'(x)||
    GradL2Hinge,         // GradL2 + M max(0, GradL2 - tau)
    OutputAbs,           // |h(x) - h'(x)|
    OutputIndicator,     // 1{sign h(x) != sign h'(x)}
    FeatureOrderHinge,   // max(0, d_j h(x) - d_i h(x))
    SetMembershipHinge,  // dist(grad h(x), C(x))
};

std::string to_string(SurrogateKind kind);
SurrogateKind parse_surrogate_kind(const std::string& text);

struct SurrogateSpec {
    SurrogateKind kind = SurrogateKind::GradL2;
    // h'. When absent the per-point targets of the explanation set are used.
    std::optional<Model> reference;
    double tau = 0.0;
    // Finite stand-in for the infinite penalty on ||grad h - grad h'|| > tau.
    double penalty_scale = 1e6;
    std::size_t feature_i = 0;
    std::size_t feature_j = 0;
    std::optional<ConstraintSet> set;

    static SurrogateSpec grad_angle(std::optional<Model> reference = std::nullopt);
    static SurrogateSpec grad_l2(std::optional<Model> reference = std::nullopt);
    static SurrogateSpec grad_l2_hinge(double tau, double penalty_scale = 1e6,
                                       std::optional<Model> reference = std::nullopt);
    static SurrogateSpec output_abs(std::optional<Model> reference = std::nullopt);
    static SurrogateSpec output_indicator(std::optional<Model> reference = std::nullopt);
    static SurrogateSpec feature_order_hinge(std::size_t i, std::size_t j);
    static SurrogateSpec set_membership_hinge(ConstraintSet set);

    void validate() const;
    bool differentiable() const { return kind != SurrogateKind::OutputIndicator; }
    bool uses_gradient_targets() const;
    bool uses_output_targets() const;
};

// Target of one explanation point; either pointer may be null.
struct PointTarget {
    const Vec* gradient = nullptr;
    const double* output = nullptr;
};

// phi(h, x) with targets taken from spec.reference. Throws DomainError when
// the spec needs a reference it does not have.
double eval_surrogate(const SurrogateSpec& spec, const Model& h, std::span<const double> x);
double eval_surrogate(const SurrogateSpec& spec, const Model& h, std::span<const double> x,
                      PointTarget target);

// phi for the i-th point of S_E (reference model first, then the target table).
double eval_surrogate_at(const SurrogateSpec& spec, const Model& h, const ExplanationSet& set,
                         std::size_t i);

// (1/k) sum_i phi(h, x'_i). Throws DomainError for k = 0.
double empirical_surrogate(const SurrogateSpec& spec, const Model& h, const ExplanationSet& set);

// Subgradient of empirical_surrogate w.r.t. the flat parameters of h. Kinks
// use the zero subgradient (e.g. GradL2 where the gradients coincide).
// OutputIndicator throws UnsupportedError.
ParamVec surrogate_param_grad(const SurrogateSpec& spec, const Model& h, const ExplanationSet& set);

// Adds scale * d phi(h, x'_i)/d params into out.
void accumulate_surrogate_param_grad(const SurrogateSpec& spec, const Model& h,
                                     const ExplanationSet& set, std::size_t i, double scale,
                                     std::span<double> out);

}  // namespace excon
