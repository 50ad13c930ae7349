#include "excon/constraints.hpp"

#include <algorithm>
#include <cmath>

#include "excon/error.hpp"

namespace excon {

namespace {

std::size_t value_dim(const ConstraintSet& set, std::size_t x_dim) {
    if (const auto* box = std::get_if<BoxSet>(&set)) return box->lo.size();
    return x_dim;
}

void check_value(const ConstraintSet& set, std::span<const double> x, std::span<const double> value) {
    if (value.size() != value_dim(set, x.size())) {
        throw DomainError("constraint set: value has dimension " + std::to_string(value.size()) +
                          ", expected " + std::to_string(value_dim(set, x.size())));
    }
    if (const auto* fo = std::get_if<FeatureOrderSet>(&set)) {
        if (fo->i >= value.size() || fo->j >= value.size()) {
            throw DomainError("feature order: index out of range");
        }
    }
    if (const auto* sr = std::get_if<ShiftedRectSet>(&set)) {
        if (sr->below.size() != x.size()) throw DomainError("shifted rectangle: dimension mismatch");
    }
}

Vec set_center(const GradBallSet& gb, std::span<const double> x) {
    return input_gradient(gb.reference, x);
}

}  // namespace

void validate(const ConstraintSet& set) {
    std::visit(
        [](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, BoxSet>) {
                if (s.lo.size() != s.hi.size()) throw DomainError("box: bound sizes differ");
                for (std::size_t i = 0; i < s.lo.size(); ++i) {
                    if (!(s.lo[i] <= s.hi[i])) throw DomainError("box: lower bound exceeds upper bound");
                }
            } else if constexpr (std::is_same_v<T, BallSet>) {
                if (!(s.radius >= 0.0)) throw DomainError("ball: radius must be non-negative");
            } else if constexpr (std::is_same_v<T, ShiftedRectSet>) {
                if (s.below.size() != s.above.size()) throw DomainError("shifted rectangle: offset sizes differ");
                for (std::size_t i = 0; i < s.below.size(); ++i) {
                    if (!(-s.below[i] <= s.above[i])) throw DomainError("shifted rectangle: empty interval");
                }
            } else if constexpr (std::is_same_v<T, FeatureOrderSet>) {
                if (s.i == s.j) throw DomainError("feature order: indices must differ");
            } else {
                if (!(s.radius >= 0.0)) throw DomainError("gradient ball: radius must be non-negative");
            }
        },
        set);
}

bool set_contains(const ConstraintSet& set, std::span<const double> x, std::span<const double> value) {
    check_value(set, x, value);
    return std::visit(
        [&](const auto& s) -> bool {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, BoxSet>) {
                for (std::size_t i = 0; i < value.size(); ++i) {
                    if (value[i] < s.lo[i] || value[i] > s.hi[i]) return false;
                }
                return true;
            } else if constexpr (std::is_same_v<T, BallSet>) {
                return distance(value, x) <= s.radius;
            } else if constexpr (std::is_same_v<T, ShiftedRectSet>) {
                for (std::size_t i = 0; i < value.size(); ++i) {
                    const double c = x[i] / 3.0;
                    if (value[i] < c - s.below[i] || value[i] > c + s.above[i]) return false;
                }
                return true;
            } else if constexpr (std::is_same_v<T, FeatureOrderSet>) {
                return value[s.i] > value[s.j];
            } else {
                return distance(value, set_center(s, x)) <= s.radius;
            }
        },
        set);
}

Vec project_onto_set(const ConstraintSet& set, std::span<const double> x, std::span<const double> value) {
    check_value(set, x, value);
    Vec p(value.begin(), value.end());
    std::visit(
        [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, BoxSet>) {
                for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::clamp(p[i], s.lo[i], s.hi[i]);
            } else if constexpr (std::is_same_v<T, BallSet>) {
                const double dist = distance(value, x);
                if (dist > s.radius) {
                    for (std::size_t i = 0; i < p.size(); ++i) p[i] = x[i] + s.radius * (value[i] - x[i]) / dist;
                }
            } else if constexpr (std::is_same_v<T, ShiftedRectSet>) {
                for (std::size_t i = 0; i < p.size(); ++i) {
                    const double c = x[i] / 3.0;
                    p[i] = std::clamp(p[i], c - s.below[i], c + s.above[i]);
                }
            } else if constexpr (std::is_same_v<T, FeatureOrderSet>) {
                if (p[s.i] < p[s.j]) {
                    const double mid = 0.5 * (p[s.i] + p[s.j]);
                    p[s.i] = mid;
                    p[s.j] = mid;
                }
            } else {
                const Vec c = set_center(s, x);
                const double dist = distance(value, c);
                if (dist > s.radius) {
                    for (std::size_t i = 0; i < p.size(); ++i) p[i] = c[i] + s.radius * (value[i] - c[i]) / dist;
                }
            }
        },
        set);
    return p;
}

double distance_to_set(const ConstraintSet& set, std::span<const double> x, std::span<const double> value) {
    return distance(value, project_onto_set(set, x, value));
}

void ExplanationSet::validate() const {
    if (!gradient_targets.empty() && gradient_targets.size() != points.size()) {
        throw DomainError("explanation set: gradient target count differs from point count");
    }
    if (!output_targets.empty() && output_targets.size() != points.size()) {
        throw DomainError("explanation set: output target count differs from point count");
    }
    if (points.empty()) return;
    const std::size_t d = points.front().size();
    for (const Vec& p : points) {
        if (p.size() != d) throw DomainError("explanation set: points have unequal dimension");
    }
    for (const Vec& g : gradient_targets) {
        if (g.size() != d) throw DomainError("explanation set: gradient target dimension mismatch");
    }
}

// --- SurrogateSpec ----------------------------------------------------------

std::string to_string(SurrogateKind kind) {
    switch (kind) {
        case SurrogateKind::GradAngle: return "grad_angle";
        case SurrogateKind::GradL2: return "grad_l2";
        case SurrogateKind::GradL2Hinge: return "grad_l2_hinge";
        case SurrogateKind::OutputAbs: return "output_abs";
        case SurrogateKind::OutputIndicator: return "output_indicator";
        case SurrogateKind::FeatureOrderHinge: return "feature_order_hinge";
        case SurrogateKind::SetMembershipHinge: return "set_membership_hinge";
    }
    return "unknown";
}

SurrogateKind parse_surrogate_kind(const std::string& text) {
    for (auto k : {SurrogateKind::GradAngle, SurrogateKind::GradL2, SurrogateKind::GradL2Hinge,
                   SurrogateKind::OutputAbs, SurrogateKind::OutputIndicator,
                   SurrogateKind::FeatureOrderHinge, SurrogateKind::SetMembershipHinge}) {
        if (to_string(k) == text) return k;
    }
    throw ParseError("unknown surrogate kind '" + text + "'", 0);
}

SurrogateSpec SurrogateSpec::grad_angle(std::optional<Model> reference) {
    SurrogateSpec s;
    s.kind = SurrogateKind::GradAngle;
    s.reference = std::move(reference);
    return s;
}

SurrogateSpec SurrogateSpec::grad_l2(std::optional<Model> reference) {
    SurrogateSpec s;
    s.kind = SurrogateKind::GradL2;
    s.reference = std::move(reference);
    return s;
}

SurrogateSpec SurrogateSpec::grad_l2_hinge(double tau, double penalty_scale, std::optional<Model> reference) {
    SurrogateSpec s;
    s.kind = SurrogateKind::GradL2Hinge;
    s.tau = tau;
    s.penalty_scale = penalty_scale;
    s.reference = std::move(reference);
    return s;
}

SurrogateSpec SurrogateSpec::output_abs(std::optional<Model> reference) {
    SurrogateSpec s;
    s.kind = SurrogateKind::OutputAbs;
    s.reference = std::move(reference);
    return s;
}

SurrogateSpec SurrogateSpec::output_indicator(std::optional<Model> reference) {
    SurrogateSpec s;
    s.kind = SurrogateKind::OutputIndicator;
    s.reference = std::move(reference);
    return s;
}

SurrogateSpec SurrogateSpec::feature_order_hinge(std::size_t i, std::size_t j) {
    SurrogateSpec s;
    s.kind = SurrogateKind::FeatureOrderHinge;
    s.feature_i = i;
    s.feature_j = j;
    return s;
}

SurrogateSpec SurrogateSpec::set_membership_hinge(ConstraintSet set) {
    SurrogateSpec s;
    s.kind = SurrogateKind::SetMembershipHinge;
    s.set = std::move(set);
    return s;
}

void SurrogateSpec::validate() const {
    if (!(tau >= 0.0)) throw DomainError("surrogate: tau must be non-negative");
    if (!(penalty_scale > 0.0)) throw DomainError("surrogate: penalty scale must be positive");
    if (kind == SurrogateKind::SetMembershipHinge) {
        if (!set) throw DomainError("surrogate: set membership hinge needs a constraint set");
        excon::validate(*set);
    }
    if (kind == SurrogateKind::FeatureOrderHinge && feature_i == feature_j) {
        throw DomainError("surrogate: feature order indices must differ");
    }
    if (kind == SurrogateKind::GradAngle && reference && !std::holds_alternative<LinearModel>(*reference)) {
        throw DomainError("surrogate: grad_angle needs a linear reference model");
    }
}

bool SurrogateSpec::uses_gradient_targets() const {
    return kind == SurrogateKind::GradAngle || kind == SurrogateKind::GradL2 ||
           kind == SurrogateKind::GradL2Hinge;
}

bool SurrogateSpec::uses_output_targets() const {
    return kind == SurrogateKind::OutputAbs || kind == SurrogateKind::OutputIndicator;
}

// --- evaluation -------------------------------------------------------------

namespace {

struct ResolvedTarget {
    Vec gradient;
    double output = 0.0;
};

ResolvedTarget resolve(const SurrogateSpec& spec, std::span<const double> x, PointTarget target) {
    ResolvedTarget r;
    if (spec.uses_gradient_targets()) {
        if (spec.reference) {
            r.gradient = input_gradient(*spec.reference, x);
        } else if (target.gradient) {
            r.gradient = *target.gradient;
        } else {
            throw DomainError("surrogate " + to_string(spec.kind) + ": no reference model or gradient target");
        }
    }
    if (spec.uses_output_targets()) {
        if (spec.reference) {
            r.output = predict(*spec.reference, x);
        } else if (target.output) {
            r.output = *target.output;
        } else {
            throw DomainError("surrogate " + to_string(spec.kind) + ": no reference model or output target");
        }
    }
    return r;
}

const LinearModel& require_linear(const Model& h) {
    const auto* lin = std::get_if<LinearModel>(&h);
    if (!lin) throw DomainError("grad_angle surrogate is defined for linear models only");
    return *lin;
}

PointTarget point_target(const ExplanationSet& set, std::size_t i) {
    PointTarget t;
    if (set.has_gradient_targets()) t.gradient = &set.gradient_targets[i];
    if (set.has_output_targets()) t.output = &set.output_targets[i];
    return t;
}

}  // namespace

double eval_surrogate(const SurrogateSpec& spec, const Model& h, std::span<const double> x) {
    return eval_surrogate(spec, h, x, PointTarget{});
}

double eval_surrogate(const SurrogateSpec& spec, const Model& h, std::span<const double> x, PointTarget target) {
    if (x.size() != input_dim(h)) throw DomainError("surrogate: point dimension mismatch");
    const ResolvedTarget t = resolve(spec, x, target);
    switch (spec.kind) {
        case SurrogateKind::GradAngle:
            return angle_between(require_linear(h).weights(), t.gradient);
        case SurrogateKind::GradL2:
            return distance(input_gradient(h, x), t.gradient);
        case SurrogateKind::GradL2Hinge: {
            const double l = distance(input_gradient(h, x), t.gradient);
            return l + spec.penalty_scale * std::max(0.0, l - spec.tau);
        }
        case SurrogateKind::OutputAbs:
            return std::abs(predict(h, x) - t.output);
        case SurrogateKind::OutputIndicator:
            return ((predict(h, x) > 0.0) != (t.output > 0.0)) ? 1.0 : 0.0;
        case SurrogateKind::FeatureOrderHinge: {
            const Vec g = input_gradient(h, x);
            if (spec.feature_i >= g.size() || spec.feature_j >= g.size()) {
                throw DomainError("feature order hinge: index out of range");
            }
            return std::max(0.0, g[spec.feature_j] - g[spec.feature_i]);
        }
        case SurrogateKind::SetMembershipHinge:
            if (!spec.set) throw DomainError("set membership hinge without a constraint set");
            return distance_to_set(*spec.set, x, input_gradient(h, x));
    }
    throw UnsupportedError("surrogate: unknown kind");
}

double eval_surrogate_at(const SurrogateSpec& spec, const Model& h, const ExplanationSet& set, std::size_t i) {
    return eval_surrogate(spec, h, set.points.at(i), point_target(set, i));
}

double empirical_surrogate(const SurrogateSpec& spec, const Model& h, const ExplanationSet& set) {
    if (set.size() == 0) throw DomainError("empirical_surrogate: explanation set is empty");
    double total = 0.0;
    for (std::size_t i = 0; i < set.size(); ++i) total += eval_surrogate_at(spec, h, set, i);
    return total / static_cast<double>(set.size());
}

void accumulate_surrogate_param_grad(const SurrogateSpec& spec, const Model& h, const ExplanationSet& set,
                                     std::size_t i, double scale, std::span<double> out) {
    const Vec& x = set.points.at(i);
    if (x.size() != input_dim(h)) throw DomainError("surrogate: point dimension mismatch");
    const ResolvedTarget t = resolve(spec, x, point_target(set, i));
    switch (spec.kind) {
        case SurrogateKind::GradAngle: {
            const LinearModel& lin = require_linear(h);
            const Vec& w = lin.weights();
            const double nw = norm(w);
            const double nr = norm(t.gradient);
            if (!(nw > 0.0) || !(nr > 0.0)) throw DomainError("grad_angle: zero-length weight vector");
            const double c = std::clamp(dot(w, t.gradient) / (nw * nr), -1.0, 1.0);
            const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
            if (s < 1e-12) return;  // at theta = 0 (minimum) or pi: zero subgradient
            // d theta / d w = -(r/(|w||r|) - c w/|w|^2) / sin(theta)
            for (std::size_t k = 0; k < w.size(); ++k) {
                const double dc = t.gradient[k] / (nw * nr) - c * w[k] / (nw * nw);
                out[k] += scale * (-dc / s);
            }
            return;
        }
        case SurrogateKind::GradL2:
        case SurrogateKind::GradL2Hinge: {
            Vec diff = input_gradient(h, x);
            for (std::size_t k = 0; k < diff.size(); ++k) diff[k] -= t.gradient[k];
            const double l = norm(diff);
            if (!(l > 0.0)) return;
            double factor = 1.0;
            if (spec.kind == SurrogateKind::GradL2Hinge && l > spec.tau) factor += spec.penalty_scale;
            for (double& v : diff) v /= l;
            accumulate_input_gradient_param_jacobian(h, x, diff, scale * factor, out);
            return;
        }
        case SurrogateKind::OutputAbs: {
            const double r = predict(h, x) - t.output;
            if (r == 0.0) return;
            accumulate_param_gradient(h, x, scale * (r > 0.0 ? 1.0 : -1.0), out);
            return;
        }
        case SurrogateKind::OutputIndicator:
            throw UnsupportedError("output_indicator surrogate has no useful gradient");
        case SurrogateKind::FeatureOrderHinge: {
            const Vec g = input_gradient(h, x);
            if (spec.feature_i >= g.size() || spec.feature_j >= g.size()) {
                throw DomainError("feature order hinge: index out of range");
            }
            if (!(g[spec.feature_j] - g[spec.feature_i] > 0.0)) return;
            Vec up(g.size(), 0.0);
            up[spec.feature_j] = 1.0;
            up[spec.feature_i] = -1.0;
            accumulate_input_gradient_param_jacobian(h, x, up, scale, out);
            return;
        }
        case SurrogateKind::SetMembershipHinge: {
            if (!spec.set) throw DomainError("set membership hinge without a constraint set");
            const Vec g = input_gradient(h, x);
            Vec diff = subtract(g, project_onto_set(*spec.set, x, g));
            const double dist = norm(diff);
            if (!(dist > 0.0)) return;
            for (double& v : diff) v /= dist;
            accumulate_input_gradient_param_jacobian(h, x, diff, scale, out);
            return;
        }
    }
}

ParamVec surrogate_param_grad(const SurrogateSpec& spec, const Model& h, const ExplanationSet& set) {
    if (!spec.differentiable()) throw UnsupportedError("output_indicator surrogate has no useful gradient");
    if (set.size() == 0) throw DomainError("surrogate_param_grad: explanation set is empty");
    ParamVec g(param_count(h), 0.0);
    const double scale = 1.0 / static_cast<double>(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) accumulate_surrogate_param_grad(spec, h, set, i, scale, g);
    return g;
}

}  // namespace excon
