#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "excon/core_math.hpp"

namespace excon {

// Closed-form Rademacher complexity calculators. Every calculator throws
// DomainError when n (or d, k) is zero or an input is negative.

// B C / sqrt(n): norm-bounded linear class, E||x||^2 <= C^2.
double std_linear_bound(double B, double C, std::size_t n);

// Gradient-angle constrained linear class on the unit sphere in R^d (C = 1):
//   B/sqrt(n) * (sin(tau) p + (1 - p)/2),   p = erf(sqrt(d) sin(tau) / sqrt(2)).
// tau must lie in [0, pi].
double constrained_linear_sphere_bound(double B, std::size_t d, double tau, std::size_t n);

// Complexity of the same class as a function of the constraint level, made
// non-decreasing: the classes are nested, so min over s in [tau, pi/2] of the
// formula above also bounds level tau. The formula dips below its tau = 0
// value on (0, pi/6); beyond pi/2 this returns std_linear_bound(B, 1, n).
// Use this wherever a complexity is assembled at a level like tau + eps.
double constrained_linear_sphere_envelope(double B, std::size_t d, double tau, std::size_t n);

// 2 B C / sqrt(n): two-layer ReLU networks with sum |w_j| <= B and unit rows.
double std_2nn_bound(double B, double C, std::size_t n);

// Two-layer class constrained by the gradient-ball surrogate with slack tau:
// 3 tau m C / sqrt(n), or (2m + q) tau C / sqrt(n) when q (the number of
// reference nodes with |w'_j| < tau) is supplied; q must not exceed m_nodes.
double constrained_2nn_bound(double tau, std::size_t m_nodes, double C, std::size_t n,
                             std::optional<std::size_t> q = std::nullopt);

// ---------------------------------------------------------------------------
// Monte Carlo estimates of empirical Rademacher complexities conditional on a
// fixed sample S. Each draw consumes rademacher_draw(rng, |S|), so estimators
// called with copies of the same stream see identical sign sequences.
// ---------------------------------------------------------------------------

struct McEstimate {
    double estimate = 0.0;
    double std_error = 0.0;  // sample standard deviation / sqrt(draws)
    std::size_t draws = 0;
};

// Per draw: (B/n) ||v|| f(v) with v = sum_i sigma_i x_i, theta = angle(v, w'),
// and f = 1 for theta <= tau, cos(theta - tau) for tau <= theta <= pi/2 + tau,
// 0 beyond. w_ref must have unit norm (within 1e-9).
McEstimate mc_constrained_linear_empirical(const std::vector<Vec>& S, const Vec& w_ref, double tau,
                                           double B, std::size_t n_mc, RngStream& rng);

// {x -> <w, x> : ||w|| <= B}; per-draw supremum B ||v|| / n.
struct LinearUnconstrainedClass {
    double B = 1.0;
};

// {x -> sum_j w_j relu(<u_j, x>) : sum |w_j| <= B, u_j in G} where G holds
// the normalized non-zero points of the cubic grid {-1, .., 1}^d with
// `grid` values per axis. A linear function over the l1 ball peaks at a
// vertex, so the per-draw supremum is B max_{u in G} |sum_i sigma_i relu(<u, x_i>)| / n
// for every m_nodes >= 1. More than 1e6 grid points throws DomainError.
struct TwoLayerGridClass {
    double B = 1.0;
    std::size_t m_nodes = 1;
    std::size_t grid = 3;
};

using RademacherClass = std::variant<LinearUnconstrainedClass, TwoLayerGridClass>;

McEstimate mc_empirical_rademacher(const RademacherClass& cls, const std::vector<Vec>& S,
                                   std::size_t n_mc, RngStream& rng);

// ---------------------------------------------------------------------------
// Generalization bound assembly.
// ---------------------------------------------------------------------------

// 2 R_k(G) + sqrt(ln(4/delta) / (2k)).
double epsilon_k(double R_kG, std::size_t k, double delta);
// Realizable-setting variant with ln(2/delta).
double epsilon_k_realizable(double R_kG, std::size_t k, double delta);

struct AgnosticInputs {
    std::size_t n = 1;
    std::size_t k = 1;
    double tau = 0.0;
    double delta = 0.05;
    double R_kG = 0.0;
};

struct AgnosticBound {
    double value = 0.0;
    double eps_k = 0.0;
    // tau - eps_k < 0: the comparison class may be empty. The value is still
    // assembled with err_of_best evaluated at the negative slack.
    bool comparison_class_may_be_empty = false;
};

// err(h*_{tau - eps}) + 2 R_n(H_{tau + eps}) + 2 sqrt(ln(4/delta) / (2n)).
AgnosticBound agnostic_generalization_bound(const AgnosticInputs& in,
                                            const std::function<double(double)>& R_n_constrained_at,
                                            const std::function<double(double)>& err_of_best_at);

// Same assembly with both components already evaluated.
double agnostic_generalization_bound(std::size_t n, double delta, double R_n_constrained,
                                     double err_of_best);

// R_n(H_{eps'}) + sqrt(ln(2/delta) / (2n)).
double realizable_bound(double R_n_constrained, std::size_t n, double delta);

// Evaluates R at eps' = epsilon_k_realizable(R_kG, k, delta) first.
double realizable_bound(const std::function<double(double)>& R_n_constrained_at, double R_kG,
                        std::size_t k, std::size_t n, double delta);

// Complexity of the surrogate-loss class G.
struct LinearGradAngleSurrogate {
    std::size_t k = 1;  // pi / (2 sqrt(k))
};
struct NoisyClassifierSurrogate {
    double R_nH = 0.0;  // R_nH / 2
};
struct NoisyRegressorSurrogate {
    double R_nH = 0.0;  // 2 R_nH
};
struct LearnableClassSurrogate {
    double R_nH = 0.0;  // 2 R_nH + 2 R_nC
    double R_nC = 0.0;
};
using SurrogateClass = std::variant<LinearGradAngleSurrogate, NoisyClassifierSurrogate,
                                    NoisyRegressorSurrogate, LearnableClassSurrogate>;

double surrogate_class_bound(const SurrogateClass& cls);

// (R_n(H) - R_n(H_tau)) + (err(h*) - err(h*_tau)). May be negative.
double goodness_report(double R_nH, double R_nH_constrained, double err_star, double err_star_tau);

// ---------------------------------------------------------------------------
// Report rows
// ---------------------------------------------------------------------------

struct BoundInputs {
    double B = 1.0;
    double C = 1.0;
    std::size_t d = 1;
    std::size_t n = 1;
    std::size_t k = 0;
    std::size_t m_nodes = 0;
    double tau = 0.0;
    double delta = 0.05;
    std::optional<std::size_t> q;
    double R_kG = 0.0;
};

struct BoundRow {
    std::string formula_id;
    BoundInputs inputs;
    double value = 0.0;
    std::optional<double> mc_estimate;
    std::optional<double> mc_std_error;
    std::optional<bool> within_bound;
};

struct BoundReport {
    std::vector<BoundRow> rows;

    // Header: formula_id,B,C,d,n,k,m_nodes,tau,delta,q,R_kG,value,mc_estimate,
    // mc_std_error,within_bound. Missing optionals are empty cells; reals use %.17g.
    void write_csv(std::ostream& out) const;
};

}  // namespace excon
