#include "excon/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <string>

#include "excon/error.hpp"

namespace excon {

namespace {

void require_positive_count(std::size_t v, const char* name) {
    if (v == 0) throw DomainError(std::string(name) + " must be at least 1");
}

void require_nonnegative(double v, const char* name) {
    if (!(v >= 0.0)) throw DomainError(std::string(name) + " must be non-negative");
}

void require_delta(double delta) {
    if (!(delta > 0.0 && delta < 1.0)) throw DomainError("delta must lie in (0, 1)");
}

double inv_sqrt(std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); }

// Welford accumulator for mean and standard error.
class Accumulator {
public:
    void add(double v) {
        ++count_;
        const double delta = v - mean_;
        mean_ += delta / static_cast<double>(count_);
        m2_ += delta * (v - mean_);
    }

    McEstimate result() const {
        McEstimate r;
        r.estimate = mean_;
        r.draws = count_;
        r.std_error = count_ > 1
                          ? std::sqrt(m2_ / static_cast<double>(count_ - 1) / static_cast<double>(count_))
                          : 0.0;
        return r;
    }

private:
    std::size_t count_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

void check_sample(const std::vector<Vec>& S) {
    if (S.empty()) throw DomainError("Monte Carlo estimate needs a non-empty sample");
    const std::size_t d = S.front().size();
    for (const Vec& x : S) {
        if (x.size() != d) throw DomainError("sample points have unequal dimension");
    }
}

Vec signed_sum(const std::vector<Vec>& S, const std::vector<int>& sigma) {
    Vec v(S.front().size(), 0.0);
    for (std::size_t i = 0; i < S.size(); ++i) axpy(static_cast<double>(sigma[i]), S[i], v);
    return v;
}

std::vector<Vec> grid_directions(std::size_t d, std::size_t grid) {
    if (grid < 2) throw DomainError("two-layer grid class needs at least 2 values per axis");
    double total = 1.0;
    for (std::size_t i = 0; i < d; ++i) {
        total *= static_cast<double>(grid);
        if (total > 1e6) throw DomainError("two-layer grid class exceeds 1e6 grid points");
    }
    const auto count = static_cast<std::size_t>(total);
    std::vector<Vec> dirs;
    dirs.reserve(count);
    std::vector<std::size_t> idx(d, 0);
    for (std::size_t c = 0; c < count; ++c) {
        Vec u(d);
        for (std::size_t i = 0; i < d; ++i) {
            u[i] = -1.0 + 2.0 * static_cast<double>(idx[i]) / static_cast<double>(grid - 1);
        }
        const double nu = norm(u);
        if (nu > 0.0) {
            for (double& v : u) v /= nu;
            dirs.push_back(std::move(u));
        }
        for (std::size_t i = 0; i < d; ++i) {
            if (++idx[i] < grid) break;
            idx[i] = 0;
        }
    }
    return dirs;
}

}  // namespace

double std_linear_bound(double B, double C, std::size_t n) {
    require_positive_count(n, "n");
    require_nonnegative(B, "B");
    require_nonnegative(C, "C");
    return B * C * inv_sqrt(n);
}

double constrained_linear_sphere_bound(double B, std::size_t d, double tau, std::size_t n) {
    require_positive_count(n, "n");
    require_positive_count(d, "d");
    require_nonnegative(B, "B");
    if (!(tau >= 0.0 && tau <= std::numbers::pi)) throw DomainError("tau must lie in [0, pi]");
    const double s = std::sin(tau);
    const double p = erf(std::sqrt(static_cast<double>(d)) * s / std::numbers::sqrt2);
    return B * inv_sqrt(n) * (s * p + (1.0 - p) / 2.0);
}

double constrained_linear_sphere_envelope(double B, std::size_t d, double tau, std::size_t n) {
    require_nonnegative(tau, "tau");
    if (tau >= std::numbers::pi / 2) return std_linear_bound(B, 1.0, n);
    const double at = constrained_linear_sphere_bound(B, d, tau, n);
    if (tau >= std::numbers::pi / 6) return at;  // the formula increases on [pi/6, pi/2]
    // With s = sin(tau) in [0, 1/2] the shape is 1/2 + erf(c s) (s - 1/2),
    // convex in s. Left of its minimizer s* the envelope is the minimum value;
    // right of it the formula is already increasing.
    const double c = std::sqrt(static_cast<double>(d)) / std::numbers::sqrt2;
    const auto shape = [c](double s) { return 0.5 + erf(c * s) * (s - 0.5); };
    double lo = 0.0, hi = 0.5;
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        const double a = lo + (hi - lo) / 3.0, b = hi - (hi - lo) / 3.0;
        if (shape(a) <= shape(b)) hi = b;
        else lo = a;
    }
    const double s_star = 0.5 * (lo + hi);
    if (std::sin(tau) >= s_star) return at;
    return std::min(at, B * inv_sqrt(n) * shape(s_star));
}

double std_2nn_bound(double B, double C, std::size_t n) {
    return 2.0 * std_linear_bound(B, C, n);
}

double constrained_2nn_bound(double tau, std::size_t m_nodes, double C, std::size_t n,
                             std::optional<std::size_t> q) {
    require_positive_count(n, "n");
    require_nonnegative(tau, "tau");
    require_nonnegative(C, "C");
    const double m = static_cast<double>(m_nodes);
    double factor = 3.0 * m;
    if (q) {
        if (*q > m_nodes) throw DomainError("q must not exceed the number of hidden nodes");
        factor = 2.0 * m + static_cast<double>(*q);
    }
    return factor * tau * C * inv_sqrt(n);
}

McEstimate mc_constrained_linear_empirical(const std::vector<Vec>& S, const Vec& w_ref, double tau,
                                           double B, std::size_t n_mc, RngStream& rng) {
    check_sample(S);
    require_positive_count(n_mc, "n_mc");
    require_nonnegative(tau, "tau");
    require_nonnegative(B, "B");
    if (w_ref.size() != S.front().size()) throw DomainError("reference direction dimension mismatch");
    if (std::abs(norm(w_ref) - 1.0) > 1e-9) throw DomainError("reference direction must have unit norm");

    const double n = static_cast<double>(S.size());
    const double half_pi = std::numbers::pi / 2.0;
    Accumulator acc;
    for (std::size_t t = 0; t < n_mc; ++t) {
        const Vec v = signed_sum(S, rademacher_draw(rng, S.size()));
        const double nv = norm(v);
        double f = 0.0;
        if (nv > 0.0) {
            const double theta = std::acos(std::clamp(dot(v, w_ref) / nv, -1.0, 1.0));
            if (theta <= tau) {
                f = 1.0;
            } else if (theta <= half_pi + tau) {
                f = std::cos(theta - tau);
            }
        }
        acc.add(B * nv * f / n);
    }
    return acc.result();
}

McEstimate mc_empirical_rademacher(const RademacherClass& cls, const std::vector<Vec>& S,
                                   std::size_t n_mc, RngStream& rng) {
    check_sample(S);
    require_positive_count(n_mc, "n_mc");
    const double n = static_cast<double>(S.size());
    Accumulator acc;

    if (const auto* lin = std::get_if<LinearUnconstrainedClass>(&cls)) {
        require_nonnegative(lin->B, "B");
        for (std::size_t t = 0; t < n_mc; ++t) {
            acc.add(lin->B * norm(signed_sum(S, rademacher_draw(rng, S.size()))) / n);
        }
        return acc.result();
    }

    const auto& two = std::get<TwoLayerGridClass>(cls);
    require_nonnegative(two.B, "B");
    require_positive_count(two.m_nodes, "m_nodes");
    const std::vector<Vec> dirs = grid_directions(S.front().size(), two.grid);
    // Activations do not depend on sigma; compute them once.
    std::vector<Vec> act(dirs.size(), Vec(S.size()));
    for (std::size_t g = 0; g < dirs.size(); ++g) {
        for (std::size_t i = 0; i < S.size(); ++i) act[g][i] = std::max(0.0, dot(dirs[g], S[i]));
    }
    for (std::size_t t = 0; t < n_mc; ++t) {
        const std::vector<int> sigma = rademacher_draw(rng, S.size());
        double best = 0.0;
        for (const Vec& a : act) {
            double s = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) s += sigma[i] * a[i];
            best = std::max(best, std::abs(s));
        }
        acc.add(two.B * best / n);
    }
    return acc.result();
}

double epsilon_k(double R_kG, std::size_t k, double delta) {
    require_positive_count(k, "k");
    require_delta(delta);
    require_nonnegative(R_kG, "R_kG");
    return 2.0 * R_kG + std::sqrt(std::log(4.0 / delta) / (2.0 * static_cast<double>(k)));
}

double epsilon_k_realizable(double R_kG, std::size_t k, double delta) {
    require_positive_count(k, "k");
    require_delta(delta);
    require_nonnegative(R_kG, "R_kG");
    return 2.0 * R_kG + std::sqrt(std::log(2.0 / delta) / (2.0 * static_cast<double>(k)));
}

double agnostic_generalization_bound(std::size_t n, double delta, double R_n_constrained,
                                     double err_of_best) {
    require_positive_count(n, "n");
    require_delta(delta);
    require_nonnegative(R_n_constrained, "R_n");
    require_nonnegative(err_of_best, "err_of_best");
    return err_of_best + 2.0 * R_n_constrained +
           2.0 * std::sqrt(std::log(4.0 / delta) / (2.0 * static_cast<double>(n)));
}

AgnosticBound agnostic_generalization_bound(const AgnosticInputs& in,
                                            const std::function<double(double)>& R_n_constrained_at,
                                            const std::function<double(double)>& err_of_best_at) {
    require_nonnegative(in.tau, "tau");
    AgnosticBound out;
    out.eps_k = epsilon_k(in.R_kG, in.k, in.delta);
    out.comparison_class_may_be_empty = in.tau - out.eps_k < 0.0;
    out.value = agnostic_generalization_bound(in.n, in.delta, R_n_constrained_at(in.tau + out.eps_k),
                                              err_of_best_at(in.tau - out.eps_k));
    return out;
}

double realizable_bound(double R_n_constrained, std::size_t n, double delta) {
    require_positive_count(n, "n");
    require_delta(delta);
    require_nonnegative(R_n_constrained, "R_n");
    return R_n_constrained + std::sqrt(std::log(2.0 / delta) / (2.0 * static_cast<double>(n)));
}

double realizable_bound(const std::function<double(double)>& R_n_constrained_at, double R_kG,
                        std::size_t k, std::size_t n, double delta) {
    return realizable_bound(R_n_constrained_at(epsilon_k_realizable(R_kG, k, delta)), n, delta);
}

double surrogate_class_bound(const SurrogateClass& cls) {
    return std::visit(
        [](const auto& c) -> double {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, LinearGradAngleSurrogate>) {
                require_positive_count(c.k, "k");
                return std::numbers::pi / (2.0 * std::sqrt(static_cast<double>(c.k)));
            } else if constexpr (std::is_same_v<T, NoisyClassifierSurrogate>) {
                require_nonnegative(c.R_nH, "R_nH");
                return 0.5 * c.R_nH;
            } else if constexpr (std::is_same_v<T, NoisyRegressorSurrogate>) {
                require_nonnegative(c.R_nH, "R_nH");
                return 2.0 * c.R_nH;
            } else {
                require_nonnegative(c.R_nH, "R_nH");
                require_nonnegative(c.R_nC, "R_nC");
                return 2.0 * c.R_nH + 2.0 * c.R_nC;
            }
        },
        cls);
}

double goodness_report(double R_nH, double R_nH_constrained, double err_star, double err_star_tau) {
    require_nonnegative(R_nH, "R_nH");
    require_nonnegative(R_nH_constrained, "R_nH_constrained");
    return (R_nH - R_nH_constrained) + (err_star - err_star_tau);
}

namespace {

std::string fmt_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void BoundReport::write_csv(std::ostream& out) const {
    out << "formula_id,B,C,d,n,k,m_nodes,tau,delta,q,R_kG,value,mc_estimate,mc_std_error,within_bound\n";
    for (const BoundRow& r : rows) {
        const BoundInputs& in = r.inputs;
        out << r.formula_id << ',' << fmt_real(in.B) << ',' << fmt_real(in.C) << ',' << in.d << ','
            << in.n << ',' << in.k << ',' << in.m_nodes << ',' << fmt_real(in.tau) << ','
            << fmt_real(in.delta) << ',' << (in.q ? std::to_string(*in.q) : "") << ','
            << fmt_real(in.R_kG) << ',' << fmt_real(r.value) << ','
            << (r.mc_estimate ? fmt_real(*r.mc_estimate) : "") << ','
            << (r.mc_std_error ? fmt_real(*r.mc_std_error) : "") << ','
            << (r.within_bound ? (*r.within_bound ? "true" : "false") : "") << '\n';
    }
}

}  // namespace excon
