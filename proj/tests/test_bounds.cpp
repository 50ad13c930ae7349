#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "erf_oracle.hpp"
#include "excon/bounds.hpp"
#include "excon/error.hpp"
#include "oracles.hpp"

using namespace excon;
using std::numbers::pi;

namespace {

double sphere_bound_oracle(double B, double d, double tau, double n) {
    const double p = oracle::erf_series(std::sqrt(d) * std::sin(tau) / std::sqrt(2.0));
    return B / std::sqrt(n) * (std::sin(tau) * p + (1.0 - p) / 2.0);
}

// Per-draw value (B/n) ||v|| f(v) for the angle-constrained linear class.
double constrained_draw(const std::vector<Vec>& S, const std::vector<int>& sigma, const Vec& w, double tau, double B) {
    const std::size_t d = w.size();
    Vec v(d, 0.0);
    for (std::size_t i = 0; i < S.size(); ++i)
        for (std::size_t c = 0; c < d; ++c) v[c] += sigma[i] * S[i][c];
    const double nv = oracle::l2(v);
    if (nv == 0.0) return 0.0;
    double cosang = 0.0;
    for (std::size_t c = 0; c < d; ++c) cosang += v[c] * w[c];
    const double theta = std::acos(std::clamp(cosang / nv, -1.0, 1.0));
    double f = 0.0;
    if (theta <= tau) f = 1.0;
    else if (theta <= pi / 2 + tau) f = std::cos(theta - tau);
    return B / S.size() * nv * f;
}

std::vector<Vec> sphere_sample(RngStream& rng, std::size_t n, std::size_t d) {
    std::vector<Vec> S;
    for (std::size_t i = 0; i < n; ++i) S.push_back(unit_sphere_point(rng, d));
    return S;
}

}  // namespace

TEST_CASE("closed-form examples") {
    CHECK(std_linear_bound(1, 1, 100) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(std_linear_bound(2, 1, 4) == 1.0);
    CHECK(constrained_linear_sphere_bound(1, 100, 0.0, 100) == 0.05);
    CHECK(constrained_linear_sphere_bound(3, 7, 0.0, 9) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(constrained_linear_sphere_bound(1, 10000, pi / 2, 100) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(std_2nn_bound(1, 1, 100) == doctest::Approx(0.2));
    CHECK(constrained_2nn_bound(0.0, 5, 1, 100) == 0.0);
    CHECK(constrained_2nn_bound(0.1, 1, 1, 100) == doctest::Approx(0.03).epsilon(1e-14));
    CHECK(constrained_2nn_bound(0.1, 4, 2, 25, 1) == doctest::Approx(9 * 0.1 * 2 / 5.0).epsilon(1e-14));
    CHECK_THROWS_AS(constrained_2nn_bound(0.1, 2, 1, 10, 3), DomainError);
    CHECK_THROWS_AS(std_linear_bound(1, 1, 0), DomainError);
    CHECK_THROWS_AS(constrained_linear_sphere_bound(1, 10, 4.0, 10), DomainError);
}

TEST_CASE("sphere bound golden value and erf-oracle agreement") {
    CHECK(constrained_linear_sphere_bound(1, 100, 0.1, 100) == doctest::Approx(0.022713334779085322).epsilon(1e-14));
    for (int i = 0; i <= 60; ++i) {
        const double tau = pi * i / 60.0;
        for (std::size_t d : {1u, 20u, 100u, 5000u})
            CHECK(std::abs(constrained_linear_sphere_bound(1.5, d, tau, 37) - sphere_bound_oracle(1.5, d, tau, 37)) <= 1e-14);
    }
}

TEST_CASE("sphere bound never exceeds the unconstrained bound") {
    for (std::size_t d : {1u, 2u, 10u, 100u, 100000u})
        for (int i = 0; i < 200; ++i) {
            const double tau = pi * i / 199.0;
            CHECK(constrained_linear_sphere_bound(2.0, d, tau, 50) <= std_linear_bound(2.0, 1.0, 50));
        }
}

TEST_CASE("shape of the sphere bound in tau") {
    // sin(tau) p + (1 - p)/2 = 1/2 + p (sin(tau) - 1/2): both factors grow once
    // sin(tau) >= 1/2, and the value stays at or below the tau = 0 value before.
    for (std::size_t d : {1u, 10u, 100u, 10000u}) {
        const double at0 = constrained_linear_sphere_bound(1, d, 0.0, 100);
        double prev = constrained_linear_sphere_bound(1, d, pi / 6, 100);
        for (int i = 1; i <= 300; ++i) {
            const double tau = pi / 6 + (pi / 2 - pi / 6) * i / 300.0;
            const double v = constrained_linear_sphere_bound(1, d, tau, 100);
            CHECK(v >= prev);
            prev = v;
        }
        for (int i = 0; i <= 100; ++i)
            CHECK(constrained_linear_sphere_bound(1, d, pi / 6 * i / 100.0, 100) <= at0 + 1e-15);
    }
    // The dip below the tau = 0 value is real for d = 100.
    CHECK(constrained_linear_sphere_bound(1, 100, 0.25, 100) < constrained_linear_sphere_bound(1, 100, 0.0, 100));
}

TEST_CASE("nested-class envelope of the sphere bound") {
    for (std::size_t d : {1u, 5u, 100u, 10000u}) {
        // Oracle: minimum over a fine grid of [tau, pi/2], evaluated with libm's erf.
        const auto formula = [d](double t) {
            const double p = std::erf(std::sqrt(double(d)) * std::sin(t) / std::sqrt(2.0));
            return 2.0 / 8.0 * (std::sin(t) * p + (1.0 - p) / 2.0);
        };
        const auto grid_min = [&](double tau) {
            double best = formula(tau);
            for (int i = 1; i <= 4000; ++i) best = std::min(best, formula(tau + (pi / 2 - tau) * i / 4000.0));
            return best;
        };
        double prev = 0.0;
        for (int i = 0; i <= 40; ++i) {
            const double tau = pi / 2 * i / 41.0;
            const double e = constrained_linear_sphere_envelope(2.0, d, tau, 64);
            CHECK(e <= constrained_linear_sphere_bound(2.0, d, tau, 64));
            CHECK(e <= grid_min(tau) + 1e-12);
            CHECK(e >= grid_min(tau) - 1e-6);
            CHECK(e >= prev);
            prev = e;
        }
        CHECK(constrained_linear_sphere_envelope(2.0, d, 2.0, 64) == std_linear_bound(2.0, 1.0, 64));
    }
    CHECK(constrained_linear_sphere_envelope(1, 100, 0.0, 100) < 0.05);
    CHECK(constrained_linear_sphere_envelope(1, 100, 1.0, 100) == constrained_linear_sphere_bound(1, 100, 1.0, 100));
}

TEST_CASE("every closed form scales as 1/sqrt(n)") {
    for (std::size_t n : {1u, 7u, 100u, 4096u}) {
        const double r = std::sqrt(2.0);
        CHECK(std_linear_bound(1.3, 0.7, 2 * n) * r == doctest::Approx(std_linear_bound(1.3, 0.7, n)).epsilon(1e-14));
        CHECK(std_2nn_bound(1.3, 0.7, 2 * n) * r == doctest::Approx(std_2nn_bound(1.3, 0.7, n)).epsilon(1e-14));
        CHECK(constrained_linear_sphere_bound(1.3, 30, 0.4, 2 * n) * r ==
              doctest::Approx(constrained_linear_sphere_bound(1.3, 30, 0.4, n)).epsilon(1e-14));
        CHECK(constrained_2nn_bound(0.2, 6, 0.7, 2 * n) * r ==
              doctest::Approx(constrained_2nn_bound(0.2, 6, 0.7, n)).epsilon(1e-14));
    }
}

TEST_CASE("two-layer crossover at tau = 2B/(3m)") {
    const double B = 1.2;
    const std::size_t m = 4;
    const double cross = 2 * B / (3.0 * m);
    for (int i = 1; i < 200; ++i) {
        const double tau = 2.0 * cross * i / 200.0;
        if (std::abs(tau - cross) < 1e-9) continue;
        const bool smaller = constrained_2nn_bound(tau, m, 1.0, 50) < std_2nn_bound(B, 1.0, 50);
        CHECK(smaller == (tau < cross));
    }
}

TEST_CASE("constrained linear MC special cases") {
    RngStream rng(1);
    const auto S = sphere_sample(rng, 10, 4);
    const Vec w{1, 0, 0, 0};
    RngStream a(77), b(77), c(77);
    const McEstimate full = mc_constrained_linear_empirical(S, w, pi, 2.0, 500, a);
    const McEstimate plain = mc_empirical_rademacher(LinearUnconstrainedClass{2.0}, S, 500, b);
    CHECK(full.estimate == doctest::Approx(plain.estimate).epsilon(1e-14));
    CHECK(full.draws == 500);

    // tau = 0: each draw is B max(0, <v, w>)/n; replay the same signs.
    const McEstimate zero = mc_constrained_linear_empirical(S, w, 0.0, 2.0, 500, c);
    RngStream replay(77);
    double sum = 0.0;
    for (int t = 0; t < 500; ++t) {
        const auto sigma = rademacher_draw(replay, S.size());
        double vw = 0.0;
        for (std::size_t i = 0; i < S.size(); ++i) vw += sigma[i] * S[i][0];
        sum += 2.0 * std::max(0.0, vw) / S.size();
    }
    CHECK(zero.estimate == doctest::Approx(sum / 500).epsilon(1e-12));
    CHECK_THROWS_AS(mc_constrained_linear_empirical(S, Vec{2, 0, 0, 0}, 0.1, 1.0, 10, rng), DomainError);
}

TEST_CASE("constrained linear MC agrees with exhaustive sign enumeration") {
    RngStream rng(2);
    const auto S = sphere_sample(rng, 3, 2);
    const Vec w = unit_sphere_point(rng, 2);
    for (double tau : {0.0, 0.3, 1.0, 2.0, 3.5}) {
        double exact = 0.0;
        for (int mask = 0; mask < 8; ++mask) {
            std::vector<int> sigma(3);
            for (int i = 0; i < 3; ++i) sigma[i] = (mask >> i) & 1 ? 1 : -1;
            exact += constrained_draw(S, sigma, w, tau, 1.0) / 8.0;
        }
        RngStream mc(100 + static_cast<int>(tau * 10));
        const McEstimate e = mc_constrained_linear_empirical(S, w, tau, 1.0, 20000, mc);
        CHECK(std::abs(e.estimate - exact) <= 3.0 * e.std_error + 1e-12);
    }
}

TEST_CASE("restricted classes never beat their superclass on shared draws") {
    RngStream rng(3);
    const auto S = sphere_sample(rng, 25, 6);
    const Vec w = unit_sphere_point(rng, 6);
    double prev = -1.0;
    for (double tau : {0.0, 0.2, 0.7, 1.4, 2.5, pi}) {
        RngStream a(9), b(9);
        const double est = mc_constrained_linear_empirical(S, w, tau, 1.0, 400, a).estimate;
        const double sup = mc_empirical_rademacher(LinearUnconstrainedClass{1.0}, S, 400, b).estimate;
        CHECK(est <= sup + 1e-15);
        CHECK(est >= prev);
        prev = est;
    }
}

TEST_CASE("unconstrained MC estimator") {
    RngStream rng(4);
    const McEstimate one = mc_empirical_rademacher(LinearUnconstrainedClass{1.0}, {{1, 0, 0}}, 100, rng);
    CHECK(one.estimate == 1.0);
    CHECK(one.std_error == 0.0);

    const auto S = sphere_sample(rng, 64, 10);
    RngStream a(5);
    const McEstimate e = mc_empirical_rademacher(LinearUnconstrainedClass{1.0}, S, 4000, a);
    CHECK(e.estimate <= std_linear_bound(1.0, 1.0, 64) + 3.0 * e.std_error);
    CHECK(e.estimate > 0.0);

    // Standard error falls like 1/sqrt(draws).
    RngStream s1(6), s2(6), s4(6);
    const double se1 = mc_empirical_rademacher(LinearUnconstrainedClass{1.0}, S, 4000, s1).std_error;
    const double se2 = mc_empirical_rademacher(LinearUnconstrainedClass{1.0}, S, 8000, s2).std_error;
    const double se4 = mc_empirical_rademacher(LinearUnconstrainedClass{1.0}, S, 16000, s4).std_error;
    CHECK(se2 / se1 == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(0.2));
    CHECK(se4 / se1 == doctest::Approx(0.5).epsilon(0.2));
}

TEST_CASE("two-layer grid class matches brute-force enumeration") {
    RngStream rng(7);
    std::vector<Vec> S;
    for (int i = 0; i < 5; ++i) S.push_back(gaussian_vector(rng, 3));
    const std::size_t grid = 4;
    std::vector<Vec> dirs;
    for (std::size_t a = 0; a < grid; ++a)
        for (std::size_t b = 0; b < grid; ++b)
            for (std::size_t c = 0; c < grid; ++c) {
                Vec u{-1.0 + 2.0 * a / 3.0, -1.0 + 2.0 * b / 3.0, -1.0 + 2.0 * c / 3.0};
                const double nu = oracle::l2(u);
                if (nu > 0) dirs.push_back({u[0] / nu, u[1] / nu, u[2] / nu});
            }
    RngStream est_rng(8), replay(8);
    const McEstimate e = mc_empirical_rademacher(TwoLayerGridClass{2.0, 3, grid}, S, 300, est_rng);
    double sum = 0.0;
    for (int t = 0; t < 300; ++t) {
        const auto sigma = rademacher_draw(replay, S.size());
        double best = 0.0;
        for (const Vec& u : dirs) {
            double s = 0.0;
            for (std::size_t i = 0; i < S.size(); ++i) s += sigma[i] * std::max(0.0, dot(u, S[i]));
            best = std::max(best, std::abs(s));
        }
        sum += 2.0 * best / S.size();
    }
    CHECK(e.estimate == doctest::Approx(sum / 300).epsilon(1e-12));

    std::vector<Vec> wide(3, Vec(13, 1.0));
    CHECK_THROWS_AS(mc_empirical_rademacher(TwoLayerGridClass{1.0, 1, 3}, wide, 1, rng), DomainError);
}

TEST_CASE("epsilon_k") {
    const double delta = 4.0 / std::exp(2.0);
    CHECK(epsilon_k(0.0, 2, delta) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-14));
    for (std::size_t k = 1; k < 200; ++k) CHECK(epsilon_k(0.1, k + 1, 0.05) < epsilon_k(0.1, k, 0.05));
    for (std::size_t k : {1u, 9u, 100u, 2500u}) {
        const double R = pi / (2.0 * std::sqrt(static_cast<double>(k)));
        CHECK(surrogate_class_bound(LinearGradAngleSurrogate{k}) == doctest::Approx(R).epsilon(1e-15));
        const double independent = 2.0 * R + std::sqrt(std::log(4.0 / 0.05) / (2.0 * k));
        CHECK(epsilon_k(R, k, 0.05) == doctest::Approx(independent).epsilon(1e-14));
    }
    CHECK(epsilon_k(1e-300, 50, 0.1) == doctest::Approx(epsilon_k(0.0, 50, 0.1)));
    CHECK(epsilon_k(pi / 2 / std::sqrt(1e12), 1000000000000ull, 0.1) < 1e-5);
    CHECK(epsilon_k_realizable(0.0, 2, 2.0 / std::exp(2.0)) == doctest::Approx(std::sqrt(0.5)));
}

TEST_CASE("agnostic assembly") {
    const double delta = 4.0 / std::exp(2.0);
    CHECK(agnostic_generalization_bound(2, delta, 0.0, 0.0) == doctest::Approx(2.0 * std::sqrt(0.5)).epsilon(1e-14));
    for (std::size_t n = 1; n < 100; ++n)
        CHECK(agnostic_generalization_bound(n + 1, 0.05, 0.1, 0.2) < agnostic_generalization_bound(n, 0.05, 0.1, 0.2));

    // Linear sphere pipeline with the angle surrogate class at k = 100.
    const std::size_t n = 100, k = 100;
    const double tau = 0.1;
    const AgnosticInputs in{n, k, tau, 0.05, surrogate_class_bound(LinearGradAngleSurrogate{k})};
    double seen_slack = -1.0;
    const AgnosticBound b = agnostic_generalization_bound(
        in, [&](double t) { return constrained_linear_sphere_bound(1.0, 100, std::min(t, pi), n); },
        [&](double t) {
            seen_slack = t;
            return 0.0;
        });
    const double eps = 2.0 * pi / 20.0 + std::sqrt(std::log(80.0) / 200.0);
    CHECK(b.eps_k == doctest::Approx(eps).epsilon(1e-14));
    CHECK(seen_slack == doctest::Approx(tau - eps).epsilon(1e-14));
    CHECK(b.comparison_class_may_be_empty);
    const double expected = 2.0 * sphere_bound_oracle(1.0, 100, tau + eps, n) + 2.0 * std::sqrt(std::log(80.0) / 200.0);
    CHECK(b.value == doctest::Approx(expected).epsilon(1e-13));
    CHECK(b.value == doctest::Approx(0.40264782419919209).epsilon(1e-14));

    const AgnosticBound wide = agnostic_generalization_bound(
        AgnosticInputs{n, 10000, 1.0, 0.05, 0.0}, [](double) { return 0.0; }, [](double) { return 0.0; });
    CHECK_FALSE(wide.comparison_class_may_be_empty);
}

TEST_CASE("realizable assembly") {
    CHECK(realizable_bound(0.0, 2, 2.0 / std::exp(2.0)) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-14));
    for (std::size_t n : {1u, 5u, 50u, 500u})
        for (double R : {0.0, 0.05, 0.3})
            CHECK(realizable_bound(R, n, 0.05) <= agnostic_generalization_bound(n, 0.05, R, 0.0));
    // Composition with the two-layer bound (m = 10, C = 1, n = 100, k = 1000).
    const double got = realizable_bound([](double t) { return constrained_2nn_bound(t, 10, 1.0, 100); }, 0.0, 1000, 100, 0.05);
    const double eps = std::sqrt(std::log(40.0) / 2000.0);
    CHECK(got == doctest::Approx(3.0 * eps * 10.0 / 10.0 + std::sqrt(std::log(40.0) / 200.0)).epsilon(1e-14));
    CHECK(got == doctest::Approx(0.26465097407808325).epsilon(1e-14));
}

TEST_CASE("surrogate class and goodness") {
    CHECK(surrogate_class_bound(LinearGradAngleSurrogate{100}) == doctest::Approx(pi / 20));
    CHECK(surrogate_class_bound(NoisyClassifierSurrogate{0.4}) == doctest::Approx(0.2));
    CHECK(surrogate_class_bound(NoisyRegressorSurrogate{0.4}) == doctest::Approx(0.8));
    CHECK(surrogate_class_bound(LearnableClassSurrogate{0.3, 0.1}) == doctest::Approx(0.8));
    CHECK(goodness_report(0.3, 0.3, 0.1, 0.1) == 0.0);
    CHECK(goodness_report(0.5, 0.1, 0.2, 0.2) == doctest::Approx(0.4));
    CHECK(goodness_report(0.1, 0.1, 0.0, 0.3) < 0.0);
}

TEST_CASE("bound report CSV") {
    BoundReport r;
    BoundRow row;
    row.formula_id = "std_linear";
    row.inputs.n = 100;
    row.value = 0.1;
    r.rows.push_back(row);
    row.formula_id = "constrained_linear_sphere";
    row.mc_estimate = 0.04;
    row.mc_std_error = 0.001;
    row.within_bound = true;
    r.rows.push_back(row);
    std::ostringstream out;
    r.write_csv(out);
    std::istringstream in(out.str());
    std::string header, l1, l2, extra;
    std::getline(in, header);
    std::getline(in, l1);
    std::getline(in, l2);
    CHECK(header == "formula_id,B,C,d,n,k,m_nodes,tau,delta,q,R_kG,value,mc_estimate,mc_std_error,within_bound");
    CHECK(l1.rfind("std_linear,", 0) == 0);
    CHECK(l1.substr(l1.size() - 3) == ",,,");
    CHECK(l2.substr(l2.size() - 5) == ",true");
    CHECK_FALSE(std::getline(in, extra));
}
