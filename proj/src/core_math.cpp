#include "excon/core_math.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "excon/error.hpp"

namespace excon {

namespace {

void require_same_size(std::span<const double> a, std::span<const double> b, const char* op) {
    if (a.size() != b.size()) {
        throw DomainError(std::string(op) + ": dimension mismatch (" + std::to_string(a.size()) +
                          " vs " + std::to_string(b.size()) + ")");
    }
}

double erf_series(double x) {
    // 2/sqrt(pi) e^{-x^2} sum_{n>=0} 2^n x^{2n+1} / (2n+1)!!; every term is
    // positive for x > 0 so there is no cancellation.
    const double x2 = x * x;
    double term = x;
    double sum = x;
    for (int n = 1; n < 500; ++n) {
        term *= 2.0 * x2 / (2.0 * n + 1.0);
        sum += term;
        if (term < sum * 1e-17) break;
    }
    return 2.0 / std::sqrt(std::numbers::pi) * std::exp(-x2) * sum;
}

double erfc_continued_fraction(double x) {
    // erfc(x) = e^{-x^2}/sqrt(pi) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))), x > 0.
    constexpr double tiny = 1e-300;
    double f = x;
    double c = f;
    double d = 0.0;
    for (int n = 1; n < 5000; ++n) {
        const double a = 0.5 * n;
        d = x + a * d;
        if (std::abs(d) < tiny) d = tiny;
        c = x + a / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = c * d;
        f *= delta;
        if (std::abs(delta - 1.0) < 1e-16) break;
    }
    return std::exp(-x * x) / (std::sqrt(std::numbers::pi) * f);
}

constexpr double kSeriesCutoff = 3.0;

}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
    require_same_size(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return std::sqrt(s);
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    require_same_size(a, b, "squared_distance");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double t = a[i] - b[i];
        s += t * t;
    }
    return s;
}

double distance(std::span<const double> a, std::span<const double> b) {
    return std::sqrt(squared_distance(a, b));
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    require_same_size(x, y, "axpy");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

Vec add(std::span<const double> a, std::span<const double> b) {
    require_same_size(a, b, "add");
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

Vec subtract(std::span<const double> a, std::span<const double> b) {
    require_same_size(a, b, "subtract");
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

Vec scaled(std::span<const double> a, double alpha) {
    Vec out(a.begin(), a.end());
    for (double& v : out) v *= alpha;
    return out;
}

bool all_finite(std::span<const double> a) {
    return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

double erf(double x) {
    if (std::isnan(x)) return x;
    if (x < 0.0) return -erf(-x);
    if (x == 0.0) return 0.0;
    if (x < kSeriesCutoff) return erf_series(x);
    if (x > 27.0) return 1.0;
    return 1.0 - erfc_continued_fraction(x);
}

double erfc(double x) {
    if (std::isnan(x)) return x;
    if (x >= kSeriesCutoff) return x > 27.0 ? 0.0 : erfc_continued_fraction(x);
    if (x <= -kSeriesCutoff) return 2.0 - erfc(-x);
    return 1.0 - erf(x);
}

double angle_between(std::span<const double> u, std::span<const double> v) {
    require_same_size(u, v, "angle_between");
    const double nu = norm(u);
    const double nv = norm(v);
    if (!(nu > 0.0) || !(nv > 0.0)) {
        throw DomainError("angle_between: zero-length vector");
    }
    // 2 atan2(|a - b|, |a + b|) on the unit vectors keeps full precision near
    // 0 and pi, where acos of the cosine loses half the digits.
    double diff = 0.0, sum = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double a = u[i] / nu, b = v[i] / nv;
        diff += (a - b) * (a - b);
        sum += (a + b) * (a + b);
    }
    return 2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum));
}

// --- RngStream -------------------------------------------------------------

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

RngStream::RngStream(std::uint64_t seed) : key_(mix64(seed ^ 0x6A09E667F3BCC909ULL)) {}

RngStream::RngStream(std::uint64_t key, bool) : key_(key) {}

RngStream RngStream::child(std::uint64_t stream_id) const {
    return RngStream(mix64(key_ ^ mix64(stream_id ^ 0xBB67AE8584CAA73BULL)), true);
}

std::uint64_t RngStream::next_u64() {
    const std::uint64_t c = counter_++;
    return mix64(key_ ^ mix64(c + 0x9E3779B97F4A7C15ULL));
}

double RngStream::uniform() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double RngStream::normal() {
    if (spare_normal_) {
        const double v = *spare_normal_;
        spare_normal_.reset();
        return v;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    spare_normal_ = r * std::sin(t);
    return r * std::cos(t);
}

double RngStream::normal(double mean, double stddev) { return mean + stddev * normal(); }

std::uint64_t RngStream::below(std::uint64_t bound) {
    if (bound == 0) throw DomainError("RngStream::below: bound must be positive");
    // Rejection sampling keeps the result exactly uniform.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t r;
    do {
        r = next_u64();
    } while (r >= limit);
    return r % bound;
}

std::vector<int> rademacher_draw(RngStream& rng, std::size_t n) {
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = (rng.next_u64() >> 63) ? 1 : -1;
    return out;
}

Vec gaussian_vector(RngStream& rng, std::size_t n, double stddev) {
    Vec out(n);
    for (double& v : out) v = stddev * rng.normal();
    return out;
}

Vec unit_sphere_point(RngStream& rng, std::size_t d) {
    if (d == 0) throw DomainError("unit_sphere_point: dimension must be positive");
    for (;;) {
        Vec v = gaussian_vector(rng, d);
        const double n = norm(v);
        if (n > 0.0) {
            for (double& x : v) x /= n;
            return v;
        }
    }
}

}  // namespace excon
