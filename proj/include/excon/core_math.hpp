#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace excon {

using Vec = std::vector<double>;

// ---------------------------------------------------------------------------
// Dense vector helpers. All binary operations require equal lengths and throw
// DomainError otherwise.
// ---------------------------------------------------------------------------

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
double squared_distance(std::span<const double> a, std::span<const double> b);
double distance(std::span<const double> a, std::span<const double> b);

// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
Vec add(std::span<const double> a, std::span<const double> b);
Vec subtract(std::span<const double> a, std::span<const double> b);
Vec scaled(std::span<const double> a, double alpha);

bool all_finite(std::span<const double> a);

// Gauss error function, absolute error below 1e-12 on the whole real line.
// |x| < 3 uses the positive-term series erf(x) = 2/sqrt(pi) e^{-x^2} sum 2^n x^{2n+1}/(2n+1)!!;
// |x| >= 3 uses a Lentz-evaluated continued fraction for erfc. Odd by construction.
double erf(double x);
double erfc(double x);

// Angle in [0, pi] between two non-zero vectors, computed as
// 2 atan2(|a - b|, |a + b|) on the normalized inputs. Zero-length input
// throws DomainError.
double angle_between(std::span<const double> u, std::span<const double> v);

// ---------------------------------------------------------------------------
// RngStream
//
// Counter-based generator. A stream is a 64-bit key plus a 64-bit counter; the
// i-th 64-bit draw is
//
//     mix64(key ^ mix64(counter_i + 0x9E3779B97F4A7C15))
//
// where mix64 is the SplitMix64 finalizer (xor-shift 30/27/31 with multipliers
// 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB). The key of the root stream for
// seed s is mix64(s ^ 0x6A09E667F3BCC909); child(id) derives
// mix64(key ^ mix64(id ^ 0xBB67AE8584CAA73B)) and restarts the counter, so
// streams addressed by (seed, stream-id) are independent of draw order.
//
// uniform() returns ((u >> 11) + 1) * 2^-53 in (0, 1]; normal() is Box-Muller
// over two uniforms and caches the paired sine deviate.
// ---------------------------------------------------------------------------
class RngStream {
public:
    explicit RngStream(std::uint64_t seed);

    RngStream child(std::uint64_t stream_id) const;

    std::uint64_t next_u64();
    double uniform();
    double normal();
    double normal(double mean, double stddev);
    // Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound);

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

private:
    RngStream(std::uint64_t key, bool);

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    std::optional<double> spare_normal_;
};

std::uint64_t mix64(std::uint64_t z);

// n independent signs uniform on {-1, +1}. n = 0 yields an empty vector.
std::vector<int> rademacher_draw(RngStream& rng, std::size_t n);

// Vector of n i.i.d. N(0, stddev^2) entries.
Vec gaussian_vector(RngStream& rng, std::size_t n, double stddev = 1.0);

// Uniform point on the unit sphere in R^d (d >= 1).
Vec unit_sphere_point(RngStream& rng, std::size_t d);

}  // namespace excon
