#pragma once

#include <boost/multiprecision/cpp_bin_float.hpp>

namespace oracle {

// Maclaurin series of erf in 100-digit arithmetic; the alternating terms peak
// near e^{x^2} ~ 4e15 at |x| = 6, far inside the working precision. Beyond
// |x| = 6.5 the series would cancel away every digit, and 1 - erf(x) < 1e-19
// there, so the double result is exactly +-1.
inline double erf_series(double xd) {
    if (xd > 6.5) return 1.0;
    if (xd < -6.5) return -1.0;
    using Big = boost::multiprecision::cpp_bin_float_100;
    const Big x = xd;
    const Big x2 = x * x;
    Big term = x;  // (-1)^n x^{2n+1} / n!
    Big sum = x;
    for (int n = 1; n < 4000; ++n) {
        term *= -x2 / n;
        const Big add = term / (2 * n + 1);
        sum += add;
        if (abs(add) < Big("1e-60")) break;
    }
    const Big pi = boost::multiprecision::default_ops::get_constant_pi<Big::backend_type>();
    return static_cast<double>(sum * 2 / sqrt(Big(pi)));
}

}  // namespace oracle
