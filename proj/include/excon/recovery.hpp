#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <vector>

#include "excon/core_math.hpp"
#include "excon/models.hpp"

namespace excon {

// One exact gradient explanation: g = grad_x h*(x).
struct GradientSample {
    Vec x;
    Vec g;
};

using BasisSet = std::vector<Vec>;

// Recovers {x_1, .., x_m} from M = all subset sums of a linearly independent
// family. Two vectors are equal when their distance is at most eq_tol
// (absolute). Zero vectors and duplicates in M are dropped first; the
// remaining elements are scanned in input order while keeping the candidate
// basis B and the set S of sums of two or more elements of B. Throws
// StructureError when the result does not explain M (|M| != 2^|B| or some
// element is not a subset sum of B).
BasisSet identify_basis(const std::vector<Vec>& M, double eq_tol);

// eq_tol = 1e-9 * max ||v|| over M.
BasisSet identify_basis(const std::vector<Vec>& M);
double default_eq_tol(const std::vector<Vec>& M);

struct RecoveryResult {
    TwoLayerRelu model;
    std::size_t distinct_gradients = 0;  // |M|, the zero gradient included when observed
    std::size_t regions_covered = 0;     // distinct activation patterns among the samples
    std::size_t boundary_samples = 0;    // samples with some |<u_j, x>| <= 1e-12
    double max_residual = 0.0;           // max ||grad model(x) - g|| over samples
};

// Rebuilds w_j u_j from the distinct gradients, then fixes each node's sign
// by requiring 1{<u_j, x> > 0} to agree with "node j contributes to g(x)" on
// every sample. The zero-gradient (all inactive) region need not be sampled.
//   CoverageError       some non-empty activation pattern is never observed
//   StructureError      distinct gradients are not a subset-sum family
//   InconsistencyError  a node's sign cannot be chosen consistently, or the
//                       recovered model misses a sample by more than eq_tol
// eq_tol defaults to default_eq_tol over the sample gradients.
RecoveryResult recover_two_layer_detailed(const std::vector<GradientSample>& samples,
                                          std::optional<double> eq_tol = std::nullopt);
TwoLayerRelu recover_two_layer(const std::vector<GradientSample>& samples,
                               std::optional<double> eq_tol = std::nullopt);

// Samples needed so every one of 2^m regions of mass >= p_min is hit with
// probability >= 1 - delta: ceil((m ln 2 + ln(1/delta)) / ln(1/(1 - p_min))),
// at least 1. The region count enters through 2^m, hence the ln 2 factor.
std::size_t coverage_sample_size(std::size_t m_nodes, double p_min, double delta);

// CSV with header x_0..x_{d-1},g_0..g_{d-1}. Values are written as hex float
// literals unless hex is false (then %.17g).
void write_gradient_samples(std::ostream& out, const std::vector<GradientSample>& samples,
                            bool hex = true);
std::vector<GradientSample> read_gradient_samples(std::istream& in);

}  // namespace excon
