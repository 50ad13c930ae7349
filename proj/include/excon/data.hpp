#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "excon/constraints.hpp"
#include "excon/core_math.hpp"
#include "excon/models.hpp"

namespace excon {

struct LabeledSet {
    std::vector<Vec> x;
    Vec y;

    std::size_t size() const { return x.size(); }
    bool operator==(const LabeledSet&) const = default;
};

struct DatasetBundle {
    LabeledSet labeled;
    std::vector<Vec> unlabeled;
    ExplanationSet explanations;
    LabeledSet test;
    std::string provenance;

    // Input dimension of the first non-empty part, 0 when all are empty.
    std::size_t dim() const;
    bool operator==(const DatasetBundle&) const = default;
};

enum class NoiseKind {
    None,
    GradientGaussian,  // N(0, std^2) per coordinate added to the gradient targets
    LabelGaussian,     // N(0, std^2) added to the labels of the labeled set
    WeightGaussian,    // targets come from a copy of h* with perturbed weights
    OutputGaussian,    // N(0, std^2) added to the output targets
};

std::string to_string(NoiseKind kind);
NoiseKind parse_noise_kind(const std::string& text);

struct NoiseSpec {
    NoiseKind kind = NoiseKind::None;
    double std = 0.0;
};

struct GeneratorConfig {
    std::size_t d = 100;
    double input_variance = 5.0;
    ModelKind target = ModelKind::two_layer(10);
    double target_scale = 1.0;  // init scale passed to random_init for h*
    NoiseSpec noise;
    std::size_t n = 10;
    std::size_t m = 1000;
    std::size_t k = 20;
    std::size_t n_test = 2000;
    std::uint64_t seed = 0;

    // Throws DomainError on negative variances or d = 0.
    void validate() const;
    std::string describe() const;
};

// Stream ids of the independent substreams drawn from RngStream(seed).
namespace stream {
inline constexpr std::uint64_t kTarget = 1;
inline constexpr std::uint64_t kLabeled = 2;
inline constexpr std::uint64_t kUnlabeled = 3;
inline constexpr std::uint64_t kExplanations = 4;
inline constexpr std::uint64_t kTest = 5;
inline constexpr std::uint64_t kNoise = 6;
}  // namespace stream

struct SyntheticTask {
    DatasetBundle data;
    Model target;
};

// Inputs are i.i.d. N(0, input_variance I). Labels are h*(x) (test labels are
// always noise free). Explanation points carry gradient targets grad h*(x')
// and output targets h*(x'), with noise applied per cfg.noise.
SyntheticTask gen_synthetic(const GeneratorConfig& cfg);

// Seeded Fisher-Yates shuffle of 0..n_points-1, cut into consecutive parts of
// the requested sizes. Throws DomainError when the counts exceed n_points.
std::vector<std::vector<std::size_t>> split_indices(std::size_t n_points,
                                                    const std::vector<std::size_t>& counts,
                                                    std::uint64_t seed);

struct SplitCounts {
    std::size_t labeled = 0;
    std::size_t unlabeled = 0;
    std::size_t explanations = 0;
    std::size_t test = 0;
};

// Partitions a labeled pool into the four parts of a bundle (explanation
// points get no targets; unlabeled points drop their labels).
DatasetBundle split(const LabeledSet& pool, const SplitCounts& counts, std::uint64_t seed);

// ---------------------------------------------------------------------------
// CSV dataset format
//
//   # provenance: <free text>            (optional first line)
//   role,y,x_0,..,x_{d-1}[,g_0,..,g_{d-1}][,out]
//
// role is one of labeled, unlabeled, explanation, test. Cells that do not
// apply to a role (y of unlabeled/explanation rows, g/out of non-explanation
// rows) are left empty. Numbers are hex float literals (bit exact) or %.17g.
// ---------------------------------------------------------------------------

struct CsvSchema {
    std::size_t d = 0;
    bool gradients = false;
    bool outputs = false;

    bool operator==(const CsvSchema&) const = default;
};

CsvSchema schema_of(const DatasetBundle& bundle);

void write_csv_dataset(std::ostream& out, const DatasetBundle& bundle, bool hex = true);
void write_csv_dataset(const std::string& path, const DatasetBundle& bundle, bool hex = true);

// A non-finite or malformed number, or an unknown role, throws ParseError
// with the 1-based line number. A header or row shape that disagrees with
// the expected schema throws SchemaError.
DatasetBundle read_csv_dataset(std::istream& in, std::optional<CsvSchema> expected = std::nullopt);
DatasetBundle read_csv_dataset(const std::string& path, std::optional<CsvSchema> expected = std::nullopt);

}  // namespace excon
