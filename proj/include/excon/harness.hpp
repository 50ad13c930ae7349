#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "excon/bounds.hpp"
#include "excon/constraints.hpp"
#include "excon/data.hpp"
#include "excon/recovery.hpp"
#include "excon/training.hpp"

namespace excon {

// ---------------------------------------------------------------------------
// Configuration files: a TOML subset.
//
//   # comment                 whole-line or trailing comments
//   [section]                 section names may contain dots: [train.variational]
//   key = 3.5                 numbers (integers and reals, 1e-3 style allowed)
//   key = "text"              double-quoted strings, \" and \\ escapes
//   key = true                booleans
//   key = [1, 2, "a"]         single-line arrays of scalars
//
// Keys before the first section header belong to the section "".
// ---------------------------------------------------------------------------

struct ConfigValue {
    enum class Type { Number, String, Bool, Array };
    Type type = Type::Number;
    double number = 0.0;
    std::string text;  // string value, or the raw token of a number
    bool boolean = false;
    std::vector<ConfigValue> items;
    std::size_t line = 0;
};

class ConfigDocument {
public:
    using Section = std::map<std::string, ConfigValue>;

    static ConfigDocument parse(std::istream& in);
    static ConfigDocument parse_string(const std::string& text);
    static ConfigDocument load(const std::string& path);

    bool has_section(const std::string& name) const { return sections_.count(name) > 0; }
    const Section* section(const std::string& name) const;
    std::vector<std::string> section_names() const;

private:
    std::map<std::string, Section> sections_;
};

// Typed readers; wrong types throw ParseError naming the key and line.
double config_number(const ConfigValue& v, const std::string& key);
std::size_t config_count(const ConfigValue& v, const std::string& key);
std::string config_string(const ConfigValue& v, const std::string& key);
bool config_bool(const ConfigValue& v, const std::string& key);
std::vector<double> config_numbers(const ConfigValue& v, const std::string& key);

// Section readers. Unknown keys throw ParseError; absent keys keep the
// values already in `base`.
GeneratorConfig read_generator_config(const ConfigDocument::Section& s, GeneratorConfig base = {});
TrainConfig read_train_config(const ConfigDocument::Section& s, TrainConfig base = {});
SurrogateSpec read_surrogate_spec(const ConfigDocument::Section& s, SurrogateSpec base = SurrogateSpec::grad_l2());

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct ExperimentConfig {
    GeneratorConfig generator;            // n and seed are set per cell
    std::vector<Method> methods;
    std::vector<std::size_t> n_values;
    std::vector<std::uint64_t> seeds;
    SurrogateSpec surrogate = SurrogateSpec::grad_l2();
    TrainConfig train;                    // shared defaults
    std::map<Method, TrainConfig> per_method;  // full configs after overrides
    std::string output;                   // may be empty
    bool include_timing = false;

    TrainConfig config_for(Method m, std::uint64_t seed) const;
    void validate() const;
};

// Sections: [experiment] methods, n, seeds, output, include_timing;
// [generator]; [surrogate]; [train]; [train.<method>] overrides.
ExperimentConfig read_experiment_config(const ConfigDocument& doc);

struct ResultRow {
    Method method = Method::Supervised;
    std::uint64_t seed = 0;
    std::size_t n = 0;
    double test_mse = 0.0;
    double emp_phi_test = 0.0;  // mean over the test set of ||grad h(x) - grad h*(x)||
    bool feasible = false;      // final empirical surrogate on S_E <= tau
    double wall_ms = 0.0;
};

struct ResultsTable {
    std::vector<ResultRow> rows;

    // method,seed,n,test_mse,emp_phi_test,feasible[,wall_ms]. Timing is left
    // out unless requested so reruns are byte identical.
    void write_csv(std::ostream& out, bool include_timing = false) const;
};

// Cells are ordered by (n, seed, method) following the config lists. Data
// for a cell comes from gen_synthetic with the cell's n and seed, so every
// method sees the same sample. jobs > 1 runs cells on worker threads; the
// table is identical to the sequential one apart from wall_ms.
ResultsTable run_experiment(const ExperimentConfig& config, std::size_t jobs = 1);

// Mean over the set of ||grad h(x) - grad ref(x)||.
double mean_gradient_distance(const Model& h, const Model& ref, const std::vector<Vec>& xs);

// ---------------------------------------------------------------------------
// Bounds report
// ---------------------------------------------------------------------------

struct BoundsConfig {
    double B = 1.0;
    double C = 1.0;
    std::size_t d = 100;
    std::size_t n = 100;
    std::vector<double> taus{0.0, 0.1, 0.5, 1.5707963267948966};
    std::size_t n_mc = 2000;
    std::uint64_t seed = 0;
    std::size_t k = 0;         // 0: skip the generalization-bound assembly
    double delta = 0.05;
    double err_best = 0.0;     // supplied approximation-error term
    std::size_t m_nodes = 10;  // two-layer rows
    std::optional<std::size_t> q;
};

BoundsConfig read_bounds_config(const ConfigDocument::Section& s, BoundsConfig base = {});

// Rows: std_linear (with an unconstrained MC check), one constrained_linear_sphere
// row per tau (MC check with w' = e_0 on n uniform sphere points), std_2nn and
// constrained_2nn per tau, and when k > 0 surrogate_class_linear_grad_angle,
// epsilon_k, agnostic_linear_sphere and realizable_linear_sphere per tau.
// within_bound means estimate <= value + 3 std_error.
BoundReport bounds_report(const BoundsConfig& config);

// ---------------------------------------------------------------------------
// Recovery command
// ---------------------------------------------------------------------------

struct RecoverReport {
    std::size_t nodes = 0;
    std::size_t samples = 0;
    std::size_t distinct_gradients = 0;
    std::size_t regions_covered = 0;
    std::size_t boundary_samples = 0;
    double max_residual = 0.0;

    void write(std::ostream& out) const;  // key=value lines
};

// Reads gradient samples, recovers the network, writes it to model_path
// (when non-empty) and returns the report.
RecoverReport recover_cmd(const std::string& samples_path, std::optional<double> eq_tol,
                          const std::string& model_path);

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

// Full CLI: subcommands generate, train, experiment, bounds, recover and
// gradients. Returns 0 on success, 1 on usage errors, 2 when the library
// reports an error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace excon
