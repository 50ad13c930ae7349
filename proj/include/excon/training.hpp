#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "excon/constraints.hpp"
#include "excon/data.hpp"
#include "excon/models.hpp"

namespace excon {

enum class Method { Supervised, Lagrangian, SelfTraining, Variational, EpacErm };

std::string to_string(Method method);
Method parse_method(const std::string& text);

struct TrainConfig {
    Method method = Method::Supervised;
    ModelKind student = ModelKind::two_layer(10);
    // Model family of the projection teacher; defaults to the student's.
    std::optional<ModelKind> teacher;
    double lambda = 1.0;       // multiplier on the surrogate term (Lagrangian)
    double lambda_proj = 1.0;  // hinge weight in the projection step
    double tau = 0.0;
    std::size_t T = 3;         // outer iterations (self-training, variational)
    double learning_rate = 0.01;
    std::size_t epochs = 50;
    std::size_t proj_epochs = 50;
    double proj_learning_rate = 0.0;  // 0 means "same as learning_rate"
    double init_scale = 1.0;
    std::uint64_t seed = 0;
    double epac_lambda0 = 1.0;
    std::size_t epac_max_doublings = 14;

    // Throws DomainError for learning rates <= 0, epochs = 0, negative
    // lambda/tau, or a two-layer student without hidden nodes.
    void validate() const;
    double projection_rate() const { return proj_learning_rate > 0.0 ? proj_learning_rate : learning_rate; }
    ModelKind teacher_kind() const { return teacher.value_or(student); }
};

struct IterationMetrics {
    std::size_t iter = 0;
    double lambda = 0.0;
    double train_loss = 0.0;  // labeled mean squared error of the model after this iteration
    double test_mse = 0.0;    // NaN without a test set
    double emp_phi = 0.0;     // NaN without an explanation set and spec
    bool feasible = false;    // emp_phi <= tau
};

struct TrainRun {
    Method method;
    TrainConfig config;
    Model model;
    // Objective value before every gradient step that updated the returned
    // student, in order.
    std::vector<double> epoch_losses;
    std::vector<IterationMetrics> iterations;
    bool infeasible_after_schedule = false;
    std::vector<std::string> warnings;
};

// Optional evaluation inputs. Trainers that receive (S_E, spec) use them for
// emp_phi when the monitor does not name its own.
struct Monitor {
    const LabeledSet* test = nullptr;
    const ExplanationSet* explanations = nullptr;
    const SurrogateSpec* spec = nullptr;
};

// Stream ids under RngStream(config.seed).
namespace train_stream {
inline constexpr std::uint64_t kStudentInit = 11;
inline constexpr std::uint64_t kTeacherInit = 12;
}  // namespace train_stream

double mean_squared_error(const Model& h, const LabeledSet& set);

// Full-batch gradient descent on (1/n) sum (h(x) - y)^2 from a random
// student drawn from the seed's student stream. One iteration entry.
TrainRun train_supervised(const LabeledSet& labeled, const TrainConfig& config, const Monitor& monitor = {});

// Adds lambda * (1/k) sum phi. lambda = 0 skips the surrogate entirely, so the
// run equals train_supervised bit for bit.
TrainRun train_lagrangian(const LabeledSet& labeled, const ExplanationSet& explanations,
                          const SurrogateSpec& spec, const TrainConfig& config, const Monitor& monitor = {});

// h_0 = supervised; each round pseudo-labels the unlabeled set with h_t and
// refits (warm start) on (1/n) sum labeled + (1/m) sum pseudo-labeled.
// T + 1 iteration entries. No unlabeled points: returns the supervised run.
TrainRun train_self_training(const LabeledSet& labeled, const std::vector<Vec>& unlabeled,
                             const TrainConfig& config, const Monitor& monitor = {});

// h_0 = supervised. Round t: a teacher initialized from h_t minimizes
// (1/m) sum (f(u) - h_t(u))^2 + lambda_proj max(0, (1/k) sum phi(f) - tau) for
// proj_epochs steps; then the student (warm start from h_t) minimizes
// (1/n) sum (h(x) - y)^2 + (1/m) sum (h(u) - f(u))^2 for epochs steps.
TrainRun train_variational(const LabeledSet& labeled, const std::vector<Vec>& unlabeled,
                           const ExplanationSet& explanations, const SurrogateSpec& spec,
                           const TrainConfig& config, const Monitor& monitor = {});

// One projection step: gradient descent from `teacher` for proj_epochs steps
// at projection_rate() on (1/m) sum (f(u) - student(u))^2 +
// lambda_proj max(0, (1/k) sum phi(f) - tau).
Model projection_step(const Model& student, Model teacher, const std::vector<Vec>& unlabeled,
                      const ExplanationSet& explanations, const SurrogateSpec& spec, const TrainConfig& config);

// Lagrangian runs with lambda = lambda0 * 2^j, j = 0..epac_max_doublings,
// stopping at the first one whose empirical surrogate is <= tau. When none is
// feasible the last run is returned with infeasible_after_schedule set.
TrainRun train_epac_erm(const LabeledSet& labeled, const ExplanationSet& explanations,
                        const SurrogateSpec& spec, const TrainConfig& config, const Monitor& monitor = {});

// Dispatches on config.method.
TrainRun train(const DatasetBundle& data, const SurrogateSpec& spec, const TrainConfig& config,
               const Monitor& monitor = {});

// Teacher initialization for the projection step: the student itself when the
// kinds agree; for a smaller two-layer teacher the nodes with the largest
// |w_j|; a larger one pads with zero-weight random rows; otherwise a random
// model from rng.
Model init_teacher(const Model& student, const ModelKind& teacher_kind, double init_scale, RngStream& rng);

// Limit of the linear projection step as lambda_proj grows under GradAngle
// with tau = 0: the best fit of h_t on the unlabeled points among
// {x -> c <w', x> + b : c >= 0}.
LinearModel linear_direction_projection(const Model& h_t, const std::vector<Vec>& unlabeled, const Vec& direction);

// Writes the metric rows of a run: method,seed,n,m,k,lambda,tau,T,iter,
// train_loss,test_mse,emp_phi,feasible.
void write_metrics_csv(std::ostream& out, const std::vector<TrainRun>& runs, std::size_t n, std::size_t m,
                       std::size_t k, bool header = true);

}  // namespace excon
