#include "excon/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "excon/error.hpp"
#include "text_util.hpp"

namespace excon {

std::string to_string(Method method) {
    switch (method) {
        case Method::Supervised: return "supervised";
        case Method::Lagrangian: return "lagrangian";
        case Method::SelfTraining: return "self_training";
        case Method::Variational: return "variational";
        case Method::EpacErm: return "epac_erm";
    }
    return "supervised";
}

Method parse_method(const std::string& text) {
    for (auto m : {Method::Supervised, Method::Lagrangian, Method::SelfTraining, Method::Variational,
                   Method::EpacErm}) {
        if (to_string(m) == text) return m;
    }
    throw ParseError("unknown method '" + text + "'", 0);
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw DomainError("train: learning_rate must be positive");
    if (!(proj_learning_rate >= 0.0)) throw DomainError("train: proj_learning_rate must be non-negative");
    if (epochs == 0) throw DomainError("train: epochs must be at least 1");
    if (!(lambda >= 0.0) || !(lambda_proj >= 0.0)) throw DomainError("train: lambda must be non-negative");
    if (!(tau >= 0.0)) throw DomainError("train: tau must be non-negative");
    if (!(init_scale >= 0.0)) throw DomainError("train: init_scale must be non-negative");
    if (!(epac_lambda0 > 0.0)) throw DomainError("train: epac_lambda0 must be positive");
    if (student.family == ModelKind::Family::TwoLayer && student.hidden == 0) {
        throw DomainError("train: two-layer student needs at least one hidden node");
    }
    const ModelKind t = teacher_kind();
    if (t.family == ModelKind::Family::TwoLayer && t.hidden == 0) {
        throw DomainError("train: two-layer teacher needs at least one hidden node");
    }
}

double mean_squared_error(const Model& h, const LabeledSet& set) {
    if (set.size() == 0) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        const double r = predict(h, set.x[i]) - set.y[i];
        s += r * r;
    }
    return s / static_cast<double>(set.size());
}

namespace {

// Objective callback: returns the loss at h and adds its gradient into grad.
using Objective = std::function<double(const Model& h, ParamVec& grad)>;

Model gradient_descent(Model h, std::size_t steps, double lr, const Objective& objective,
                       std::vector<double>* losses) {
    ParamVec grad(param_count(h));
    for (std::size_t e = 0; e < steps; ++e) {
        std::fill(grad.begin(), grad.end(), 0.0);
        const double loss = objective(h, grad);
        if (!std::isfinite(loss) || !all_finite(grad)) {
            throw DomainError("training diverged at step " + std::to_string(e) +
                              "; lower the learning rate");
        }
        if (losses) losses->push_back(loss);
        ParamVec p = flatten(h);
        axpy(-lr, grad, p);
        h = with_params(h, p);
    }
    return h;
}

// weight * (1/N) sum (h(x_i) - t_i)^2
double add_squared_loss(const Model& h, const std::vector<Vec>& xs, std::span<const double> targets,
                        double weight, ParamVec& grad) {
    if (xs.empty() || weight == 0.0) return 0.0;
    const double inv = 1.0 / static_cast<double>(xs.size());
    double s = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double r = predict(h, xs[i]) - targets[i];
        s += r * r;
        accumulate_param_gradient(h, xs[i], 2.0 * weight * inv * r, grad);
    }
    return weight * inv * s;
}

// weight * (1/k) sum phi, gradient included.
double add_surrogate(const Model& h, const SurrogateSpec& spec, const ExplanationSet& e, double weight,
                     ParamVec& grad) {
    const double inv = 1.0 / static_cast<double>(e.size());
    double s = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) {
        s += eval_surrogate_at(spec, h, e, i);
        accumulate_surrogate_param_grad(spec, h, e, i, weight * inv, grad);
    }
    return weight * inv * s;
}

Vec predictions(const Model& h, const std::vector<Vec>& xs) {
    Vec out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = predict(h, xs[i]);
    return out;
}

void check_labeled(const LabeledSet& s) {
    if (s.size() == 0) throw DomainError("train: labeled set is empty");
    if (s.y.size() != s.x.size()) throw DomainError("train: labels and points differ in count");
}

void check_explanations(const ExplanationSet& e, const SurrogateSpec& spec) {
    if (e.size() == 0) throw DomainError("train: explanation set is empty");
    e.validate();
    spec.validate();
    if (!spec.differentiable()) {
        throw UnsupportedError("train: surrogate " + to_string(spec.kind) + " has no gradient");
    }
}

IterationMetrics measure(const Model& h, std::size_t iter, double lambda, const LabeledSet& labeled,
                         const TrainConfig& cfg, const Monitor& mon, const ExplanationSet* e,
                         const SurrogateSpec* spec) {
    IterationMetrics m;
    m.iter = iter;
    m.lambda = lambda;
    m.train_loss = mean_squared_error(h, labeled);
    m.test_mse = mon.test ? mean_squared_error(h, *mon.test) : std::numeric_limits<double>::quiet_NaN();
    const ExplanationSet* me = mon.explanations ? mon.explanations : e;
    const SurrogateSpec* ms = mon.spec ? mon.spec : spec;
    m.emp_phi = std::numeric_limits<double>::quiet_NaN();
    if (me && ms && me->size() > 0) {
        try {
            m.emp_phi = empirical_surrogate(*ms, h, *me);
        } catch (const DomainError&) {
            // e.g. grad_angle on a two-layer model: no value to report
        }
    }
    m.feasible = m.emp_phi <= cfg.tau;
    return m;
}

Model initial_student(const LabeledSet& labeled, const TrainConfig& cfg) {
    RngStream rng = RngStream(cfg.seed).child(train_stream::kStudentInit);
    return random_init(cfg.student, labeled.x.front().size(), cfg.init_scale, rng);
}

TrainRun make_run(Method method, const TrainConfig& cfg, Model model) {
    return TrainRun{method, cfg, std::move(model), {}, {}, false, {}};
}

// Supervised or Lagrangian fit from the seeded initial student.
TrainRun fit_penalized(Method method, const LabeledSet& labeled, const ExplanationSet* e,
                       const SurrogateSpec* spec, double lambda, const TrainConfig& cfg, const Monitor& mon) {
    TrainRun run = make_run(method, cfg, initial_student(labeled, cfg));
    const bool use_surrogate = e && spec && lambda != 0.0;
    const Objective obj = [&](const Model& h, ParamVec& g) {
        double loss = add_squared_loss(h, labeled.x, labeled.y, 1.0, g);
        if (use_surrogate) loss += add_surrogate(h, *spec, *e, lambda, g);
        return loss;
    };
    run.model = gradient_descent(run.model, cfg.epochs, cfg.learning_rate, obj, &run.epoch_losses);
    run.iterations.push_back(measure(run.model, 0, use_surrogate ? lambda : 0.0, labeled, cfg, mon, e, spec));
    return run;
}

}  // namespace

TrainRun train_supervised(const LabeledSet& labeled, const TrainConfig& config, const Monitor& monitor) {
    config.validate();
    check_labeled(labeled);
    return fit_penalized(Method::Supervised, labeled, nullptr, nullptr, 0.0, config, monitor);
}

TrainRun train_lagrangian(const LabeledSet& labeled, const ExplanationSet& explanations, const SurrogateSpec& spec,
                          const TrainConfig& config, const Monitor& monitor) {
    config.validate();
    check_labeled(labeled);
    check_explanations(explanations, spec);
    return fit_penalized(Method::Lagrangian, labeled, &explanations, &spec, config.lambda, config, monitor);
}

TrainRun train_self_training(const LabeledSet& labeled, const std::vector<Vec>& unlabeled,
                             const TrainConfig& config, const Monitor& monitor) {
    config.validate();
    check_labeled(labeled);
    TrainRun run = fit_penalized(Method::SelfTraining, labeled, nullptr, nullptr, 0.0, config, monitor);
    if (unlabeled.empty()) {
        if (config.T > 0) run.warnings.push_back("self-training without unlabeled points; returning the supervised fit");
        return run;
    }
    for (std::size_t t = 1; t <= config.T; ++t) {
        const Vec pseudo = predictions(run.model, unlabeled);
        const Objective obj = [&](const Model& h, ParamVec& g) {
            return add_squared_loss(h, labeled.x, labeled.y, 1.0, g) + add_squared_loss(h, unlabeled, pseudo, 1.0, g);
        };
        run.model = gradient_descent(run.model, config.epochs, config.learning_rate, obj, &run.epoch_losses);
        run.iterations.push_back(measure(run.model, t, 0.0, labeled, config, monitor, nullptr, nullptr));
    }
    return run;
}

Model init_teacher(const Model& student, const ModelKind& teacher_kind, double init_scale, RngStream& rng) {
    const ModelKind sk = kind_of(student);
    const std::size_t d = input_dim(student);
    if (sk == teacher_kind) return student;
    const auto* net = std::get_if<TwoLayerRelu>(&student);
    if (net && teacher_kind.family == ModelKind::Family::TwoLayer) {
        const std::size_t keep = std::min(teacher_kind.hidden, net->hidden());
        std::vector<std::size_t> order(net->hidden());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return std::abs(net->outer()[a]) > std::abs(net->outer()[b]);
        });
        Vec outer;
        std::vector<Vec> rows;
        for (std::size_t j = 0; j < keep; ++j) {
            outer.push_back(net->outer()[order[j]]);
            const auto r = net->row(order[j]);
            rows.emplace_back(r.begin(), r.end());
        }
        while (outer.size() < teacher_kind.hidden) {
            outer.push_back(0.0);
            rows.push_back(unit_sphere_point(rng, d));
        }
        return TwoLayerRelu::from_unit_rows(std::move(outer), std::move(rows));
    }
    return random_init(teacher_kind, d, init_scale, rng);
}

TrainRun train_variational(const LabeledSet& labeled, const std::vector<Vec>& unlabeled,
                           const ExplanationSet& explanations, const SurrogateSpec& spec, const TrainConfig& config,
                           const Monitor& monitor) {
    config.validate();
    check_labeled(labeled);
    const ModelKind tk = config.teacher_kind();
    if (spec.kind == SurrogateKind::GradAngle && tk.family == ModelKind::Family::TwoLayer) {
        throw DomainError("train_variational: grad_angle needs a linear teacher");
    }
    TrainRun run = fit_penalized(Method::Variational, labeled, nullptr, nullptr, 0.0, config, monitor);
    run.iterations.front() = measure(run.model, 0, 0.0, labeled, config, monitor, &explanations, &spec);
    if (config.T == 0) return run;
    check_explanations(explanations, spec);
    if (unlabeled.empty()) throw DomainError("train_variational: unlabeled set is empty");

    RngStream teacher_rng = RngStream(config.seed).child(train_stream::kTeacherInit);
    std::optional<Model> prev_teacher;
    for (std::size_t t = 1; t <= config.T; ++t) {
        // Projection step.
        Model teacher = (prev_teacher && kind_of(run.model) != tk)
                            ? *prev_teacher
                            : init_teacher(run.model, tk, config.init_scale, teacher_rng);
        teacher = projection_step(run.model, std::move(teacher), unlabeled, explanations, spec, config);
        prev_teacher = teacher;

        // Distillation step.
        const Vec teacher_out = predictions(teacher, unlabeled);
        const Objective distill = [&](const Model& h, ParamVec& g) {
            return add_squared_loss(h, labeled.x, labeled.y, 1.0, g) +
                   add_squared_loss(h, unlabeled, teacher_out, 1.0, g);
        };
        run.model = gradient_descent(run.model, config.epochs, config.learning_rate, distill, &run.epoch_losses);
        run.iterations.push_back(measure(run.model, t, config.lambda_proj, labeled, config, monitor, &explanations, &spec));
    }
    return run;
}

Model projection_step(const Model& student, Model teacher, const std::vector<Vec>& unlabeled,
                      const ExplanationSet& explanations, const SurrogateSpec& spec, const TrainConfig& config) {
    if (unlabeled.empty()) throw DomainError("projection_step: unlabeled set is empty");
    check_explanations(explanations, spec);
    const Vec student_out = predictions(student, unlabeled);
    const Objective proj = [&](const Model& f, ParamVec& g) {
        double loss = add_squared_loss(f, unlabeled, student_out, 1.0, g);
        if (config.lambda_proj == 0.0) return loss;
        const double phi = empirical_surrogate(spec, f, explanations);
        if (phi > config.tau) {
            const ParamVec sg = surrogate_param_grad(spec, f, explanations);
            axpy(config.lambda_proj, sg, g);
            loss += config.lambda_proj * (phi - config.tau);
        }
        return loss;
    };
    return gradient_descent(std::move(teacher), config.proj_epochs, config.projection_rate(), proj, nullptr);
}

TrainRun train_epac_erm(const LabeledSet& labeled, const ExplanationSet& explanations, const SurrogateSpec& spec,
                        const TrainConfig& config, const Monitor& monitor) {
    config.validate();
    check_labeled(labeled);
    check_explanations(explanations, spec);
    std::vector<IterationMetrics> schedule;
    for (std::size_t j = 0; j <= config.epac_max_doublings; ++j) {
        const double lambda = config.epac_lambda0 * std::ldexp(1.0, static_cast<int>(j));
        TrainRun run = fit_penalized(Method::EpacErm, labeled, &explanations, &spec, lambda, config, monitor);
        // Feasibility is judged on the training explanation sample itself.
        const double phi = empirical_surrogate(spec, run.model, explanations);
        IterationMetrics m = run.iterations.front();
        m.iter = j;
        schedule.push_back(m);
        const bool feasible = phi <= config.tau;
        if (feasible || j == config.epac_max_doublings) {
            run.iterations = std::move(schedule);
            run.infeasible_after_schedule = !feasible;
            return run;
        }
    }
    throw DomainError("train_epac_erm: empty schedule");  // unreachable
}

TrainRun train(const DatasetBundle& data, const SurrogateSpec& spec, const TrainConfig& config,
               const Monitor& monitor) {
    switch (config.method) {
        case Method::Supervised: return train_supervised(data.labeled, config, monitor);
        case Method::Lagrangian: return train_lagrangian(data.labeled, data.explanations, spec, config, monitor);
        case Method::SelfTraining: return train_self_training(data.labeled, data.unlabeled, config, monitor);
        case Method::Variational:
            return train_variational(data.labeled, data.unlabeled, data.explanations, spec, config, monitor);
        case Method::EpacErm: return train_epac_erm(data.labeled, data.explanations, spec, config, monitor);
    }
    throw UnsupportedError("train: unknown method");
}

LinearModel linear_direction_projection(const Model& h_t, const std::vector<Vec>& unlabeled, const Vec& direction) {
    if (unlabeled.empty()) throw DomainError("linear_direction_projection: unlabeled set is empty");
    const double nd = norm(direction);
    if (!(nd > 0.0)) throw DomainError("linear_direction_projection: zero direction");
    const Vec dir = scaled(direction, 1.0 / nd);
    const double m = static_cast<double>(unlabeled.size());
    double sz = 0.0, st = 0.0, szz = 0.0, szt = 0.0;
    for (const Vec& u : unlabeled) {
        const double z = dot(dir, u);
        const double t = predict(h_t, u);
        sz += z;
        st += t;
        szz += z * z;
        szt += z * t;
    }
    const double var = szz - sz * sz / m;
    double c = var > 0.0 ? (szt - sz * st / m) / var : 0.0;
    c = std::max(c, 0.0);
    const double b = (st - c * sz) / m;
    return LinearModel(scaled(dir, c), b);
}

void write_metrics_csv(std::ostream& out, const std::vector<TrainRun>& runs, std::size_t n, std::size_t m,
                       std::size_t k, bool header) {
    if (header) out << "method,seed,n,m,k,lambda,tau,T,iter,train_loss,test_mse,emp_phi,feasible\n";
    for (const TrainRun& r : runs) {
        for (const IterationMetrics& it : r.iterations) {
            out << to_string(r.method) << ',' << r.config.seed << ',' << n << ',' << m << ',' << k << ','
                << detail::format_real(it.lambda, false) << ',' << detail::format_real(r.config.tau, false) << ','
                << r.config.T << ',' << it.iter << ',' << detail::format_real(it.train_loss, false) << ','
                << detail::format_real(it.test_mse, false) << ',' << detail::format_real(it.emp_phi, false) << ','
                << (it.feasible ? "true" : "false") << '\n';
        }
    }
}

}  // namespace excon
