#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "adhoc/constraints.hpp"
#include "adhoc/model.hpp"

namespace adhoc {

struct SolverOptions {
    double learning_rate = 0.05;
    int max_iters = 5000;
    double grad_tol = 1e-6;      // stop when ||grad||_2 falls below
    double objective_tol = 1e-10; // stop when an accepted step decreases the objective by less
    int max_halvings = 20;       // step halvings tried per iteration before giving up
    double epsilon = 1e-12;      // condition-mass threshold below which a constraint is inactive
    std::uint64_t outcome_cap = 1000000;
    std::vector<double> init_theta; // empty = all zeros
};

struct SolverReport {
    double objective = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    std::string stop_reason;
    std::vector<double> constraint_residual_norms; // L2 residual per constraint at the final theta
    std::vector<std::size_t> inactive_constraints; // constraints with condition mass below epsilon
};

// Shannon entropy in nats; 0 log 0 = 0.
inline double entropy(const std::vector<double>& probs) {
    double h = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0)) throw std::invalid_argument("entropy: negative or NaN probability");
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

inline double entropy(const JointDistribution& joint) { return entropy(joint.probs); }

namespace detail {

// Shared evaluation machinery for the fuzzy max-entropy objective
//
//   F(theta) = -H(p_theta) + sum_i w_i * ||b_i - q_i(theta)||^2
//
// where p_theta(w) = exp(theta . phi(w)) / Z and q_i is the conditional
// distribution of constraint i's target given its condition event.
// Constraints whose condition event has mass below epsilon are inactive
// and contribute nothing (checked afresh at every evaluation).
class ObjectiveEval {
public:
    ObjectiveEval(const FactorGraph& g, const ConstraintSet& cs, double epsilon,
                  std::uint64_t outcome_cap)
        : schema_(g.schema),
          sp_(OutcomeSpace::of(g.schema, outcome_cap)),
          fl_(FeatureLayout::of(g.schema, g.edges, sp_)),
          epsilon_(epsilon) {
        validate_graph(g, outcome_cap);
        validate_constraints(g.schema, cs);
        for (const auto& c : cs.constraints) bound_.push_back(BoundConstraint::of(g.schema, sp_, c));
    }

    [[nodiscard]] std::size_t feature_count() const { return fl_.total; }

    struct Result {
        double objective = 0.0;
        std::vector<double> grad;                      // empty when not requested
        std::vector<double> residual_norms;            // per constraint
        std::vector<std::size_t> inactive;
    };

    [[nodiscard]] Result evaluate(const std::vector<double>& theta, bool want_grad) const {
        if (theta.size() != fl_.total)
            throw std::invalid_argument("theta size does not match the feature layout");
        for (double t : theta)
            if (!std::isfinite(t)) throw std::invalid_argument("theta contains a non-finite weight");

        const std::size_t n = static_cast<std::size_t>(sp_.total);
        std::vector<double> score(n, 0.0);
        double max_score = -std::numeric_limits<double>::infinity();
        for (std::size_t w = 0; w < n; ++w) {
            double s = 0.0;
            fl_.for_each_active(sp_, w, [&](std::size_t k) { s += theta[k]; });
            score[w] = s;
            if (s > max_score) max_score = s;
        }
        double z = 0.0;
        std::vector<double> prob(n);
        for (std::size_t w = 0; w < n; ++w) {
            prob[w] = std::exp(score[w] - max_score);
            z += prob[w];
        }
        const double log_z = max_score + std::log(z);
        double mean_score = 0.0;
        for (std::size_t w = 0; w < n; ++w) {
            prob[w] /= z;
            mean_score += prob[w] * score[w];
        }
        // -H(p) = E[s] - log Z for p ~ exp(s)/Z.
        const double neg_entropy = mean_score - log_z;

        // Conditional moments per constraint.
        const std::size_t m = bound_.size();
        std::vector<std::vector<double>> value_mass(m);
        std::vector<double> event_mass(m, 0.0);
        for (std::size_t i = 0; i < m; ++i) value_mass[i].assign(bound_[i].b.size(), 0.0);
        for (std::size_t w = 0; w < n; ++w) {
            for (std::size_t i = 0; i < m; ++i) {
                if (!bound_[i].holds(sp_, w)) continue;
                value_mass[i][sp_.value_at(w, bound_[i].target_dim)] += prob[w];
                event_mass[i] += prob[w];
            }
        }

        Result res;
        res.objective = neg_entropy;
        res.residual_norms.assign(m, 0.0);
        std::vector<std::vector<double>> residual(m);
        std::vector<double> mismatch(m, 0.0); // sum_v r_v * q_v, needed by the gradient
        for (std::size_t i = 0; i < m; ++i) {
            if (event_mass[i] < epsilon_) {
                res.inactive.push_back(i);
                continue;
            }
            const auto& b = bound_[i].b;
            residual[i].resize(b.size());
            double norm_sq = 0.0;
            for (std::size_t v = 0; v < b.size(); ++v) {
                const double q = value_mass[i][v] / event_mass[i];
                const double r = b[v] - q;
                residual[i][v] = r;
                norm_sq += r * r;
                mismatch[i] += r * q;
            }
            res.residual_norms[i] = std::sqrt(norm_sq);
            res.objective += bound_[i].weight * norm_sq;
        }
        if (!std::isfinite(res.objective))
            throw std::runtime_error("objective diverged to a non-finite value");
        if (!want_grad) return res;

        // One scalar per world collects both gradient contributions:
        //   d(-H)/dtheta_k            = Cov(phi_k, s)
        //   d||r_i||^2/dtheta_k       = -(2 w_i / B_i) E[phi_k g_i (r_{ v(w)} - sum_v r_v q_v)]
        // so grad_k = sum_w p(w) phi_k(w) t(w).
        res.grad.assign(fl_.total, 0.0);
        for (std::size_t w = 0; w < n; ++w) {
            double t = score[w] - mean_score;
            for (std::size_t i = 0; i < m; ++i) {
                if (residual[i].empty() || !bound_[i].holds(sp_, w)) continue;
                const double r_w = residual[i][sp_.value_at(w, bound_[i].target_dim)];
                t -= 2.0 * bound_[i].weight / event_mass[i] * (r_w - mismatch[i]);
            }
            if (t == 0.0) continue;
            const double pt = prob[w] * t;
            fl_.for_each_active(sp_, w, [&](std::size_t k) { res.grad[k] += pt; });
        }
        return res;
    }

private:
    Schema schema_;
    OutcomeSpace sp_;
    FeatureLayout fl_;
    double epsilon_;
    std::vector<BoundConstraint> bound_;
};

inline double l2_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

} // namespace detail

// Objective value at graph.theta (empty theta = zeros).
inline double objective(const FactorGraph& g, const ConstraintSet& cs,
                        double epsilon = 1e-12, std::uint64_t outcome_cap = 1000000) {
    detail::ObjectiveEval ev(g, cs, epsilon, outcome_cap);
    std::vector<double> theta = g.theta.empty() ? std::vector<double>(ev.feature_count(), 0.0) : g.theta;
    return ev.evaluate(theta, false).objective;
}

// Analytic gradient at graph.theta (empty theta = zeros).
inline std::vector<double> gradient(const FactorGraph& g, const ConstraintSet& cs,
                                    double epsilon = 1e-12, std::uint64_t outcome_cap = 1000000) {
    detail::ObjectiveEval ev(g, cs, epsilon, outcome_cap);
    std::vector<double> theta = g.theta.empty() ? std::vector<double>(ev.feature_count(), 0.0) : g.theta;
    return ev.evaluate(theta, true).grad;
}

// Batch gradient descent with step halving. Deterministic: same graph,
// constraints and options always yield the same weights. A step is accepted
// only if it does not increase the objective; after max_halvings failed
// halvings the run stops and is reported as not converged.
inline std::pair<std::vector<double>, SolverReport> optimize(const FactorGraph& g,
                                                             const ConstraintSet& cs,
                                                             const SolverOptions& opts = {}) {
    if (!(opts.learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
    if (opts.max_iters < 0) throw std::invalid_argument("max_iters must be non-negative");
    detail::ObjectiveEval ev(g, cs, opts.epsilon, opts.outcome_cap);

    std::vector<double> theta;
    if (opts.init_theta.empty()) {
        theta.assign(ev.feature_count(), 0.0);
    } else {
        if (opts.init_theta.size() != ev.feature_count())
            throw std::invalid_argument("init_theta size does not match the feature layout");
        theta = opts.init_theta;
    }

    auto cur = ev.evaluate(theta, true);
    SolverReport report;
    report.iterations = 0;
    if (detail::l2_norm(cur.grad) <= opts.grad_tol) {
        report.converged = true;
        report.stop_reason = "gradient norm below tolerance";
    } else {
        report.stop_reason = "iteration limit reached";
        for (int iter = 1; iter <= opts.max_iters; ++iter) {
            double step = opts.learning_rate;
            std::vector<double> trial(theta.size());
            bool accepted = false;
            for (int h = 0; h <= opts.max_halvings; ++h) {
                for (std::size_t k = 0; k < theta.size(); ++k)
                    trial[k] = theta[k] - step * cur.grad[k];
                const double trial_obj = ev.evaluate(trial, false).objective;
                if (trial_obj <= cur.objective) {
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            report.iterations = iter;
            if (!accepted) {
                report.converged = false;
                report.stop_reason = "no descent step found after " +
                                     std::to_string(opts.max_halvings) + " halvings";
                break;
            }
            const double prev_obj = cur.objective;
            theta = trial;
            cur = ev.evaluate(theta, true);
            if (detail::l2_norm(cur.grad) <= opts.grad_tol) {
                report.converged = true;
                report.stop_reason = "gradient norm below tolerance";
                break;
            }
            if (prev_obj - cur.objective <= opts.objective_tol) {
                report.converged = true;
                report.stop_reason = "objective decrease below tolerance";
                break;
            }
        }
    }
    report.objective = cur.objective;
    report.grad_norm = detail::l2_norm(cur.grad);
    report.constraint_residual_norms = cur.residual_norms;
    report.inactive_constraints = cur.inactive;
    return {std::move(theta), std::move(report)};
}

} // namespace adhoc
