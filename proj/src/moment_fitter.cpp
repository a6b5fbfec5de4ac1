#include "bipnet/moment_fitter.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bipnet/errors.hpp"

namespace bipnet {

namespace {

constexpr double kSaturated = 1e-4;

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

ParameterSet with_theta(Eigen::Index m, Eigen::Index n, const Eigen::VectorXd& theta, const Eigen::VectorXd& gamma) {
    ParameterSet params = ParameterSet::zeros(m, n, gamma.size());
    params.set_theta(theta);
    params.gamma = gamma;
    return params;
}

Eigen::VectorXd degree_residual(const Eigen::MatrixXd& mu, const DegreeVector& deg) {
    const Eigen::Index m = mu.rows();
    const Eigen::Index n = mu.cols();
    Eigen::VectorXd f(m + n - 1);
    f.head(m) = mu.rowwise().sum() - deg.actor;
    f.tail(n - 1) = mu.leftCols(n - 1).colwise().sum().transpose() - deg.event.head(n - 1);
    return f;
}

Eigen::MatrixXd mean_matrix(const Eigen::MatrixXd& pi, const ModelFamily& family) {
    return map_entries(pi, [&](double eta) { return family.mean(eta); });
}

Eigen::MatrixXd mean_d1_matrix(const Eigen::MatrixXd& pi, const ModelFamily& family) {
    return map_entries(pi, [&](double eta) { return family.mean_d1(eta); });
}

} // namespace

ParameterSet ParameterSet::zeros(Eigen::Index m, Eigen::Index n, Eigen::Index p) {
    return {Eigen::VectorXd::Zero(m), Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(p)};
}

Eigen::VectorXd ParameterSet::theta() const {
    Eigen::VectorXd t(alpha.size() + beta.size() - 1);
    t << alpha, beta.head(beta.size() - 1);
    return t;
}

void ParameterSet::set_theta(const Eigen::VectorXd& theta) {
    const Eigen::Index m = alpha.size();
    const Eigen::Index n = beta.size();
    if (theta.size() != m + n - 1) throw ValidationError("theta has wrong dimension");
    alpha = theta.head(m);
    beta.head(n - 1) = theta.tail(n - 1);
    beta(n - 1) = 0.0;
}

Problem::Problem(const BipartiteGraph& graph, const CovariateTensor& covariates, const ModelFamily& family)
    : graph_(graph), covariates_(covariates), family_(family), degrees_(bipnet::degrees(graph)) {
    if (covariates.actors() != graph.actors() || covariates.events() != graph.events()) {
        throw ValidationError("covariate tensor does not match graph dimensions");
    }
    if (family.support() == Support::binary && graph.kind() != WeightKind::binary) {
        throw ValidationError("family '" + std::string(family.name()) + "' needs a binary graph");
    }
}

void FitOptions::validate() const {
    if (!(tol_inner > 0.0) || !(tol_outer > 0.0)) throw ConfigError("tolerances must be positive");
    if (max_inner < 1 || max_outer < 1) throw ConfigError("iteration caps must be at least 1");
    if (max_halvings < 0) throw ConfigError("max_halvings must be nonnegative");
    if (!(theta_limit > 0.0)) throw ConfigError("theta_limit must be positive");
}

Eigen::MatrixXd linear_predictor(const ParameterSet& params, const CovariateTensor& covariates) {
    Eigen::MatrixXd pi = covariates.contract(params.gamma);
    pi.colwise() += params.alpha;
    pi.rowwise() += params.beta.transpose();
    return pi;
}

Eigen::VectorXd eval_F(const ParameterSet& params, const Problem& problem) {
    const Eigen::MatrixXd mu = mean_matrix(linear_predictor(params, problem.covariates()), problem.family());
    return degree_residual(mu, problem.degrees());
}

Eigen::VectorXd eval_Q(const ParameterSet& params, const Problem& problem) {
    const auto& z = problem.covariates();
    const Eigen::MatrixXd resid =
        mean_matrix(linear_predictor(params, z), problem.family()) - problem.graph().weights();
    Eigen::VectorXd q(z.dim());
    for (Eigen::Index l = 0; l < z.dim(); ++l) q(l) = z.layer(l).cwiseProduct(resid).sum();
    return q;
}

StructuredJacobian build_jacobian(const ParameterSet& params, const CovariateTensor& covariates,
                                  const ModelFamily& family) {
    return StructuredJacobian(mean_d1_matrix(linear_predictor(params, covariates), family));
}

Eigen::VectorXd solve_structured(const StructuredJacobian& jacobian, const Eigen::VectorXd& rhs) {
    return SchurFactor(jacobian).solve(rhs);
}

Eigen::MatrixXd q_theta_jacobian(const Eigen::MatrixXd& mean_d1, const CovariateTensor& covariates) {
    const Eigen::Index m = mean_d1.rows();
    const Eigen::Index n = mean_d1.cols();
    Eigen::MatrixXd a(covariates.dim(), m + n - 1);
    for (Eigen::Index l = 0; l < covariates.dim(); ++l) {
        const Eigen::MatrixXd zw = covariates.layer(l).cwiseProduct(mean_d1);
        a.row(l).head(m) = zw.rowwise().sum().transpose();
        a.row(l).tail(n - 1) = zw.leftCols(n - 1).colwise().sum();
    }
    return a;
}

ThetaSolve solve_theta_given_gamma(const Eigen::VectorXd& gamma, const Problem& problem, const FitOptions& options,
                                   const std::optional<Eigen::VectorXd>& start) {
    const Eigen::Index m = problem.actors();
    const Eigen::Index n = problem.events();
    const auto& family = problem.family();
    const Eigen::MatrixXd zg = problem.covariates().contract(gamma);

    const auto predictor = [&](const Eigen::VectorXd& theta) {
        Eigen::MatrixXd pi = zg;
        pi.colwise() += theta.head(m);
        pi.leftCols(n - 1).rowwise() += theta.tail(n - 1).transpose();
        return pi;
    };

    ThetaSolve out;
    out.theta = start ? *start : initial_parameters(problem, InitRule::zero).theta();
    if (out.theta.size() != m + n - 1) throw ValidationError("start theta has wrong dimension");

    Eigen::MatrixXd pi = predictor(out.theta);
    Eigen::VectorXd f = degree_residual(mean_matrix(pi, family), problem.degrees());
    double norm = inf_norm(f);
    out.trace.push_back(norm);

    for (;;) {
        if (norm <= options.tol_inner) {
            // A boundary degree (0, or every possible edge) is "solved" by
            // running theta off towards infinity until the residual underflows
            // the tolerance. Genuine roots keep sum_j mu'_ij of order one.
            const Eigen::MatrixXd w = mean_d1_matrix(pi, family);
            const double smallest = std::min(w.rowwise().sum().minCoeff(), w.colwise().sum().minCoeff());
            if (smallest < kSaturated) {
                throw NonExistenceError("fitted means saturated: a node sits at a boundary degree", out.trace);
            }
            // One more full Newton step, kept only if it helps. Inside the
            // quadratic basin this takes F to rounding level, so the outer
            // loop does not stall on noise left by the inner tolerance.
            try {
                const Eigen::VectorXd polished = out.theta - SchurFactor(StructuredJacobian(w)).solve(f);
                const Eigen::VectorXd polished_f = degree_residual(mean_matrix(predictor(polished), family), problem.degrees());
                if (inf_norm(polished_f) < norm) out.theta = polished;
            } catch (const Error&) {
            }
            return out;
        }
        if (out.iterations >= options.max_inner) {
            throw NonExistenceError("degree equations did not converge within " + std::to_string(options.max_inner) +
                                        " Newton steps",
                                    out.trace);
        }
        ++out.iterations;

        const StructuredJacobian jac(mean_d1_matrix(pi, family));
        if (!jac.in_class()) {
            throw DegeneracyError("degree Jacobian left the diagonally dominant class");
        }
        const Eigen::VectorXd step = -SchurFactor(jac).solve(f);

        bool accepted = false;
        double t = 1.0;
        for (int h = 0; h <= options.max_halvings; ++h, t *= 0.5) {
            const Eigen::VectorXd trial = out.theta + t * step;
            Eigen::MatrixXd trial_pi;
            Eigen::VectorXd trial_f;
            try {
                trial_pi = predictor(trial);
                trial_f = degree_residual(mean_matrix(trial_pi, family), problem.degrees());
            } catch (const DomainError&) {
                continue;
            }
            const double trial_norm = inf_norm(trial_f);
            if (trial_norm < norm) {
                out.theta = trial;
                pi = std::move(trial_pi);
                f = std::move(trial_f);
                norm = trial_norm;
                accepted = true;
                break;
            }
        }
        out.trace.push_back(norm);
        if (!accepted) {
            throw NonExistenceError("degree residual failed to decrease after full step halving", out.trace);
        }
        if (inf_norm(out.theta) > options.theta_limit) {
            throw NonExistenceError("degree parameter diverged beyond |theta| = " +
                                        std::to_string(options.theta_limit),
                                    out.trace);
        }
    }
}

Eigen::VectorXd eval_Qc(const Eigen::VectorXd& gamma, const Problem& problem, const FitOptions& options) {
    const ThetaSolve inner = solve_theta_given_gamma(gamma, problem, options);
    return eval_Q(with_theta(problem.actors(), problem.events(), inner.theta, gamma), problem);
}

Eigen::MatrixXd eval_H(const ParameterSet& params, const Problem& problem) {
    const auto& z = problem.covariates();
    const Eigen::Index p = z.dim();
    const Eigen::MatrixXd w = mean_d1_matrix(linear_predictor(params, z), problem.family());
    const StructuredJacobian jac(w);
    const Eigen::MatrixXd a = q_theta_jacobian(w, z);

    Eigen::MatrixXd h(p, p);
    for (Eigen::Index k = 0; k < p; ++k) {
        const Eigen::MatrixXd zw = z.layer(k).cwiseProduct(w);
        for (Eigen::Index l = 0; l <= k; ++l) h(k, l) = h(l, k) = zw.cwiseProduct(z.layer(l)).sum();
    }
    if (p > 0) {
        h.noalias() -= a * SchurFactor(jac).solve(Eigen::MatrixXd(a.transpose()));
        const Eigen::MatrixXd sym = 0.5 * (h + h.transpose());
        Eigen::LLT<Eigen::MatrixXd> llt(sym);
        if (llt.info() != Eigen::Success || !(llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0)) {
            throw IllPosedError("H(theta, gamma) is not positive definite; gamma is not identified");
        }
    }
    return h;
}

ParameterSet initial_parameters(const Problem& problem, InitRule rule) {
    const Eigen::Index m = problem.actors();
    const Eigen::Index n = problem.events();
    ParameterSet params = ParameterSet::zeros(m, n, problem.covariate_dim());
    if (rule == InitRule::zero) return params;

    const auto& d = problem.degrees().actor;
    const double dn = static_cast<double>(n);
    for (Eigen::Index i = 0; i < m; ++i) {
        if (problem.family().support() == Support::binary) {
            constexpr double eps = 0.5;
            const double share = std::clamp(d(i), eps, dn - eps) / dn;
            params.alpha(i) = std::log(share / (1.0 - share));
        } else {
            params.alpha(i) = std::log((d(i) + 1.0) / dn);
        }
    }
    return params;
}

FitResult fit(const Problem& problem, const FitOptions& options) {
    options.validate();
    const Eigen::Index m = problem.actors();
    const Eigen::Index n = problem.events();
    const Eigen::Index p = problem.covariate_dim();

    FitResult result;
    ParameterSet start = initial_parameters(problem, options.init);
    Eigen::VectorXd gamma = start.gamma;

    ThetaSolve inner = solve_theta_given_gamma(gamma, problem, options, start.theta());
    result.inner_iterations += inner.iterations;
    result.inner_trace = inner.trace;
    ParameterSet current = with_theta(m, n, inner.theta, gamma);
    Eigen::VectorXd qc = eval_Q(current, problem);
    double norm = inf_norm(qc);
    result.outer_trace.push_back(norm);

    while (p > 0 && norm > options.tol_outer) {
        if (result.outer_iterations >= options.max_outer) {
            throw MaxIterationsError("profiled covariate equations did not converge within " +
                                     std::to_string(options.max_outer) + " outer steps");
        }
        ++result.outer_iterations;
        const Eigen::MatrixXd h = eval_H(current, problem);
        const Eigen::VectorXd direction = -h.ldlt().solve(qc);

        bool accepted = false;
        double t = 1.0;
        for (int k = 0; k <= options.max_halvings; ++k, t *= 0.5) {
            const Eigen::VectorXd trial_gamma = gamma + t * direction;
            ThetaSolve trial;
            try {
                trial = solve_theta_given_gamma(trial_gamma, problem, options, current.theta());
            } catch (const NonExistenceError&) {
                continue;
            } catch (const DomainError&) {
                continue;
            }
            result.inner_iterations += trial.iterations;
            const ParameterSet trial_params = with_theta(m, n, trial.theta, trial_gamma);
            const Eigen::VectorXd trial_qc = eval_Q(trial_params, problem);
            const double trial_norm = inf_norm(trial_qc);
            if (trial_norm < norm) {
                result.inner_trace.insert(result.inner_trace.end(), trial.trace.begin(), trial.trace.end());
                gamma = trial_gamma;
                current = trial_params;
                qc = trial_qc;
                norm = trial_norm;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            throw NonExistenceError("profiled covariate residual failed to decrease after full step halving",
                                    result.outer_trace);
        }
        result.outer_trace.push_back(norm);
    }

    const Eigen::MatrixXd w = mean_d1_matrix(linear_predictor(current, problem.covariates()), problem.family());
    const StructuredJacobian jac(w);
    result.params = current;
    result.residuals = {eval_F(current, problem), qc};
    result.converged = true;
    result.jacobian_summary = {std::min(jac.diag_alpha().minCoeff(), n > 1 ? jac.diag_beta().minCoeff() : 1e300),
                               std::max(jac.diag_alpha().maxCoeff(), n > 1 ? jac.diag_beta().maxCoeff() : 0.0),
                               w.minCoeff(), w.maxCoeff()};
    return result;
}

} // namespace bipnet
