#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "bipnet/model_family.hpp"
#include "bipnet/network_data.hpp"
#include "bipnet/structured_jacobian.hpp"

namespace bipnet {

/// (alpha, beta, gamma) with beta_n pinned to zero.
struct ParameterSet {
    Eigen::VectorXd alpha;
    Eigen::VectorXd beta;
    Eigen::VectorXd gamma;

    static ParameterSet zeros(Eigen::Index m, Eigen::Index n, Eigen::Index p);

    Eigen::Index actors() const noexcept { return alpha.size(); }
    Eigen::Index events() const noexcept { return beta.size(); }

    /// theta = (alpha_1..alpha_m, beta_1..beta_{n-1}).
    Eigen::VectorXd theta() const;
    void set_theta(const Eigen::VectorXd& theta);
};

/// Data the moment equations are written against. Holds references only.
class Problem {
public:
    Problem(const BipartiteGraph& graph, const CovariateTensor& covariates, const ModelFamily& family);

    const BipartiteGraph& graph() const noexcept { return graph_; }
    const CovariateTensor& covariates() const noexcept { return covariates_; }
    const ModelFamily& family() const noexcept { return family_; }
    const DegreeVector& degrees() const noexcept { return degrees_; }
    Eigen::Index actors() const noexcept { return graph_.actors(); }
    Eigen::Index events() const noexcept { return graph_.events(); }
    Eigen::Index covariate_dim() const noexcept { return covariates_.dim(); }
    Eigen::Index theta_dim() const noexcept { return actors() + events() - 1; }

private:
    const BipartiteGraph& graph_;
    const CovariateTensor& covariates_;
    const ModelFamily& family_;
    DegreeVector degrees_;
};

enum class InitRule { zero, degree_moments };

struct FitOptions {
    double tol_inner = 1e-8;
    double tol_outer = 1e-8;
    int max_inner = 100;
    int max_outer = 50;
    int max_halvings = 30;
    double theta_limit = 40.0;
    InitRule init = InitRule::zero;

    void validate() const;
};

struct MomentResiduals {
    Eigen::VectorXd degree;     // F, length m+n-1
    Eigen::VectorXd covariate;  // Q, length p
};

struct JacobianSummary {
    double min_diag = 0.0;
    double max_diag = 0.0;
    double min_mean_d1 = 0.0;
    double max_mean_d1 = 0.0;
};

struct FitResult {
    ParameterSet params;
    MomentResiduals residuals;
    bool converged = false;
    int outer_iterations = 0;
    int inner_iterations = 0;
    std::vector<double> inner_trace;  // ||F||_inf at every inner iterate, all solves
    std::vector<double> outer_trace;  // ||Q_c||_inf at every accepted outer iterate
    JacobianSummary jacobian_summary;
};

struct ThetaSolve {
    Eigen::VectorXd theta;
    std::vector<double> trace;
    int iterations = 0;
};

/// pi_ij = alpha_i + beta_j + z_ij' gamma.
Eigen::MatrixXd linear_predictor(const ParameterSet& params, const CovariateTensor& covariates);

/// Applies `f` entrywise.
template <class Fn>
Eigen::MatrixXd map_entries(const Eigen::MatrixXd& pi, Fn&& f) {
    Eigen::MatrixXd out(pi.rows(), pi.cols());
    for (Eigen::Index j = 0; j < pi.cols(); ++j) {
        for (Eigen::Index i = 0; i < pi.rows(); ++i) out(i, j) = f(pi(i, j));
    }
    return out;
}

/// Degree residuals: F_i = sum_k mu(pi_ik) - d_i for actors, then
/// F_{m+j} = sum_k mu(pi_kj) - b_j for events j < n.
Eigen::VectorXd eval_F(const ParameterSet& params, const Problem& problem);

/// Q = sum_ij z_ij (mu(pi_ij) - x_ij).
Eigen::VectorXd eval_Q(const ParameterSet& params, const Problem& problem);

/// dF/dtheta' at params.
StructuredJacobian build_jacobian(const ParameterSet& params, const CovariateTensor& covariates,
                                  const ModelFamily& family);

Eigen::VectorXd solve_structured(const StructuredJacobian& jacobian, const Eigen::VectorXd& rhs);

/// dQ/dtheta' (p x (m+n-1)) built from the matrix of mu'(pi_ij). Its transpose is dF/dgamma'.
Eigen::MatrixXd q_theta_jacobian(const Eigen::MatrixXd& mean_d1, const CovariateTensor& covariates);

/// Newton on F_gamma(theta) = 0 with step halving. Throws NonExistenceError when
/// the residual stalls, an iterate leaves |theta| <= theta_limit, or the
/// iteration cap is hit.
ThetaSolve solve_theta_given_gamma(const Eigen::VectorXd& gamma, const Problem& problem, const FitOptions& options,
                                   const std::optional<Eigen::VectorXd>& start = std::nullopt);

/// Profiled covariate residual Q(theta_hat(gamma), gamma).
Eigen::VectorXd eval_Qc(const Eigen::VectorXd& gamma, const Problem& problem, const FitOptions& options);

/// H = dQ/dgamma' - dQ/dtheta' [dF/dtheta']^{-1} dF/dgamma', the Jacobian of Q_c.
/// Throws IllPosedError unless H is positive definite (p >= 1).
Eigen::MatrixXd eval_H(const ParameterSet& params, const Problem& problem);

/// Solves F = 0 and Q_c = 0: outer Newton on gamma along -H^{-1} Q_c with step
/// halving, inner solve warm-started from the previous theta.
FitResult fit(const Problem& problem, const FitOptions& options = {});

/// Starting point under `rule`.
ParameterSet initial_parameters(const Problem& problem, InitRule rule);

} // namespace bipnet
