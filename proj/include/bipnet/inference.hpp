#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bipnet/moment_fitter.hpp"

namespace bipnet {

/// Closed-form approximation S to V^{-1}:
///   s_ij = delta_ij / v_ii + 1/v_{m+n,m+n}   within the actor block and within the event block,
///   s_ij = -1/v_{m+n,m+n}                     between blocks.
struct SMatrixSummary {
    Eigen::Index actors = 0;
    Eigen::VectorXd inv_diag;  // 1 / v_ii, length m+n-1
    double inv_corner = 0.0;   // 1 / v_{m+n,m+n}

    double entry(Eigen::Index i, Eigen::Index j) const;
    Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
    Eigen::MatrixXd materialize() const;
};

SMatrixSummary approx_inverse_S(const StructuredJacobian& jacobian);

/// V^{-1} x through the same Schur factorization the fitter uses.
Eigen::VectorXd exact_inverse_apply(const StructuredJacobian& jacobian, const Eigen::VectorXd& x);

enum class CovarianceMethod { fisher, sandwich };
enum class InverseRoute { exact, approx_s };

/// Standard error of each theta entry (alpha_1..alpha_m, beta_1..beta_{n-1}):
/// sqrt(u_ii / v_ii^2 + u_{m+n,m+n} / v_{m+n,m+n}^2), which is
/// sqrt(1/v_ii + 1/v_{m+n,m+n}) when u = v.
Eigen::VectorXd theta_standard_errors(const FitResult& fit, const Problem& problem);

/// The p = dim(z) closed form of H with V^{-1} replaced by S.
Eigen::MatrixXd eval_H_approx(const ParameterSet& params, const Problem& problem);

/// d^2 Q_l / dtheta dtheta' for each covariate l, as dense (m+n-1)^2 matrices.
std::vector<Eigen::MatrixXd> q_theta_curvature(const ParameterSet& params, const Problem& problem);

struct GammaInference {
    CovarianceMethod method = CovarianceMethod::fisher;
    Eigen::MatrixXd h;           // H(theta_hat, gamma_hat)
    Eigen::MatrixXd covariance;  // of gamma_hat
    Eigen::VectorXd standard_errors;
    Eigen::VectorXd b_star;
    Eigen::VectorXd gamma_bc;
};

/// fisher: H^{-1}. sandwich: H^{-1} Sigma H^{-1} with
/// Sigma = sum_ij Var(x_ij) ztilde_ij ztilde_ij', ztilde_ij = z_ij - dQ/dtheta' V^{-1} T_ij.
/// Fills h, covariance and standard_errors only.
GammaInference gamma_covariance(const FitResult& fit, const Problem& problem, CovarianceMethod method,
                                InverseRoute route = InverseRoute::exact);

/// Plug-in B* for exponential families:
/// (1 / 2 sqrt(N)) [ sum_i (sum_j z_ij mu''_ij) / (sum_j mu'_ij) + sum_j (sum_i z_ij mu''_ij) / (sum_i mu'_ij) ]
/// with the event sum running over all n events.
Eigen::VectorXd bias_B_star_expfam(const FitResult& fit, const Problem& problem);

/// (1 / 2 sqrt(N)) sum_k [d^2 Q / dtheta_k dtheta'] M e_k with M = V^{-1} U V^{-1},
/// U = Cov(g) from the family's variance. approx_s uses the S-type surrogate
/// M_kl = delta_kl u_kk / v_kk^2 +/- u_{m+n,m+n} / v_{m+n,m+n}^2.
Eigen::VectorXd bias_B_star_general(const FitResult& fit, const Problem& problem,
                                    InverseRoute route = InverseRoute::exact);

/// gamma_hat + H_bar^{-1} B* / sqrt(N), H_bar = H / N.
Eigen::VectorXd bias_correct_gamma(const FitResult& fit, const Eigen::VectorXd& b_star, const Eigen::MatrixXd& h_bar);

/// Everything a Wald test needs, detached from the data so it can be
/// serialized with a fit report and re-read later.
struct InferenceSummary {
    ParameterSet params;
    Eigen::VectorXd v_diag;  // v_ii, length m+n-1
    double v_corner = 0.0;
    Eigen::VectorXd u_diag;  // Var(g_i)
    double u_corner = 0.0;
    GammaInference gamma;
};

InferenceSummary summarize(const FitResult& fit, const Problem& problem,
                           CovarianceMethod method = CovarianceMethod::fisher);

enum class ParamBlock { alpha, beta, gamma };

/// A single coordinate, or a difference of two coordinates in the same
/// alpha/beta block. Indices are zero-based.
struct Contrast {
    ParamBlock block = ParamBlock::alpha;
    Eigen::Index first = 0;
    std::optional<Eigen::Index> second;
    std::optional<ParamBlock> second_block;
    double null_value = 0.0;

    std::string describe() const;
};

/// Parses "alpha:1", "alpha:1-alpha:2", "beta:3-beta:4=0.5", "gamma:1=0" (1-based).
Contrast parse_contrast(const std::string& text);

struct WaldTest {
    std::string null_description;
    double estimate = 0.0;
    double null_value = 0.0;
    double standard_error = 0.0;
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Statistic (estimate - null) / SE with a two-sided normal p-value. Differences
/// of degree parameters use sqrt(1/v_ii + 1/v_jj) (variance-weighted for
/// non-exponential families). Throws ValidationError on unsupported shapes.
WaldTest wald_test(const InferenceSummary& summary, const Contrast& contrast);

double normal_two_sided_p(double statistic);

/// One line per parameter or test.
struct InferenceRecord {
    std::string name;
    double estimate = 0.0;
    double standard_error = 0.0;
    double statistic = 0.0;
    double p_value = 1.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

std::vector<InferenceRecord> parameter_records(const InferenceSummary& summary, const std::vector<std::string>& actor_labels,
                                               const std::vector<std::string>& event_labels);
InferenceRecord test_record(const WaldTest& test);
void write_records(std::ostream& out, const std::vector<InferenceRecord>& records);

} // namespace bipnet
