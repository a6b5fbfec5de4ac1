#pragma once

#include <Eigen/Dense>

namespace bipnet {

/// Matrix of the form
///
///   [ diag(v_alpha)   W_cross      ]
///   [ W_cross'        diag(v_beta) ]
///
/// of size (m+n-1) x (m+n-1), built from an m x n matrix of positive edge
/// weights w_ij: v_alpha_i = sum_j w_ij, v_beta_j = sum_i w_ij (j < n) and
/// W_cross = w[:, 0:n-1]. With w = mu'(pi) this is dF/dtheta'; with w =
/// Var(x_ij) it is Cov(g).
class StructuredJacobian {
public:
    explicit StructuredJacobian(const Eigen::MatrixXd& weights);

    Eigen::Index actors() const noexcept { return diag_alpha_.size(); }
    Eigen::Index events() const noexcept { return diag_beta_.size() + 1; }
    Eigen::Index dim() const noexcept { return diag_alpha_.size() + diag_beta_.size(); }

    const Eigen::VectorXd& diag_alpha() const noexcept { return diag_alpha_; }
    const Eigen::VectorXd& diag_beta() const noexcept { return diag_beta_; }
    const Eigen::MatrixXd& cross() const noexcept { return cross_; }
    /// v_{i,i} for 0 <= k < m+n-1 (actors first).
    double diag(Eigen::Index k) const;
    /// v_{m+n,i}: weight of actor i on the dropped last event; zero for event rows.
    const Eigen::VectorXd& tail() const noexcept { return tail_; }
    /// v_{m+n,m+n} = sum_i v_{m+n,i}.
    double corner() const noexcept { return corner_; }
    double min_weight() const noexcept { return min_weight_; }
    double max_weight() const noexcept { return max_weight_; }

    Eigen::VectorXd multiply(const Eigen::VectorXd& x) const;
    Eigen::MatrixXd dense() const;

    /// Structural conditions of the diagonally dominant class: positive cross
    /// entries, diagonals equal to row sums over the full weight matrix, and
    /// v_{i,i} - sum_j v_{i,j} = v_{m+n,i} > 0 on actor rows.
    bool in_class(double tolerance = 1e-9) const;

private:
    Eigen::VectorXd diag_alpha_;
    Eigen::VectorXd diag_beta_;
    Eigen::MatrixXd cross_;
    Eigen::VectorXd tail_;
    double corner_ = 0.0;
    double min_weight_ = 0.0;
    double max_weight_ = 0.0;
};

/// Exact solver for StructuredJacobian systems. Eliminates the actor block and
/// Cholesky-factors the (n-1) x (n-1) complement diag(v_beta) - W' diag(v_alpha)^{-1} W.
class SchurFactor {
public:
    explicit SchurFactor(const StructuredJacobian& jacobian);

    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
    Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;
    Eigen::MatrixXd inverse() const;

private:
    Eigen::VectorXd inv_alpha_;
    Eigen::MatrixXd cross_;
    Eigen::LLT<Eigen::MatrixXd> complement_;
};

} // namespace bipnet
