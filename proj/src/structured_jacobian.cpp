#include "bipnet/structured_jacobian.hpp"

#include <cmath>

#include "bipnet/errors.hpp"

namespace bipnet {

StructuredJacobian::StructuredJacobian(const Eigen::MatrixXd& weights) {
    const Eigen::Index m = weights.rows();
    const Eigen::Index n = weights.cols();
    if (m < 1 || n < 1) throw ValidationError("jacobian needs a nonempty weight matrix");
    if (!weights.allFinite()) throw DegeneracyError("non-finite mean derivative");
    min_weight_ = weights.minCoeff();
    max_weight_ = weights.maxCoeff();
    if (!(min_weight_ > 0.0)) {
        throw DegeneracyError("mean derivative is not strictly positive (min " + std::to_string(min_weight_) + ")");
    }
    diag_alpha_ = weights.rowwise().sum();
    diag_beta_ = weights.leftCols(n - 1).colwise().sum().transpose();
    cross_ = weights.leftCols(n - 1);
    tail_ = weights.col(n - 1);
    corner_ = tail_.sum();
}

double StructuredJacobian::diag(Eigen::Index k) const {
    return k < actors() ? diag_alpha_(k) : diag_beta_(k - actors());
}

Eigen::VectorXd StructuredJacobian::multiply(const Eigen::VectorXd& x) const {
    const Eigen::Index m = actors();
    const Eigen::Index nb = diag_beta_.size();
    Eigen::VectorXd out(dim());
    out.head(m) = diag_alpha_.cwiseProduct(x.head(m)) + cross_ * x.tail(nb);
    out.tail(nb) = diag_beta_.cwiseProduct(x.tail(nb)) + cross_.transpose() * x.head(m);
    return out;
}

Eigen::MatrixXd StructuredJacobian::dense() const {
    const Eigen::Index m = actors();
    const Eigen::Index nb = diag_beta_.size();
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(dim(), dim());
    v.topLeftCorner(m, m).diagonal() = diag_alpha_;
    v.bottomRightCorner(nb, nb).diagonal() = diag_beta_;
    v.topRightCorner(m, nb) = cross_;
    v.bottomLeftCorner(nb, m) = cross_.transpose();
    return v;
}

bool StructuredJacobian::in_class(double tolerance) const {
    if (cross_.size() > 0 && !(cross_.minCoeff() > 0.0)) return false;
    for (Eigen::Index i = 0; i < actors(); ++i) {
        const double slack = diag_alpha_(i) - cross_.row(i).sum();
        if (!(slack > 0.0)) return false;
        if (std::abs(slack - tail_(i)) > tolerance * std::max(1.0, diag_alpha_(i))) return false;
    }
    for (Eigen::Index j = 0; j < diag_beta_.size(); ++j) {
        if (std::abs(diag_beta_(j) - cross_.col(j).sum()) > tolerance * std::max(1.0, diag_beta_(j))) return false;
    }
    return corner_ > 0.0;
}

SchurFactor::SchurFactor(const StructuredJacobian& jacobian)
    : inv_alpha_(jacobian.diag_alpha().cwiseInverse()), cross_(jacobian.cross()) {
    const Eigen::Index nb = jacobian.diag_beta().size();
    if (!inv_alpha_.allFinite()) throw SingularJacobianError("zero actor diagonal");
    Eigen::MatrixXd complement = jacobian.diag_beta().asDiagonal();
    if (nb > 0) {
        const Eigen::MatrixXd scaled = inv_alpha_.cwiseSqrt().asDiagonal() * cross_;
        complement.noalias() -= scaled.transpose() * scaled;
    }
    complement_.compute(complement);
    if (complement_.info() != Eigen::Success) {
        throw SingularJacobianError("Schur complement is not positive definite");
    }
}

Eigen::MatrixXd SchurFactor::solve(const Eigen::MatrixXd& rhs) const {
    const Eigen::Index m = inv_alpha_.size();
    const Eigen::Index nb = cross_.cols();
    if (rhs.rows() != m + nb) throw ValidationError("right-hand side has wrong dimension");
    Eigen::MatrixXd out(rhs.rows(), rhs.cols());
    const Eigen::MatrixXd scaled_top = inv_alpha_.asDiagonal() * rhs.topRows(m);
    if (nb > 0) {
        const Eigen::MatrixXd y = complement_.solve(rhs.bottomRows(nb) - cross_.transpose() * scaled_top);
        out.bottomRows(nb) = y;
        out.topRows(m) = scaled_top - inv_alpha_.asDiagonal() * (cross_ * y);
    } else {
        out.topRows(m) = scaled_top;
    }
    return out;
}

Eigen::VectorXd SchurFactor::solve(const Eigen::VectorXd& rhs) const {
    return solve(Eigen::MatrixXd(rhs)).col(0);
}

Eigen::MatrixXd SchurFactor::inverse() const {
    const Eigen::Index d = inv_alpha_.size() + cross_.cols();
    return solve(Eigen::MatrixXd(Eigen::MatrixXd::Identity(d, d)));
}

} // namespace bipnet
