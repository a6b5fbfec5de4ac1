#include "bipnet/inference.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <regex>
#include <sstream>

#include "bipnet/errors.hpp"

namespace bipnet {

namespace {

constexpr double kZ975 = 1.959963984540054;

Eigen::MatrixXd entrywise(const ParameterSet& params, const Problem& problem, double (ModelFamily::*fn)(double) const) {
    const auto& family = problem.family();
    return map_entries(linear_predictor(params, problem.covariates()), [&](double eta) { return (family.*fn)(eta); });
}

void require_converged(const FitResult& fit) {
    if (!fit.converged) throw ValidationError("inference needs a converged fit");
}

double sqrt_n(const Problem& problem) {
    return std::sqrt(static_cast<double>(problem.actors()) * static_cast<double>(problem.events()));
}

// Same sign structure as S, with u_kk / v_kk^2 on the diagonal and
// u_{m+n,m+n} / v_{m+n,m+n}^2 as the coupling term.
Eigen::MatrixXd s_type_sandwich(const StructuredJacobian& v, const StructuredJacobian& u) {
    const Eigen::Index d = v.dim();
    const Eigen::Index m = v.actors();
    const double coupling = u.corner() / (v.corner() * v.corner());
    Eigen::MatrixXd out(d, d);
    for (Eigen::Index j = 0; j < d; ++j) {
        for (Eigen::Index i = 0; i < d; ++i) out(i, j) = ((i < m) == (j < m)) ? coupling : -coupling;
        out(j, j) += u.diag(j) / (v.diag(j) * v.diag(j));
    }
    return out;
}

} // namespace

double SMatrixSummary::entry(Eigen::Index i, Eigen::Index j) const {
    const bool same_block = (i < actors) == (j < actors);
    return (i == j ? inv_diag(i) : 0.0) + (same_block ? inv_corner : -inv_corner);
}

Eigen::MatrixXd SMatrixSummary::apply(const Eigen::MatrixXd& x) const {
    const Eigen::Index m = actors;
    const Eigen::Index nb = inv_diag.size() - m;
    // (S x)_i = x_i / v_ii + c (sum_actor x - sum_event x) for actors, minus that for events.
    const Eigen::RowVectorXd signed_sum = x.topRows(m).colwise().sum() - x.bottomRows(nb).colwise().sum();
    Eigen::MatrixXd out = inv_diag.asDiagonal() * x;
    out.topRows(m).rowwise() += inv_corner * signed_sum;
    out.bottomRows(nb).rowwise() -= inv_corner * signed_sum;
    return out;
}

Eigen::VectorXd SMatrixSummary::apply(const Eigen::VectorXd& x) const { return apply(Eigen::MatrixXd(x)).col(0); }

Eigen::MatrixXd SMatrixSummary::materialize() const {
    const Eigen::Index d = inv_diag.size();
    Eigen::MatrixXd s(d, d);
    for (Eigen::Index j = 0; j < d; ++j) {
        for (Eigen::Index i = 0; i < d; ++i) s(i, j) = entry(i, j);
    }
    return s;
}

SMatrixSummary approx_inverse_S(const StructuredJacobian& jacobian) {
    SMatrixSummary s;
    s.actors = jacobian.actors();
    s.inv_diag.resize(jacobian.dim());
    for (Eigen::Index k = 0; k < jacobian.dim(); ++k) s.inv_diag(k) = 1.0 / jacobian.diag(k);
    s.inv_corner = 1.0 / jacobian.corner();
    return s;
}

Eigen::VectorXd exact_inverse_apply(const StructuredJacobian& jacobian, const Eigen::VectorXd& x) {
    return SchurFactor(jacobian).solve(x);
}

Eigen::VectorXd theta_standard_errors(const FitResult& fit, const Problem& problem) {
    require_converged(fit);
    const StructuredJacobian v(entrywise(fit.params, problem, &ModelFamily::mean_d1));
    const StructuredJacobian u(entrywise(fit.params, problem, &ModelFamily::variance));
    Eigen::VectorXd se(v.dim());
    const double tail = u.corner() / (v.corner() * v.corner());
    for (Eigen::Index k = 0; k < v.dim(); ++k) se(k) = std::sqrt(u.diag(k) / (v.diag(k) * v.diag(k)) + tail);
    return se;
}

Eigen::MatrixXd eval_H_approx(const ParameterSet& params, const Problem& problem) {
    const auto& z = problem.covariates();
    const Eigen::Index p = z.dim();
    const Eigen::MatrixXd w = entrywise(params, problem, &ModelFamily::mean_d1);
    const Eigen::VectorXd row_total = w.rowwise().sum();
    const Eigen::VectorXd col_total = w.colwise().sum().transpose();
    Eigen::MatrixXd h(p, p);
    for (Eigen::Index k = 0; k < p; ++k) {
        const Eigen::MatrixXd zk = z.layer(k).cwiseProduct(w);
        const Eigen::VectorXd rk = zk.rowwise().sum();
        const Eigen::VectorXd ck = zk.colwise().sum().transpose();
        for (Eigen::Index l = 0; l <= k; ++l) {
            const Eigen::MatrixXd zl = z.layer(l).cwiseProduct(w);
            const Eigen::VectorXd rl = zl.rowwise().sum();
            const Eigen::VectorXd cl = zl.colwise().sum().transpose();
            h(k, l) = h(l, k) = zk.cwiseProduct(z.layer(l)).sum() - rk.cwiseProduct(rl).cwiseQuotient(row_total).sum() -
                                ck.cwiseProduct(cl).cwiseQuotient(col_total).sum();
        }
    }
    return h;
}

std::vector<Eigen::MatrixXd> q_theta_curvature(const ParameterSet& params, const Problem& problem) {
    const auto& z = problem.covariates();
    const Eigen::Index m = problem.actors();
    const Eigen::Index n = problem.events();
    const Eigen::Index d = m + n - 1;
    const Eigen::MatrixXd w2 = entrywise(params, problem, &ModelFamily::mean_d2);
    std::vector<Eigen::MatrixXd> out;
    for (Eigen::Index l = 0; l < z.dim(); ++l) {
        Eigen::MatrixXd c = Eigen::MatrixXd::Zero(d, d);
        for (Eigen::Index j = 0; j < n; ++j) {
            for (Eigen::Index i = 0; i < m; ++i) {
                // mu''(pi_ij) z_ijl T_ij T_ij'
                const double v = z.layer(l)(i, j) * w2(i, j);
                c(i, i) += v;
                if (j < n - 1) {
                    c(m + j, m + j) += v;
                    c(i, m + j) += v;
                    c(m + j, i) += v;
                }
            }
        }
        out.push_back(std::move(c));
    }
    return out;
}

GammaInference gamma_covariance(const FitResult& fit, const Problem& problem, CovarianceMethod method,
                                InverseRoute route) {
    require_converged(fit);
    const auto& z = problem.covariates();
    const Eigen::Index p = z.dim();
    const Eigen::Index m = problem.actors();
    const Eigen::Index n = problem.events();
    if (p == 0) throw ValidationError("no covariates: gamma is empty");

    GammaInference out;
    out.method = method;
    out.h = eval_H(fit.params, problem);
    const Eigen::LDLT<Eigen::MatrixXd> h_factor(out.h);
    const Eigen::MatrixXd h_inv = h_factor.solve(Eigen::MatrixXd::Identity(p, p));

    if (method == CovarianceMethod::fisher) {
        out.covariance = h_inv;
    } else {
        const Eigen::MatrixXd w = entrywise(fit.params, problem, &ModelFamily::mean_d1);
        const Eigen::MatrixXd var = entrywise(fit.params, problem, &ModelFamily::variance);
        const StructuredJacobian v(w);
        const Eigen::MatrixXd a_t = q_theta_jacobian(w, z).transpose();
        // proj = V^{-1} (dQ/dtheta')', so dQ/dtheta' V^{-1} T_ij = proj.row(i) + proj.row(m + j).
        const Eigen::MatrixXd proj =
            route == InverseRoute::exact ? SchurFactor(v).solve(a_t) : approx_inverse_S(v).apply(a_t);
        Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(p, p);
        Eigen::VectorXd zt(p);
        for (Eigen::Index j = 0; j < n; ++j) {
            for (Eigen::Index i = 0; i < m; ++i) {
                for (Eigen::Index l = 0; l < p; ++l) zt(l) = z.layer(l)(i, j) - proj(i, l);
                if (j < n - 1) zt -= proj.row(m + j).transpose();
                sigma.noalias() += var(i, j) * zt * zt.transpose();
            }
        }
        out.covariance = h_inv * sigma * h_inv;
    }
    out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
    out.standard_errors = out.covariance.diagonal().cwiseSqrt();
    return out;
}

Eigen::VectorXd bias_B_star_expfam(const FitResult& fit, const Problem& problem) {
    require_converged(fit);
    if (!problem.family().exponential_family()) {
        throw ValidationError("closed-form bias requires an exponential family");
    }
    const auto& z = problem.covariates();
    const Eigen::MatrixXd w1 = entrywise(fit.params, problem, &ModelFamily::mean_d1);
    const Eigen::MatrixXd w2 = entrywise(fit.params, problem, &ModelFamily::mean_d2);
    const Eigen::VectorXd row_total = w1.rowwise().sum();
    const Eigen::VectorXd col_total = w1.colwise().sum().transpose();
    Eigen::VectorXd b(z.dim());
    for (Eigen::Index l = 0; l < z.dim(); ++l) {
        const Eigen::MatrixXd zw = z.layer(l).cwiseProduct(w2);
        b(l) = zw.rowwise().sum().cwiseQuotient(row_total).sum() +
               zw.colwise().sum().transpose().cwiseQuotient(col_total).sum();
    }
    return b / (2.0 * sqrt_n(problem));
}

Eigen::VectorXd bias_B_star_general(const FitResult& fit, const Problem& problem, InverseRoute route) {
    require_converged(fit);
    const StructuredJacobian v(entrywise(fit.params, problem, &ModelFamily::mean_d1));
    const StructuredJacobian u(entrywise(fit.params, problem, &ModelFamily::variance));

    Eigen::MatrixXd sandwich;
    if (route == InverseRoute::exact) {
        const SchurFactor factor(v);
        const Eigen::MatrixXd v_inv = factor.inverse();
        Eigen::MatrixXd u_v_inv(v.dim(), v.dim());
        for (Eigen::Index k = 0; k < v.dim(); ++k) u_v_inv.col(k) = u.multiply(v_inv.col(k));
        sandwich = v_inv * u_v_inv;
    } else {
        sandwich = s_type_sandwich(v, u);
    }

    const auto curvature = q_theta_curvature(fit.params, problem);
    Eigen::VectorXd b(static_cast<Eigen::Index>(curvature.size()));
    for (std::size_t l = 0; l < curvature.size(); ++l) {
        // sum_k e_k' C_l M e_k = trace(C_l M)
        b(static_cast<Eigen::Index>(l)) = (curvature[l] * sandwich).trace();
    }
    return b / (2.0 * sqrt_n(problem));
}

Eigen::VectorXd bias_correct_gamma(const FitResult& fit, const Eigen::VectorXd& b_star, const Eigen::MatrixXd& h_bar) {
    const double n_edges = static_cast<double>(fit.params.actors()) * static_cast<double>(fit.params.events());
    if (b_star.size() == 0) return fit.params.gamma;
    return fit.params.gamma + h_bar.ldlt().solve(b_star) / std::sqrt(n_edges);
}

InferenceSummary summarize(const FitResult& fit, const Problem& problem, CovarianceMethod method) {
    require_converged(fit);
    InferenceSummary s;
    s.params = fit.params;
    const StructuredJacobian v(entrywise(fit.params, problem, &ModelFamily::mean_d1));
    const StructuredJacobian u(entrywise(fit.params, problem, &ModelFamily::variance));
    s.v_diag.resize(v.dim());
    s.u_diag.resize(u.dim());
    for (Eigen::Index k = 0; k < v.dim(); ++k) {
        s.v_diag(k) = v.diag(k);
        s.u_diag(k) = u.diag(k);
    }
    s.v_corner = v.corner();
    s.u_corner = u.corner();
    if (problem.covariate_dim() > 0) {
        s.gamma = gamma_covariance(fit, problem, method);
        s.gamma.b_star = problem.family().exponential_family() ? bias_B_star_expfam(fit, problem)
                                                               : bias_B_star_general(fit, problem);
        const double n_edges = static_cast<double>(problem.actors()) * static_cast<double>(problem.events());
        s.gamma.gamma_bc = bias_correct_gamma(fit, s.gamma.b_star, s.gamma.h / n_edges);
    }
    return s;
}

std::string Contrast::describe() const {
    const auto name = [](ParamBlock b) {
        switch (b) {
            case ParamBlock::alpha: return "alpha";
            case ParamBlock::beta: return "beta";
            case ParamBlock::gamma: return "gamma";
        }
        return "?";
    };
    std::ostringstream out;
    out << name(block) << ':' << first + 1;
    if (second) out << '-' << name(second_block.value_or(block)) << ':' << *second + 1;
    out << '=' << null_value;
    return out.str();
}

Contrast parse_contrast(const std::string& text) {
    static const std::regex pattern(
        R"(^\s*(alpha|beta|gamma):(\d+)\s*(?:-\s*(alpha|beta|gamma):(\d+))?\s*(?:=\s*([-+0-9.eE]+))?\s*$)");
    std::smatch match;
    if (!std::regex_match(text, match, pattern)) {
        throw ConfigError("cannot parse contrast '" + text + "' (expected e.g. alpha:1-alpha:2 or gamma:1=0)");
    }
    const auto block = [](const std::string& s) {
        return s == "alpha" ? ParamBlock::alpha : s == "beta" ? ParamBlock::beta : ParamBlock::gamma;
    };
    const auto index = [&](const std::string& s) -> Eigen::Index {
        const long long k = std::stoll(s);
        if (k < 1) throw ConfigError("contrast indices are 1-based: '" + text + "'");
        return static_cast<Eigen::Index>(k - 1);
    };
    Contrast c;
    c.block = block(match[1]);
    c.first = index(match[2]);
    if (match[3].matched) {
        c.second_block = block(match[3]);
        c.second = index(match[4]);
    }
    if (match[5].matched) {
        try {
            c.null_value = std::stod(match[5]);
        } catch (const std::exception&) {
            throw ConfigError("bad null value in contrast '" + text + "'");
        }
    }
    return c;
}

double normal_two_sided_p(double statistic) { return std::erfc(std::abs(statistic) / std::sqrt(2.0)); }

WaldTest wald_test(const InferenceSummary& summary, const Contrast& contrast) {
    const Eigen::Index m = summary.params.actors();
    const Eigen::Index n = summary.params.events();
    const Eigen::Index p = summary.params.gamma.size();

    const auto theta_index = [&](ParamBlock block, Eigen::Index k) -> Eigen::Index {
        if (block == ParamBlock::alpha) {
            if (k >= m) throw ValidationError("alpha index " + std::to_string(k + 1) + " out of range");
            return k;
        }
        if (k >= n) throw ValidationError("beta index " + std::to_string(k + 1) + " out of range");
        if (k == n - 1) throw ValidationError("beta_n is pinned to zero and cannot be tested");
        return m + k;
    };
    const auto variance_term = [&](Eigen::Index t) {
        return summary.u_diag(t) / (summary.v_diag(t) * summary.v_diag(t));
    };
    const auto theta_value = [&](Eigen::Index t) {
        return t < m ? summary.params.alpha(t) : summary.params.beta(t - m);
    };

    WaldTest out;
    out.null_description = contrast.describe();
    out.null_value = contrast.null_value;
    if (contrast.block == ParamBlock::gamma) {
        if (contrast.second) throw ValidationError("unsupported contrast shape: differences of gamma coordinates");
        if (contrast.first >= p) throw ValidationError("gamma index " + std::to_string(contrast.first + 1) + " out of range");
        out.estimate = summary.params.gamma(contrast.first);
        out.standard_error = summary.gamma.standard_errors(contrast.first);
    } else if (!contrast.second) {
        const Eigen::Index t = theta_index(contrast.block, contrast.first);
        out.estimate = theta_value(t);
        out.standard_error =
            std::sqrt(variance_term(t) + summary.u_corner / (summary.v_corner * summary.v_corner));
    } else {
        if (contrast.second_block.value_or(contrast.block) != contrast.block) {
            throw ValidationError("unsupported contrast shape: mixed parameter blocks");
        }
        const Eigen::Index s = theta_index(contrast.block, contrast.first);
        const Eigen::Index t = theta_index(contrast.block, *contrast.second);
        out.estimate = theta_value(s) - theta_value(t);
        out.standard_error = s == t ? 0.0 : std::sqrt(variance_term(s) + variance_term(t));
    }
    const double diff = out.estimate - out.null_value;
    if (diff == 0.0) {
        out.statistic = 0.0;
    } else {
        out.statistic = diff / out.standard_error;
    }
    out.p_value = normal_two_sided_p(out.statistic);
    return out;
}

std::vector<InferenceRecord> parameter_records(const InferenceSummary& summary, const std::vector<std::string>& actor_labels,
                                               const std::vector<std::string>& event_labels) {
    std::vector<InferenceRecord> records;
    const auto add = [&](std::string name, double estimate, double se) {
        InferenceRecord r;
        r.name = std::move(name);
        r.estimate = estimate;
        r.standard_error = se;
        r.statistic = se > 0.0 ? estimate / se : 0.0;
        r.p_value = normal_two_sided_p(r.statistic);
        r.ci_low = estimate - kZ975 * se;
        r.ci_high = estimate + kZ975 * se;
        records.push_back(std::move(r));
    };
    const Eigen::Index m = summary.params.actors();
    const Eigen::Index n = summary.params.events();
    const double tail = summary.u_corner / (summary.v_corner * summary.v_corner);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double var = summary.u_diag(i) / (summary.v_diag(i) * summary.v_diag(i)) + tail;
        add("alpha:" + actor_labels.at(static_cast<std::size_t>(i)), summary.params.alpha(i), std::sqrt(var));
    }
    for (Eigen::Index j = 0; j + 1 < n; ++j) {
        const Eigen::Index t = m + j;
        const double var = summary.u_diag(t) / (summary.v_diag(t) * summary.v_diag(t)) + tail;
        add("beta:" + event_labels.at(static_cast<std::size_t>(j)), summary.params.beta(j), std::sqrt(var));
    }
    for (Eigen::Index l = 0; l < summary.params.gamma.size(); ++l) {
        add("gamma:" + std::to_string(l + 1), summary.params.gamma(l), summary.gamma.standard_errors(l));
    }
    for (Eigen::Index l = 0; l < summary.gamma.gamma_bc.size(); ++l) {
        add("gamma_bc:" + std::to_string(l + 1), summary.gamma.gamma_bc(l), summary.gamma.standard_errors(l));
    }
    return records;
}

InferenceRecord test_record(const WaldTest& test) {
    InferenceRecord r;
    r.name = test.null_description;
    r.estimate = test.estimate;
    r.standard_error = test.standard_error;
    r.statistic = test.statistic;
    r.p_value = test.p_value;
    r.ci_low = test.estimate - kZ975 * test.standard_error;
    r.ci_high = test.estimate + kZ975 * test.standard_error;
    return r;
}

void write_records(std::ostream& out, const std::vector<InferenceRecord>& records) {
    const auto flags = out.flags();
    const auto precision = out.precision();
    out << "name\testimate\tse\tstatistic\tp_value\tci_low\tci_high\n";
    out << std::setprecision(10);
    for (const auto& r : records) {
        out << r.name << '\t' << r.estimate << '\t' << r.standard_error << '\t' << r.statistic << '\t' << r.p_value
            << '\t' << r.ci_low << '\t' << r.ci_high << '\n';
    }
    out.flags(flags);
    out.precision(precision);
}

} // namespace bipnet
