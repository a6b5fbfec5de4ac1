#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bipnet/moment_fitter.hpp"
#include "bipnet/rng.hpp"

namespace bipnet {

struct Scenario {
    Eigen::Index m = 100;
    Eigen::Index n = 100;
    double L = 0.0;
    Eigen::VectorXd gamma_star = Eigen::Vector2d(0.5, 1.0);
    std::string family = "logistic";
    std::string scheme = "signed-2d";  // or "none" for p = 0
    int replications = 500;
    std::uint64_t seed = 20240601;
    FitOptions fit;

    void validate() const;
};

/// The four density regimes L = c log m, c in {-0.2, 0, 0.2, 0.4}.
std::vector<double> density_regimes(Eigen::Index m);

/// JSON object with keys m, n, L | L_log_m, gamma_star, family, scheme,
/// replications, seed.
Scenario parse_scenario(const std::string& json_text);
Scenario load_scenario(const std::filesystem::path& path);

/// alpha*_i = (m-i) L / (m-1), beta*_j = (n-j) L / (n-1) (1-based i, j).
ParameterSet generate_truth(Eigen::Index m, Eigen::Index n, double L, const Eigen::VectorXd& gamma_star);

/// "signed-2d": z_ij = (u_i1 w_j1, u_i2 w_j2) with independent signs,
/// P(u_i1 = 1) = 0.3, P(w_j1 = 1) = 0.6, u_i2 and w_j2 fair. "none": p = 0.
CovariateTensor generate_covariates(Eigen::Index m, Eigen::Index n, const std::string& scheme, RngStream& rng);

/// Independent draws x_ij ~ f(. | pi*_ij).
BipartiteGraph simulate_network(const ParameterSet& truth, const CovariateTensor& covariates, const ModelFamily& family,
                                RngStream& rng);

struct ReplicationRecord {
    std::size_t index = 0;
    bool converged = false;
    std::string failure;
    std::vector<double> abs_errors;  // per tracked parameter
    std::vector<bool> covered;       // per tracked interval
    std::vector<double> lengths;     // per tracked interval
    std::vector<double> normalized;  // per QQ statistic
};

struct ScenarioSummary {
    std::vector<std::string> tracked;
    std::vector<double> mae;
    std::vector<std::string> intervals;
    std::vector<double> coverage;  // percent
    std::vector<double> mean_length;
    std::vector<std::string> qq_names;
    std::vector<std::vector<double>> qq_samples;
    std::size_t replications = 0;
    std::size_t failures = 0;
    double nonconvergence_rate = 0.0;

    double mae_of(const std::string& name) const;
    double coverage_of(const std::string& name) const;
    double length_of(const std::string& name) const;
    const std::vector<double>& qq_of(const std::string& name) const;
};

/// Names of the tracked quantities for an m x n scenario with p covariates.
std::vector<std::string> tracked_parameter_names(Eigen::Index p);
std::vector<std::string> tracked_interval_names(Eigen::Index p);
std::vector<std::string> qq_statistic_names();

ReplicationRecord run_replication(const Scenario& scenario, std::size_t index);

/// Replications run on `threads` workers; the result depends only on the
/// scenario and its seed.
ScenarioSummary run_scenario(const Scenario& scenario, unsigned threads = 1);

ScenarioSummary aggregate(const Scenario& scenario, const std::vector<ReplicationRecord>& records);

void write_summary(std::ostream& out, const ScenarioSummary& summary);

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// One-sample Kolmogorov-Smirnov test against N(0, 1) with the asymptotic
/// Kolmogorov p-value. Needs at least 30 samples.
KsResult ks_normality(std::vector<double> samples);

} // namespace bipnet
