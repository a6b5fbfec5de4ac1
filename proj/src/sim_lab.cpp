#include "bipnet/sim_lab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "bipnet/errors.hpp"
#include "bipnet/inference.hpp"

namespace bipnet {

namespace {

constexpr double kZ975 = 1.959963984540054;

std::size_t find_name(const std::vector<std::string>& names, const std::string& name) {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw ValidationError("no tracked quantity named '" + name + "'");
    return static_cast<std::size_t>(it - names.begin());
}

// 1-based tracked indices mapped to 0-based positions.
struct Tracked {
    std::vector<Eigen::Index> alpha;
    std::vector<Eigen::Index> beta;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
};

Tracked tracked_indices(Eigen::Index m, Eigen::Index n) {
    return {{0, m / 2 - 1, m - 1}, {0, n / 2 - 1, n - 2}, {{0, 1}, {m / 2 - 1, m / 2}, {m - 2, m - 1}}};
}

double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// P(K > lambda) for the Kolmogorov distribution.
double kolmogorov_survival(double lambda) {
    if (lambda <= 0.0) return 1.0;
    if (lambda < 1.18) {
        const double pi = std::numbers::pi;
        double cdf = 0.0;
        for (int k = 1; k <= 50; ++k) {
            const double odd = 2.0 * k - 1.0;
            cdf += std::exp(-odd * odd * pi * pi / (8.0 * lambda * lambda));
        }
        cdf *= std::sqrt(2.0 * pi) / lambda;
        return std::clamp(1.0 - cdf, 0.0, 1.0);
    }
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 == 1 ? term : -term);
        if (term < 1e-300) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

} // namespace

void Scenario::validate() const {
    if (m < 2 || n < 2) throw ConfigError("scenario needs m, n >= 2");
    if (replications < 1) throw ConfigError("replications must be at least 1");
    if (!std::isfinite(L)) throw ConfigError("L must be finite");
    if (scheme != "signed-2d" && scheme != "none") throw ConfigError("unknown covariate scheme '" + scheme + "'");
    if (scheme == "signed-2d" && gamma_star.size() != 2) throw ConfigError("signed-2d scheme needs a 2-vector gamma_star");
    if (scheme == "none" && gamma_star.size() != 0) throw ConfigError("scheme 'none' needs an empty gamma_star");
    make_family(family);
    fit.validate();
}

std::vector<double> density_regimes(Eigen::Index m) {
    const double lm = std::log(static_cast<double>(m));
    return {-0.2 * lm, 0.0, 0.2 * lm, 0.4 * lm};
}

Scenario parse_scenario(const std::string& json_text) {
    using nlohmann::json;
    Scenario s;
    try {
        const json doc = json::parse(json_text);
        static const std::set<std::string> known{"m",    "n",          "L",    "L_log_m",   "family",   "scheme",
                                                 "gamma_star", "replications", "seed", "tol", "max_inner", "max_outer"};
        if (!doc.is_object()) throw ConfigError("scenario must be a JSON object");
        for (const auto& [key, value] : doc.items()) {
            if (!known.count(key)) throw ConfigError("unknown scenario key '" + key + "'");
        }
        s.m = doc.value("m", s.m);
        s.n = doc.value("n", s.n);
        if (doc.contains("L") && doc.contains("L_log_m")) throw ConfigError("give either L or L_log_m, not both");
        if (doc.contains("L")) s.L = doc["L"].get<double>();
        if (doc.contains("L_log_m")) s.L = doc["L_log_m"].get<double>() * std::log(static_cast<double>(s.m));
        s.family = doc.value("family", s.family);
        s.scheme = doc.value("scheme", s.scheme);
        if (doc.contains("gamma_star")) {
            const auto g = doc["gamma_star"].get<std::vector<double>>();
            s.gamma_star = Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
        } else if (s.scheme == "none") {
            s.gamma_star.resize(0);
        }
        s.replications = doc.value("replications", s.replications);
        s.seed = doc.value("seed", s.seed);
        s.fit.tol_inner = doc.value("tol", s.fit.tol_inner);
        s.fit.tol_outer = doc.value("tol", s.fit.tol_outer);
        s.fit.max_inner = doc.value("max_inner", s.fit.max_inner);
        s.fit.max_outer = doc.value("max_outer", s.fit.max_outer);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed scenario: ") + e.what());
    }
    s.validate();
    return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_scenario(buffer.str());
}

ParameterSet generate_truth(Eigen::Index m, Eigen::Index n, double L, const Eigen::VectorXd& gamma_star) {
    if (m < 2 || n < 2) throw ValidationError("truth needs m, n >= 2");
    ParameterSet truth = ParameterSet::zeros(m, n, gamma_star.size());
    for (Eigen::Index i = 0; i < m; ++i) truth.alpha(i) = static_cast<double>(m - 1 - i) * L / static_cast<double>(m - 1);
    for (Eigen::Index j = 0; j < n; ++j) truth.beta(j) = static_cast<double>(n - 1 - j) * L / static_cast<double>(n - 1);
    truth.gamma = gamma_star;
    return truth;
}

CovariateTensor generate_covariates(Eigen::Index m, Eigen::Index n, const std::string& scheme, RngStream& rng) {
    if (scheme == "none") return CovariateTensor::none(m, n);
    if (scheme != "signed-2d") throw ConfigError("unknown covariate scheme '" + scheme + "'");

    const auto signs = [&](Eigen::Index count, double p_plus) {
        std::bernoulli_distribution draw(p_plus);
        Eigen::VectorXd s(count);
        for (Eigen::Index k = 0; k < count; ++k) s(k) = draw(rng) ? 1.0 : -1.0;
        return s;
    };
    const Eigen::VectorXd actor1 = signs(m, 0.3);
    const Eigen::VectorXd event1 = signs(n, 0.6);
    const Eigen::VectorXd actor2 = signs(m, 0.5);
    const Eigen::VectorXd event2 = signs(n, 0.5);
    std::vector<Eigen::MatrixXd> layers{actor1 * event1.transpose(), actor2 * event2.transpose()};
    return CovariateTensor(m, n, std::move(layers), 1.0);
}

BipartiteGraph simulate_network(const ParameterSet& truth, const CovariateTensor& covariates, const ModelFamily& family,
                                RngStream& rng) {
    const Eigen::MatrixXd pi = linear_predictor(truth, covariates);
    Eigen::MatrixXd x(pi.rows(), pi.cols());
    for (Eigen::Index i = 0; i < pi.rows(); ++i) {
        for (Eigen::Index j = 0; j < pi.cols(); ++j) x(i, j) = family.sample(pi(i, j), rng);
    }
    return BipartiteGraph(std::move(x), family.support() == Support::binary ? WeightKind::binary : WeightKind::count);
}

std::vector<std::string> tracked_parameter_names(Eigen::Index p) {
    std::vector<std::string> names{"alpha_1", "alpha_m/2", "alpha_m", "beta_1", "beta_n/2", "beta_n-1"};
    for (Eigen::Index l = 0; l < p; ++l) names.push_back("gamma_" + std::to_string(l + 1));
    return names;
}

std::vector<std::string> tracked_interval_names(Eigen::Index p) {
    std::vector<std::string> names{"alpha_1-alpha_2", "alpha_m/2-alpha_m/2+1", "alpha_m-1-alpha_m"};
    for (Eigen::Index l = 0; l < p; ++l) {
        names.push_back("gamma_" + std::to_string(l + 1));
        names.push_back("gamma_bc_" + std::to_string(l + 1));
    }
    return names;
}

std::vector<std::string> qq_statistic_names() {
    return {"zeta_alpha_1", "zeta_alpha_m/2", "zeta_alpha_m", "xi_alpha_1-alpha_2"};
}

ReplicationRecord run_replication(const Scenario& scenario, std::size_t index) {
    ReplicationRecord rec;
    rec.index = index;
    const auto family = make_family(scenario.family);
    RngStream rng = make_stream(scenario.seed, index);
    const Eigen::Index m = scenario.m;
    const Eigen::Index n = scenario.n;
    const ParameterSet truth = generate_truth(m, n, scenario.L, scenario.gamma_star);
    const CovariateTensor z = generate_covariates(m, n, scenario.scheme, rng);
    const BipartiteGraph graph = simulate_network(truth, z, *family, rng);
    const Problem problem(graph, z, *family);

    try {
        const FitResult result = fit(problem, scenario.fit);
        const InferenceSummary s = summarize(result, problem);
        const auto& est = result.params;
        const Tracked tr = tracked_indices(m, n);

        for (const auto i : tr.alpha) rec.abs_errors.push_back(std::abs(est.alpha(i) - truth.alpha(i)));
        for (const auto j : tr.beta) rec.abs_errors.push_back(std::abs(est.beta(j) - truth.beta(j)));
        for (Eigen::Index l = 0; l < est.gamma.size(); ++l) {
            rec.abs_errors.push_back(std::abs(est.gamma(l) - truth.gamma(l)));
        }

        const auto var_term = [&](Eigen::Index t) { return s.u_diag(t) / (s.v_diag(t) * s.v_diag(t)); };
        for (const auto& [i, j] : tr.pairs) {
            const double se = std::sqrt(var_term(i) + var_term(j));
            const double err = (est.alpha(i) - est.alpha(j)) - (truth.alpha(i) - truth.alpha(j));
            rec.covered.push_back(std::abs(err) <= kZ975 * se);
            rec.lengths.push_back(2.0 * kZ975 * se);
        }
        for (Eigen::Index l = 0; l < est.gamma.size(); ++l) {
            const double se = s.gamma.standard_errors(l);
            rec.covered.push_back(std::abs(est.gamma(l) - truth.gamma(l)) <= kZ975 * se);
            rec.lengths.push_back(2.0 * kZ975 * se);
            rec.covered.push_back(std::abs(s.gamma.gamma_bc(l) - truth.gamma(l)) <= kZ975 * se);
            rec.lengths.push_back(2.0 * kZ975 * se);
        }

        const double tail = s.u_corner / (s.v_corner * s.v_corner);
        for (const auto i : tr.alpha) {
            rec.normalized.push_back((est.alpha(i) - truth.alpha(i)) / std::sqrt(var_term(i) + tail));
        }
        {
            const auto [i, j] = tr.pairs.front();
            const double err = (est.alpha(i) - est.alpha(j)) - (truth.alpha(i) - truth.alpha(j));
            rec.normalized.push_back(err / std::sqrt(var_term(i) + var_term(j)));
        }
        rec.converged = true;
    } catch (const Error& e) {
        rec.converged = false;
        rec.failure = e.what();
    }
    return rec;
}

ScenarioSummary aggregate(const Scenario& scenario, const std::vector<ReplicationRecord>& records) {
    const Eigen::Index p = scenario.gamma_star.size();
    ScenarioSummary out;
    out.tracked = tracked_parameter_names(p);
    out.intervals = tracked_interval_names(p);
    out.qq_names = qq_statistic_names();
    out.mae.assign(out.tracked.size(), 0.0);
    out.coverage.assign(out.intervals.size(), 0.0);
    out.mean_length.assign(out.intervals.size(), 0.0);
    out.qq_samples.assign(out.qq_names.size(), {});
    out.replications = records.size();

    std::size_t used = 0;
    for (const auto& rec : records) {
        if (!rec.converged) {
            ++out.failures;
            continue;
        }
        ++used;
        for (std::size_t k = 0; k < out.mae.size(); ++k) out.mae[k] += rec.abs_errors[k];
        for (std::size_t k = 0; k < out.coverage.size(); ++k) {
            out.coverage[k] += rec.covered[k] ? 1.0 : 0.0;
            out.mean_length[k] += rec.lengths[k];
        }
        for (std::size_t k = 0; k < out.qq_samples.size(); ++k) out.qq_samples[k].push_back(rec.normalized[k]);
    }
    const double denom = used ? static_cast<double>(used) : std::numeric_limits<double>::quiet_NaN();
    for (auto& v : out.mae) v /= denom;
    for (auto& v : out.coverage) v = 100.0 * v / denom;
    for (auto& v : out.mean_length) v /= denom;
    out.nonconvergence_rate =
        records.empty() ? 0.0 : static_cast<double>(out.failures) / static_cast<double>(records.size());
    return out;
}

ScenarioSummary run_scenario(const Scenario& scenario, unsigned threads) {
    scenario.validate();
    const auto total = static_cast<std::size_t>(scenario.replications);
    std::vector<ReplicationRecord> records(total);
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(total)));
    if (threads == 1) {
        for (std::size_t r = 0; r < total; ++r) records[r] = run_replication(scenario, r);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        for (unsigned t = 0; t < threads; ++t) {
            workers.emplace_back([&] {
                for (std::size_t r = next++; r < total; r = next++) records[r] = run_replication(scenario, r);
            });
        }
        for (auto& w : workers) w.join();
    }
    return aggregate(scenario, records);
}

double ScenarioSummary::mae_of(const std::string& name) const { return mae[find_name(tracked, name)]; }
double ScenarioSummary::coverage_of(const std::string& name) const { return coverage[find_name(intervals, name)]; }
double ScenarioSummary::length_of(const std::string& name) const { return mean_length[find_name(intervals, name)]; }
const std::vector<double>& ScenarioSummary::qq_of(const std::string& name) const {
    return qq_samples[find_name(qq_names, name)];
}

void write_summary(std::ostream& out, const ScenarioSummary& summary) {
    const auto precision = out.precision();
    out << std::setprecision(10);
    out << "metric\tname\tvalue\n";
    for (std::size_t k = 0; k < summary.tracked.size(); ++k) {
        out << "mae\t" << summary.tracked[k] << '\t' << summary.mae[k] << '\n';
    }
    for (std::size_t k = 0; k < summary.intervals.size(); ++k) {
        out << "coverage_pct\t" << summary.intervals[k] << '\t' << summary.coverage[k] << '\n';
        out << "ci_length\t" << summary.intervals[k] << '\t' << summary.mean_length[k] << '\n';
    }
    out << "replications\tall\t" << summary.replications << '\n';
    out << "failures\tall\t" << summary.failures << '\n';
    out << "nonconvergence_rate\tall\t" << summary.nonconvergence_rate << '\n';
    out.precision(precision);
}

KsResult ks_normality(std::vector<double> samples) {
    if (samples.size() < 30) throw ValidationError("KS test needs at least 30 samples");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t k = 0; k < samples.size(); ++k) {
        const double f = standard_normal_cdf(samples[k]);
        d = std::max({d, static_cast<double>(k + 1) / n - f, f - static_cast<double>(k) / n});
    }
    const double sn = std::sqrt(n);
    return {d, kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d)};
}

} // namespace bipnet
