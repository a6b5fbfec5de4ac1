#include "bipnet/cli.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "bipnet/errors.hpp"
#include "bipnet/fixture.hpp"
#include "bipnet/inference.hpp"
#include "bipnet/moment_fitter.hpp"
#include "bipnet/network_data.hpp"
#include "bipnet/sim_lab.hpp"

namespace bipnet {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kVersion = "0.3.0";
constexpr const char* kEnvPrefix = "BIPNET_";

std::string env_name(const std::string& flag) {
    std::string name = kEnvPrefix;
    for (const char c : flag) name += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return name;
}

std::string exact(double v) {
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

struct FitArgs {
    std::string edges;
    std::string actor_attrs;
    std::string event_attrs;
    std::string mapping;
    std::string family = "logistic";
    std::optional<double> min_degree;
    std::string filter_mode = "once";
    double tol = 1e-8;
    int max_iter = 50;
    int max_inner = 100;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    bool bias_correct = true;
    std::string method = "fisher";
    std::string init = "zero";
    std::string out_dir = "bipnet-fit";
    std::string delimiter = "tab";
    int weight_column = 2;
    bool binarize = false;
    std::string duplicates = "error";
    bool permissive = false;
    std::vector<std::string> tests;

    std::vector<std::string> canonical() const {
        std::vector<std::string> a{"fit", edges};
        if (!actor_attrs.empty()) a.insert(a.end(), {"--actor-attrs", actor_attrs});
        if (!event_attrs.empty()) a.insert(a.end(), {"--event-attrs", event_attrs});
        if (!mapping.empty()) a.insert(a.end(), {"--mapping", mapping});
        a.insert(a.end(), {"--family", family});
        if (min_degree) a.insert(a.end(), {"--min-degree", exact(*min_degree)});
        a.insert(a.end(), {"--filter-mode", filter_mode, "--tol", exact(tol), "--max-iter", std::to_string(max_iter),
                           "--max-inner", std::to_string(max_inner), "--seed", std::to_string(seed), "--threads",
                           std::to_string(threads), bias_correct ? "--bias-correct" : "--no-bias-correct", "--method",
                           method, "--init", init, "--out-dir", out_dir, "--delimiter", delimiter, "--weight-column",
                           std::to_string(weight_column), "--duplicates", duplicates});
        if (binarize) a.emplace_back("--binarize");
        if (permissive) a.emplace_back("--permissive");
        for (const auto& t : tests) a.insert(a.end(), {"--test", t});
        return a;
    }
};

struct SimArgs {
    std::string scenario;
    unsigned threads = 1;
    std::optional<std::uint64_t> seed;
    std::optional<int> replications;
    std::string out_dir = "bipnet-sim";

    std::vector<std::string> canonical() const {
        std::vector<std::string> a{"simulate", scenario, "--threads", std::to_string(threads)};
        if (seed) a.insert(a.end(), {"--seed", std::to_string(*seed)});
        if (replications) a.insert(a.end(), {"--replications", std::to_string(*replications)});
        a.insert(a.end(), {"--out-dir", out_dir});
        return a;
    }
};

struct TestArgs {
    std::string report;
    std::vector<std::string> contrasts;
    std::string out_dir;

    std::vector<std::string> canonical() const {
        std::vector<std::string> a{"test", report};
        a.insert(a.end(), contrasts.begin(), contrasts.end());
        if (!out_dir.empty()) a.insert(a.end(), {"--out-dir", out_dir});
        return a;
    }
};

struct FixtureArgs {
    FixtureOptions options;
    std::string out_dir = "bipnet-fixture";

    std::vector<std::string> canonical() const {
        return {"make-fixture",     "--users",   std::to_string(options.users),
                "--movies",         std::to_string(options.movies),
                "--planted-users",  std::to_string(options.planted_users),
                "--planted-movies", std::to_string(options.planted_movies),
                "--planted-max-degree", std::to_string(options.planted_max_degree),
                "--seed",           std::to_string(options.seed),
                "--out-dir",        out_dir};
    }
};

struct ReplayArgs {
    std::string manifest;
    std::string out_dir;
    bool check = false;
};

// ---- small IO helpers ----

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << text;
}

char parse_delimiter(const std::string& name) {
    if (name == "tab" || name == "\\t") return '\t';
    if (name == "comma") return ',';
    if (name == "space") return ' ';
    if (name == "pipe") return '|';
    if (name.size() == 1) return name[0];
    throw ConfigError("unknown delimiter '" + name + "'");
}

json to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json to_json(const Eigen::MatrixXd& a) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < a.rows(); ++i) rows.push_back(to_json(Eigen::VectorXd(a.row(i).transpose())));
    return rows;
}

Eigen::VectorXd vector_from(const json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Eigen::MatrixXd matrix_from(const json& j) {
    Eigen::MatrixXd a(static_cast<Eigen::Index>(j.size()), j.empty() ? 0 : static_cast<Eigen::Index>(j[0].size()));
    for (Eigen::Index i = 0; i < a.rows(); ++i) a.row(i) = vector_from(j[static_cast<std::size_t>(i)]).transpose();
    return a;
}

json summary_json(const InferenceSummary& s) {
    return {{"alpha", to_json(s.params.alpha)},
            {"beta", to_json(s.params.beta)},
            {"gamma", to_json(s.params.gamma)},
            {"v_diag", to_json(s.v_diag)},
            {"v_corner", s.v_corner},
            {"u_diag", to_json(s.u_diag)},
            {"u_corner", s.u_corner},
            {"gamma_method", s.gamma.method == CovarianceMethod::fisher ? "fisher" : "sandwich"},
            {"h", to_json(s.gamma.h)},
            {"gamma_covariance", to_json(s.gamma.covariance)},
            {"gamma_se", to_json(s.gamma.standard_errors)},
            {"b_star", to_json(s.gamma.b_star)},
            {"gamma_bc", to_json(s.gamma.gamma_bc)}};
}

InferenceSummary summary_from(const json& j) {
    try {
        InferenceSummary s;
        s.params.alpha = vector_from(j.at("alpha"));
        s.params.beta = vector_from(j.at("beta"));
        s.params.gamma = vector_from(j.at("gamma"));
        s.v_diag = vector_from(j.at("v_diag"));
        s.v_corner = j.at("v_corner").get<double>();
        s.u_diag = vector_from(j.at("u_diag"));
        s.u_corner = j.at("u_corner").get<double>();
        s.gamma.method = j.at("gamma_method") == "sandwich" ? CovarianceMethod::sandwich : CovarianceMethod::fisher;
        s.gamma.h = matrix_from(j.at("h"));
        s.gamma.covariance = matrix_from(j.at("gamma_covariance"));
        s.gamma.standard_errors = vector_from(j.at("gamma_se"));
        s.gamma.b_star = vector_from(j.at("b_star"));
        s.gamma.gamma_bc = vector_from(j.at("gamma_bc"));
        const auto dim = s.params.alpha.size() + s.params.beta.size() - 1;
        if (s.v_diag.size() != dim || s.u_diag.size() != dim) throw ConfigError("fit report has inconsistent sizes");
        return s;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed fit report: ") + e.what());
    }
}

std::vector<std::string> removed_labels(const std::vector<std::string>& before, const std::vector<std::string>& after) {
    const std::set<std::string> kept(after.begin(), after.end());
    std::vector<std::string> removed;
    for (const auto& label : before) if (!kept.count(label)) removed.push_back(label);
    return removed;
}

std::string sanitize(const std::string& name) {
    std::string s;
    for (const char c : name) s += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
    return s;
}

/// Writes manifest.json next to the outputs. Output digests let a replay be
/// checked byte for byte; the wall clock is the only field that varies.
void write_manifest(const fs::path& dir, const std::string& command, const std::vector<std::string>& argv,
                    const std::vector<std::string>& canonical, const json& resolved,
                    const std::vector<fs::path>& inputs, std::uint64_t seed, const std::vector<fs::path>& outputs,
                    std::chrono::steady_clock::time_point start) {
    json input_digests = json::object();
    for (const auto& p : inputs) input_digests[p.string()] = file_sha256(p);
    json output_digests = json::object();
    for (const auto& p : outputs) output_digests[p.filename().string()] = file_sha256(p);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const json manifest{{"tool", "bipnet"},
                        {"version", kVersion},
                        {"command", command},
                        {"argv", argv},
                        {"replay_args", canonical},
                        {"resolved", resolved},
                        {"inputs", input_digests},
                        {"outputs", output_digests},
                        {"seed", seed},
                        {"wall_clock_seconds", seconds}};
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

// ---- commands ----

int cmd_fit(const FitArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
    const auto start = std::chrono::steady_clock::now();
    const auto family = make_family(a.family);

    EdgeListOptions edge_options;
    edge_options.delimiter = parse_delimiter(a.delimiter);
    edge_options.kind = family->support() == Support::binary ? WeightKind::binary : WeightKind::count;
    edge_options.weight_column = a.weight_column < 0 ? std::nullopt : std::optional<std::size_t>(a.weight_column);
    edge_options.binarize = a.binarize;
    edge_options.duplicates = a.duplicates == "sum" ? DuplicatePolicy::sum : DuplicatePolicy::error;
    edge_options.strict = !a.permissive;
    const BipartiteGraph raw = load_edge_list(a.edges, edge_options);

    const FilterMode mode = a.filter_mode == "iterate" ? FilterMode::iterate : FilterMode::once;
    const BipartiteGraph graph = a.min_degree ? filter_by_degree(raw, *a.min_degree, mode) : raw;

    std::vector<fs::path> inputs{a.edges};
    CovariateTensor covariates = CovariateTensor::none(graph.actors(), graph.events());
    std::vector<std::string> covariate_names;
    if (!a.mapping.empty()) {
        if (a.actor_attrs.empty() || a.event_attrs.empty()) {
            throw ConfigError("--mapping needs both --actor-attrs and --event-attrs");
        }
        const auto actors = load_attribute_table(a.actor_attrs);
        const auto events = load_attribute_table(a.event_attrs);
        const auto spec = load_mapping_spec(a.mapping);
        covariates = build_match_covariates(graph, actors, events, spec);
        for (const auto& m : spec.mappings) covariate_names.push_back(m.name);
        inputs.insert(inputs.end(), {a.actor_attrs, a.event_attrs, a.mapping});
    } else if (!a.actor_attrs.empty() || !a.event_attrs.empty()) {
        throw ConfigError("attribute tables given without --mapping");
    }

    FitOptions options;
    options.tol_inner = a.tol;
    options.tol_outer = a.tol;
    options.max_outer = a.max_iter;
    options.max_inner = a.max_inner;
    options.init = a.init == "moments" ? InitRule::degree_moments : InitRule::zero;
    options.validate();

    const Problem problem(graph, covariates, *family);
    const FitResult result = fit(problem, options);
    InferenceSummary summary =
        summarize(result, problem, a.method == "sandwich" ? CovarianceMethod::sandwich : CovarianceMethod::fisher);
    if (!a.bias_correct) {
        summary.gamma.b_star.resize(0);
        summary.gamma.gamma_bc.resize(0);
    }

    std::vector<WaldTest> tests;
    for (const auto& spec : a.tests) tests.push_back(wald_test(summary, parse_contrast(spec)));

    const fs::path dir = a.out_dir;
    fs::create_directories(dir);
    std::vector<fs::path> outputs;

    std::ostringstream estimates;
    write_records(estimates, parameter_records(summary, graph.actor_labels(), graph.event_labels()));
    write_file(dir / "estimates.tsv", estimates.str());
    outputs.push_back(dir / "estimates.tsv");

    if (!tests.empty()) {
        std::vector<InferenceRecord> records;
        for (const auto& t : tests) records.push_back(test_record(t));
        std::ostringstream text;
        write_records(text, records);
        write_file(dir / "tests.tsv", text.str());
        outputs.push_back(dir / "tests.tsv");
    }

    std::ostringstream trace;
    trace << std::setprecision(10) << "stage\tstep\tresidual_inf\n";
    for (std::size_t k = 0; k < result.outer_trace.size(); ++k) trace << "outer\t" << k << '\t' << result.outer_trace[k] << '\n';
    for (std::size_t k = 0; k < result.inner_trace.size(); ++k) trace << "inner\t" << k << '\t' << result.inner_trace[k] << '\n';
    write_file(dir / "trace.tsv", trace.str());
    outputs.push_back(dir / "trace.tsv");

    const auto degree = result.residuals.degree.size() ? result.residuals.degree.cwiseAbs().maxCoeff() : 0.0;
    const auto cov = result.residuals.covariate.size() ? result.residuals.covariate.cwiseAbs().maxCoeff() : 0.0;
    json report = summary_json(summary);
    report["family"] = a.family;
    report["actors"] = graph.actors();
    report["events"] = graph.events();
    report["actor_labels"] = graph.actor_labels();
    report["event_labels"] = graph.event_labels();
    report["covariate_names"] = covariate_names;
    report["converged"] = result.converged;
    report["outer_iterations"] = result.outer_iterations;
    report["inner_iterations"] = result.inner_iterations;
    report["max_abs_degree_residual"] = degree;
    report["max_abs_covariate_residual"] = cov;
    report["jacobian"] = {{"min_diag", result.jacobian_summary.min_diag},
                          {"max_diag", result.jacobian_summary.max_diag},
                          {"min_mean_d1", result.jacobian_summary.min_mean_d1},
                          {"max_mean_d1", result.jacobian_summary.max_mean_d1}};
    report["filter"] = {{"min_degree", a.min_degree ? json(*a.min_degree) : json(nullptr)},
                        {"mode", a.filter_mode},
                        {"input_actors", raw.actors()},
                        {"input_events", raw.events()},
                        {"removed_actors", removed_labels(raw.actor_labels(), graph.actor_labels())},
                        {"removed_events", removed_labels(raw.event_labels(), graph.event_labels())}};
    json test_json = json::array();
    for (const auto& t : tests) {
        test_json.push_back({{"null", t.null_description},
                             {"estimate", t.estimate},
                             {"se", t.standard_error},
                             {"statistic", t.statistic},
                             {"p_value", t.p_value}});
    }
    report["tests"] = test_json;
    write_file(dir / "report.json", report.dump(2) + "\n");
    outputs.push_back(dir / "report.json");

    out << "fit " << graph.actors() << "x" << graph.events() << " (" << raw.actors() - graph.actors() << " actors, "
        << raw.events() - graph.events() << " events filtered) in " << result.outer_iterations << " outer steps\n";
    out << std::setprecision(6);
    for (Eigen::Index l = 0; l < summary.params.gamma.size(); ++l) {
        out << "gamma:" << l + 1 << " = " << summary.params.gamma(l) << " (se " << summary.gamma.standard_errors(l) << ")";
        if (a.bias_correct) out << ", bias-corrected " << summary.gamma.gamma_bc(l);
        out << '\n';
    }

    json resolved{{"family", a.family},           {"min_degree", a.min_degree ? json(*a.min_degree) : json(nullptr)},
                  {"filter_mode", a.filter_mode}, {"tol", a.tol},
                  {"max_iter", a.max_iter},       {"max_inner", a.max_inner},
                  {"threads", a.threads},         {"bias_correct", a.bias_correct},
                  {"method", a.method},           {"init", a.init},
                  {"out_dir", a.out_dir},         {"delimiter", a.delimiter},
                  {"weight_column", a.weight_column}, {"binarize", a.binarize},
                  {"duplicates", a.duplicates},   {"permissive", a.permissive},
                  {"tests", a.tests}};
    write_manifest(dir, "fit", argv, a.canonical(), resolved, inputs, a.seed, outputs, start);
    return kExitOk;
}

int cmd_simulate(const SimArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
    const auto start = std::chrono::steady_clock::now();
    Scenario scenario = load_scenario(a.scenario);
    if (a.seed) scenario.seed = *a.seed;
    if (a.replications) scenario.replications = *a.replications;
    scenario.validate();
    make_family(scenario.family);

    const ScenarioSummary summary = run_scenario(scenario, std::max(1u, a.threads));
    const fs::path dir = a.out_dir;
    fs::create_directories(dir);
    std::vector<fs::path> outputs;

    std::ostringstream text;
    write_summary(text, summary);
    write_file(dir / "summary.tsv", text.str());
    outputs.push_back(dir / "summary.tsv");

    for (std::size_t k = 0; k < summary.qq_names.size(); ++k) {
        auto samples = summary.qq_samples[k];
        std::sort(samples.begin(), samples.end());
        std::ostringstream qq;
        qq << std::setprecision(10) << "plotting_position\tsample\n";
        const double count = static_cast<double>(samples.size());
        for (std::size_t r = 0; r < samples.size(); ++r) {
            qq << (static_cast<double>(r) + 0.5) / count << '\t' << samples[r] << '\n';
        }
        const fs::path path = dir / ("qq_" + sanitize(summary.qq_names[k]) + ".tsv");
        write_file(path, qq.str());
        outputs.push_back(path);
    }

    out << "simulated " << summary.replications << " replications of " << scenario.m << "x" << scenario.n << ", "
        << summary.failures << " failed\n";

    const json resolved{{"m", scenario.m},
                        {"n", scenario.n},
                        {"L", scenario.L},
                        {"gamma_star", to_json(scenario.gamma_star)},
                        {"family", scenario.family},
                        {"scheme", scenario.scheme},
                        {"replications", scenario.replications},
                        {"seed", scenario.seed},
                        {"tol", scenario.fit.tol_inner},
                        {"max_inner", scenario.fit.max_inner},
                        {"max_outer", scenario.fit.max_outer},
                        {"threads", a.threads},
                        {"out_dir", a.out_dir}};
    write_manifest(dir, "simulate", argv, a.canonical(), resolved, {a.scenario}, scenario.seed, outputs, start);
    return kExitOk;
}

int cmd_test(const TestArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
    const auto start = std::chrono::steady_clock::now();
    json report;
    try {
        report = json::parse(read_file(a.report));
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("fit report is not valid JSON: ") + e.what());
    }
    const InferenceSummary summary = summary_from(report);
    std::vector<InferenceRecord> records;
    for (const auto& spec : a.contrasts) records.push_back(test_record(wald_test(summary, parse_contrast(spec))));
    std::ostringstream text;
    write_records(text, records);
    out << text.str();
    if (!a.out_dir.empty()) {
        const fs::path dir = a.out_dir;
        fs::create_directories(dir);
        write_file(dir / "tests.tsv", text.str());
        const json resolved{{"contrasts", a.contrasts}, {"out_dir", a.out_dir}};
        write_manifest(dir, "test", argv, a.canonical(), resolved, {a.report}, 0, {dir / "tests.tsv"}, start);
    }
    return kExitOk;
}

int cmd_fixture(const FixtureArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
    const auto start = std::chrono::steady_clock::now();
    const FixtureFiles files = write_ratings_fixture(a.out_dir, a.options);
    out << "wrote " << files.ratings_count << " ratings, " << files.planted_users.size() << " planted users, "
        << files.planted_movies.size() << " planted movies to " << a.out_dir << "\n";
    const json resolved{{"users", a.options.users},
                        {"movies", a.options.movies},
                        {"planted_users", a.options.planted_users},
                        {"planted_movies", a.options.planted_movies},
                        {"planted_max_degree", a.options.planted_max_degree},
                        {"out_dir", a.out_dir}};
    write_manifest(a.out_dir, "make-fixture", argv, a.canonical(), resolved, {}, a.options.seed,
                   {files.ratings, files.users, files.movies, files.mapping, files.planted}, start);
    return kExitOk;
}

int cmd_replay(const ReplayArgs& a, std::ostream& out, std::ostream& err) {
    json manifest;
    try {
        manifest = json::parse(read_file(a.manifest));
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("manifest is not valid JSON: ") + e.what());
    }
    std::vector<std::string> args;
    try {
        args = manifest.at("replay_args").get<std::vector<std::string>>();
    } catch (const json::exception&) {
        throw ConfigError("manifest has no replay_args");
    }
    const auto out_flag = std::find(args.begin(), args.end(), "--out-dir");
    fs::path target = out_flag != args.end() && out_flag + 1 != args.end() ? fs::path(*(out_flag + 1)) : fs::path();
    if (!a.out_dir.empty()) {
        if (out_flag != args.end() && out_flag + 1 != args.end()) {
            *(out_flag + 1) = a.out_dir;
        } else {
            args.insert(args.end(), {"--out-dir", a.out_dir});
        }
        target = a.out_dir;
    }
    args.insert(args.begin(), "bipnet");
    const int code = run_cli(args, out, err);
    if (code != kExitOk || !a.check) return code;

    const auto recorded = manifest.value("outputs", json::object());
    for (const auto& [name, digest] : recorded.items()) {
        const fs::path path = target / name;
        if (!fs::exists(path) || file_sha256(path) != digest.get<std::string>()) {
            err << "error: replayed output " << name << " differs from the manifest\n";
            return kExitInternal;
        }
    }
    out << "replay matches " << recorded.size() << " recorded outputs\n";
    return kExitOk;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const ConfigError*>(&e) ||
        dynamic_cast<const ValidationError*>(&e)) {
        return kExitConfig;
    }
    if (dynamic_cast<const NonExistenceError*>(&e) || dynamic_cast<const MaxIterationsError*>(&e) ||
        dynamic_cast<const DegeneracyError*>(&e) || dynamic_cast<const SingularJacobianError*>(&e) ||
        dynamic_cast<const DomainError*>(&e)) {
        return kExitNonexistence;
    }
    if (dynamic_cast<const IllPosedError*>(&e)) return kExitIllPosed;
    return kExitInternal;
}

} // namespace

std::string file_sha256(const fs::path& path) {
    const std::string bytes = read_file(path);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 failed for " + path.string());
    }
    std::ostringstream hex;
    for (unsigned int k = 0; k < length; ++k) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[k]);
    return hex.str();
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Method-of-moments fitting and simulation for covariate-adjusted bipartite networks", "bipnet"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    const auto env = [](CLI::Option* opt, const std::string& flag) { return opt->envname(env_name(flag)); };

    FitArgs fa;
    auto* fit_cmd = app.add_subcommand("fit", "Fit a graph read from an edge list and write estimates and SEs");
    fit_cmd->add_option("edges", fa.edges, "Edge list: actor, event[, weight, ...]")->required();
    env(fit_cmd->add_option("--actor-attrs", fa.actor_attrs, "Actor attribute table (header row, id first)"), "actor-attrs");
    env(fit_cmd->add_option("--event-attrs", fa.event_attrs, "Event attribute table (header row, id first)"), "event-attrs");
    env(fit_cmd->add_option("--mapping", fa.mapping, "JSON spec of the attribute-match covariates"), "mapping");
    env(fit_cmd->add_option("--family", fa.family, "logistic or poisson")->capture_default_str(), "family");
    env(fit_cmd->add_option("--min-degree", fa.min_degree, "Keep nodes with degree above this"), "min-degree");
    env(fit_cmd->add_option("--filter-mode", fa.filter_mode)->check(CLI::IsMember({"once", "iterate"}))->capture_default_str(),
        "filter-mode");
    env(fit_cmd->add_option("--tol", fa.tol, "Sup-norm tolerance for both Newton loops")->check(CLI::PositiveNumber)->capture_default_str(), "tol");
    env(fit_cmd->add_option("--max-iter", fa.max_iter, "Outer iteration cap")->check(CLI::PositiveNumber)->capture_default_str(), "max-iter");
    env(fit_cmd->add_option("--max-inner", fa.max_inner, "Inner iteration cap")->check(CLI::PositiveNumber)->capture_default_str(), "max-inner");
    env(fit_cmd->add_option("--seed", fa.seed, "Recorded in the manifest; fitting is deterministic"), "seed");
    env(fit_cmd->add_option("--threads", fa.threads, "Accepted for symmetry; fitting is single-threaded"), "threads");
    env(fit_cmd->add_flag("--bias-correct,!--no-bias-correct", fa.bias_correct, "Report bias-corrected gamma (default on)"),
        "bias-correct");
    env(fit_cmd->add_option("--method", fa.method)->check(CLI::IsMember({"fisher", "sandwich"}))->capture_default_str(), "method");
    env(fit_cmd->add_option("--init", fa.init)->check(CLI::IsMember({"zero", "moments"}))->capture_default_str(), "init");
    env(fit_cmd->add_option("--out-dir", fa.out_dir)->capture_default_str(), "out-dir");
    env(fit_cmd->add_option("--delimiter", fa.delimiter, "tab, comma, space, pipe or one character")->capture_default_str(), "delimiter");
    env(fit_cmd->add_option("--weight-column", fa.weight_column, "0-based weight column; negative means unweighted")->capture_default_str(),
        "weight-column");
    env(fit_cmd->add_flag("--binarize", fa.binarize, "Every listed pair is an edge of weight 1"), "binarize");
    env(fit_cmd->add_option("--duplicates", fa.duplicates)->check(CLI::IsMember({"error", "sum"}))->capture_default_str(), "duplicates");
    env(fit_cmd->add_flag("--permissive", fa.permissive, "Skip malformed rows instead of failing"), "permissive");
    fit_cmd->add_option("--test", fa.tests, "Wald contrast, e.g. alpha:1-alpha:2 or gamma:1=0 (repeatable)");

    SimArgs sa;
    auto* sim_cmd = app.add_subcommand("simulate", "Run a Monte-Carlo scenario and write summary and QQ data");
    sim_cmd->add_option("scenario", sa.scenario, "Scenario JSON")->required();
    env(sim_cmd->add_option("--threads", sa.threads)->check(CLI::PositiveNumber)->capture_default_str(), "threads");
    env(sim_cmd->add_option("--seed", sa.seed, "Overrides the scenario seed"), "seed");
    env(sim_cmd->add_option("--replications", sa.replications, "Overrides the scenario replication count"), "replications");
    env(sim_cmd->add_option("--out-dir", sa.out_dir)->capture_default_str(), "out-dir");

    TestArgs ta;
    auto* test_cmd = app.add_subcommand("test", "Wald tests against a fit report");
    test_cmd->add_option("report", ta.report, "report.json written by fit")->required();
    test_cmd->add_option("contrasts", ta.contrasts, "Contrasts, e.g. alpha:1-alpha:2 gamma:1=0")->required();
    test_cmd->add_option("--out-dir", ta.out_dir, "Also write tests.tsv and a manifest here");

    FixtureArgs xa;
    auto* fixture_cmd = app.add_subcommand("make-fixture", "Write the offline ratings-style fixture");
    fixture_cmd->add_option("--users", xa.options.users)->capture_default_str();
    fixture_cmd->add_option("--movies", xa.options.movies)->capture_default_str();
    fixture_cmd->add_option("--planted-users", xa.options.planted_users)->capture_default_str();
    fixture_cmd->add_option("--planted-movies", xa.options.planted_movies)->capture_default_str();
    fixture_cmd->add_option("--planted-max-degree", xa.options.planted_max_degree)->capture_default_str();
    env(fixture_cmd->add_option("--seed", xa.options.seed)->capture_default_str(), "seed");
    env(fixture_cmd->add_option("--out-dir", xa.out_dir)->capture_default_str(), "out-dir");

    ReplayArgs ra;
    auto* replay_cmd = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
    replay_cmd->add_option("manifest", ra.manifest)->required();
    replay_cmd->add_option("--out-dir", ra.out_dir, "Write outputs here instead of the recorded directory");
    replay_cmd->add_flag("--check", ra.check, "Compare output digests against the manifest");

    std::vector<const char*> argv;
    for (const auto& s : args) argv.push_back(s.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << '\n';
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }

    const std::vector<std::string> recorded(args.begin() + (args.empty() ? 0 : 1), args.end());
    try {
        if (fit_cmd->parsed()) return cmd_fit(fa, recorded, out);
        if (sim_cmd->parsed()) return cmd_simulate(sa, recorded, out);
        if (test_cmd->parsed()) return cmd_test(ta, recorded, out);
        if (fixture_cmd->parsed()) return cmd_fixture(xa, recorded, out);
        if (replay_cmd->parsed()) return cmd_replay(ra, out, err);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
    return kExitInternal;
}

} // namespace bipnet
