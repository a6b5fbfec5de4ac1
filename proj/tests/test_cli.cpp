#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "bipnet/cli.hpp"
#include "bipnet/fixture.hpp"
#include "bipnet/model_family.hpp"

namespace fs = std::filesystem;
using bipnet::run_cli;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run cli(std::vector<std::string> args) {
    args.insert(args.begin(), "bipnet");
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("bipnet_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

nlohmann::json report(const fs::path& dir) { return nlohmann::json::parse(slurp(dir / "report.json")); }

// Parses the TSV written by write_records into name -> (statistic, p_value).
std::map<std::string, std::pair<double, double>> tests_of(const std::string& tsv) {
    std::map<std::string, std::pair<double, double>> rows;
    std::istringstream in(tsv);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::istringstream fields(line);
        std::string name, estimate, se, stat, p;
        std::getline(fields, name, '\t');
        std::getline(fields, estimate, '\t');
        std::getline(fields, se, '\t');
        std::getline(fields, stat, '\t');
        std::getline(fields, p, '\t');
        rows[name] = {std::stod(stat), std::stod(p)};
    }
    return rows;
}

// 100 x 100 binary graph with one match covariate, gamma* = 0.5. Actors 1 and
// 2 share a class and have degrees one apart.
fs::path strong_effect(const fs::path& dir) {
    const bipnet::LogisticFamily logistic;
    bipnet::RngStream rng(17);
    std::bernoulli_distribution coin(0.5);
    std::vector<int> actor_class(100), event_group(100);
    for (auto& c : actor_class) c = coin(rng);
    for (auto& g : event_group) g = coin(rng);
    actor_class[1] = actor_class[0];
    std::ostringstream edges, actors, events;
    actors << "id\tclass\n";
    events << "id\tgroup\n";
    std::vector<std::vector<int>> x(100, std::vector<int>(100));
    for (int i = 0; i < 100; ++i) {
        actors << "a" << i + 1 << '\t' << (actor_class[i] ? "A" : "B") << '\n';
        for (int j = 0; j < 100; ++j) x[i][j] = static_cast<int>(logistic.sample(actor_class[i] == event_group[j] ? 0.5 : 0.0, rng));
    }
    int d0 = 0;
    for (int j = 0; j < 100; ++j) d0 += x[0][j];
    int d1 = 0;
    for (int j = 0; j < 100; ++j) d1 += x[1][j];
    for (int j = 0; j < 100 && d1 < d0 + 1; ++j) if (!x[1][j]) { x[1][j] = 1; ++d1; }
    for (int j = 0; j < 100 && d1 > d0 + 1; ++j) if (x[1][j]) { x[1][j] = 0; --d1; }
    for (int j = 0; j < 100; ++j) events << "e" << j + 1 << '\t' << (event_group[j] ? "A" : "B") << '\n';
    for (int i = 0; i < 100; ++i)
        for (int j = 0; j < 100; ++j) edges << "a" << i + 1 << "\te" << j + 1 << '\t' << x[i][j] << '\n';
    spit(dir / "edges.tsv", edges.str());
    spit(dir / "actors.tsv", actors.str());
    spit(dir / "events.tsv", events.str());
    spit(dir / "mapping.json",
         R"({"mappings":[{"name":"match","actor_attribute":"class","event_attribute":"group","event_value_groups":{"A":"A","B":"B"}}]})");
    return dir;
}

} // namespace

TEST_CASE("fixture fit end to end") {
    const fs::path dir = scratch("fixture");
    REQUIRE(cli({"make-fixture", "--out-dir", (dir / "data").string()}).code == 0);
    const auto fit_args = [&](const fs::path& out) {
        return std::vector<std::string>{"fit", (dir / "data/ratings.tsv").string(), "--binarize", "--actor-attrs",
                                        (dir / "data/users.tsv").string(), "--event-attrs", (dir / "data/movies.tsv").string(),
                                        "--mapping", (dir / "data/mapping.json").string(), "--min-degree", "10",
                                        "--out-dir", out.string(), "--test", "alpha:1-alpha:2", "--test", "gamma:1=0"};
    };
    const auto first = cli(fit_args(dir / "a"));
    REQUIRE_MESSAGE(first.code == 0, first.err);
    const auto second = cli(fit_args(dir / "b"));
    REQUIRE(second.code == 0);
    for (const char* name : {"estimates.tsv", "report.json", "trace.tsv", "tests.tsv"}) {
        CHECK(fs::exists(dir / "a" / name));
        CHECK(slurp(dir / "a" / name) == slurp(dir / "b" / name));
    }
    const auto r = report(dir / "a");
    CHECK(r["gamma"].size() == 2);
    CHECK(r["gamma_bc"].size() == 2);
    for (const auto& se : r["gamma_se"]) {
        CHECK(se.get<double>() > 0.01);
        CHECK(se.get<double>() < 0.03);
    }
    CHECK(r["filter"]["removed_actors"].size() == 6);
    CHECK(r["filter"]["removed_events"].size() == 6);
    for (const auto& t : r["tests"]) {
        CHECK(t["p_value"].get<double>() >= 0.0);
        CHECK(t["p_value"].get<double>() <= 1.0);
    }

    const auto manifest = nlohmann::json::parse(slurp(dir / "a/manifest.json"));
    CHECK(manifest["command"] == "fit");
    CHECK(manifest["inputs"].size() == 4);
    CHECK(manifest["inputs"][(dir / "data/ratings.tsv").string()] == bipnet::file_sha256(dir / "data/ratings.tsv"));
    CHECK(manifest.contains("wall_clock_seconds"));
    const auto replay = cli({"replay", (dir / "a/manifest.json").string(), "--out-dir", (dir / "c").string(), "--check"});
    CHECK_MESSAGE(replay.code == 0, replay.err);
    CHECK(slurp(dir / "c/report.json") == slurp(dir / "a/report.json"));

    const auto bc_off = cli({"fit", (dir / "data/ratings.tsv").string(), "--binarize", "--actor-attrs",
                             (dir / "data/users.tsv").string(), "--event-attrs", (dir / "data/movies.tsv").string(),
                             "--mapping", (dir / "data/mapping.json").string(), "--min-degree", "10", "--no-bias-correct",
                             "--method", "sandwich", "--out-dir", (dir / "d").string()});
    REQUIRE(bc_off.code == 0);
    CHECK(report(dir / "d")["gamma_bc"].empty());
    CHECK(slurp(dir / "d/estimates.tsv").find("gamma_bc") == std::string::npos);
}

TEST_CASE("p = 0 fit matches observed degrees") {
    const fs::path dir = scratch("beta_model");
    std::ostringstream edges;
    bipnet::RngStream rng(3);
    std::bernoulli_distribution e(0.4);
    for (int i = 0; i < 30; ++i)
        for (int j = 0; j < 20; ++j) edges << "u" << i << "\tm" << j << '\t' << (e(rng) ? 1 : 0) << '\n';
    spit(dir / "edges.tsv", edges.str());
    const auto run = cli({"fit", (dir / "edges.tsv").string(), "--out-dir", (dir / "out").string()});
    REQUIRE_MESSAGE(run.code == 0, run.err);
    const auto r = report(dir / "out");
    CHECK(r["gamma"].empty());
    CHECK(r["max_abs_degree_residual"].get<double>() <= 1e-8);
}

TEST_CASE("exit codes") {
    const fs::path dir = scratch("codes");
    spit(dir / "bad.tsv", "a\tb\t1\nc\n");
    const auto parse = cli({"fit", (dir / "bad.tsv").string(), "--out-dir", (dir / "x").string()});
    CHECK(parse.code == 2);
    CHECK(parse.err.find("line 2") != std::string::npos);

    spit(dir / "good.tsv", "a\te1\t1\na\te2\t0\nb\te1\t1\nb\te2\t0\nc\te2\t1\nc\te1\t0\n");
    CHECK(cli({"fit", (dir / "good.tsv").string(), "--family", "probit", "--out-dir", (dir / "x").string()}).code == 2);
    CHECK(cli({"fit", (dir / "good.tsv").string(), "--method", "bayes"}).code == 2);
    CHECK(cli({"fit", (dir / "missing.tsv").string(), "--out-dir", (dir / "x").string()}).code == 2);
    CHECK(cli({"frobnicate"}).code == 2);
    CHECK(cli({"--help"}).code == 0);

    setenv("BIPNET_FAMILY", "probit", 1);
    CHECK(cli({"fit", (dir / "good.tsv").string(), "--out-dir", (dir / "x").string()}).code == 2);
    CHECK(cli({"fit", (dir / "good.tsv").string(), "--family", "logistic", "--out-dir", (dir / "x").string()}).code == 0);
    unsetenv("BIPNET_FAMILY");

    spit(dir / "full.tsv", "a\te1\t1\na\te2\t1\nb\te1\t1\nb\te2\t0\n");
    CHECK(cli({"fit", (dir / "full.tsv").string(), "--out-dir", (dir / "x").string()}).code == 3);

    // a covariate that is zero everywhere leaves H singular
    spit(dir / "actors.tsv", "id\tclass\na\tA\nb\tA\nc\tB\n");
    spit(dir / "events.tsv", "id\tgroup\ne1\tg\ne2\tg\n");
    spit(dir / "mapping.json",
         R"({"mappings":[{"name":"none","actor_attribute":"class","event_attribute":"group","event_value_groups":{"g":"Z"}}]})");
    CHECK(cli({"fit", (dir / "good.tsv").string(), "--actor-attrs", (dir / "actors.tsv").string(), "--event-attrs",
               (dir / "events.tsv").string(), "--mapping", (dir / "mapping.json").string(), "--out-dir",
               (dir / "x").string()})
              .code == 4);

    const std::string command = std::string(BIPNET_EXE) + " fit " + (dir / "bad.tsv").string() + " > /dev/null 2>&1";
    const int status = std::system(command.c_str());
    CHECK(WEXITSTATUS(status) == 2);
}

TEST_CASE("wald tests through the CLI") {
    const fs::path dir = strong_effect(scratch("wald"));
    const auto run = cli({"fit", (dir / "edges.tsv").string(), "--actor-attrs", (dir / "actors.tsv").string(),
                          "--event-attrs", (dir / "events.tsv").string(), "--mapping", (dir / "mapping.json").string(),
                          "--out-dir", (dir / "out").string()});
    REQUIRE_MESSAGE(run.code == 0, run.err);
    const auto test = cli({"test", (dir / "out/report.json").string(), "gamma:1=0", "alpha:1-alpha:2", "alpha:1-alpha:1",
                           "--out-dir", (dir / "tests").string()});
    REQUIRE_MESSAGE(test.code == 0, test.err);
    const auto rows = tests_of(test.out);
    CHECK(rows.at("gamma:1=0").second < 1e-3);
    CHECK(std::abs(rows.at("alpha:1-alpha:2=0").first) < 1.0);
    CHECK(rows.at("alpha:1-alpha:2=0").second > 0.3);
    CHECK(rows.at("alpha:1-alpha:1=0").first == 0.0);
    CHECK(slurp(dir / "tests/tests.tsv") == test.out);

    CHECK(cli({"test", (dir / "out/report.json").string(), "delta:1"}).code == 2);
    CHECK(cli({"test", (dir / "out/report.json").string(), "alpha:101"}).code == 2);
    spit(dir / "broken.json", "{\"alpha\": [1,");
    CHECK(cli({"test", (dir / "broken.json").string(), "alpha:1"}).code == 2);
}

TEST_CASE("simulate") {
    const fs::path dir = scratch("simulate");
    spit(dir / "smoke.json", R"({"m": 50, "n": 50, "replications": 1, "seed": 3})");
    const auto start = std::chrono::steady_clock::now();
    const auto run = cli({"simulate", (dir / "smoke.json").string(), "--out-dir", (dir / "out").string()});
    CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() < 5.0);
    REQUIRE_MESSAGE(run.code == 0, run.err);
    CHECK(fs::exists(dir / "out/summary.tsv"));
    CHECK(fs::exists(dir / "out/qq_zeta_alpha_1.tsv"));
    CHECK(fs::exists(dir / "out/manifest.json"));

    spit(dir / "multi.json", R"({"m": 30, "n": 30, "replications": 6, "seed": 3})");
    REQUIRE(cli({"simulate", (dir / "multi.json").string(), "--threads", "1", "--out-dir", (dir / "one").string()}).code == 0);
    REQUIRE(cli({"simulate", (dir / "multi.json").string(), "--threads", "3", "--out-dir", (dir / "three").string()}).code == 0);
    CHECK(slurp(dir / "one/summary.tsv") == slurp(dir / "three/summary.tsv"));
    CHECK(slurp(dir / "one/qq_xi_alpha_1_alpha_2.tsv") == slurp(dir / "three/qq_xi_alpha_1_alpha_2.tsv"));
    CHECK(cli({"replay", (dir / "one/manifest.json").string(), "--check"}).code == 0);

    spit(dir / "bad.json", R"({"family": "gaussian"})");
    CHECK(cli({"simulate", (dir / "bad.json").string(), "--out-dir", (dir / "x").string()}).code == 2);
}
