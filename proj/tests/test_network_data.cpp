#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "bipnet/errors.hpp"
#include "bipnet/fixture.hpp"
#include "bipnet/network_data.hpp"
#include "bipnet/rng.hpp"

using namespace bipnet;

namespace {

BipartiteGraph parse(const std::string& text, EdgeListOptions options = {}) {
    std::istringstream in(text);
    return parse_edge_list(in, options);
}

NodeAttributeTable table(const std::string& text) {
    std::istringstream in(text);
    return parse_attribute_table(in);
}

Eigen::MatrixXd random_binary(Eigen::Index m, Eigen::Index n, double density, RngStream& rng) {
    std::bernoulli_distribution edge(density);
    Eigen::MatrixXd x(m, n);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < n; ++j) x(i, j) = edge(rng) ? 1.0 : 0.0;
    return x;
}

} // namespace

TEST_CASE("degrees") {
    const auto ones = degrees(BipartiteGraph(Eigen::MatrixXd::Ones(3, 2), WeightKind::binary));
    CHECK(ones.actor == Eigen::Vector3d(2, 2, 2));
    CHECK(ones.event == Eigen::Vector2d(3, 3));
    const auto zero = degrees(BipartiteGraph(Eigen::MatrixXd::Zero(3, 2), WeightKind::binary));
    CHECK(zero.actor.isZero());
    CHECK(zero.event.isZero());

    RngStream rng(5);
    const Eigen::MatrixXd x = random_binary(5, 4, 0.5, rng);
    const auto d = degrees(BipartiteGraph(x, WeightKind::binary));
    for (int i = 0; i < 5; ++i) {
        double s = 0;
        for (int j = 0; j < 4; ++j) s += x(i, j);
        CHECK(d.actor(i) == s);
    }
    for (int j = 0; j < 4; ++j) {
        double s = 0;
        for (int i = 0; i < 5; ++i) s += x(i, j);
        CHECK(d.event(j) == s);
    }
    CHECK(d.actor.sum() == d.event.sum());
}

TEST_CASE("graph validation") {
    Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(2, 2);
    bad(0, 0) = 2.0;
    CHECK_THROWS_AS(BipartiteGraph(bad, WeightKind::binary), ValidationError);
    CHECK_NOTHROW(BipartiteGraph(bad, WeightKind::count));
    bad(0, 0) = -1.0;
    CHECK_THROWS_AS(BipartiteGraph(bad, WeightKind::count), ValidationError);
    bad(0, 0) = 0.5;
    CHECK_THROWS_AS(BipartiteGraph(bad, WeightKind::count), ValidationError);
    CHECK_THROWS_AS(BipartiteGraph(Eigen::MatrixXd::Zero(2, 1), {"a", "a"}, {"e"}, WeightKind::binary), ValidationError);
    CHECK_THROWS_AS(BipartiteGraph(Eigen::MatrixXd::Zero(0, 1), WeightKind::binary), ValidationError);
}

TEST_CASE("edge list ingestion") {
    const auto g = parse("u1\tm1\t1\nu1\tm2\t1\nu2\tm1\t1\n");
    CHECK(g.actors() == 2);
    CHECK(g.events() == 2);
    CHECK(degrees(g).actor == Eigen::Vector2d(2, 1));
    CHECK(degrees(g).event == Eigen::Vector2d(2, 1));
    CHECK(g.actor_labels() == std::vector<std::string>{"u1", "u2"});

    CHECK_THROWS_WITH_AS(parse(""), doctest::Contains("no edges"), ParseError);
    CHECK_THROWS_WITH_AS(parse("# only a comment\n\n"), doctest::Contains("no edges"), ParseError);

    try {
        parse("u1\tm1\t1\nu2\nu3\tm1\t1\n");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    EdgeListOptions permissive;
    permissive.strict = false;
    CHECK(parse("u1\tm1\t1\nu2\nu3\tm1\t1\n", permissive).actors() == 2);

    CHECK_THROWS_AS(parse("u1\tm1\t1\nu1\tm1\t1\n"), ValidationError);
    EdgeListOptions sum;
    sum.kind = WeightKind::count;
    sum.duplicates = DuplicatePolicy::sum;
    CHECK(parse("u1\tm1\t2\nu1\tm1\t3\n", sum).weight(0, 0) == 5.0);
    CHECK_THROWS_AS(parse("u1\tm1\tx\n"), ParseError);
    CHECK_THROWS_AS(parse("u1\tm1\t3\n"), ParseError);
}

TEST_CASE("ratings-format file of 50 rows has total weight 50") {
    std::ostringstream text;
    RngStream rng(9);
    std::uniform_int_distribution<int> rating(1, 5);
    for (int k = 0; k < 50; ++k) text << "u" << k % 7 << "\tm" << k / 7 << "\t" << rating(rng) << "\t" << 880000000 + k << "\n";
    EdgeListOptions options;
    options.binarize = true;
    const auto g = parse(text.str(), options);
    CHECK(g.total_weight() == 50.0);
    CHECK(degrees(g).actor.sum() == degrees(g).event.sum());
}

TEST_CASE("edge list round trip preserves graph and label order") {
    RngStream rng(11);
    for (int trial = 0; trial < 25; ++trial) {
        std::uniform_int_distribution<int> size(1, 9);
        const Eigen::Index m = size(rng);
        const Eigen::Index n = size(rng);
        Eigen::MatrixXd x = random_binary(m, n, 0.3, rng);
        x(0, 0) = 1.0;  // the file needs at least one edge
        std::vector<std::string> actors;
        std::vector<std::string> events;
        for (Eigen::Index i = 0; i < m; ++i) actors.push_back("a" + std::to_string((i * 7 + 3) % 97));
        for (Eigen::Index j = 0; j < n; ++j) events.push_back("e" + std::to_string((j * 5 + 1) % 89));
        std::set<std::string> ua(actors.begin(), actors.end()), ue(events.begin(), events.end());
        if (ua.size() != actors.size() || ue.size() != events.size()) continue;
        const BipartiteGraph g(x, actors, events, WeightKind::binary);
        std::ostringstream out;
        write_edge_list(g, out);
        CHECK(parse(out.str()) == g);
    }
    Eigen::MatrixXd counts(2, 3);
    counts << 3, 0, 1, 0, 0, 7;
    const BipartiteGraph c(counts, WeightKind::count);
    std::ostringstream out;
    write_edge_list(c, out);
    EdgeListOptions options;
    options.kind = WeightKind::count;
    CHECK(parse(out.str(), options) == c);
}

TEST_CASE("degree filter") {
    // actor u3 has degree 1
    const auto g = parse("u1\tm1\t1\nu1\tm2\t1\nu2\tm1\t1\nu2\tm2\t1\nu3\tm2\t1\n");
    const auto f = filter_by_degree(g, 1.0);
    CHECK(f.actor_labels() == std::vector<std::string>{"u1", "u2"});
    CHECK(f.event_labels() == std::vector<std::string>{"m1", "m2"});
    CHECK(degrees(f).event == Eigen::Vector2d(2, 2));

    CHECK(filter_by_degree(g, 0.0) == g);
    CHECK_THROWS_AS(filter_by_degree(g, 100.0), ValidationError);
}

TEST_CASE("degree filter matches a set-based oracle with planted nodes") {
    RngStream rng(21);
    Eigen::MatrixXd x = random_binary(20, 20, 0.6, rng);
    for (int j = 0; j < 20; ++j) x(3, j) = j < 2 ? 1.0 : 0.0;
    for (int i = 0; i < 20; ++i) x(i, 11) = i == 5 ? 1.0 : 0.0;
    const BipartiteGraph g(x, WeightKind::binary);
    const double k = 4.0;

    for (const FilterMode mode : {FilterMode::once, FilterMode::iterate}) {
        std::set<int> rows, cols;
        for (int i = 0; i < 20; ++i) rows.insert(i);
        for (int j = 0; j < 20; ++j) cols.insert(j);
        for (bool changed = true; changed;) {
            std::set<int> keep_rows, keep_cols;
            for (const int i : rows) {
                double d = 0;
                for (int j = 0; j < 20; ++j) if (mode == FilterMode::once || cols.count(j)) d += x(i, j);
                if (d > k) keep_rows.insert(i);
            }
            for (const int j : cols) {
                double b = 0;
                for (int i = 0; i < 20; ++i) if (mode == FilterMode::once || rows.count(i)) b += x(i, j);
                if (b > k) keep_cols.insert(j);
            }
            changed = mode == FilterMode::iterate && (keep_rows != rows || keep_cols != cols);
            rows = keep_rows;
            cols = keep_cols;
        }
        const auto f = filter_by_degree(g, k, mode);
        REQUIRE(f.actors() == static_cast<Eigen::Index>(rows.size()));
        REQUIRE(f.events() == static_cast<Eigen::Index>(cols.size()));
        CHECK(rows.count(3) == 0);
        CHECK(cols.count(11) == 0);
        Eigen::Index r = 0;
        for (const int i : rows) {
            Eigen::Index c = 0;
            CHECK(f.actor_labels()[static_cast<std::size_t>(r)] == g.actor_labels()[static_cast<std::size_t>(i)]);
            for (const int j : cols) CHECK(f.weight(r, c++) == x(i, j));
            ++r;
        }
        if (mode == FilterMode::iterate) {
            CHECK(degrees(f).actor.minCoeff() > k);
            CHECK(degrees(f).event.minCoeff() > k);
        }
    }
}

TEST_CASE("attribute tables") {
    const auto t = table("id\tsex\tage\na\tM\t20\nb\tF\t40\n");
    CHECK(t.value("b", "sex") == "F");
    CHECK_THROWS_AS(t.value("c", "sex"), ValidationError);
    CHECK_THROWS_AS(t.value("a", "height"), ConfigError);
    CHECK_THROWS_AS(table("id\tsex\na\tM\na\tF\n"), ParseError);
    CHECK_THROWS_AS(t.require_covers({"a", "z"}, "actor"), ValidationError);
}

TEST_CASE("single match covariate") {
    const BipartiteGraph g(Eigen::MatrixXd::Ones(2, 2), {"a", "b"}, {"x", "y"}, WeightKind::binary);
    const auto actors = table("id\tclass\na\tA\nb\tB\n");
    const auto events = table("id\ttag\nx\tt1\ny\tt2\n");
    const auto spec = parse_mapping_spec(R"({"mappings":[{"name":"m","actor_attribute":"class",
        "event_attribute":"tag","event_value_groups":{"t1":"A","t2":"B"}}]})");
    const auto z = build_match_covariates(g, actors, events, spec);
    CHECK(z.dim() == 1);
    CHECK(z.layer(0)(0, 0) == 1.0);  // class A, group(A)
    CHECK(z.layer(0)(0, 1) == 0.0);  // class A, group(B)
    CHECK(z.layer(0)(1, 1) == 1.0);

    const auto unmapped = table("id\ttag\nx\tt1\ny\tt9\n");
    CHECK_THROWS_WITH_AS(build_match_covariates(g, actors, unmapped, spec), doctest::Contains("t9"), ConfigError);
}

TEST_CASE("two-mapping 3x3 tensor against a hand table") {
    const BipartiteGraph g(Eigen::MatrixXd::Ones(3, 3), {"u1", "u2", "u3"}, {"f1", "f2", "f3"}, WeightKind::binary);
    const auto actors = table("id\tsex\tage\nu1\tM\t15\nu2\tF\t30\nu3\tM\t60\n");
    const auto events = table("id\tgenres\nf1\tAction\nf2\tRomance|Animation\nf3\tWar|Drama\n");
    const auto spec = parse_mapping_spec(R"({"mappings":[
        {"name":"sex","actor_attribute":"sex","event_attribute":"genres",
         "event_value_groups":{"Action":"M","War":"M","Romance":"F","Animation":"F","Drama":"F"}},
        {"name":"age","actor_attribute":"age","actor_bins":{"edges":[18,55],"labels":["young","adult","senior"]},
         "event_attribute":"genres",
         "event_value_groups":{"Action":"adult","War":"senior","Romance":"adult","Animation":"young","Drama":"adult"}}]})");
    const auto z = build_match_covariates(g, actors, events, spec);
    Eigen::Matrix3d sex;
    sex << 1, 0, 1,   // u1 M: Action(M), Romance|Animation(F,F), War|Drama(M,F)
           0, 1, 1,   // u2 F
           1, 0, 1;   // u3 M
    Eigen::Matrix3d age;
    age << 0, 1, 0,   // u1 young: only Animation is young
           1, 1, 1,   // u2 adult: Action, Romance, Drama
           0, 0, 1;   // u3 senior: War
    CHECK(z.layer(0) == Eigen::MatrixXd(sex));
    CHECK(z.layer(1) == Eigen::MatrixXd(age));
    CHECK(z.bound() == 1.0);
}

TEST_CASE("mapping spec errors") {
    CHECK_THROWS_AS(parse_mapping_spec("{"), ConfigError);
    CHECK_THROWS_AS(parse_mapping_spec(R"({"mappings":[{"name":"x"}]})"), ConfigError);
    CHECK_THROWS_AS(parse_mapping_spec(R"({"mappings":[{"name":"x","actor_attribute":"a","event_attribute":"b",
        "event_value_groups":{},"actor_bins":{"edges":[1,2],"labels":["p"]}}]})"), ConfigError);
}

TEST_CASE("covariate tensor bound and shape") {
    Eigen::MatrixXd layer = Eigen::MatrixXd::Constant(2, 3, 0.5);
    CHECK_NOTHROW(CovariateTensor(2, 3, {layer}, 1.0));
    layer(1, 2) = 2.0;
    CHECK_THROWS_AS(CovariateTensor(2, 3, {layer}, 1.0), ValidationError);
    CHECK_THROWS_AS(CovariateTensor(2, 2, {layer}, 5.0), ValidationError);
    const auto none = CovariateTensor::none(2, 3);
    CHECK(none.dim() == 0);
    CHECK(none.contract(Eigen::VectorXd(0)).isZero());
}

TEST_CASE("ratings fixture plants exactly the removable nodes") {
    const auto dir = std::filesystem::temp_directory_path() / "bipnet_fixture_unit";
    std::filesystem::remove_all(dir);
    FixtureOptions options;
    options.seed = 3;
    const auto files = write_ratings_fixture(dir, options);
    EdgeListOptions edge_options;
    edge_options.binarize = true;
    const auto g = load_edge_list(files.ratings, edge_options);
    CHECK(g.total_weight() == static_cast<double>(files.ratings_count));
    CHECK(g.actors() == options.users + options.planted_users);
    CHECK(g.events() == options.movies + options.planted_movies);
    const auto f = filter_by_degree(g, options.planted_max_degree);
    std::set<std::string> removed_actors, removed_events;
    const std::set<std::string> kept_a(f.actor_labels().begin(), f.actor_labels().end());
    const std::set<std::string> kept_e(f.event_labels().begin(), f.event_labels().end());
    for (const auto& a : g.actor_labels()) if (!kept_a.count(a)) removed_actors.insert(a);
    for (const auto& e : g.event_labels()) if (!kept_e.count(e)) removed_events.insert(e);
    CHECK(removed_actors == std::set<std::string>(files.planted_users.begin(), files.planted_users.end()));
    CHECK(removed_events == std::set<std::string>(files.planted_movies.begin(), files.planted_movies.end()));
    std::filesystem::remove_all(dir);
}
