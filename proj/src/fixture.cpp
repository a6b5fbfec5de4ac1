#include "bipnet/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "bipnet/errors.hpp"
#include "bipnet/model_family.hpp"
#include "bipnet/network_data.hpp"
#include "bipnet/rng.hpp"

namespace bipnet {

namespace {

const std::vector<std::string>& genres() {
    static const std::vector<std::string> list{
        "Action",   "Adventure", "Animation", "Children's", "Comedy",  "Crime",   "Documentary", "Drama",   "Fantasy",
        "Film-Noir", "Horror",   "Musical",   "Mystery",    "Romance", "Sci-Fi",  "Thriller",    "War",     "Western"};
    return list;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    return out;
}

} // namespace

std::string default_genre_mapping_json() {
    return R"({
  "mappings": [
    {
      "name": "sex_genre_match",
      "actor_attribute": "sex",
      "event_attribute": "genres",
      "event_value_groups": {
        "Action": "M", "Adventure": "M", "Crime": "M", "Film-Noir": "M", "Horror": "M", "Mystery": "M",
        "Sci-Fi": "M", "Thriller": "M", "War": "M", "Western": "M",
        "Animation": "F", "Children's": "F", "Comedy": "F", "Documentary": "F", "Drama": "F",
        "Fantasy": "F", "Musical": "F", "Romance": "F"
      }
    },
    {
      "name": "age_genre_match",
      "actor_attribute": "age",
      "actor_bins": {"edges": [18, 55], "labels": ["young", "adult", "senior"]},
      "event_attribute": "genres",
      "event_value_groups": {
        "Animation": "young", "Children's": "young", "Fantasy": "young", "Sci-Fi": "young", "Adventure": "young",
        "Comedy": "young", "Action": "adult", "Crime": "adult", "Horror": "adult", "Thriller": "adult",
        "Mystery": "adult", "Romance": "adult", "Drama": "adult", "Documentary": "senior", "Film-Noir": "senior",
        "Musical": "senior", "War": "senior", "Western": "senior"
      }
    }
  ]
}
)";
}

FixtureFiles write_ratings_fixture(const std::filesystem::path& dir, const FixtureOptions& options) {
    if (options.users < 3 || options.movies < 3) throw ConfigError("fixture needs at least 3 users and 3 movies");
    if (options.planted_max_degree < 1) throw ConfigError("planted_max_degree must be positive");
    std::filesystem::create_directories(dir);
    RngStream rng(mix_seed(options.seed, 0));

    const int nu = options.users + options.planted_users;
    const int nm = options.movies + options.planted_movies;
    // Planted nodes are interleaved so they are not simply the last rows.
    std::vector<bool> planted_user(static_cast<std::size_t>(nu), false);
    std::vector<bool> planted_movie(static_cast<std::size_t>(nm), false);
    for (int k = 0; k < options.planted_users; ++k) planted_user[static_cast<std::size_t>((k * nu) / std::max(1, options.planted_users) + 1) % nu] = true;
    for (int k = 0; k < options.planted_movies; ++k) planted_movie[static_cast<std::size_t>((k * nm) / std::max(1, options.planted_movies) + 2) % nm] = true;

    std::vector<std::string> user_ids;
    std::vector<std::string> movie_ids;
    std::vector<std::string> sex(static_cast<std::size_t>(nu));
    std::vector<int> age(static_cast<std::size_t>(nu));
    std::vector<std::string> movie_genres(static_cast<std::size_t>(nm));
    std::bernoulli_distribution male(0.5);
    std::discrete_distribution<int> age_class({0.30, 0.45, 0.25});
    std::uniform_int_distribution<int> genre_pick(0, static_cast<int>(genres().size()) - 1);
    std::uniform_int_distribution<int> genre_count(1, 2);

    for (int i = 0; i < nu; ++i) {
        user_ids.push_back(std::to_string(i + 1));
        sex[static_cast<std::size_t>(i)] = male(rng) ? "M" : "F";
        const int cls = age_class(rng);
        std::uniform_int_distribution<int> years(cls == 0 ? 12 : cls == 1 ? 19 : 56, cls == 0 ? 18 : cls == 1 ? 55 : 75);
        age[static_cast<std::size_t>(i)] = years(rng);
    }
    for (int j = 0; j < nm; ++j) {
        movie_ids.push_back(std::to_string(j + 1));
        std::set<int> picks;
        const int count = genre_count(rng);
        while (static_cast<int>(picks.size()) < count) picks.insert(genre_pick(rng));
        std::string joined;
        for (const int g : picks) joined += (joined.empty() ? "" : "|") + genres()[static_cast<std::size_t>(g)];
        movie_genres[static_cast<std::size_t>(j)] = joined;
    }

    FixtureFiles files;
    files.ratings = dir / "ratings.tsv";
    files.users = dir / "users.tsv";
    files.movies = dir / "movies.tsv";
    files.mapping = dir / "mapping.json";
    files.planted = dir / "planted.tsv";
    {
        auto out = open_output(files.users);
        out << "user_id\tsex\tage\n";
        for (int i = 0; i < nu; ++i) out << user_ids[static_cast<std::size_t>(i)] << '\t' << sex[static_cast<std::size_t>(i)] << '\t' << age[static_cast<std::size_t>(i)] << '\n';
    }
    {
        auto out = open_output(files.movies);
        out << "movie_id\tgenres\n";
        for (int j = 0; j < nm; ++j) out << movie_ids[static_cast<std::size_t>(j)] << '\t' << movie_genres[static_cast<std::size_t>(j)] << '\n';
    }
    {
        auto out = open_output(files.mapping);
        out << default_genre_mapping_json();
    }

    // Covariates over the full node sets, built through the same path the CLI uses.
    Eigen::MatrixXd placeholder = Eigen::MatrixXd::Zero(nu, nm);
    const BipartiteGraph shape(placeholder, user_ids, movie_ids, WeightKind::binary);
    const NodeAttributeTable users_table(
        {"user_id", "sex", "age"}, [&] {
            std::map<std::string, std::vector<std::string>> rows;
            for (int i = 0; i < nu; ++i) rows[user_ids[static_cast<std::size_t>(i)]] = {sex[static_cast<std::size_t>(i)], std::to_string(age[static_cast<std::size_t>(i)])};
            return rows;
        }());
    const NodeAttributeTable movies_table(
        {"movie_id", "genres"}, [&] {
            std::map<std::string, std::vector<std::string>> rows;
            for (int j = 0; j < nm; ++j) rows[movie_ids[static_cast<std::size_t>(j)]] = {movie_genres[static_cast<std::size_t>(j)]};
            return rows;
        }());
    const CovariateTensor z =
        build_match_covariates(shape, users_table, movies_table, parse_mapping_spec(default_genre_mapping_json()));

    const LogisticFamily logistic;
    std::normal_distribution<double> spread(0.0, 0.5);
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(nu, nm);
    Eigen::VectorXd alpha(nu);
    Eigen::VectorXd beta(nm);
    for (int i = 0; i < nu; ++i) alpha(i) = -0.2 + spread(rng);
    for (int j = 0; j < nm; ++j) beta(j) = spread(rng);
    for (int i = 0; i < nu; ++i) {
        for (int j = 0; j < nm; ++j) {
            if (planted_user[static_cast<std::size_t>(i)] || planted_movie[static_cast<std::size_t>(j)]) continue;
            const double eta = alpha(i) + beta(j) + options.gamma_sex * z.layer(0)(i, j) + options.gamma_age * z.layer(1)(i, j);
            x(i, j) = logistic.sample(eta, rng);
        }
    }

    // Planted nodes rate a handful of regular nodes only.
    std::uniform_int_distribution<int> planted_degree(1, options.planted_max_degree);
    std::vector<int> regular_users;
    std::vector<int> regular_movies;
    for (int i = 0; i < nu; ++i) if (!planted_user[static_cast<std::size_t>(i)]) regular_users.push_back(i);
    for (int j = 0; j < nm; ++j) if (!planted_movie[static_cast<std::size_t>(j)]) regular_movies.push_back(j);
    for (int i = 0; i < nu; ++i) {
        if (!planted_user[static_cast<std::size_t>(i)]) continue;
        auto pool = regular_movies;
        std::shuffle(pool.begin(), pool.end(), rng);
        const int k = planted_degree(rng);
        for (int t = 0; t < k; ++t) x(i, pool[static_cast<std::size_t>(t)]) = 1.0;
        files.planted_users.push_back(user_ids[static_cast<std::size_t>(i)]);
    }
    for (int j = 0; j < nm; ++j) {
        if (!planted_movie[static_cast<std::size_t>(j)]) continue;
        auto pool = regular_users;
        std::shuffle(pool.begin(), pool.end(), rng);
        const int k = planted_degree(rng);
        for (int t = 0; t < k; ++t) x(pool[static_cast<std::size_t>(t)], j) = 1.0;
        files.planted_movies.push_back(movie_ids[static_cast<std::size_t>(j)]);
    }

    // Top up any regular node that landed at or below the planted ceiling, and
    // keep every regular node off the all-ones boundary.
    const double ceiling = options.planted_max_degree;
    for (const int i : regular_users) {
        for (const int j : regular_movies) {
            if (x.row(i).sum() > ceiling) break;
            x(i, j) = 1.0;
        }
        if (x.row(i).sum() >= static_cast<double>(nm)) x(i, regular_movies.front()) = 0.0;
    }
    for (const int j : regular_movies) {
        for (const int i : regular_users) {
            if (x.col(j).sum() > ceiling) break;
            x(i, j) = 1.0;
        }
    }

    std::uniform_int_distribution<int> rating(1, 5);
    auto out = open_output(files.ratings);
    long long timestamp = 874724710;
    for (int i = 0; i < nu; ++i) {
        for (int j = 0; j < nm; ++j) {
            if (x(i, j) == 0.0) continue;
            out << user_ids[static_cast<std::size_t>(i)] << '\t' << movie_ids[static_cast<std::size_t>(j)] << '\t'
                << rating(rng) << '\t' << timestamp++ << '\n';
            ++files.ratings_count;
        }
    }
    auto planted_out = open_output(files.planted);
    planted_out << "side\tlabel\n";
    for (const auto& u : files.planted_users) planted_out << "actor\t" << u << '\n';
    for (const auto& m : files.planted_movies) planted_out << "event\t" << m << '\n';
    return files;
}

} // namespace bipnet
