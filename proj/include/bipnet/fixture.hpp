#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace bipnet {

/// Offline stand-in for a ratings data set: users with sex and age, movies
/// with genre sets, and a binary who-rated-what graph drawn from the logistic
/// model with two attribute-match covariates. A few planted users and movies
/// get at most `planted_max_degree` ratings; every other node gets more.
struct FixtureOptions {
    int users = 200;
    int movies = 150;
    int planted_users = 6;
    int planted_movies = 6;
    int planted_max_degree = 10;
    double gamma_sex = 0.35;
    double gamma_age = 0.25;
    std::uint64_t seed = 7;
};

struct FixtureFiles {
    std::filesystem::path ratings;   // user \t movie \t rating \t timestamp
    std::filesystem::path users;     // user_id \t sex \t age
    std::filesystem::path movies;    // movie_id \t genres (| separated)
    std::filesystem::path mapping;   // JSON mapping spec
    std::filesystem::path planted;   // side \t label
    std::vector<std::string> planted_users;
    std::vector<std::string> planted_movies;
    std::size_t ratings_count = 0;
};

FixtureFiles write_ratings_fixture(const std::filesystem::path& dir, const FixtureOptions& options = {});

/// The genre-to-group mapping used by the fixture: one sex-match and one
/// age-class-match covariate over the 18 standard genres.
std::string default_genre_mapping_json();

} // namespace bipnet
