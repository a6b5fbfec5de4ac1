#include "bipnet/model_family.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bipnet/errors.hpp"

namespace bipnet {

namespace {

void require_finite(double eta) {
    if (!std::isfinite(eta)) {
        throw DomainError("linear predictor is not finite");
    }
}

double logistic_mean(double eta) {
    require_finite(eta);
    const double t = std::clamp(eta, -LogisticFamily::kClamp, LogisticFamily::kClamp);
    // Evaluate through exp(-|t|) so neither branch overflows.
    if (t >= 0.0) {
        return 1.0 / (1.0 + std::exp(-t));
    }
    const double e = std::exp(t);
    return e / (1.0 + e);
}

} // namespace

double LogisticFamily::mean(double eta) const { return logistic_mean(eta); }

double LogisticFamily::mean_d1(double eta) const {
    const double y = logistic_mean(eta);
    return y * (1.0 - y);
}

double LogisticFamily::mean_d2(double eta) const {
    const double y = logistic_mean(eta);
    return y * (1.0 - y) * (1.0 - 2.0 * y);
}

double LogisticFamily::mean_d3(double eta) const {
    const double y = logistic_mean(eta);
    return y * (1.0 - y) * (1.0 - 6.0 * y + 6.0 * y * y);
}

double LogisticFamily::variance(double eta) const { return mean_d1(eta); }

double LogisticFamily::sample(double eta, RngStream& rng) const {
    std::bernoulli_distribution draw(logistic_mean(eta));
    return draw(rng) ? 1.0 : 0.0;
}

double LogisticFamily::log_density(double x, double eta) const {
    require_finite(eta);
    if (x != 0.0 && x != 1.0) {
        throw DomainError("logistic edge weight must be 0 or 1, got " + std::to_string(x));
    }
    // log(1 + e^eta), stable on both tails
    const double softplus = eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
    return x * eta - softplus;
}

double PoissonFamily::mean(double eta) const {
    require_finite(eta);
    if (eta > kMaxEta) {
        throw DomainError("Poisson linear predictor " + std::to_string(eta) + " exceeds " +
                          std::to_string(kMaxEta));
    }
    return std::exp(eta);
}

double PoissonFamily::sample(double eta, RngStream& rng) const {
    std::poisson_distribution<long long> draw(mean(eta));
    return static_cast<double>(draw(rng));
}

double PoissonFamily::log_density(double x, double eta) const {
    if (!(x >= 0.0) || std::floor(x) != x) {
        throw DomainError("Poisson edge weight must be a nonnegative integer, got " + std::to_string(x));
    }
    return x * eta - mean(eta) - std::lgamma(x + 1.0);
}

std::shared_ptr<const ModelFamily> make_family(std::string_view name) {
    if (name == "logistic") return std::make_shared<LogisticFamily>();
    if (name == "poisson") return std::make_shared<PoissonFamily>();
    throw ConfigError("unknown family '" + std::string(name) + "' (expected logistic|poisson)");
}

} // namespace bipnet
