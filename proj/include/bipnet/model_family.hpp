#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "bipnet/rng.hpp"

namespace bipnet {

enum class Support { binary, count, continuous_nonnegative };

/// Edge-weight distribution f(x | eta) indexed by the linear predictor
/// eta = alpha_i + beta_j + z_ij' gamma.
///
/// Implementations are immutable; random state lives in the caller's stream.
class ModelFamily {
public:
    virtual ~ModelFamily() = default;

    virtual std::string_view name() const noexcept = 0;
    virtual Support support() const noexcept = 0;
    virtual bool exponential_family() const noexcept = 0;

    virtual double mean(double eta) const = 0;
    virtual double mean_d1(double eta) const = 0;
    virtual double mean_d2(double eta) const = 0;
    virtual double mean_d3(double eta) const = 0;
    virtual double variance(double eta) const = 0;
    virtual double sample(double eta, RngStream& rng) const = 0;

    // Only the likelihood oracle in the test suite uses this.
    virtual double log_density(double x, double eta) const = 0;
};

/// Logistic (Bernoulli) edges. eta is clamped to [-35, 35] before
/// exponentiation; beyond that the mean is saturated in double precision.
class LogisticFamily final : public ModelFamily {
public:
    static constexpr double kClamp = 35.0;

    std::string_view name() const noexcept override { return "logistic"; }
    Support support() const noexcept override { return Support::binary; }
    bool exponential_family() const noexcept override { return true; }

    double mean(double eta) const override;
    double mean_d1(double eta) const override;
    double mean_d2(double eta) const override;
    double mean_d3(double eta) const override;
    double variance(double eta) const override;
    double sample(double eta, RngStream& rng) const override;
    double log_density(double x, double eta) const override;
};

/// Poisson counts with log link. eta > 30 raises DomainError.
class PoissonFamily final : public ModelFamily {
public:
    static constexpr double kMaxEta = 30.0;

    std::string_view name() const noexcept override { return "poisson"; }
    Support support() const noexcept override { return Support::count; }
    bool exponential_family() const noexcept override { return true; }

    double mean(double eta) const override;
    double mean_d1(double eta) const override { return mean(eta); }
    double mean_d2(double eta) const override { return mean(eta); }
    double mean_d3(double eta) const override { return mean(eta); }
    double variance(double eta) const override { return mean(eta); }
    double sample(double eta, RngStream& rng) const override;
    double log_density(double x, double eta) const override;
};

/// "logistic" | "poisson"; anything else is a ConfigError.
std::shared_ptr<const ModelFamily> make_family(std::string_view name);

} // namespace bipnet
