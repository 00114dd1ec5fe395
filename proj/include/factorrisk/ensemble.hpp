/**
 * @file ensemble.hpp
 * @brief Asset ensembles, factor series and the scalar ensemble averages.
 *
 * Residual variances v_i and factor loadings b_i are drawn from a
 * DistributionSpec each; the common factor f_mu from a zero-mean spec that
 * may be autocorrelated. Every closed form downstream consumes the averages
 * collected in EnsembleMoments:
 *
 *   m1 = <b/v>/<1/v>        V1 = <b^2/v>/<1/v> - m1^2
 *   m2 = <b/v^2>/<1/v^2>    V2 = <b^2/v^2>/<1/v^2> - m2^2
 *   m  = m1 / (1 + F V1 <1/v>)
 *   C  = F^2 m^2 V2 <1/v^2> + <1/v^2>/<1/v>^2 (1 + F m (m1 - m2) <1/v>)^2
 *
 * where <.> is the average over assets and F the mean square of f.
 */
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "factorrisk/errors.hpp"
#include "factorrisk/rng.hpp"

namespace factorrisk {

enum class Family { constant, two_point, uniform, gaussian, lognormal, ar1_gaussian };

std::string to_string(Family family);
Family family_from_string(const std::string& name);

namespace dist {
struct Constant {
    double value = 0.0;
    friend bool operator==(const Constant&, const Constant&) = default;
};
struct TwoPoint {
    double value_a = 0.0;
    double value_b = 0.0;
    double prob_a = 0.5;
    friend bool operator==(const TwoPoint&, const TwoPoint&) = default;
};
struct Uniform {
    double lo = 0.0;
    double hi = 0.0;
    friend bool operator==(const Uniform&, const Uniform&) = default;
};
struct Gaussian {
    double mean = 0.0;
    double sd = 1.0;
    friend bool operator==(const Gaussian&, const Gaussian&) = default;
};
struct LogNormal {
    double log_mean = 0.0;
    double log_sd = 0.0;
    friend bool operator==(const LogNormal&, const LogNormal&) = default;
};
struct Ar1Gaussian {
    double innovation_sd = 1.0;
    double rho = 0.0;
    friend bool operator==(const Ar1Gaussian&, const Ar1Gaussian&) = default;
};
}  // namespace dist

/// A validated distribution family with its parameters.
class DistributionSpec {
public:
    using Params = std::variant<dist::Constant, dist::TwoPoint, dist::Uniform, dist::Gaussian,
                                dist::LogNormal, dist::Ar1Gaussian>;

    static DistributionSpec constant(double value);
    static DistributionSpec two_point(double value_a, double value_b, double prob_a = 0.5);
    static DistributionSpec uniform(double lo, double hi);
    static DistributionSpec gaussian(double mean, double sd);
    static DistributionSpec lognormal(double log_mean, double log_sd);
    static DistributionSpec ar1_gaussian(double innovation_sd, double rho);

    Family family() const;
    const Params& params() const { return params_; }

    /// True when every draw is strictly positive.
    bool positive_support() const;
    /// Analytic mean (stationary mean for ar1_gaussian).
    double mean() const;
    double variance() const;
    double second_moment() const { return variance() + mean() * mean(); }
    /// E[X^-k] for k = 1, 2; requires positive support.
    double inverse_moment(int k) const;
    /// True when the law is a finite set of atoms (constant, two_point).
    bool discrete() const;

    /// The spec of c*X, c >= 0.
    DistributionSpec scaled(double c) const;

    /// Independent draw. Not valid for ar1_gaussian (temporal family).
    double sample(RngStream& rng) const;

    friend bool operator==(const DistributionSpec&, const DistributionSpec&) = default;

private:
    explicit DistributionSpec(Params p) : params_(p) {}
    Params params_;
};

void to_json(nlohmann::json& j, const DistributionSpec& spec);
/// Strict: unknown or missing keys raise ConfigError.
DistributionSpec spec_from_json(const nlohmann::json& j);

/// Realized residual variances and factor loadings of N assets.
class AssetEnsemble {
public:
    AssetEnsemble(std::vector<double> v, std::vector<double> b);

    std::size_t size() const { return v_.size(); }
    std::span<const double> v() const { return v_; }
    std::span<const double> b() const { return b_; }

private:
    std::vector<double> v_;
    std::vector<double> b_;
};

/// Realized macroeconomic indicator sequence and its mean square.
class FactorSeries {
public:
    explicit FactorSeries(std::vector<double> f);

    std::size_t size() const { return f_.size(); }
    std::span<const double> f() const { return f_; }
    double F() const { return F_; }

private:
    std::vector<double> f_;
    double F_;
};

/// Discrete probability measure over (b, v) pairs. The empirical measure of
/// an ensemble puts weight 1/N on each asset; discrete analytic specs give
/// their exact atoms.
class AssetMeasure {
public:
    struct Atom {
        double b;
        double v;
        double weight;
    };

    explicit AssetMeasure(std::vector<Atom> atoms);

    static AssetMeasure empirical(const AssetEnsemble& ensemble);
    /// Product measure of two discrete specs; nullopt if either is continuous.
    static std::optional<AssetMeasure> analytic(const DistributionSpec& v_spec,
                                                const DistributionSpec& b_spec);

    std::span<const Atom> atoms() const { return atoms_; }

    template <class Fn>
    auto average(Fn&& g) const
    {
        decltype(g(0.0, 1.0)) acc{};
        for (const auto& a : atoms_) acc += a.weight * g(a.b, a.v);
        return acc;
    }

private:
    std::vector<Atom> atoms_;
};

struct EnsembleMoments {
    double inv_v = 0.0;   // <v^-1>
    double inv_v2 = 0.0;  // <v^-2>
    double m1 = 0.0;
    double V1 = 0.0;
    double m2 = 0.0;
    double V2 = 0.0;
    double F = 0.0;
    double m = 0.0;
    double C = 0.0;
};

/// Builds the F-dependent moments (m, C) from the F-independent averages.
EnsembleMoments moments_from_averages(double inv_v, double inv_v2, double m1, double V1,
                                      double m2, double V2, double F);
/// Same averages at a different factor strength.
EnsembleMoments with_factor_strength(const EnsembleMoments& moments, double F);

EnsembleMoments compute_moments(const AssetMeasure& measure, double F);
EnsembleMoments compute_moments(const AssetEnsemble& ensemble, double F);
/// Moments of the infinite-N limit for independent v and b specs.
EnsembleMoments analytic_moments(const DistributionSpec& v_spec, const DistributionSpec& b_spec,
                                 double F);

void to_json(nlohmann::json& j, const EnsembleMoments& m);

/// Mean of f^2. Throws ConfigError on an empty sequence.
double compute_F(std::span<const double> f);

AssetEnsemble sample_ensemble(const DistributionSpec& v_spec, const DistributionSpec& b_spec,
                              std::size_t N, std::uint64_t seed);

/// AR(1) series start from the stationary law, so F carries no burn-in bias.
FactorSeries sample_factors(const DistributionSpec& f_spec, std::size_t p, std::uint64_t seed);

/// Analytic mean square of a zero-mean factor spec.
double analytic_F(const DistributionSpec& f_spec);

}  // namespace factorrisk
