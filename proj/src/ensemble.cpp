#include "factorrisk/ensemble.hpp"

#include <cmath>
#include <set>

#include "factorrisk/errors.hpp"

namespace factorrisk {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void require(bool ok, const std::string& msg)
{
    if (!ok) throw ConfigError(msg);
}

void require_finite(std::initializer_list<double> xs, const char* family)
{
    for (double x : xs)
        require(std::isfinite(x), std::string(family) + ": parameters must be finite");
}

}  // namespace

std::string to_string(Family family)
{
    switch (family) {
    case Family::constant: return "constant";
    case Family::two_point: return "two_point";
    case Family::uniform: return "uniform";
    case Family::gaussian: return "gaussian";
    case Family::lognormal: return "lognormal";
    case Family::ar1_gaussian: return "ar1_gaussian";
    }
    return "unknown";
}

Family family_from_string(const std::string& name)
{
    for (Family f : {Family::constant, Family::two_point, Family::uniform, Family::gaussian,
                     Family::lognormal, Family::ar1_gaussian}) {
        if (to_string(f) == name) return f;
    }
    throw ConfigError("unknown distribution family '" + name + "'");
}

// ---------------------------------------------------------------------------
// DistributionSpec

DistributionSpec DistributionSpec::constant(double value)
{
    require_finite({value}, "constant");
    return DistributionSpec(dist::Constant{value});
}

DistributionSpec DistributionSpec::two_point(double value_a, double value_b, double prob_a)
{
    require_finite({value_a, value_b, prob_a}, "two_point");
    require(prob_a >= 0.0 && prob_a <= 1.0, "two_point: prob_a must lie in [0, 1]");
    return DistributionSpec(dist::TwoPoint{value_a, value_b, prob_a});
}

DistributionSpec DistributionSpec::uniform(double lo, double hi)
{
    require_finite({lo, hi}, "uniform");
    require(lo <= hi, "uniform: lo must not exceed hi");
    return DistributionSpec(dist::Uniform{lo, hi});
}

DistributionSpec DistributionSpec::gaussian(double mean, double sd)
{
    require_finite({mean, sd}, "gaussian");
    require(sd >= 0.0, "gaussian: sd must be nonnegative");
    return DistributionSpec(dist::Gaussian{mean, sd});
}

DistributionSpec DistributionSpec::lognormal(double log_mean, double log_sd)
{
    require_finite({log_mean, log_sd}, "lognormal");
    require(log_sd >= 0.0, "lognormal: log_sd must be nonnegative");
    return DistributionSpec(dist::LogNormal{log_mean, log_sd});
}

DistributionSpec DistributionSpec::ar1_gaussian(double innovation_sd, double rho)
{
    require_finite({innovation_sd, rho}, "ar1_gaussian");
    require(innovation_sd >= 0.0, "ar1_gaussian: innovation_sd must be nonnegative");
    require(std::abs(rho) < 1.0, "ar1_gaussian: |rho| must be < 1");
    return DistributionSpec(dist::Ar1Gaussian{innovation_sd, rho});
}

Family DistributionSpec::family() const
{
    return static_cast<Family>(params_.index());
}

bool DistributionSpec::positive_support() const
{
    return std::visit(
        overloaded{
            [](const dist::Constant& d) { return d.value > 0.0; },
            [](const dist::TwoPoint& d) {
                return (d.prob_a == 0.0 || d.value_a > 0.0) && (d.prob_a == 1.0 || d.value_b > 0.0);
            },
            [](const dist::Uniform& d) { return d.lo > 0.0; },
            [](const dist::Gaussian&) { return false; },
            [](const dist::LogNormal&) { return true; },
            [](const dist::Ar1Gaussian&) { return false; },
        },
        params_);
}

double DistributionSpec::mean() const
{
    return std::visit(
        overloaded{
            [](const dist::Constant& d) { return d.value; },
            [](const dist::TwoPoint& d) { return d.prob_a * d.value_a + (1.0 - d.prob_a) * d.value_b; },
            [](const dist::Uniform& d) { return 0.5 * (d.lo + d.hi); },
            [](const dist::Gaussian& d) { return d.mean; },
            [](const dist::LogNormal& d) { return std::exp(d.log_mean + 0.5 * d.log_sd * d.log_sd); },
            [](const dist::Ar1Gaussian&) { return 0.0; },
        },
        params_);
}

double DistributionSpec::variance() const
{
    return std::visit(
        overloaded{
            [](const dist::Constant&) { return 0.0; },
            [](const dist::TwoPoint& d) {
                const double diff = d.value_a - d.value_b;
                return d.prob_a * (1.0 - d.prob_a) * diff * diff;
            },
            [](const dist::Uniform& d) { return (d.hi - d.lo) * (d.hi - d.lo) / 12.0; },
            [](const dist::Gaussian& d) { return d.sd * d.sd; },
            [](const dist::LogNormal& d) {
                const double s2 = d.log_sd * d.log_sd;
                return std::expm1(s2) * std::exp(2.0 * d.log_mean + s2);
            },
            [](const dist::Ar1Gaussian& d) {
                return d.innovation_sd * d.innovation_sd / (1.0 - d.rho * d.rho);
            },
        },
        params_);
}

double DistributionSpec::inverse_moment(int k) const
{
    require(k == 1 || k == 2, "inverse_moment: k must be 1 or 2");
    require(positive_support(), to_string(family()) + ": inverse moments need positive support");
    return std::visit(
        overloaded{
            [k](const dist::Constant& d) { return std::pow(d.value, -k); },
            [k](const dist::TwoPoint& d) {
                double acc = 0.0;
                if (d.prob_a > 0.0) acc += d.prob_a * std::pow(d.value_a, -k);
                if (d.prob_a < 1.0) acc += (1.0 - d.prob_a) * std::pow(d.value_b, -k);
                return acc;
            },
            [k](const dist::Uniform& d) {
                if (d.hi == d.lo) return std::pow(d.lo, -k);
                if (k == 1) return std::log(d.hi / d.lo) / (d.hi - d.lo);
                return 1.0 / (d.lo * d.hi);
            },
            [](const dist::Gaussian&) { return 0.0; },
            [k](const dist::LogNormal& d) {
                return std::exp(-k * d.log_mean + 0.5 * k * k * d.log_sd * d.log_sd);
            },
            [](const dist::Ar1Gaussian&) { return 0.0; },
        },
        params_);
}

bool DistributionSpec::discrete() const
{
    return family() == Family::constant || family() == Family::two_point;
}

DistributionSpec DistributionSpec::scaled(double c) const
{
    require(std::isfinite(c) && c >= 0.0, "scale factor must be finite and nonnegative");
    return std::visit(
        overloaded{
            [c](const dist::Constant& d) { return constant(c * d.value); },
            [c](const dist::TwoPoint& d) { return two_point(c * d.value_a, c * d.value_b, d.prob_a); },
            [c](const dist::Uniform& d) { return uniform(c * d.lo, c * d.hi); },
            [c](const dist::Gaussian& d) { return gaussian(c * d.mean, c * d.sd); },
            [c](const dist::LogNormal& d) {
                if (c == 0.0) return constant(0.0);
                return lognormal(d.log_mean + std::log(c), d.log_sd);
            },
            [c](const dist::Ar1Gaussian& d) { return ar1_gaussian(c * d.innovation_sd, d.rho); },
        },
        params_);
}

double DistributionSpec::sample(RngStream& rng) const
{
    return std::visit(
        overloaded{
            [](const dist::Constant& d) { return d.value; },
            [&rng](const dist::TwoPoint& d) { return rng.bernoulli(d.prob_a) ? d.value_a : d.value_b; },
            [&rng](const dist::Uniform& d) { return rng.uniform(d.lo, d.hi); },
            [&rng](const dist::Gaussian& d) { return d.mean + d.sd * rng.standard_normal(); },
            [&rng](const dist::LogNormal& d) {
                return std::exp(d.log_mean + d.log_sd * rng.standard_normal());
            },
            [](const dist::Ar1Gaussian&) -> double {
                throw ConfigError("ar1_gaussian has no independent draw; use sample_factors");
            },
        },
        params_);
}

void to_json(nlohmann::json& j, const DistributionSpec& spec)
{
    j = nlohmann::json::object();
    j["family"] = to_string(spec.family());
    std::visit(overloaded{
                   [&j](const dist::Constant& d) { j["value"] = d.value; },
                   [&j](const dist::TwoPoint& d) {
                       j["value_a"] = d.value_a;
                       j["value_b"] = d.value_b;
                       j["prob_a"] = d.prob_a;
                   },
                   [&j](const dist::Uniform& d) {
                       j["lo"] = d.lo;
                       j["hi"] = d.hi;
                   },
                   [&j](const dist::Gaussian& d) {
                       j["mean"] = d.mean;
                       j["sd"] = d.sd;
                   },
                   [&j](const dist::LogNormal& d) {
                       j["log_mean"] = d.log_mean;
                       j["log_sd"] = d.log_sd;
                   },
                   [&j](const dist::Ar1Gaussian& d) {
                       j["innovation_sd"] = d.innovation_sd;
                       j["rho"] = d.rho;
                   },
               },
               spec.params());
}

DistributionSpec spec_from_json(const nlohmann::json& j)
{
    require(j.is_object(), "distribution spec must be an object");
    require(j.contains("family") && j.at("family").is_string(),
            "distribution spec needs a string 'family'");
    const Family family = family_from_string(j.at("family").get<std::string>());

    std::set<std::string> allowed{"family"};
    auto number = [&](const std::string& key, std::optional<double> fallback = std::nullopt) {
        allowed.insert(key);
        if (!j.contains(key)) {
            require(fallback.has_value(),
                    to_string(family) + ": missing required parameter '" + key + "'");
            return *fallback;
        }
        require(j.at(key).is_number(), to_string(family) + ": parameter '" + key + "' must be a number");
        return j.at(key).get<double>();
    };

    std::optional<DistributionSpec> spec;
    switch (family) {
    case Family::constant: spec = DistributionSpec::constant(number("value")); break;
    case Family::two_point: {
        const double a = number("value_a");
        const double b = number("value_b");
        spec = DistributionSpec::two_point(a, b, number("prob_a", 0.5));
        break;
    }
    case Family::uniform: {
        const double lo = number("lo");
        spec = DistributionSpec::uniform(lo, number("hi"));
        break;
    }
    case Family::gaussian: {
        const double mean = number("mean");
        spec = DistributionSpec::gaussian(mean, number("sd"));
        break;
    }
    case Family::lognormal: {
        const double mu = number("log_mean");
        spec = DistributionSpec::lognormal(mu, number("log_sd"));
        break;
    }
    case Family::ar1_gaussian: {
        const double sd = number("innovation_sd");
        spec = DistributionSpec::ar1_gaussian(sd, number("rho"));
        break;
    }
    }
    for (const auto& item : j.items()) {
        require(allowed.count(item.key()) > 0,
                to_string(family) + ": unknown parameter '" + item.key() + "'");
    }
    return *spec;
}

// ---------------------------------------------------------------------------
// Ensembles and series

AssetEnsemble::AssetEnsemble(std::vector<double> v, std::vector<double> b)
    : v_(std::move(v)), b_(std::move(b))
{
    require(!v_.empty(), "ensemble must contain at least one asset");
    require(v_.size() == b_.size(), "v and b must have the same length");
    for (std::size_t i = 0; i < v_.size(); ++i) {
        require(std::isfinite(v_[i]) && v_[i] > 0.0, "residual variances must be positive and finite");
        require(std::isfinite(b_[i]), "factor loadings must be finite");
    }
}

FactorSeries::FactorSeries(std::vector<double> f) : f_(std::move(f)), F_(compute_F(f_)) {}

double compute_F(std::span<const double> f)
{
    require(!f.empty(), "factor series must be nonempty");
    double sum = 0.0;
    for (double x : f) sum += x * x;
    return sum / static_cast<double>(f.size());
}

AssetMeasure::AssetMeasure(std::vector<Atom> atoms) : atoms_(std::move(atoms))
{
    require(!atoms_.empty(), "asset measure needs at least one atom");
    double total = 0.0;
    for (const auto& a : atoms_) {
        require(a.v > 0.0 && std::isfinite(a.v), "asset measure: v must be positive");
        require(a.weight >= 0.0, "asset measure: weights must be nonnegative");
        total += a.weight;
    }
    require(std::abs(total - 1.0) < 1e-12, "asset measure: weights must sum to 1");
}

AssetMeasure AssetMeasure::empirical(const AssetEnsemble& ensemble)
{
    const double w = 1.0 / static_cast<double>(ensemble.size());
    std::vector<Atom> atoms;
    atoms.reserve(ensemble.size());
    for (std::size_t i = 0; i < ensemble.size(); ++i)
        atoms.push_back({ensemble.b()[i], ensemble.v()[i], w});
    // Weights sum to 1 up to rounding; renormalise the last one exactly.
    double partial = 0.0;
    for (std::size_t i = 0; i + 1 < atoms.size(); ++i) partial += atoms[i].weight;
    atoms.back().weight = 1.0 - partial;
    return AssetMeasure(std::move(atoms));
}

namespace {

std::vector<std::pair<double, double>> discrete_atoms(const DistributionSpec& spec)
{
    if (const auto* c = std::get_if<dist::Constant>(&spec.params())) return {{c->value, 1.0}};
    if (const auto* t = std::get_if<dist::TwoPoint>(&spec.params())) {
        std::vector<std::pair<double, double>> out;
        if (t->prob_a > 0.0) out.emplace_back(t->value_a, t->prob_a);
        if (t->prob_a < 1.0) out.emplace_back(t->value_b, 1.0 - t->prob_a);
        return out;
    }
    return {};
}

}  // namespace

std::optional<AssetMeasure> AssetMeasure::analytic(const DistributionSpec& v_spec,
                                                   const DistributionSpec& b_spec)
{
    require(v_spec.positive_support(), "v spec must have positive support");
    if (!v_spec.discrete() || !b_spec.discrete()) return std::nullopt;
    std::vector<Atom> atoms;
    for (auto [v, pv] : discrete_atoms(v_spec))
        for (auto [b, pb] : discrete_atoms(b_spec)) atoms.push_back({b, v, pv * pb});
    return AssetMeasure(std::move(atoms));
}

// ---------------------------------------------------------------------------
// Moments

EnsembleMoments moments_from_averages(double inv_v, double inv_v2, double m1, double V1,
                                      double m2, double V2, double F)
{
    require(inv_v > 0.0 && inv_v2 > 0.0, "moments: <1/v> and <1/v^2> must be positive");
    require(F >= 0.0, "moments: F must be nonnegative");
    EnsembleMoments out;
    out.inv_v = inv_v;
    out.inv_v2 = inv_v2;
    out.m1 = m1;
    out.V1 = V1;
    out.m2 = m2;
    out.V2 = V2;
    out.F = F;
    out.m = m1 / (1.0 + F * V1 * inv_v);
    const double shift = 1.0 + F * out.m * (m1 - m2) * inv_v;
    out.C = F * F * out.m * out.m * V2 * inv_v2 + inv_v2 / (inv_v * inv_v) * shift * shift;
    return out;
}

EnsembleMoments with_factor_strength(const EnsembleMoments& m, double F)
{
    return moments_from_averages(m.inv_v, m.inv_v2, m.m1, m.V1, m.m2, m.V2, F);
}

EnsembleMoments compute_moments(const AssetMeasure& measure, double F)
{
    const double inv_v = measure.average([](double, double v) { return 1.0 / v; });
    const double inv_v2 = measure.average([](double, double v) { return 1.0 / (v * v); });
    const double m1 = measure.average([](double b, double v) { return b / v; }) / inv_v;
    const double m2 = measure.average([](double b, double v) { return b / (v * v); }) / inv_v2;
    // Centred second pass keeps V1, V2 >= 0 up to rounding of the weights.
    const double V1 = measure.average([m1](double b, double v) { return (b - m1) * (b - m1) / v; }) / inv_v;
    const double V2 =
        measure.average([m2](double b, double v) { return (b - m2) * (b - m2) / (v * v); }) / inv_v2;
    return moments_from_averages(inv_v, inv_v2, m1, V1, m2, V2, F);
}

EnsembleMoments compute_moments(const AssetEnsemble& ensemble, double F)
{
    return compute_moments(AssetMeasure::empirical(ensemble), F);
}

EnsembleMoments analytic_moments(const DistributionSpec& v_spec, const DistributionSpec& b_spec,
                                 double F)
{
    require(v_spec.family() != Family::ar1_gaussian && b_spec.family() != Family::ar1_gaussian,
            "ar1_gaussian is only valid for the factor series");
    // With v independent of b, every tilted mean/variance of b is its plain one.
    const double mean_b = b_spec.mean();
    const double var_b = b_spec.variance();
    return moments_from_averages(v_spec.inverse_moment(1), v_spec.inverse_moment(2), mean_b, var_b,
                                 mean_b, var_b, F);
}

void to_json(nlohmann::json& j, const EnsembleMoments& m)
{
    j = nlohmann::json{{"inv_v", m.inv_v}, {"inv_v2", m.inv_v2}, {"m1", m.m1}, {"V1", m.V1},
                       {"m2", m.m2},       {"V2", m.V2},         {"F", m.F},   {"m", m.m},
                       {"C", m.C}};
}

// ---------------------------------------------------------------------------
// Sampling

AssetEnsemble sample_ensemble(const DistributionSpec& v_spec, const DistributionSpec& b_spec,
                              std::size_t N, std::uint64_t seed)
{
    require(N >= 2, "ensemble size N must be at least 2");
    require(v_spec.family() != Family::ar1_gaussian && b_spec.family() != Family::ar1_gaussian,
            "ar1_gaussian is only valid for the factor series");
    require(v_spec.positive_support(),
            "residual variance spec '" + to_string(v_spec.family()) + "' has nonpositive support");

    RngStream v_rng(seed, streams::residual_variance);
    RngStream b_rng(seed, streams::factor_loading);
    std::vector<double> v(N), b(N);
    for (std::size_t i = 0; i < N; ++i) {
        v[i] = v_spec.sample(v_rng);
        b[i] = b_spec.sample(b_rng);
    }
    return AssetEnsemble(std::move(v), std::move(b));
}

FactorSeries sample_factors(const DistributionSpec& f_spec, std::size_t p, std::uint64_t seed)
{
    require(p >= 1, "number of periods p must be at least 1");
    require(f_spec.family() != Family::lognormal,
            "factor spec must have zero mean (lognormal mean is positive)");
    require(std::abs(f_spec.mean()) <= 1e-12 * (1.0 + std::sqrt(f_spec.second_moment())),
            "factor spec must have zero mean, got " + std::to_string(f_spec.mean()));

    RngStream rng(seed, streams::factor_series);
    std::vector<double> f(p);
    if (const auto* ar = std::get_if<dist::Ar1Gaussian>(&f_spec.params())) {
        const double stationary_sd = ar->innovation_sd / std::sqrt(1.0 - ar->rho * ar->rho);
        f[0] = stationary_sd * rng.standard_normal();
        for (std::size_t mu = 1; mu < p; ++mu)
            f[mu] = ar->rho * f[mu - 1] + ar->innovation_sd * rng.standard_normal();
    } else {
        for (auto& x : f) x = f_spec.sample(rng);
    }
    return FactorSeries(std::move(f));
}

double analytic_F(const DistributionSpec& f_spec)
{
    return f_spec.second_moment();
}

}  // namespace factorrisk
