#include "factorrisk/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <thread>

#include "factorrisk/rng.hpp"
#include "factorrisk/solver.hpp"

namespace factorrisk {

// ---------------------------------------------------------------------------
// Names

std::string to_string(MomentsMode mode)
{
    return mode == MomentsMode::realized_per_trial ? "realized_per_trial" : "shared_ensemble";
}

MomentsMode moments_mode_from_string(const std::string& name)
{
    if (name == "realized_per_trial") return MomentsMode::realized_per_trial;
    if (name == "shared_ensemble") return MomentsMode::shared_ensemble;
    throw ConfigError("unknown moments_mode '" + name + "'");
}

std::string to_string(ScanAxis axis)
{
    switch (axis) {
    case ScanAxis::alpha: return "alpha";
    case ScanAxis::N: return "N";
    case ScanAxis::F_scale: return "F_scale";
    }
    return "unknown";
}

ScanAxis scan_axis_from_string(const std::string& name)
{
    for (auto a : {ScanAxis::alpha, ScanAxis::N, ScanAxis::F_scale})
        if (to_string(a) == name) return a;
    throw ConfigError("unknown scan axis '" + name + "' (expected alpha, N or F_scale)");
}

std::string to_string(Quantity q)
{
    switch (q) {
    case Quantity::epsilon: return "epsilon";
    case Quantity::q_w: return "q_w";
    case Quantity::epsilon_or: return "epsilon_or";
    case Quantity::kappa: return "kappa";
    case Quantity::q_w_or: return "q_w_or";
    }
    return "unknown";
}

Quantity quantity_from_string(const std::string& name)
{
    for (auto q : {Quantity::epsilon, Quantity::q_w, Quantity::epsilon_or, Quantity::kappa,
                   Quantity::q_w_or})
        if (to_string(q) == name) return q;
    throw ConfigError("unknown quantity '" + name + "'");
}

// ---------------------------------------------------------------------------
// TrialConfig

std::size_t TrialConfig::periods() const
{
    return static_cast<std::size_t>(std::floor(alpha * static_cast<double>(N) + 0.5));
}

void TrialConfig::validate() const
{
    if (N < 2) throw ConfigError("N must be at least 2");
    if (trials < 1) throw ConfigError("trials must be at least 1");
    if (!(std::isfinite(F_scale) && F_scale >= 0.0)) throw ConfigError("F_scale must be >= 0");
    if (v_spec.family() == Family::ar1_gaussian || b_spec.family() == Family::ar1_gaussian)
        throw ConfigError("ar1_gaussian is only valid for the factor series");
    if (!v_spec.positive_support())
        throw ConfigError("v spec '" + to_string(v_spec.family()) + "' has nonpositive support");
    if (f_spec.family() == Family::lognormal || std::abs(f_spec.mean()) > 1e-12)
        throw ConfigError("factor spec must have zero mean");
    if (!(std::isfinite(alpha) && alpha > 1.0))
        throw RegimeError("alpha must exceed 1 (got " + std::to_string(alpha) + ")");
    if (periods() <= N)
        throw RegimeError("p = round(alpha N) = " + std::to_string(periods()) +
                          " must exceed N = " + std::to_string(N));
}

DistributionSpec TrialConfig::effective_factor_spec() const
{
    return F_scale == 1.0 ? f_spec : f_spec.scaled(std::sqrt(F_scale));
}

void to_json(nlohmann::json& j, const TrialConfig& c)
{
    j = nlohmann::json{{"N", c.N},
                       {"alpha", c.alpha},
                       {"v", c.v_spec},
                       {"b", c.b_spec},
                       {"f", c.f_spec},
                       {"noise", to_string(c.noise)},
                       {"trials", c.trials},
                       {"base_seed", c.base_seed},
                       {"moments_mode", to_string(c.moments_mode)},
                       {"F_scale", c.F_scale}};
}

// ---------------------------------------------------------------------------
// Trials

namespace {

// Seed tags; fixed so that a configuration always maps to the same draws.
constexpr std::uint64_t kTrialTag = 0x545249414CULL;       // "TRIAL"
constexpr std::uint64_t kSharedTag = 0x534841524544ULL;    // "SHARED"
constexpr std::uint64_t kEnsembleTag = 1;
constexpr std::uint64_t kFactorTag = 2;
constexpr std::uint64_t kNoiseTag = 3;

}  // namespace

TrialFailure::TrialFailure(std::size_t trial_index, const std::string& what)
    : DegenerateSolveError("trial " + std::to_string(trial_index) + ": " + what),
      trial_index_(trial_index)
{
}

TrialMarket generate_trial_market(const TrialConfig& config, std::size_t trial_index)
{
    config.validate();
    if (trial_index >= config.trials)
        throw ConfigError("trial index " + std::to_string(trial_index) + " out of range");

    const std::uint64_t trial_seed = derive_seed(config.base_seed, kTrialTag, trial_index);
    const std::uint64_t ensemble_seed = config.moments_mode == MomentsMode::realized_per_trial
                                            ? derive_seed(trial_seed, kEnsembleTag)
                                            : derive_seed(config.base_seed, kSharedTag);

    AssetEnsemble ensemble = sample_ensemble(config.v_spec, config.b_spec, config.N, ensemble_seed);
    FactorSeries factors = sample_factors(config.effective_factor_spec(), config.periods(),
                                          derive_seed(trial_seed, kFactorTag));
    ReturnMatrix X =
        generate_returns(ensemble, factors, derive_seed(trial_seed, kNoiseTag), config.noise);
    return TrialMarket{std::move(ensemble), std::move(factors), std::move(X)};
}

TrialRecord run_trial(const TrialConfig& config, std::size_t trial_index)
{
    const auto [ensemble, factors, X] = generate_trial_market(config, trial_index);
    const double alpha =
        static_cast<double>(config.periods()) / static_cast<double>(config.N);

    TrialRecord rec;
    rec.index = trial_index;
    rec.F = factors.F();
    try {
        const SolveReport realized = minimize_risk(wishart(X));
        const SolveReport expected = minimize_expected_risk(expected_wishart(ensemble, rec.F, alpha));
        rec.epsilon = realized.epsilon;
        rec.q_w = realized.q_w;
        rec.epsilon_or = expected.epsilon;
        rec.q_w_or = expected.q_w;
    } catch (const DegenerateSolveError& e) {
        throw TrialFailure(trial_index, e.what());
    }
    rec.kappa = rec.epsilon_or / rec.epsilon;
    rec.prediction = predict(compute_moments(ensemble, rec.F), alpha);
    return rec;
}

Estimate estimate(std::span<const double> xs)
{
    Estimate e;
    if (xs.empty()) return e;
    const double n = static_cast<double>(xs.size());
    double sum = 0.0;
    for (double x : xs) sum += x;
    e.mean = sum / n;
    if (xs.size() < 2) return e;
    double ss = 0.0;
    for (double x : xs) ss += (x - e.mean) * (x - e.mean);
    e.se = std::sqrt(ss / (n - 1.0) / n);
    return e;
}

const Estimate& AggregateResult::empirical(Quantity q) const
{
    switch (q) {
    case Quantity::epsilon: return epsilon;
    case Quantity::q_w: return q_w;
    case Quantity::epsilon_or: return epsilon_or;
    case Quantity::kappa: return kappa;
    case Quantity::q_w_or: return q_w_or;
    }
    return epsilon;
}

double AggregateResult::predicted(Quantity q) const
{
    switch (q) {
    case Quantity::epsilon: return prediction.epsilon;
    case Quantity::q_w: return prediction.q_w;
    case Quantity::epsilon_or: return prediction.epsilon_or;
    case Quantity::kappa: return prediction.kappa;
    case Quantity::q_w_or: return prediction.q_w_or;
    }
    return 0.0;
}

double AggregateResult::relative_deviation(Quantity q) const
{
    const double pred = predicted(q);
    return (empirical(q).mean - pred) / std::abs(pred);
}

AggregateResult aggregate(const TrialConfig& config, std::span<const TrialRecord> records)
{
    AggregateResult r;
    r.N = config.N;
    r.p = config.periods();
    r.alpha = static_cast<double>(r.p) / static_cast<double>(r.N);
    r.trials = records.size();

    auto column = [&](auto member) {
        std::vector<double> xs;
        xs.reserve(records.size());
        for (const auto& rec : records) xs.push_back(rec.*member);
        return estimate(xs);
    };
    r.epsilon = column(&TrialRecord::epsilon);
    r.q_w = column(&TrialRecord::q_w);
    r.epsilon_or = column(&TrialRecord::epsilon_or);
    r.kappa = column(&TrialRecord::kappa);
    r.q_w_or = column(&TrialRecord::q_w_or);

    std::vector<ReplicaPrediction> preds;
    preds.reserve(records.size());
    for (const auto& rec : records) preds.push_back(rec.prediction);
    r.prediction = average(preds);
    return r;
}

ExperimentAborted::ExperimentAborted(std::size_t failed_trial, const std::string& what,
                                     std::vector<TrialRecord> completed)
    : DegenerateSolveError(what + " (" + std::to_string(completed.size()) +
                           " trials completed before abort)"),
      failed_trial_(failed_trial),
      completed_(std::move(completed))
{
}

std::vector<TrialRecord> run_trials(const TrialConfig& config)
{
    config.validate();
    const std::size_t trials = config.trials;
    unsigned workers = config.threads != 0 ? config.threads : std::thread::hardware_concurrency();
    workers = std::clamp<unsigned>(workers, 1u, static_cast<unsigned>(std::min<std::size_t>(trials, 256)));

    std::vector<std::optional<TrialRecord>> slots(trials);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::mutex failure_mutex;
    std::optional<std::size_t> failed_index;
    std::string failure_message;

    auto work = [&] {
        while (!stop.load(std::memory_order_relaxed)) {
            const std::size_t i = next.fetch_add(1);
            if (i >= trials) return;
            try {
                slots[i] = run_trial(config, i);
            } catch (const TrialFailure& e) {
                std::lock_guard lock(failure_mutex);
                if (!failed_index || i < *failed_index) {
                    failed_index = i;
                    failure_message = e.what();
                }
                stop = true;
            }
        }
    };

    if (workers == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    }

    std::vector<TrialRecord> done;
    done.reserve(trials);
    for (auto& s : slots)
        if (s) done.push_back(std::move(*s));
    if (failed_index) throw ExperimentAborted(*failed_index, failure_message, std::move(done));
    return done;
}

AggregateResult run_experiment(const TrialConfig& config)
{
    if (config.trials < 2)
        throw ConfigError("trials must be at least 2 (standard errors are undefined otherwise)");
    const auto records = run_trials(config);
    return aggregate(config, records);
}

// ---------------------------------------------------------------------------
// Comparison

ToleranceMap default_tolerances()
{
    return {{Quantity::epsilon, 0.03},
            {Quantity::q_w, 0.05},
            {Quantity::epsilon_or, 0.03},
            {Quantity::kappa, 0.05},
            {Quantity::q_w_or, 0.05}};
}

bool ComparisonReport::pass() const
{
    return std::all_of(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.pass; });
}

std::vector<Quantity> ComparisonReport::failures() const
{
    std::vector<Quantity> out;
    for (const auto& v : verdicts)
        if (!v.pass) out.push_back(v.quantity);
    return out;
}

ComparisonReport compare(const AggregateResult& result, const ToleranceMap& tolerances,
                         double z_max)
{
    ComparisonReport report;
    report.z_max = z_max;
    for (const auto& [q, tol] : tolerances) {
        QuantityVerdict v;
        v.quantity = q;
        v.mean = result.empirical(q).mean;
        v.se = result.empirical(q).se;
        v.prediction = result.predicted(q);
        v.tolerance = tol;
        const double diff = v.mean - v.prediction;
        v.relative_deviation = diff / std::abs(v.prediction);
        if (std::abs(diff) <= 1e-10 * std::max(1.0, std::abs(v.prediction))) {
            v.z_score = 0.0;
        } else if (v.se > 0.0) {
            v.z_score = std::abs(diff) / v.se;
        } else {
            v.z_score = std::numeric_limits<double>::infinity();
        }
        v.pass = std::abs(v.relative_deviation) <= tol && v.z_score <= z_max;
        report.verdicts.push_back(v);
    }
    return report;
}

namespace {

nlohmann::json estimate_json(const Estimate& e)
{
    return {{"mean", e.mean}, {"se", e.se}};
}

std::string fmt(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string sanitize(std::string s)
{
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ' ';
    return s;
}

}  // namespace

void to_json(nlohmann::json& j, const AggregateResult& r)
{
    j = nlohmann::json{{"alpha", r.alpha},
                       {"N", r.N},
                       {"p", r.p},
                       {"trials", r.trials},
                       {"epsilon", estimate_json(r.epsilon)},
                       {"q_w", estimate_json(r.q_w)},
                       {"epsilon_or", estimate_json(r.epsilon_or)},
                       {"kappa", estimate_json(r.kappa)},
                       {"q_w_or", estimate_json(r.q_w_or)},
                       {"prediction", r.prediction}};
    nlohmann::json dev = nlohmann::json::object();
    for (auto q : {Quantity::epsilon, Quantity::q_w, Quantity::epsilon_or, Quantity::kappa,
                   Quantity::q_w_or})
        dev[to_string(q)] = r.relative_deviation(q);
    j["relative_deviation"] = dev;
}

void to_json(nlohmann::json& j, const ComparisonReport& r)
{
    j = nlohmann::json{{"pass", r.pass()}, {"z_max", r.z_max}};
    nlohmann::json items = nlohmann::json::array();
    for (const auto& v : r.verdicts) {
        items.push_back({{"quantity", to_string(v.quantity)},
                         {"mean", v.mean},
                         {"se", v.se},
                         {"prediction", v.prediction},
                         {"relative_deviation", v.relative_deviation},
                         {"z_score", std::isfinite(v.z_score) ? nlohmann::json(v.z_score)
                                                              : nlohmann::json("inf")},
                         {"tolerance", v.tolerance},
                         {"pass", v.pass}});
    }
    j["verdicts"] = items;
}

// ---------------------------------------------------------------------------
// Scans

std::vector<ScanPoint> scan(const TrialConfig& config, ScanAxis axis, std::span<const double> grid)
{
    if (grid.empty()) throw ConfigError("scan grid must not be empty");

    std::vector<ScanPoint> points;
    points.reserve(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double g = grid[i];
        ScanPoint pt;
        pt.value = g;
        pt.config = config;
        switch (axis) {
        case ScanAxis::alpha: pt.config.alpha = g; break;
        case ScanAxis::N:
            if (!(g >= 2.0 && std::floor(g) == g))
                throw ConfigError("N grid values must be integers >= 2");
            pt.config.N = static_cast<std::size_t>(g);
            break;
        case ScanAxis::F_scale:
            if (!(std::isfinite(g) && g >= 0.0)) throw ConfigError("F_scale grid values must be >= 0");
            pt.config.F_scale = g;
            break;
        }
        pt.config.base_seed =
            derive_seed(config.base_seed, static_cast<std::uint64_t>(axis) + 1, i);
        pt.config.validate();
        points.push_back(std::move(pt));
    }

    for (auto& pt : points) {
        try {
            pt.result = run_experiment(pt.config);
        } catch (const DegenerateSolveError& e) {
            pt.error = e.what();
        }
    }
    return points;
}

std::string status_of(const ComparisonReport& report)
{
    if (report.pass()) return "ok";
    std::string s = "fail:";
    bool first = true;
    for (auto q : report.failures()) {
        if (!first) s += ';';
        s += to_string(q);
        first = false;
    }
    return s;
}

std::string experiment_csv_row(const AggregateResult& r, const std::string& status)
{
    std::string row = fmt(r.alpha) + ',' + std::to_string(r.N) + ',' + std::to_string(r.p) + ',' +
                      std::to_string(r.trials);
    for (double x : {r.epsilon.mean, r.epsilon.se, r.prediction.epsilon, r.q_w.mean, r.q_w.se,
                     r.prediction.q_w, r.epsilon_or.mean, r.epsilon_or.se, r.prediction.epsilon_or,
                     r.kappa.mean, r.prediction.kappa, r.prediction.q_w_or}) {
        row += ',';
        row += fmt(x);
    }
    row += ',';
    row += sanitize(status);
    return row;
}

std::string experiment_csv_error_row(const TrialConfig& c, const std::string& message)
{
    const std::size_t p = c.periods();
    std::string row = fmt(static_cast<double>(p) / static_cast<double>(c.N)) + ',' +
                      std::to_string(c.N) + ',' + std::to_string(p) + ',' + std::to_string(c.trials);
    for (int i = 0; i < 12; ++i) row += ',';
    row += ",error:" + sanitize(message);
    return row;
}

}  // namespace factorrisk
