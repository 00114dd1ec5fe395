/**
 * @file experiment.hpp
 * @brief Monte Carlo trials comparing exact optima with replica predictions.
 *
 * One trial samples an asset ensemble, a factor path and residual noise on
 * independent streams, solves the realized-risk problem (J) and the
 * expected-risk problem (E[J]), and records both next to the replica
 * prediction for that trial's realized moments. Trials are keyed by index;
 * results never depend on thread count or completion order.
 */
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "factorrisk/ensemble.hpp"
#include "factorrisk/errors.hpp"
#include "factorrisk/market_sim.hpp"
#include "factorrisk/replica.hpp"

namespace factorrisk {

enum class MomentsMode { realized_per_trial, shared_ensemble };
enum class ScanAxis { alpha, N, F_scale };
enum class Quantity { epsilon, q_w, epsilon_or, kappa, q_w_or };

std::string to_string(MomentsMode mode);
MomentsMode moments_mode_from_string(const std::string& name);
std::string to_string(ScanAxis axis);
ScanAxis scan_axis_from_string(const std::string& name);
std::string to_string(Quantity q);
Quantity quantity_from_string(const std::string& name);

struct TrialConfig {
    std::size_t N = 500;
    double alpha = 2.0;
    DistributionSpec v_spec = DistributionSpec::constant(1.0);
    DistributionSpec b_spec = DistributionSpec::constant(0.0);
    DistributionSpec f_spec = DistributionSpec::gaussian(0.0, 1.0);
    NoiseFamily noise = NoiseFamily::gaussian;
    std::size_t trials = 200;
    std::uint64_t base_seed = 1;
    MomentsMode moments_mode = MomentsMode::realized_per_trial;
    /// Multiplies F: the factor spec is scaled by sqrt(F_scale).
    double F_scale = 1.0;
    /// Worker threads for run_experiment; 0 means hardware concurrency.
    unsigned threads = 0;

    /// p = floor(alpha N + 1/2) (round half up).
    std::size_t periods() const;
    /// Throws ConfigError on bad sizes/specs and RegimeError when p <= N.
    void validate() const;
    DistributionSpec effective_factor_spec() const;
};

void to_json(nlohmann::json& j, const TrialConfig& c);

struct TrialRecord {
    std::size_t index = 0;
    double F = 0.0;            // realized mean square of the factor path
    double epsilon = 0.0;      // realized minimal risk per asset
    double q_w = 0.0;
    double epsilon_or = 0.0;   // minimal expected risk per asset
    double q_w_or = 0.0;       // concentration of the expected-risk optimum
    double kappa = 0.0;        // epsilon_or / epsilon
    ReplicaPrediction prediction;

    friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

/// Solver failure inside a trial; carries the trial index.
class TrialFailure : public DegenerateSolveError {
public:
    TrialFailure(std::size_t trial_index, const std::string& what);
    std::size_t trial_index() const noexcept { return trial_index_; }

private:
    std::size_t trial_index_;
};

/// The sampled inputs of one trial.
struct TrialMarket {
    AssetEnsemble ensemble;
    FactorSeries factors;
    ReturnMatrix returns;
};

TrialMarket generate_trial_market(const TrialConfig& config, std::size_t trial_index);

TrialRecord run_trial(const TrialConfig& config, std::size_t trial_index);

struct Estimate {
    double mean = 0.0;
    double se = 0.0;
};

/// Mean and standard error (sample standard deviation / sqrt(n)).
Estimate estimate(std::span<const double> xs);

struct AggregateResult {
    double alpha = 0.0;  // p / N actually simulated
    std::size_t N = 0;
    std::size_t p = 0;
    std::size_t trials = 0;
    Estimate epsilon;
    Estimate q_w;
    Estimate epsilon_or;
    Estimate kappa;
    Estimate q_w_or;
    /// Field-wise mean of the per-trial predictions.
    ReplicaPrediction prediction;

    const Estimate& empirical(Quantity q) const;
    double predicted(Quantity q) const;
    /// Signed (mean - prediction) / |prediction|.
    double relative_deviation(Quantity q) const;
};

AggregateResult aggregate(const TrialConfig& config, std::span<const TrialRecord> records);

/// Aborts on the first failed trial with the records completed so far.
class ExperimentAborted : public DegenerateSolveError {
public:
    ExperimentAborted(std::size_t failed_trial, const std::string& what,
                      std::vector<TrialRecord> completed);
    std::size_t failed_trial() const noexcept { return failed_trial_; }
    const std::vector<TrialRecord>& completed() const noexcept { return completed_; }

private:
    std::size_t failed_trial_;
    std::vector<TrialRecord> completed_;
};

/// Requires trials >= 2.
AggregateResult run_experiment(const TrialConfig& config);
/// Runs every trial and returns the raw records (ordered by index).
std::vector<TrialRecord> run_trials(const TrialConfig& config);

using ToleranceMap = std::map<Quantity, double>;
ToleranceMap default_tolerances();
inline constexpr double kDefaultZMax = 4.0;

struct QuantityVerdict {
    Quantity quantity{};
    double mean = 0.0;
    double se = 0.0;
    double prediction = 0.0;
    double relative_deviation = 0.0;  // signed
    double z_score = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct ComparisonReport {
    std::vector<QuantityVerdict> verdicts;
    double z_max = kDefaultZMax;

    bool pass() const;
    std::vector<Quantity> failures() const;
};

/// A quantity passes when |relative deviation| <= tolerance and
/// |mean - prediction| / SE <= z_max. Deviations below 1e-10 relative count
/// as exact agreement (z = 0), so quantities with SE = 0 can pass.
ComparisonReport compare(const AggregateResult& result, const ToleranceMap& tolerances,
                         double z_max = kDefaultZMax);

void to_json(nlohmann::json& j, const AggregateResult& r);
void to_json(nlohmann::json& j, const ComparisonReport& r);

struct ScanPoint {
    double value = 0.0;
    TrialConfig config;
    std::optional<AggregateResult> result;
    std::string error;  // empty on success
};

/// Validates the whole grid up front, then runs one experiment per point
/// with base seed derive_seed(base_seed, axis, index). Failed points keep
/// their error message and the scan continues.
std::vector<ScanPoint> scan(const TrialConfig& config, ScanAxis axis, std::span<const double> grid);

inline constexpr std::string_view kExperimentCsvHeader =
    "alpha,N,p,trials,eps_mean,eps_se,eps_replica,qw_mean,qw_se,qw_replica,eps_or_mean,eps_or_se,"
    "eps_or_replica,kappa_mean,kappa_theory,qw_or_replica,status";

/// Status is "ok", "fail:<q1>;<q2>" or "error:<message>".
std::string experiment_csv_row(const AggregateResult& r, const std::string& status);
std::string experiment_csv_error_row(const TrialConfig& config, const std::string& message);
std::string status_of(const ComparisonReport& report);

}  // namespace factorrisk
