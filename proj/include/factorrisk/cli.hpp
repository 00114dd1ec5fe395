/**
 * @file cli.hpp
 * @brief Run configuration and the command-line subcommands.
 *
 * Exit codes are a stable contract:
 *   0 pass, 1 tolerance failure, 2 configuration error, 3 alpha <= 1 regime,
 *   4 degenerate solve, 5 stationarity non-convergence.
 */
#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "factorrisk/experiment.hpp"

namespace factorrisk::cli {

enum ExitCode : int {
    kPass = 0,
    kToleranceFail = 1,
    kConfigError = 2,
    kRegimeError = 3,
    kDegenerateSolve = 4,
    kNonConvergence = 5,
};

enum class OutputFormat { csv, json };
/// Source of the moments used by `predict` and `stationarity`.
enum class PredictionMoments { analytic, sampled };

struct ScanSettings {
    ScanAxis axis = ScanAxis::alpha;
    std::vector<double> grid;
};

struct RunConfig {
    TrialConfig trial;
    PredictionMoments prediction_moments = PredictionMoments::analytic;
    double beta = 1000.0;
    ToleranceMap tolerances = default_tolerances();
    double z_max = kDefaultZMax;
    OutputFormat format = OutputFormat::csv;
    std::optional<std::filesystem::path> csv_path;
    std::optional<std::filesystem::path> json_path;
    std::optional<ScanSettings> scan;
};

/// Strict JSON parsing: unknown keys, wrong types and malformed JSON raise
/// ConfigError with the offending key and its line where available.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

void to_json(nlohmann::json& j, const RunConfig& c);

/// Moments for `predict`: analytic family moments, or one sampled
/// ensemble and factor path drawn from the base seed.
EnsembleMoments prediction_moments(const RunConfig& config);

/// Dispatches `args` (without the program name). Payload goes to `out`,
/// diagnostics to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace factorrisk::cli
