#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "factorrisk/cli.hpp"
#include "factorrisk/solver.hpp"

namespace factorrisk::cli {

namespace {

using nlohmann::json;

constexpr double kStationarityGradientTol = 1e-6;
constexpr double kBetaCheckTol = 0.01;

struct CommonOptions {
    std::string config_path;
    std::string format;
    std::string csv_path;
    std::string json_path;
    int threads = -1;
};

void add_common(CLI::App& cmd, CommonOptions& o, bool outputs)
{
    cmd.add_option("config", o.config_path, "JSON run configuration")->required();
    cmd.add_option("--format", o.format, "stdout format")->check(CLI::IsMember({"csv", "json"}));
    if (outputs) {
        cmd.add_option("--csv", o.csv_path, "also write the CSV table here");
        cmd.add_option("--json", o.json_path, "also write the JSON summary here");
        cmd.add_option("--threads", o.threads, "worker threads (0 = hardware concurrency)")
            ->check(CLI::NonNegativeNumber);
    }
}

RunConfig load(const CommonOptions& o)
{
    RunConfig c = load_run_config(o.config_path);
    if (!o.format.empty()) c.format = o.format == "json" ? OutputFormat::json : OutputFormat::csv;
    if (!o.csv_path.empty()) c.csv_path = o.csv_path;
    if (!o.json_path.empty()) c.json_path = o.json_path;
    if (o.threads >= 0) c.trial.threads = static_cast<unsigned>(o.threads);
    return c;
}

void write_file(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw ConfigError("write failed for '" + path.string() + "'");
}

void require_regime(double alpha)
{
    if (!(alpha > 1.0))
        throw RegimeError("alpha must exceed 1 for a unique optimum (got " + std::to_string(alpha) + ")");
}

int cmd_predict(const CommonOptions& o, std::ostream& out)
{
    const RunConfig c = load(o);
    require_regime(c.trial.alpha);
    const EnsembleMoments moments = prediction_moments(c);
    const ReplicaPrediction p = predict(moments, c.trial.alpha);
    if (c.format == OutputFormat::csv) {
        out << kPredictionCsvHeader << '\n' << to_csv_row(p) << '\n';
    } else {
        out << json(p).dump(2) << '\n';
    }
    return kPass;
}

std::string experiment_csv(const std::vector<std::string>& rows)
{
    std::string text(kExperimentCsvHeader);
    text += '\n';
    for (const auto& r : rows) text += r + '\n';
    return text;
}

int cmd_experiment(const CommonOptions& o, std::ostream& out, std::ostream& err)
{
    const RunConfig c = load(o);
    require_regime(c.trial.alpha);
    c.trial.validate();
    if (c.trial.trials < 2)
        throw ConfigError("config key 'trials': at least 2 trials are needed for a standard error");

    err << "experiment: N=" << c.trial.N << " p=" << c.trial.periods() << " trials=" << c.trial.trials
        << '\n';
    const AggregateResult result = run_experiment(c.trial);
    const ComparisonReport report = compare(result, c.tolerances, c.z_max);

    const std::string csv = experiment_csv({experiment_csv_row(result, status_of(report))});
    json summary{{"config", c}, {"result", result}, {"comparison", report}, {"pass", report.pass()}};

    if (c.csv_path) write_file(*c.csv_path, csv);
    if (c.json_path) write_file(*c.json_path, summary.dump(2) + "\n");
    if (c.format == OutputFormat::csv)
        out << csv;
    else
        out << summary.dump(2) << '\n';

    for (const auto& v : report.verdicts) {
        if (!v.pass)
            err << "tolerance failure: " << to_string(v.quantity) << " mean=" << v.mean
                << " prediction=" << v.prediction << " rel=" << v.relative_deviation
                << " z=" << v.z_score << '\n';
    }
    return report.pass() ? kPass : kToleranceFail;
}

int cmd_scan(const CommonOptions& o, const std::string& axis_opt, const std::vector<double>& grid_opt,
             bool grid_given, std::ostream& out, std::ostream& err)
{
    const RunConfig c = load(o);
    ScanSettings s = c.scan.value_or(ScanSettings{});
    if (!axis_opt.empty()) s.axis = scan_axis_from_string(axis_opt);
    if (grid_given) s.grid = grid_opt;
    if (s.grid.empty()) throw ConfigError("scan grid is empty");
    if (s.axis != ScanAxis::alpha) require_regime(c.trial.alpha);
    if (c.trial.trials < 2)
        throw ConfigError("config key 'trials': at least 2 trials are needed for a standard error");

    const std::vector<ScanPoint> points = scan(c.trial, s.axis, s.grid);

    std::vector<std::string> rows;
    json jpoints = json::array();
    bool any_error = false;
    bool any_fail = false;
    for (const auto& pt : points) {
        json jp{{"axis", to_string(s.axis)}, {"value", pt.value}, {"config", pt.config}};
        if (pt.result) {
            const ComparisonReport report = compare(*pt.result, c.tolerances, c.z_max);
            rows.push_back(experiment_csv_row(*pt.result, status_of(report)));
            any_fail = any_fail || !report.pass();
            jp["result"] = *pt.result;
            jp["comparison"] = report;
            jp["pass"] = report.pass();
        } else {
            any_error = true;
            rows.push_back(experiment_csv_error_row(pt.config, pt.error));
            jp["error"] = pt.error;
            err << "scan point " << to_string(s.axis) << "=" << pt.value << " failed: " << pt.error << '\n';
        }
        jpoints.push_back(std::move(jp));
    }

    const std::string csv = experiment_csv(rows);
    json summary{{"config", c}, {"points", jpoints}};
    if (c.csv_path) write_file(*c.csv_path, csv);
    if (c.json_path) write_file(*c.json_path, summary.dump(2) + "\n");
    if (c.format == OutputFormat::csv)
        out << csv;
    else
        out << summary.dump(2) << '\n';

    if (any_error) return kDegenerateSolve;
    return any_fail ? kToleranceFail : kPass;
}

int cmd_stationarity(const CommonOptions& o, std::optional<double> beta_opt, std::ostream& out,
                     std::ostream& err)
{
    RunConfig c = load(o);
    if (beta_opt) c.beta = *beta_opt;
    if (!(std::isfinite(c.beta) && c.beta > 0.0)) throw ConfigError("--beta must be positive and finite");
    require_regime(c.trial.alpha);

    std::optional<AssetMeasure> measure;
    double F = 0.0;
    std::string source = "analytic";
    if (c.prediction_moments == PredictionMoments::analytic) {
        measure = AssetMeasure::analytic(c.trial.v_spec, c.trial.b_spec);
        F = analytic_F(c.trial.effective_factor_spec());
    }
    if (!measure) {
        const TrialMarket market = generate_trial_market(c.trial, 0);
        measure = AssetMeasure::empirical(market.ensemble);
        F = market.factors.F();
        source = "sampled";
    }
    const double alpha = c.trial.alpha;

    json report{{"beta", c.beta}, {"alpha", alpha}, {"F", F}, {"measure", source}};
    try {
        const StationarySolution sol = solve_stationary(*measure, F, alpha, c.beta);
        const BetaDerivativeCheck check = beta_derivative_check(*measure, F, alpha, c.beta);
        const bool gradient_ok = sol.max_abs_gradient <= kStationarityGradientTol;
        const bool beta_ok = check.relative_gap <= kBetaCheckTol;
        report["theta"] = sol.theta;
        report["gradient"] = sol.gradient;
        report["max_abs_gradient"] = sol.max_abs_gradient;
        report["max_relative_residual"] = sol.max_relative_residual;
        report["iterations"] = sol.iterations;
        report["beta_check"] = check;
        report["gradient_ok"] = gradient_ok;
        report["beta_check_ok"] = beta_ok;
        report["pass"] = gradient_ok && beta_ok;
        out << report.dump(2) << '\n';
        if (!beta_ok)
            err << "beta-derivative check: -dphi/dbeta=" << check.epsilon_finite_difference
                << " vs epsilon=" << check.epsilon_replica << " (gap " << check.relative_gap << ")\n";
        return gradient_ok && beta_ok ? kPass : kToleranceFail;
    } catch (const ConvergenceError& e) {
        report["error"] = e.what();
        report["residual"] = e.residual();
        report["pass"] = false;
        out << report.dump(2) << '\n';
        throw;
    }
}

int cmd_dump(const CommonOptions& o, const std::string& out_dir, std::size_t trial, std::ostream& out)
{
    const RunConfig c = load(o);
    require_regime(c.trial.alpha);
    c.trial.validate();
    const std::filesystem::path dir(out_dir);
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec))
        throw ConfigError("--out-dir '" + out_dir + "' is not a directory");

    const TrialMarket market = generate_trial_market(c.trial, trial);
    const RiskMatrix J = wishart(market.returns);
    const SolveReport sol = minimize_risk(J);
    dump_binary(market.returns, dir / "returns.bin");
    dump_binary(J, dir / "wishart.bin");
    write_portfolio_csv(sol.portfolio, dir / "portfolio.csv");

    json report{{"trial", trial},
                {"N", market.returns.N()},
                {"p", market.returns.p()},
                {"F", market.factors.F()},
                {"files", {"returns.bin", "wishart.bin", "portfolio.csv"}},
                {"solve", sol}};
    out << report.dump(2) << '\n';
    return kPass;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Replica predictions vs. exact minimum-risk portfolios under a single-factor model",
                 "factorrisk"};
    app.require_subcommand(1);

    CommonOptions predict_o, experiment_o, scan_o, stat_o, dump_o;

    auto* predict_cmd = app.add_subcommand("predict", "print the replica prediction");
    add_common(*predict_cmd, predict_o, false);

    auto* experiment_cmd = app.add_subcommand("experiment", "run Monte Carlo trials and compare");
    add_common(*experiment_cmd, experiment_o, true);

    auto* scan_cmd = app.add_subcommand("scan", "run one experiment per grid point");
    add_common(*scan_cmd, scan_o, true);
    std::string axis;
    std::vector<double> grid;
    scan_cmd->add_option("--axis", axis, "alpha, N or F_scale")
        ->check(CLI::IsMember({"alpha", "N", "F_scale"}));
    auto* grid_opt = scan_cmd->add_option("--grid", grid, "comma-separated grid values")->delimiter(',');

    auto* stat_cmd = app.add_subcommand("stationarity", "free-energy stationarity diagnostic");
    add_common(*stat_cmd, stat_o, false);
    double beta = 0.0;
    auto* beta_opt = stat_cmd->add_option("--beta", beta, "inverse temperature (default from config)");

    auto* dump_cmd = app.add_subcommand("dump", "write one trial's X, J and optimal portfolio");
    add_common(*dump_cmd, dump_o, false);
    std::string out_dir = ".";
    std::size_t trial = 0;
    dump_cmd->add_option("--out-dir", out_dir, "output directory");
    dump_cmd->add_option("--trial", trial, "trial index");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kPass : kConfigError;
    }

    try {
        if (*predict_cmd) return cmd_predict(predict_o, out);
        if (*experiment_cmd) return cmd_experiment(experiment_o, out, err);
        if (*scan_cmd) return cmd_scan(scan_o, axis, grid, grid_opt->count() > 0, out, err);
        if (*stat_cmd)
            return cmd_stationarity(stat_o, beta_opt->count() > 0 ? std::optional<double>(beta) : std::nullopt,
                                    out, err);
        if (*dump_cmd) return cmd_dump(dump_o, out_dir, trial, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const RegimeError& e) {
        err << "regime error: " << e.what() << '\n';
        return kRegimeError;
    } catch (const ConvergenceError& e) {
        err << "non-convergence: " << e.what() << "\n  residual:";
        for (double r : e.residual()) err << ' ' << std::setprecision(6) << r;
        err << '\n';
        return kNonConvergence;
    } catch (const DomainError& e) {
        err << "non-convergence: " << e.what() << '\n';
        return kNonConvergence;
    } catch (const DegenerateSolveError& e) {
        err << "degenerate solve: " << e.what() << '\n';
        return kDegenerateSolve;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kConfigError;
    }
    return kConfigError;
}

}  // namespace factorrisk::cli
