#pragma once

#include <filesystem>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "factorrisk/market_sim.hpp"

namespace factorrisk {

/// Portfolio weights. Feasible portfolios satisfy sum_i w_i = N.
class Portfolio {
public:
    explicit Portfolio(Eigen::VectorXd weights);

    Eigen::Index N() const { return w_.size(); }
    const Eigen::VectorXd& weights() const { return w_; }
    double budget_residual() const;

private:
    Eigen::VectorXd w_;
};

struct SolveReport {
    Portfolio portfolio;
    double epsilon = 0.0;          // H(w*)/N = w*^T J w* / (2N)
    double q_w = 0.0;              // w*^T w* / N
    double multiplier = 0.0;       // k with J w* = k 1
    double kkt_residual = 0.0;     // max_i |(J w*)_i - k|
    double budget_residual = 0.0;  // |sum_i w*_i - N|
    bool refined = false;          // one refinement pass was needed
};

/// Minimum of w^T J w / 2 subject to sum_i w_i = N, via Cholesky:
/// w* = N J^-1 1 / (1^T J^-1 1). Throws DegenerateSolveError when J is
/// singular or indefinite. Nothing is added to the diagonal.
SolveReport minimize_risk(const RiskMatrix& J);

/// Same KKT solve applied to the expected risk matrix.
SolveReport minimize_expected_risk(const RiskMatrix& EJ);

/// Per-asset risk w^T J w / (2N).
double investment_risk(const Portfolio& w, const RiskMatrix& J);

void to_json(nlohmann::json& j, const SolveReport& r);
/// CSV with header "index,weight".
void write_portfolio_csv(const Portfolio& w, const std::filesystem::path& path);

}  // namespace factorrisk
