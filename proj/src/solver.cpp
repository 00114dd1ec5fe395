#include "factorrisk/solver.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "factorrisk/errors.hpp"

namespace factorrisk {

Portfolio::Portfolio(Eigen::VectorXd weights) : w_(std::move(weights))
{
    if (w_.size() < 1) throw ConfigError("portfolio must be nonempty");
    if (!w_.allFinite()) throw ConfigError("portfolio weights must be finite");
}

double Portfolio::budget_residual() const
{
    return std::abs(w_.sum() - static_cast<double>(w_.size()));
}

double investment_risk(const Portfolio& w, const RiskMatrix& J)
{
    if (w.N() != J.N())
        throw ConfigError("portfolio has " + std::to_string(w.N()) + " weights but risk matrix is " +
                          std::to_string(J.N()) + " x " + std::to_string(J.N()));
    const Eigen::VectorXd& x = w.weights();
    return x.dot(J.entries() * x) / (2.0 * static_cast<double>(x.size()));
}

namespace {

double kkt_residual(const Eigen::MatrixXd& J, const Eigen::VectorXd& w, double k)
{
    return ((J * w).array() - k).abs().maxCoeff();
}

}  // namespace

SolveReport minimize_risk(const RiskMatrix& risk)
{
    const Eigen::MatrixXd& J = risk.entries();
    const Eigen::Index N = J.rows();
    const double n = static_cast<double>(N);

    const Eigen::LLT<Eigen::MatrixXd> llt(J);
    const double scale = J.diagonal().cwiseAbs().maxCoeff();
    const double pivot_floor = 64.0 * n * std::numeric_limits<double>::epsilon() * scale;
    if (llt.info() != Eigen::Success || scale <= 0.0 ||
        llt.matrixLLT().diagonal().array().square().minCoeff() <= pivot_floor) {
        throw DegenerateSolveError(
            "risk matrix is singular or indefinite (alpha <= 1 regime or degenerate sample)");
    }

    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(N);
    Eigen::VectorXd y = llt.solve(ones);
    auto assemble = [&](const Eigen::VectorXd& y_) {
        const double s = y_.sum();
        if (!(s > 0.0) || !std::isfinite(s))
            throw DegenerateSolveError("risk matrix is not positive definite (1^T J^-1 1 <= 0)");
        Eigen::VectorXd w = (n / s) * y_;
        w.array() += (n - w.sum()) / n;
        return std::pair{std::move(w), n / s};
    };

    auto [w, k] = assemble(y);
    double residual = kkt_residual(J, w, k);
    bool refined = false;
    if (residual > 1e-8 * (1.0 + std::abs(k))) {
        y += llt.solve(ones - J * y);
        std::tie(w, k) = assemble(y);
        residual = kkt_residual(J, w, k);
        refined = true;
        if (residual > 1e-8 * (1.0 + std::abs(k)))
            throw DegenerateSolveError("KKT residual " + std::to_string(residual) +
                                       " exceeds bound after refinement (ill-conditioned J)");
    }

    Portfolio portfolio(std::move(w));
    const double eps = investment_risk(portfolio, risk);
    const double qw = portfolio.weights().squaredNorm() / n;
    const double budget = portfolio.budget_residual();
    return SolveReport{std::move(portfolio), eps, qw, k, residual, budget, refined};
}

SolveReport minimize_expected_risk(const RiskMatrix& EJ)
{
    return minimize_risk(EJ);
}

void to_json(nlohmann::json& j, const SolveReport& r)
{
    j = nlohmann::json{{"N", r.portfolio.N()},
                       {"epsilon", r.epsilon},
                       {"q_w", r.q_w},
                       {"multiplier", r.multiplier},
                       {"kkt_residual", r.kkt_residual},
                       {"budget_residual", r.budget_residual},
                       {"refined", r.refined}};
}

void write_portfolio_csv(const Portfolio& w, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open '" + path.string() + "' for writing");
    out << "index,weight\n";
    char buf[40];
    for (Eigen::Index i = 0; i < w.N(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", w.weights()(i));
        out << i << ',' << buf << '\n';
    }
}

}  // namespace factorrisk
