#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "factorrisk/replica.hpp"
#include "factorrisk/solver.hpp"

using namespace factorrisk;
using doctest::Approx;

namespace {

Eigen::MatrixXd random_pd(std::mt19937_64& gen, Eigen::Index n)
{
    std::normal_distribution<double> nd;
    Eigen::MatrixXd A(n, n + 2);
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < A.cols(); ++j) A(i, j) = nd(gen);
    Eigen::MatrixXd J = A * A.transpose() / double(n);
    J = 0.5 * (J + J.transpose()).eval();
    return J;
}

// Bordered system [J 1; 1^T 0] [w; -k] = [0; N], solved by full-pivot LU.
Eigen::VectorXd bordered_kkt(const Eigen::MatrixXd& J)
{
    const Eigen::Index n = J.rows();
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + 1, n + 1);
    K.topLeftCorner(n, n) = J;
    K.col(n).head(n).setOnes();
    K.row(n).head(n).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
    rhs(n) = double(n);
    return K.fullPivLu().solve(rhs);
}

}  // namespace

TEST_CASE("identity risk gives the equal-weight portfolio")
{
    const auto r = minimize_risk(RiskMatrix(Eigen::MatrixXd::Identity(2, 2)));
    CHECK(r.portfolio.weights()(0) == Approx(1));
    CHECK(r.portfolio.weights()(1) == Approx(1));
    CHECK(r.epsilon == Approx(0.5));
    CHECK(r.q_w == Approx(1));
    CHECK(r.multiplier == Approx(1));
    CHECK_FALSE(r.refined);
}

TEST_CASE("two assets with unequal variance")
{
    // Lagrange: w proportional to (1, 1/2), scaled to sum 2.
    const auto r = minimize_risk(RiskMatrix(Eigen::Vector2d(1, 2).asDiagonal().toDenseMatrix()));
    CHECK(r.portfolio.weights()(0) == Approx(4.0 / 3).epsilon(1e-14));
    CHECK(r.portfolio.weights()(1) == Approx(2.0 / 3).epsilon(1e-14));
    CHECK(r.epsilon == Approx(2.0 / 3).epsilon(1e-14));
    CHECK(r.q_w == Approx(10.0 / 9).epsilon(1e-14));
}

TEST_CASE("singular and indefinite matrices are rejected")
{
    // p < N: rank-deficient Wishart matrix.
    RowMatrix x = RowMatrix::Zero(4, 2);
    x << 1, 0, 0, 1, 1, 1, 0.5, -0.5;
    CHECK_THROWS_AS(minimize_risk(wishart(ReturnMatrix(x))), DegenerateSolveError);
    Eigen::Matrix2d indef;
    indef << 1, 2, 2, 1;
    CHECK_THROWS_AS(minimize_risk(RiskMatrix(indef)), DegenerateSolveError);
    CHECK_THROWS_AS(minimize_risk(RiskMatrix(Eigen::MatrixXd::Zero(3, 3))), DegenerateSolveError);
}

TEST_CASE("agreement with the bordered KKT system")
{
    std::mt19937_64 gen(101);
    std::uniform_int_distribution<int> un(1, 10);
    for (int rep = 0; rep < 50; ++rep) {
        const Eigen::Index n = un(gen);
        const Eigen::MatrixXd J = random_pd(gen, n);
        const auto r = minimize_risk(RiskMatrix(J));
        const Eigen::VectorXd z = bordered_kkt(J);
        for (Eigen::Index i = 0; i < n; ++i) CHECK(std::abs(r.portfolio.weights()(i) - z(i)) <= 1e-8);
        CHECK(std::abs(r.multiplier + z(n)) <= 1e-8 * (1 + std::abs(z(n))));
        CHECK(r.budget_residual <= 1e-10 * double(n));
        CHECK(r.kkt_residual <= 1e-8 * (1 + std::abs(r.multiplier)));
    }
}

TEST_CASE("feasible perturbations never lower the risk")
{
    std::mt19937_64 gen(7);
    std::normal_distribution<double> nd;
    const Eigen::Index n = 8;
    const RiskMatrix J(random_pd(gen, n));
    const auto r = minimize_risk(J);
    const double h0 = investment_risk(r.portfolio, J);
    for (int rep = 0; rep < 100; ++rep) {
        Eigen::VectorXd d(n);
        for (Eigen::Index i = 0; i < n; ++i) d(i) = nd(gen);
        d.array() -= d.mean();
        for (double e : {1e-4, -1e-4}) CHECK(investment_risk(Portfolio(r.portfolio.weights() + e * d), J) >= h0);
    }
}

TEST_CASE("scaling J scales epsilon and leaves w unchanged")
{
    std::mt19937_64 gen(13);
    const Eigen::MatrixXd J = random_pd(gen, 6);
    const auto r = minimize_risk(RiskMatrix(J));
    for (double c : {1e-3, 0.5, 7.0, 1e4}) {
        const auto s = minimize_risk(RiskMatrix(c * J));
        CHECK((s.portfolio.weights() - r.portfolio.weights()).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK(s.epsilon == Approx(c * r.epsilon).epsilon(1e-12));
    }
}

TEST_CASE("budget feasibility at desk scale")
{
    for (std::uint64_t seed : {1, 2, 3}) {
        const std::size_t N = 300;
        const auto e = sample_ensemble(DistributionSpec::uniform(0.5, 2), DistributionSpec::gaussian(1, 0.5), N, seed);
        const auto f = sample_factors(DistributionSpec::gaussian(0, 1), 2 * N, seed);
        const auto r = minimize_risk(wishart(generate_returns(e, f, seed)));
        CHECK(r.budget_residual <= 1e-10 * double(N));
        CHECK(r.kkt_residual <= 1e-8 * (1 + std::abs(r.multiplier)));
    }
}

TEST_CASE("expected-risk optimum")
{
    SUBCASE("i.i.d. expectation")
    {
        const auto e = AssetEnsemble(std::vector<double>(50, 1.0), std::vector<double>(50, 0.0));
        const auto r = minimize_expected_risk(expected_wishart(e, 1.0, 2.0));
        CHECK((r.portfolio.weights().array() - 1.0).abs().maxCoeff() <= 1e-12);
        CHECK(r.epsilon == Approx(1).epsilon(1e-12));
        CHECK(r.q_w == Approx(1).epsilon(1e-12));
    }
    SUBCASE("factor ensemble against the replica expected-risk values")
    {
        const std::size_t N = 500;
        const auto e = sample_ensemble(DistributionSpec::two_point(1, 2), DistributionSpec::constant(1), N, 3);
        const double F = 1.0, alpha = 3.0;
        const auto r = minimize_expected_risk(expected_wishart(e, F, alpha));
        const auto p = predict(compute_moments(e, F), alpha);
        CHECK(r.epsilon == Approx(p.epsilon_or).epsilon(0.02));
        CHECK(r.q_w == Approx(p.q_w_or).epsilon(0.05));
    }
}

TEST_CASE("investment_risk")
{
    const RiskMatrix I(Eigen::MatrixXd::Identity(2, 2));
    CHECK(investment_risk(Portfolio(Eigen::Vector2d(1, 1)), I) == 0.5);
    CHECK(investment_risk(Portfolio(Eigen::Vector2d(2, 0)), I) == 1);
    CHECK(investment_risk(Portfolio(Eigen::Vector2d(3, -7)), RiskMatrix(Eigen::MatrixXd::Zero(2, 2))) == 0);
    CHECK_THROWS_AS(investment_risk(Portfolio(Eigen::Vector3d(1, 1, 1)), I), ConfigError);
}

TEST_CASE("portfolio CSV and JSON")
{
    const auto r = minimize_risk(RiskMatrix(Eigen::Vector2d(1, 2).asDiagonal().toDenseMatrix()));
    const auto path = std::filesystem::temp_directory_path() / "factorrisk_test_portfolio.csv";
    write_portfolio_csv(r.portfolio, path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "index,weight");
    std::getline(in, line);
    CHECK(line.rfind("0,", 0) == 0);
    CHECK(std::stod(line.substr(2)) == r.portfolio.weights()(0));
    std::filesystem::remove(path);

    const nlohmann::json j = r;
    CHECK(j.at("epsilon").get<double>() == r.epsilon);
    CHECK(j.at("N").get<int>() == 2);
}
