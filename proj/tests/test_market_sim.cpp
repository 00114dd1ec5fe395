#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "factorrisk/market_sim.hpp"

using namespace factorrisk;
using doctest::Approx;

namespace {

std::filesystem::path temp_file(const std::string& name)
{
    return std::filesystem::temp_directory_path() / ("factorrisk_test_" + name);
}

}  // namespace

TEST_CASE("noise family names")
{
    for (auto f : {NoiseFamily::gaussian, NoiseFamily::uniform, NoiseFamily::two_point, NoiseFamily::none})
        CHECK(noise_family_from_string(to_string(f)) == f);
    CHECK_THROWS_AS(noise_family_from_string("cauchy"), ConfigError);
}

TEST_CASE("two-point noise without loadings gives entries of size sqrt(v/N)")
{
    const AssetEnsemble e({1, 2, 3, 4}, {0, 0, 0, 0});
    const FactorSeries f({0.3, -1.2, 2.0, 0.1, 0.7});
    const auto X = generate_returns(e, f, 5, NoiseFamily::two_point);
    REQUIRE(X.N() == 4);
    REQUIRE(X.p() == 5);
    for (Eigen::Index i = 0; i < 4; ++i)
        for (Eigen::Index mu = 0; mu < 5; ++mu)
            CHECK(std::abs(X.entries()(i, mu)) == Approx(std::sqrt(e.v()[i] / 4.0)).epsilon(1e-15));
}

TEST_CASE("single asset, single period, no noise")
{
    const auto X = generate_returns(AssetEnsemble({1}, {2}), FactorSeries({3}), 1, NoiseFamily::none);
    CHECK(X.entries()(0, 0) == 6);
}

TEST_CASE("residual noise has mean zero and variance v_i")
{
    const std::size_t p = 100000;
    const AssetEnsemble e({0.5, 2.0}, {1.0, -0.5});
    std::vector<double> fv(p);
    for (std::size_t mu = 0; mu < p; ++mu) fv[mu] = std::sin(0.1 * static_cast<double>(mu));
    const FactorSeries f(fv);
    const double sqrt_n = std::sqrt(2.0);
    for (auto family : {NoiseFamily::gaussian, NoiseFamily::uniform, NoiseFamily::two_point}) {
        const auto X = generate_returns(e, f, 31, family);
        for (Eigen::Index i = 0; i < 2; ++i) {
            double s = 0, s2 = 0;
            for (std::size_t mu = 0; mu < p; ++mu) {
                const double x = sqrt_n * X.entries()(i, static_cast<Eigen::Index>(mu));
                const double y = x - e.b()[i] * fv[mu] / sqrt_n;
                s += y;
                s2 += y * y;
            }
            const double vi = e.v()[i];
            // Fourth moment of y: 3v^2 (gaussian), 9v^2/5 (uniform), v^2 (two-point).
            const double kurt = family == NoiseFamily::gaussian ? 3.0 : family == NoiseFamily::uniform ? 1.8 : 1.0;
            const double var_se = vi * std::sqrt((kurt - 1.0) / p);
            CAPTURE(to_string(family));
            CHECK(std::abs(s / p) <= 3 * std::sqrt(vi / p));
            if (family == NoiseFamily::two_point)
                CHECK(s2 / p == Approx(vi).epsilon(1e-12));
            else
                CHECK(std::abs(s2 / p - vi) <= 3 * var_se);
        }
    }
}

TEST_CASE("generation is deterministic in the noise seed")
{
    const AssetEnsemble e({1, 2, 3}, {0.1, 0.2, 0.3});
    const FactorSeries f({1, -1, 0.5, 2});
    CHECK(generate_returns(e, f, 9).entries() == generate_returns(e, f, 9).entries());
    CHECK(generate_returns(e, f, 9).entries() != generate_returns(e, f, 10).entries());
}

TEST_CASE("wishart worked examples")
{
    CHECK(wishart(ReturnMatrix(RowMatrix::Zero(3, 4))).entries() == Eigen::MatrixXd::Zero(3, 3));

    RowMatrix col(2, 1);
    col << 0.7, -1.3;
    const auto J = wishart(ReturnMatrix(col)).entries();
    CHECK(J(0, 0) == Approx(0.49));
    CHECK(J(0, 1) == Approx(-0.91));
    CHECK(J(1, 0) == J(0, 1));
    CHECK(J(1, 1) == Approx(1.69));
}

TEST_CASE("wishart of generated returns is exactly symmetric and positive definite")
{
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const std::size_t N = 40;
        std::vector<double> v(N), b(N), fv(2 * N);
        for (std::size_t i = 0; i < N; ++i) {
            v[i] = 0.5 + 0.05 * static_cast<double>(i);
            b[i] = std::cos(static_cast<double>(i));
        }
        for (std::size_t mu = 0; mu < 2 * N; ++mu) fv[mu] = std::sin(static_cast<double>(mu + seed));
        const auto X = generate_returns(AssetEnsemble(v, b), FactorSeries(fv), seed);
        const RiskMatrix risk = wishart(X);
        const Eigen::MatrixXd& J = risk.entries();
        CHECK(J == J.transpose());
        const Eigen::MatrixXd direct = X.entries() * X.entries().transpose();
        CHECK((J - direct).cwiseAbs().maxCoeff() <= 1e-12 * direct.cwiseAbs().maxCoeff());
        const Eigen::LLT<Eigen::MatrixXd> llt(J);
        REQUIRE(llt.info() == Eigen::Success);
        CHECK(llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0);
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J, Eigen::EigenvaluesOnly);
        CHECK(es.eigenvalues().minCoeff() > 0);
    }
}

TEST_CASE("expected_wishart worked examples and structure")
{
    const auto EJ = expected_wishart(AssetEnsemble({1, 1}, {1, 1}), 1.0, 2.0).entries();
    Eigen::Matrix2d want;
    want << 3, 1, 1, 3;
    CHECK(EJ == want);

    const AssetEnsemble flat({1, 2, 3}, {0, 0, 0});
    const auto D = expected_wishart(flat, 5.0, 2.0).entries();
    CHECK(D == Eigen::Vector3d(2, 4, 6).asDiagonal().toDenseMatrix());

    CHECK_THROWS_AS(expected_wishart(flat, 1.0, 0.0), ConfigError);
    CHECK_THROWS_AS(expected_wishart(flat, -1.0, 2.0), ConfigError);
}

TEST_CASE("expected_wishart trace and loading scaling")
{
    const std::vector<double> v{0.5, 1.0, 1.5, 2.0}, b{0.3, 1.0, -0.7, 1.2};
    const double F = 1.7, alpha = 2.5;
    const auto EJ = expected_wishart(AssetEnsemble(v, b), F, alpha).entries();
    double mv = 0, mb2 = 0;
    for (std::size_t i = 0; i < 4; ++i) {
        mv += v[i] / 4;
        mb2 += b[i] * b[i] / 4;
    }
    CHECK(std::abs(EJ.trace() / 4 - (alpha * mv + alpha * F * mb2 / 4)) <= 1e-12);

    std::vector<double> b2(b);
    for (auto& x : b2) x *= 2;
    const auto EJ2 = expected_wishart(AssetEnsemble(v, b2), F, alpha).entries();
    const auto diag = expected_wishart(AssetEnsemble(v, {0, 0, 0, 0}), F, alpha).entries();
    CHECK(((EJ2 - diag) - 4 * (EJ - diag)).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("Monte Carlo mean of wishart matches expected_wishart")
{
    const std::size_t N = 3, p = 6, trials = 10000;
    const AssetEnsemble e({1.0, 2.0, 0.5}, {1.0, -0.5, 2.0});
    const FactorSeries f({0.4, -1.1, 0.9, 1.5, -0.2, 0.6});
    const double alpha = double(p) / N;
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(N, N), sum2 = Eigen::MatrixXd::Zero(N, N);
    for (std::size_t t = 0; t < trials; ++t) {
        const auto J = wishart(generate_returns(e, f, 1000 + t)).entries();
        sum += J;
        sum2 += J.cwiseProduct(J);
    }
    const Eigen::MatrixXd mean = sum / double(trials);
    const Eigen::MatrixXd var = sum2 / double(trials) - mean.cwiseProduct(mean);
    const auto EJ = expected_wishart(e, f.F(), alpha).entries();
    for (Eigen::Index i = 0; i < 3; ++i)
        for (Eigen::Index j = 0; j < 3; ++j) {
            CAPTURE(i);
            CAPTURE(j);
            CHECK(std::abs(mean(i, j) - EJ(i, j)) <= 3 * std::sqrt(var(i, j) / trials));
        }
}

TEST_CASE("matrix validation")
{
    RowMatrix bad(1, 2);
    bad << 1, std::nan("");
    CHECK_THROWS_AS(ReturnMatrix{bad}, ConfigError);
    Eigen::MatrixXd asym(2, 2);
    asym << 1, 2, 3, 4;
    CHECK_THROWS_AS(RiskMatrix{asym}, ConfigError);
    CHECK_THROWS_AS(RiskMatrix(Eigen::MatrixXd::Zero(2, 3)), ConfigError);
}

TEST_CASE("binary dumps round trip with a fixed header")
{
    RowMatrix x(2, 3);
    x << 1, 2, 3, 4, 5, 6;
    const ReturnMatrix X(x);
    const auto px = temp_file("X.bin");
    dump_binary(X, px);
    CHECK(std::filesystem::file_size(px) == 16 + 6 * 8);
    {
        std::ifstream in(px, std::ios::binary);
        char head[16];
        in.read(head, 16);
        CHECK(std::memcmp(head, "FRSK-X01", 8) == 0);
        std::uint32_t n = 0, p = 0;
        std::memcpy(&n, head + 8, 4);
        std::memcpy(&p, head + 12, 4);
        CHECK(n == 2);
        CHECK(p == 3);
        double second = 0;
        in.read(reinterpret_cast<char*>(&second), 8);
        in.read(reinterpret_cast<char*>(&second), 8);
        CHECK(second == 2);  // row-major
    }
    CHECK(load_return_matrix(px).entries() == x);

    const auto J = wishart(X);
    const auto pj = temp_file("J.bin");
    dump_binary(J, pj);
    CHECK(load_risk_matrix(pj).entries() == J.entries());
    CHECK_THROWS_AS(load_risk_matrix(px), ConfigError);
    CHECK_THROWS_AS(load_return_matrix(temp_file("missing.bin")), ConfigError);
    std::filesystem::remove(px);
    std::filesystem::remove(pj);
}
