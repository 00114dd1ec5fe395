#include <doctest.h>

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "factorrisk/replica.hpp"

using namespace factorrisk;
using doctest::Approx;

namespace {

constexpr std::size_t n = OrderParameterSet::size;
using cd = std::complex<double>;

AssetMeasure measure_of(std::vector<double> v, std::vector<double> b)
{
    return AssetMeasure::empirical(AssetEnsemble(std::move(v), std::move(b)));
}

AssetMeasure iid_measure() { return measure_of({1, 1}, {0, 0}); }
AssetMeasure two_level_measure(double b) { return measure_of({1, 2}, {b, b}); }

// Derivative of the value along coordinate j by complex step. Independent of
// the hand-written gradient and free of cancellation error.
double complex_step_partial(const FreeEnergy& fe, const OrderParameterSet& theta, std::size_t j)
{
    const auto x = theta.to_array();
    std::array<cd, n> xc;
    for (std::size_t i = 0; i < n; ++i) xc[i] = x[i];
    const double h = 1e-30 * std::max(1.0, std::abs(x[j]));
    xc[j] += cd(0.0, h);
    return fe.value_generic<cd>(std::span<const cd, n>(xc)).imag() / h;
}

OrderParameterSet perturbed(const OrderParameterSet& t, std::mt19937_64& gen, double rel)
{
    std::uniform_real_distribution<double> u(-rel, rel);
    auto x = t.to_array();
    for (auto& xi : x) xi *= 1.0 + u(gen);
    // A zero component stays zero under relative noise; nudge the two
    // w-conjugates, which vanish at the stationary point.
    x[5] += rel * x[9];
    x[6] += rel * x[10] * u(gen);
    return OrderParameterSet::from_array(x);
}

}  // namespace

TEST_CASE("order parameter array round trip")
{
    OrderParameterSet t;
    auto x = t.to_array();
    for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(i) + 0.5;
    const auto back = OrderParameterSet::from_array(x);
    CHECK(back.k == 0.5);
    CHECK(back.q_s_tilde == 10.5);
    CHECK(back.to_array() == x);
    CHECK(OrderParameterSet::names[3] == "chi_w");
    CHECK(OrderParameterSet::names[10] == "q_s_tilde");
}

TEST_CASE("analytic gradient matches complex-step differentiation of the value")
{
    std::mt19937_64 gen(4);
    const std::vector<AssetMeasure> measures{iid_measure(), two_level_measure(1.0),
                                             measure_of({0.5, 1, 2, 4}, {-0.3, 0.7, 1.2, 2.5})};
    for (const auto& mu : measures) {
        for (double beta : {0.1, 1.0, 1e3}) {
            const FreeEnergy fe(mu, 1.3, 2.5, beta);
            const auto base = closed_form_stationary_point(mu, 1.3, 2.5, beta);
            for (int rep = 0; rep < 5; ++rep) {
                const auto theta = perturbed(base, gen, 0.2);
                const auto g = fe.gradient(theta);
                const auto scale = fe.gradient_scale(theta);
                for (std::size_t j = 0; j < n; ++j) {
                    const double cs = complex_step_partial(fe, theta, j);
                    CAPTURE(j);
                    CHECK(std::abs(g[j] - cs) <= 1e-12 * scale[j]);
                }
            }
        }
    }
}

TEST_CASE("complex and real evaluations of the value agree")
{
    const auto mu = two_level_measure(1.0);
    const FreeEnergy fe(mu, 1.0, 3.0, 10.0);
    const auto theta = closed_form_stationary_point(mu, 1.0, 3.0, 10.0);
    const auto x = theta.to_array();
    std::array<cd, n> xc;
    for (std::size_t i = 0; i < n; ++i) xc[i] = x[i];
    const cd v = fe.value_generic<cd>(std::span<const cd, n>(xc));
    CHECK(v.real() == Approx(fe.value(theta)).epsilon(1e-14));
    CHECK(v.imag() == 0.0);
    CHECK(free_energy(theta, mu, 1.0, 3.0, 10.0) == fe.value(theta));
}

TEST_CASE("value is symmetric under relabelling assets")
{
    const std::vector<double> v{0.5, 1, 2, 4}, b{-0.3, 0.7, 1.2, 2.5};
    const std::vector<double> pv{4, 1, 0.5, 2}, pb{2.5, 0.7, -0.3, 1.2};
    const auto mu = measure_of(v, b);
    const auto pmu = measure_of(pv, pb);
    std::mt19937_64 gen(8);
    const auto theta = perturbed(closed_form_stationary_point(mu, 2.0, 2.0, 50.0), gen, 0.1);
    CHECK(free_energy(theta, mu, 2.0, 2.0, 50.0) ==
          Approx(free_energy(theta, pmu, 2.0, 2.0, 50.0)).epsilon(1e-14));
}

TEST_CASE("domain violations are reported")
{
    const auto mu = iid_measure();
    const FreeEnergy fe(mu, 0.0, 2.0, 1e3);
    auto theta = closed_form_stationary_point(mu, 0.0, 2.0, 1e3);
    auto bad = theta;
    bad.chi_s = -2e-3;  // 1 + beta chi_s < 0
    CHECK_THROWS_AS(fe.value(bad), DomainError);
    CHECK_THROWS_AS(fe.gradient(bad), DomainError);
    bad = theta;
    bad.chi_s_tilde = -1.0;
    CHECK_THROWS_AS(fe.value(bad), DomainError);
    CHECK_THROWS_AS(fe.beta_partial(bad), DomainError);
}

TEST_CASE("closed-form point is stationary for the bundled ensembles")
{
    struct Case {
        AssetMeasure mu;
        double alpha;
    };
    const std::vector<Case> cases{{iid_measure(), 2.0},
                                  {two_level_measure(0.0), 3.0},
                                  {two_level_measure(1.0), 3.0}};
    for (const auto& c : cases) {
        for (double beta : {1.0, 1e3, 1e6}) {
            const auto sol = solve_stationary(c.mu, 1.0, c.alpha, beta);
            CHECK(sol.max_relative_residual <= 1e-8);
            if (beta == 1e3) CHECK(sol.max_abs_gradient <= 1e-6);
        }
    }
}

TEST_CASE("Newton recovers the stationary point from a perturbed start")
{
    std::mt19937_64 gen(12);
    const std::vector<AssetMeasure> measures{iid_measure(), two_level_measure(1.0),
                                             measure_of({0.5, 1, 2, 4}, {-0.3, 0.7, 1.2, 2.5})};
    for (const auto& mu : measures) {
        const auto target = closed_form_stationary_point(mu, 1.0, 3.0, 1e3);
        for (int rep = 0; rep < 3; ++rep) {
            const auto sol = solve_stationary(mu, 1.0, 3.0, 1e3, perturbed(target, gen, 0.05));
            CHECK(sol.iterations > 0);
            CHECK(sol.max_abs_gradient <= 1e-6);
            const auto x = sol.theta.to_array();
            const auto y = target.to_array();
            for (std::size_t j = 0; j < n; ++j) {
                CAPTURE(j);
                CHECK(std::abs(x[j] - y[j]) <= 1e-6 * std::max(1.0, std::abs(y[j])));
            }
        }
    }
}

TEST_CASE("stationary direct parameters at finite beta")
{
    const auto sol = solve_stationary(iid_measure(), 1.0, 2.0, 1e3);
    CHECK(sol.theta.q_w == Approx(2).epsilon(0.01));
    CHECK(sol.theta.chi_w == Approx(1e-3).epsilon(0.01));
    const auto twice = solve_stationary(iid_measure(), 1.0, 2.0, 2e3);
    CHECK(twice.theta.chi_w == Approx(sol.theta.chi_w / 2).epsilon(0.02));
    CHECK(twice.theta.chi_s == Approx(sol.theta.chi_s / 2).epsilon(0.02));
}

TEST_CASE("explicit beta partial at the stationary point")
{
    // Envelope theorem: d phi*/d beta = partial_beta phi at Theta*. With the
    // closed forms this is -(epsilon + 1/(2 beta)) for every beta.
    const auto mu = two_level_measure(1.0);
    for (double beta : {0.5, 10.0, 1e3}) {
        const auto theta = solve_stationary(mu, 1.0, 3.0, beta).theta;
        const double eps = predict(compute_moments(mu, 1.0), 3.0).epsilon;
        CHECK(-FreeEnergy(mu, 1.0, 3.0, beta).beta_partial(theta) ==
              Approx(eps + 0.5 / beta).epsilon(1e-10));
    }
}

TEST_CASE("beta-derivative check")
{
    for (const auto& [mu, alpha] : std::vector<std::pair<AssetMeasure, double>>{
             {iid_measure(), 2.0}, {two_level_measure(0.0), 3.0}, {two_level_measure(1.0), 3.0}}) {
        const auto c = beta_derivative_check(mu, 1.0, alpha, 1e3);
        CHECK(c.relative_gap <= 0.01);
        CHECK(c.epsilon_replica == predict(compute_moments(mu, 1.0), alpha).epsilon);
    }
    const auto far = beta_derivative_check(iid_measure(), 1.0, 2.0, 1e-3);
    CHECK(far.relative_gap > 0.01);
    CHECK_THROWS_AS(beta_derivative_check(iid_measure(), 1.0, 2.0, 1e3, 0.0), ConfigError);
}

TEST_CASE("non-convergence carries the residual")
{
    std::mt19937_64 gen(2);
    const auto mu = two_level_measure(1.0);
    const auto start = perturbed(closed_form_stationary_point(mu, 1.0, 3.0, 1e3), gen, 0.2);
    StationaryOptions opts;
    opts.max_iterations = 0;
    try {
        solve_stationary(mu, 1.0, 3.0, 1e3, start, opts);
        FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
        CHECK(e.residual().size() == n);
        const auto g = FreeEnergy(mu, 1.0, 3.0, 1e3).gradient(start);
        CHECK(std::equal(g.begin(), g.end(), e.residual().begin()));
    }
    CHECK_THROWS_AS(solve_stationary(mu, 1.0, 1.0, 1e3), RegimeError);
}
