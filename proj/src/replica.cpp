#include "factorrisk/replica.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <Eigen/Dense>

namespace factorrisk {

namespace {

void require_regime(double alpha)
{
    if (!(std::isfinite(alpha) && alpha > 1.0))
        throw RegimeError("period ratio alpha must exceed 1 (got " + std::to_string(alpha) +
                          "); the minimum-risk portfolio is not unique otherwise");
}

std::string format_double(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}  // namespace

ReplicaPrediction predict(const EnsembleMoments& mo, double alpha)
{
    require_regime(alpha);
    const double a = alpha - 1.0;
    const double gain = mo.F * mo.m * mo.m1;

    ReplicaPrediction p;
    p.alpha = alpha;
    p.epsilon = a / (2.0 * mo.inv_v) + 0.5 * a * gain;
    p.q_w = (1.0 + gain * mo.inv_v) / a + mo.C;
    p.q_s = 1.0 / mo.inv_v + mo.F * mo.F * mo.m * mo.m * mo.V1 * mo.inv_v +
            (1.0 / mo.inv_v + gain) / a;
    p.beta_chi_w = mo.inv_v / a;
    p.beta_chi_s = 1.0 / a;
    p.epsilon_or = alpha / (2.0 * mo.inv_v) + 0.5 * alpha * gain;
    p.kappa = alpha / a;
    p.q_w_or = mo.C;
    return p;
}

IndependentPrediction predict_independent(const EnsembleMoments& mo, double alpha)
{
    require_regime(alpha);
    const double a = alpha - 1.0;
    return {a / (2.0 * mo.inv_v), 1.0 / a + mo.inv_v2 / (mo.inv_v * mo.inv_v)};
}

double factor_gain(const EnsembleMoments& mo)
{
    return mo.F * mo.m * mo.m1;
}

ReplicaPrediction average(std::span<const ReplicaPrediction> ps)
{
    ReplicaPrediction out;
    if (ps.empty()) return out;
    for (const auto& p : ps) {
        out.alpha += p.alpha;
        out.epsilon += p.epsilon;
        out.q_w += p.q_w;
        out.q_s += p.q_s;
        out.beta_chi_w += p.beta_chi_w;
        out.beta_chi_s += p.beta_chi_s;
        out.epsilon_or += p.epsilon_or;
        out.kappa += p.kappa;
        out.q_w_or += p.q_w_or;
    }
    const double n = static_cast<double>(ps.size());
    out.alpha /= n;
    out.epsilon /= n;
    out.q_w /= n;
    out.q_s /= n;
    out.beta_chi_w /= n;
    out.beta_chi_s /= n;
    out.epsilon_or /= n;
    out.kappa /= n;
    out.q_w_or /= n;
    // Identical inputs give an exact copy rather than a rounded mean.
    if (std::all_of(ps.begin(), ps.end(), [&](const auto& p) { return p.kappa == ps[0].kappa; }))
        out.kappa = ps[0].kappa;
    if (std::all_of(ps.begin(), ps.end(), [&](const auto& p) { return p.alpha == ps[0].alpha; }))
        out.alpha = ps[0].alpha;
    return out;
}

std::string to_csv_row(const ReplicaPrediction& p)
{
    std::string row;
    for (double x : {p.alpha, p.epsilon, p.q_w, p.q_s, p.beta_chi_w, p.beta_chi_s, p.epsilon_or,
                     p.kappa, p.q_w_or}) {
        if (!row.empty()) row += ',';
        row += format_double(x);
    }
    return row;
}

void to_json(nlohmann::json& j, const ReplicaPrediction& p)
{
    j = nlohmann::json{{"alpha", p.alpha},           {"epsilon", p.epsilon},
                       {"q_w", p.q_w},               {"q_s", p.q_s},
                       {"beta_chi_w", p.beta_chi_w}, {"beta_chi_s", p.beta_chi_s},
                       {"epsilon_or", p.epsilon_or}, {"kappa", p.kappa},
                       {"q_w_or", p.q_w_or}};
}

// ---------------------------------------------------------------------------
// Order parameters

const std::array<std::string_view, OrderParameterSet::size> OrderParameterSet::names = {
    "k", "m", "h", "chi_w", "q_w", "chi_w_tilde", "q_w_tilde", "chi_s", "q_s", "chi_s_tilde",
    "q_s_tilde"};

std::array<double, OrderParameterSet::size> OrderParameterSet::to_array() const
{
    return {k, m, h, chi_w, q_w, chi_w_tilde, q_w_tilde, chi_s, q_s, chi_s_tilde, q_s_tilde};
}

OrderParameterSet OrderParameterSet::from_array(std::span<const double, size> x)
{
    OrderParameterSet t;
    t.k = x[0];
    t.m = x[1];
    t.h = x[2];
    t.chi_w = x[3];
    t.q_w = x[4];
    t.chi_w_tilde = x[5];
    t.q_w_tilde = x[6];
    t.chi_s = x[7];
    t.q_s = x[8];
    t.chi_s_tilde = x[9];
    t.q_s_tilde = x[10];
    return t;
}

void to_json(nlohmann::json& j, const OrderParameterSet& theta)
{
    j = nlohmann::json::object();
    const auto x = theta.to_array();
    for (std::size_t i = 0; i < OrderParameterSet::size; ++i)
        j[std::string(OrderParameterSet::names[i])] = x[i];
}

// ---------------------------------------------------------------------------
// Free energy

FreeEnergy::FreeEnergy(AssetMeasure measure, double F, double alpha, double beta)
    : measure_(std::move(measure)), F_(F), alpha_(alpha), beta_(beta)
{
    if (!(std::isfinite(beta) && beta > 0.0))
        throw ConfigError("inverse temperature beta must be positive and finite");
    if (!(std::isfinite(F) && F >= 0.0)) throw ConfigError("F must be nonnegative and finite");
    if (!(std::isfinite(alpha) && alpha > 0.0)) throw ConfigError("alpha must be positive");
}

double FreeEnergy::value(const OrderParameterSet& theta) const
{
    const auto x = theta.to_array();
    return value_generic<double>(std::span<const double, OrderParameterSet::size>(x));
}

FreeEnergy::Vector FreeEnergy::gradient(const OrderParameterSet& theta) const
{
    const auto x = theta.to_array();
    return gradient_generic<double>(std::span<const double, OrderParameterSet::size>(x));
}

FreeEnergy::Vector FreeEnergy::gradient_scale(const OrderParameterSet& t) const
{
    const double one_plus = 1.0 + beta_ * t.chi_s;
    check_domain(one_plus, t.chi_w_tilde, t.chi_s_tilde);

    double inv_d = 0, v_inv_d = 0, kb_d = 0, b_kb_d = 0, n_d2 = 0, v_n_d2 = 0;
    for (const auto& a : measure_.atoms()) {
        const double inv = 1.0 / (t.chi_w_tilde + a.v * t.chi_s_tilde);
        const double kb = t.k + a.b * t.h;
        const double numer = std::abs(t.q_w_tilde + a.v * t.q_s_tilde) + kb * kb;
        inv_d += a.weight * inv;
        v_inv_d += a.weight * a.v * inv;
        kb_d += a.weight * std::abs(kb) * inv;
        b_kb_d += a.weight * std::abs(a.b * kb) * inv;
        n_d2 += a.weight * numer * inv * inv;
        v_n_d2 += a.weight * a.v * numer * inv * inv;
    }
    const double ab = alpha_ * beta_;
    const double factor_term = ab * beta_ * std::abs(t.q_s + F_ * t.m * t.m) / (one_plus * one_plus);

    auto mx = [](std::initializer_list<double> xs) { return std::max(1.0, std::max(xs)); };
    return {
        mx({1.0, kb_d}),
        mx({std::abs(t.h), ab * F_ * std::abs(t.m) / one_plus}),
        mx({std::abs(t.m), b_kb_d}),
        mx({0.5 * std::abs(t.chi_w_tilde), 0.5 * std::abs(t.q_w_tilde)}),
        mx({0.5 * std::abs(t.chi_w_tilde)}),
        mx({0.5 * std::abs(t.chi_w + t.q_w), 0.5 * inv_d, 0.5 * n_d2}),
        mx({0.5 * std::abs(t.chi_w), 0.5 * inv_d}),
        mx({0.5 * std::abs(t.chi_s_tilde), 0.5 * std::abs(t.q_s_tilde), 0.5 * ab / one_plus,
            0.5 * factor_term}),
        mx({0.5 * std::abs(t.chi_s_tilde), 0.5 * ab / one_plus}),
        mx({0.5 * std::abs(t.chi_s + t.q_s), 0.5 * v_inv_d, 0.5 * v_n_d2}),
        mx({0.5 * std::abs(t.chi_s), 0.5 * v_inv_d}),
    };
}

double FreeEnergy::beta_partial(const OrderParameterSet& t) const
{
    const double one_plus = 1.0 + beta_ * t.chi_s;
    check_domain(one_plus, t.chi_w_tilde, t.chi_s_tilde);
    return -0.5 * alpha_ * t.chi_s / one_plus -
           alpha_ * (t.q_s + F_ * t.m * t.m) / (2.0 * one_plus * one_plus);
}

double free_energy(const OrderParameterSet& theta, const AssetMeasure& measure, double F,
                   double alpha, double beta)
{
    return FreeEnergy(measure, F, alpha, beta).value(theta);
}

// ---------------------------------------------------------------------------
// Stationarity

OrderParameterSet closed_form_stationary_point(const AssetMeasure& measure, double F, double alpha,
                                               double beta)
{
    require_regime(alpha);
    if (!(std::isfinite(beta) && beta > 0.0))
        throw ConfigError("inverse temperature beta must be positive and finite");
    const EnsembleMoments mo = compute_moments(measure, F);
    const ReplicaPrediction pred = predict(mo, alpha);

    OrderParameterSet t;
    t.m = mo.m;
    t.chi_w = pred.beta_chi_w / beta;
    t.q_w = pred.q_w;
    t.chi_s = pred.beta_chi_s / beta;
    t.q_s = pred.q_s;

    const double one_plus = 1.0 + beta * t.chi_s;
    const double ab = alpha * beta;
    // d/dq_w and d/dchi_w:   chi_w~ = 0, q_w~ = chi_w~
    t.chi_w_tilde = 0.0;
    t.q_w_tilde = 0.0;
    // d/dq_s:   chi_s~ = alpha beta / (1 + beta chi_s)
    t.chi_s_tilde = ab / one_plus;
    // d/dchi_s: chi_s~ - q_s~ = alpha beta/(1+beta chi_s) - alpha beta^2 (q_s + F m^2)/(1+beta chi_s)^2
    t.q_s_tilde = t.chi_s_tilde - ab / one_plus +
                  ab * beta * (t.q_s + F * t.m * t.m) / (one_plus * one_plus);
    // d/dm:     h = -alpha beta F m / (1 + beta chi_s)
    t.h = -ab * F * t.m / one_plus;
    // d/dk:     <(k + b h)/D> = 1
    const double inv_d =
        measure.average([&](double, double v) { return 1.0 / (t.chi_w_tilde + v * t.chi_s_tilde); });
    const double b_inv_d =
        measure.average([&](double b, double v) { return b / (t.chi_w_tilde + v * t.chi_s_tilde); });
    t.k = (1.0 - t.h * b_inv_d) / inv_d;
    return t;
}

namespace {

using Vec = FreeEnergy::Vector;

double max_relative(const Vec& g, const Vec& scale)
{
    double r = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) r = std::max(r, std::abs(g[i]) / scale[i]);
    return r;
}

double max_abs(const Vec& g)
{
    double r = 0.0;
    for (double x : g) r = std::max(r, std::abs(x));
    return r;
}

Eigen::MatrixXd complex_step_hessian(const FreeEnergy& fe, const Vec& x)
{
    constexpr std::size_t n = OrderParameterSet::size;
    using cd = std::complex<double>;
    Eigen::MatrixXd H(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        std::array<cd, n> xc;
        for (std::size_t i = 0; i < n; ++i) xc[i] = x[i];
        const double step = 1e-20 * std::max(1.0, std::abs(x[j]));
        xc[j] += cd(0.0, step);
        const auto g = fe.gradient_generic<cd>(std::span<const cd, n>(xc));
        for (std::size_t i = 0; i < n; ++i) H(i, j) = g[i].imag() / step;
    }
    return H;
}

}  // namespace

namespace {

// One damped Newton step on grad phi = 0. Updates (theta, g, merit) and
// returns true when the relative residual decreased.
bool newton_step(const FreeEnergy& fe, OrderParameterSet& theta, Vec& g, double& merit)
{
    constexpr std::size_t n = OrderParameterSet::size;
    const Vec x = theta.to_array();
    const Vec scale = fe.gradient_scale(theta);
    const Eigen::MatrixXd H = complex_step_hessian(fe, x);

    // Equilibrate rows by gradient scale and columns by parameter size.
    Eigen::VectorXd row(n), col(n), rhs(n);
    for (std::size_t i = 0; i < n; ++i) {
        row(i) = 1.0 / scale[i];
        col(i) = std::max(1.0, std::abs(x[i]));
        rhs(i) = -g[i] * row(i);
    }
    const Eigen::MatrixXd Hs = row.asDiagonal() * H * col.asDiagonal();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(Hs);
    Eigen::VectorXd step;
    if (lu.isInvertible()) {
        step = col.asDiagonal() * lu.solve(rhs);
    } else {
        step = col.asDiagonal() * Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(Hs).solve(rhs);
    }

    // Backtrack on the relative residual; stay inside the log domain.
    for (double t = 1.0; t > 1e-6; t *= 0.5) {
        Vec trial = x;
        for (std::size_t i = 0; i < n; ++i) trial[i] += t * step(static_cast<Eigen::Index>(i));
        const auto cand = OrderParameterSet::from_array(trial);
        try {
            const Vec gc = fe.gradient(cand);
            const double mc = max_relative(gc, fe.gradient_scale(cand));
            if (mc < merit) {
                theta = cand;
                g = gc;
                merit = mc;
                return true;
            }
        } catch (const DomainError&) {
        }
    }
    return false;
}

constexpr int kPolishSteps = 3;

}  // namespace

StationarySolution solve_stationary(const AssetMeasure& measure, double F, double alpha,
                                    double beta, const std::optional<OrderParameterSet>& init,
                                    const StationaryOptions& options)
{
    require_regime(alpha);
    const FreeEnergy fe(measure, F, alpha, beta);
    OrderParameterSet theta = init ? *init : closed_form_stationary_point(measure, F, alpha, beta);

    Vec g = fe.gradient(theta);
    double merit = max_relative(g, fe.gradient_scale(theta));

    int iter = 0;
    for (; merit > options.tolerance; ++iter) {
        if (iter >= options.max_iterations) {
            throw ConvergenceError("stationarity solve did not converge after " +
                                       std::to_string(options.max_iterations) +
                                       " iterations (max relative residual " +
                                       std::to_string(merit) + ")",
                                   std::vector<double>(g.begin(), g.end()));
        }
        if (!newton_step(fe, theta, g, merit)) {
            throw ConvergenceError("stationarity solve stalled (max relative residual " +
                                       std::to_string(merit) + ")",
                                   std::vector<double>(g.begin(), g.end()));
        }
    }
    // Quadratic convergence: a few extra steps take the residual from the
    // tolerance down to rounding level.
    if (iter > 0) {
        for (int i = 0; i < kPolishSteps && merit > 0.0 && newton_step(fe, theta, g, merit); ++i) ++iter;
    }

    StationarySolution out;
    out.theta = theta;
    out.gradient = g;
    out.max_abs_gradient = max_abs(g);
    out.max_relative_residual = merit;
    out.iterations = iter;
    return out;
}

BetaDerivativeCheck beta_derivative_check(const AssetMeasure& measure, double F, double alpha,
                                          double beta, double relative_step)
{
    if (!(relative_step > 0.0 && relative_step < 1.0))
        throw ConfigError("relative beta step must lie in (0, 1)");
    BetaDerivativeCheck c;
    c.beta = beta;
    c.delta = relative_step * beta;
    const double lo = beta - c.delta;
    const double hi = beta + c.delta;
    c.phi_minus = FreeEnergy(measure, F, alpha, lo).value(solve_stationary(measure, F, alpha, lo).theta);
    c.phi_plus = FreeEnergy(measure, F, alpha, hi).value(solve_stationary(measure, F, alpha, hi).theta);
    c.epsilon_finite_difference = -(c.phi_plus - c.phi_minus) / (2.0 * c.delta);
    c.epsilon_replica = predict(compute_moments(measure, F), alpha).epsilon;
    c.relative_gap =
        std::abs(c.epsilon_finite_difference - c.epsilon_replica) / std::abs(c.epsilon_replica);
    return c;
}

void to_json(nlohmann::json& j, const BetaDerivativeCheck& c)
{
    j = nlohmann::json{{"beta", c.beta},
                       {"delta", c.delta},
                       {"phi_minus", c.phi_minus},
                       {"phi_plus", c.phi_plus},
                       {"epsilon_finite_difference", c.epsilon_finite_difference},
                       {"epsilon_replica", c.epsilon_replica},
                       {"relative_gap", c.relative_gap}};
}

}  // namespace factorrisk
