/**
 * @file replica.hpp
 * @brief Replica-symmetric predictions for the budget-constrained minimum
 *        risk portfolio under a single-factor return model.
 *
 * Closed forms (alpha = p/N > 1, moments from ensemble.hpp):
 *
 *   epsilon    = (alpha-1)/(2<1/v>) + (alpha-1)/2 F m m1
 *   q_w        = (1 + F m m1 <1/v>)/(alpha-1) + C
 *   q_s        = 1/<1/v> + F^2 m^2 V1 <1/v> + (1/<1/v> + F m m1)/(alpha-1)
 *   epsilon_or = alpha/(2<1/v>) + alpha/2 F m m1,   kappa = alpha/(alpha-1)
 *   q_w_or     = C
 *
 * The free energy phi(Theta) over the eleven order parameters is exposed
 * for a numerical stationarity check at finite inverse temperature beta.
 */
#pragma once

#include <array>
#include <complex>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "factorrisk/ensemble.hpp"
#include "factorrisk/errors.hpp"

namespace factorrisk {

struct ReplicaPrediction {
    double alpha = 0.0;
    double epsilon = 0.0;
    double q_w = 0.0;
    double q_s = 0.0;
    double beta_chi_w = 0.0;  // beta * chi_w, finite as beta -> infinity
    double beta_chi_s = 0.0;
    double epsilon_or = 0.0;
    double kappa = 0.0;
    double q_w_or = 0.0;

    friend bool operator==(const ReplicaPrediction&, const ReplicaPrediction&) = default;
};

/// Throws RegimeError unless alpha > 1.
ReplicaPrediction predict(const EnsembleMoments& moments, double alpha);

struct IndependentPrediction {
    double epsilon = 0.0;
    double q_w = 0.0;
};

/// Uncorrelated-returns result; ignores b and F.
IndependentPrediction predict_independent(const EnsembleMoments& moments, double alpha);

/// F m m1 = F m1^2 / (1 + F V1 <1/v>), the factor contribution to epsilon
/// per unit (alpha-1)/2.
double factor_gain(const EnsembleMoments& moments);

/// Field-wise mean of several predictions.
ReplicaPrediction average(std::span<const ReplicaPrediction> predictions);

inline constexpr std::string_view kPredictionCsvHeader =
    "alpha,epsilon,q_w,q_s,beta_chi_w,beta_chi_s,epsilon_or,kappa,q_w_or";
std::string to_csv_row(const ReplicaPrediction& p);
void to_json(nlohmann::json& j, const ReplicaPrediction& p);

// ---------------------------------------------------------------------------
// Free energy

struct OrderParameterSet {
    static constexpr std::size_t size = 11;
    static const std::array<std::string_view, size> names;

    double k = 0.0;
    double m = 0.0;
    double h = 0.0;
    double chi_w = 0.0;
    double q_w = 0.0;
    double chi_w_tilde = 0.0;
    double q_w_tilde = 0.0;
    double chi_s = 0.0;
    double q_s = 0.0;
    double chi_s_tilde = 0.0;
    double q_s_tilde = 0.0;

    std::array<double, size> to_array() const;
    static OrderParameterSet from_array(std::span<const double, size> x);
};

void to_json(nlohmann::json& j, const OrderParameterSet& theta);

/// Extremand of the replica-symmetric free energy for one (measure, F,
/// alpha, beta). Asset averages are weighted sums over the measure's atoms.
///
/// Parameter vectors follow OrderParameterSet order:
/// (k, m, h, chi_w, q_w, chi_w~, q_w~, chi_s, q_s, chi_s~, q_s~).
class FreeEnergy {
public:
    using Vector = std::array<double, OrderParameterSet::size>;

    FreeEnergy(AssetMeasure measure, double F, double alpha, double beta);

    const AssetMeasure& measure() const { return measure_; }
    double F() const { return F_; }
    double alpha() const { return alpha_; }
    double beta() const { return beta_; }

    double value(const OrderParameterSet& theta) const;
    Vector gradient(const OrderParameterSet& theta) const;
    /// Magnitude of the largest term entering each gradient component,
    /// floored at 1. |gradient_j| / scale_j is the relative residual.
    Vector gradient_scale(const OrderParameterSet& theta) const;
    /// Explicit partial derivative with respect to beta at fixed Theta.
    double beta_partial(const OrderParameterSet& theta) const;

    /// Generic-scalar versions (T = double or std::complex<double>); the
    /// complex instantiation supports complex-step differentiation.
    template <class T>
    T value_generic(std::span<const T, OrderParameterSet::size> x) const;
    template <class T>
    std::array<T, OrderParameterSet::size> gradient_generic(
        std::span<const T, OrderParameterSet::size> x) const;

private:
    template <class T>
    void check_domain(const T& one_plus, const T& chi_w_tilde, const T& chi_s_tilde) const;

    AssetMeasure measure_;
    double F_;
    double alpha_;
    double beta_;
};

double free_energy(const OrderParameterSet& theta, const AssetMeasure& measure, double F,
                   double alpha, double beta);

struct StationaryOptions {
    int max_iterations = 50;
    double tolerance = 1e-8;  // on max_j |g_j| / scale_j
};

struct StationarySolution {
    OrderParameterSet theta;
    FreeEnergy::Vector gradient{};
    double max_abs_gradient = 0.0;
    double max_relative_residual = 0.0;
    int iterations = 0;
};

/// Direct parameters taken from the closed forms, with k, h and the four
/// conjugates solved from the stationarity equations of the direct
/// parameters (all rational given the direct ones).
OrderParameterSet closed_form_stationary_point(const AssetMeasure& measure, double F, double alpha,
                                               double beta);

/// Newton iteration on grad phi = 0 (Hessian by complex-step differentiation
/// of the analytic gradient). Starts from `init` when supplied, otherwise
/// from closed_form_stationary_point. Throws ConvergenceError with the last
/// gradient when the iteration budget runs out.
StationarySolution solve_stationary(const AssetMeasure& measure, double F, double alpha,
                                    double beta,
                                    const std::optional<OrderParameterSet>& init = std::nullopt,
                                    const StationaryOptions& options = {});

struct BetaDerivativeCheck {
    double beta = 0.0;
    double delta = 0.0;
    double phi_minus = 0.0;
    double phi_plus = 0.0;
    double epsilon_finite_difference = 0.0;  // -(phi(beta+d) - phi(beta-d)) / 2d
    double epsilon_replica = 0.0;            // predict(...).epsilon
    double relative_gap = 0.0;
};

/// Re-extremizes at beta +/- delta (delta = relative_step * beta) and
/// compares the central difference of -phi with the closed-form epsilon.
BetaDerivativeCheck beta_derivative_check(const AssetMeasure& measure, double F, double alpha,
                                          double beta, double relative_step = 1e-3);

void to_json(nlohmann::json& j, const BetaDerivativeCheck& c);

// ---------------------------------------------------------------------------

namespace detail {
inline double real_part(double x) { return x; }
inline double real_part(const std::complex<double>& x) { return x.real(); }
}  // namespace detail

template <class T>
void FreeEnergy::check_domain(const T& one_plus, const T& chi_w_tilde, const T& chi_s_tilde) const
{
    if (!(detail::real_part(one_plus) > 0.0))
        throw DomainError("free energy: 1 + beta*chi_s must be positive");
    for (const auto& a : measure_.atoms()) {
        if (!(detail::real_part(chi_w_tilde + a.v * chi_s_tilde) > 0.0))
            throw DomainError("free energy: chi_w~ + v*chi_s~ must be positive for every asset");
    }
}

template <class T>
T FreeEnergy::value_generic(std::span<const T, OrderParameterSet::size> x) const
{
    const T& k = x[0];
    const T& m = x[1];
    const T& h = x[2];
    const T& chi_w = x[3];
    const T& q_w = x[4];
    const T& cwt = x[5];
    const T& qwt = x[6];
    const T& chi_s = x[7];
    const T& q_s = x[8];
    const T& cst = x[9];
    const T& qst = x[10];

    const T one_plus = 1.0 + beta_ * chi_s;
    check_domain(one_plus, cwt, cst);

    T log_term{};
    T ratio_term{};
    for (const auto& a : measure_.atoms()) {
        const T denom = cwt + a.v * cst;
        const T kb = k + a.b * h;
        log_term += a.weight * std::log(denom);
        ratio_term += a.weight * (qwt + a.v * qst + kb * kb) / denom;
    }

    return -k - h * m + 0.5 * (chi_w + q_w) * (cwt - qwt) + 0.5 * q_w * qwt +
           0.5 * (chi_s + q_s) * (cst - qst) + 0.5 * q_s * qst - 0.5 * alpha_ * std::log(one_plus) -
           alpha_ * beta_ * (q_s + F_ * m * m) / (2.0 * one_plus) - 0.5 * log_term +
           0.5 * ratio_term;
}

template <class T>
std::array<T, OrderParameterSet::size> FreeEnergy::gradient_generic(
    std::span<const T, OrderParameterSet::size> x) const
{
    const T& k = x[0];
    const T& m = x[1];
    const T& h = x[2];
    const T& chi_w = x[3];
    const T& q_w = x[4];
    const T& cwt = x[5];
    const T& qwt = x[6];
    const T& chi_s = x[7];
    const T& q_s = x[8];
    const T& cst = x[9];
    const T& qst = x[10];

    const T one_plus = 1.0 + beta_ * chi_s;
    check_domain(one_plus, cwt, cst);

    T inv_d{}, v_inv_d{}, kb_d{}, b_kb_d{}, n_d2{}, v_n_d2{};
    for (const auto& a : measure_.atoms()) {
        const T denom = cwt + a.v * cst;
        const T kb = k + a.b * h;
        const T numer = qwt + a.v * qst + kb * kb;
        const T inv = 1.0 / denom;
        inv_d += a.weight * inv;
        v_inv_d += a.weight * a.v * inv;
        kb_d += a.weight * kb * inv;
        b_kb_d += a.weight * a.b * kb * inv;
        n_d2 += a.weight * numer * inv * inv;
        v_n_d2 += a.weight * a.v * numer * inv * inv;
    }

    const double ab = alpha_ * beta_;
    std::array<T, OrderParameterSet::size> g;
    g[0] = -1.0 + kb_d;
    g[1] = -h - ab * F_ * m / one_plus;
    g[2] = -m + b_kb_d;
    g[3] = 0.5 * (cwt - qwt);
    g[4] = 0.5 * cwt;
    g[5] = 0.5 * (chi_w + q_w) - 0.5 * inv_d - 0.5 * n_d2;
    g[6] = -0.5 * chi_w + 0.5 * inv_d;
    g[7] = 0.5 * (cst - qst) - 0.5 * ab / one_plus +
           0.5 * ab * beta_ * (q_s + F_ * m * m) / (one_plus * one_plus);
    g[8] = 0.5 * cst - 0.5 * ab / one_plus;
    g[9] = 0.5 * (chi_s + q_s) - 0.5 * v_inv_d - 0.5 * v_n_d2;
    g[10] = -0.5 * chi_s + 0.5 * v_inv_d;
    return g;
}

}  // namespace factorrisk
