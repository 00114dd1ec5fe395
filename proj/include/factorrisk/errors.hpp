#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace factorrisk {

/// Invalid configuration or argument (bad spec parameters, malformed config,
/// unsupported family for the requested role).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Period ratio outside the regime with a unique optimum (alpha <= 1, or
/// p <= N after rounding).
class RegimeError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Singular or indefinite risk matrix met during factorization.
class DegenerateSolveError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Free-energy evaluation outside the domain of its logarithms/divisions.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Stationarity solve that ran out of iterations. Carries the last gradient.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, std::vector<double> residual)
        : std::runtime_error(what), residual_(std::move(residual))
    {
    }

    const std::vector<double>& residual() const noexcept { return residual_; }

private:
    std::vector<double> residual_;
};

}  // namespace factorrisk
