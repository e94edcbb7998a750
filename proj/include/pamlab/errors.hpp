#pragma once

#include <stdexcept>
#include <string>

namespace pamlab {

/// Invalid input or configuration (domain, size, index mismatch).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An iterative or quadrature routine failed to reach its tolerance.
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& what, double achieved)
        : std::runtime_error(what + " (achieved " + std::to_string(achieved) + ")"), achieved_(achieved) {}

    double achieved() const noexcept { return achieved_; }

private:
    double achieved_;
};

/// Requested problem exceeds a configured site/path budget.
class BudgetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace pamlab
