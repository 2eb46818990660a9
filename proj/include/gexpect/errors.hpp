#pragma once

#include <stdexcept>
#include <string>

namespace gexpect {

/// Bad user input: malformed expressions, invalid matrices, mismatched grids,
/// or a diagnostic that means the configuration cannot be trusted (e.g. a grid
/// too narrow for the diffusion it must carry).
class input_error : public std::runtime_error {
public:
    explicit input_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// A payoff produced a non-finite value, or an evaluation hit the division guard.
class evaluation_error : public std::runtime_error {
public:
    explicit evaluation_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// The request is outside what this engine implements (not an input problem:
/// the math is fine, the code path does not exist on purpose).
class capability_error : public std::runtime_error {
public:
    explicit capability_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// An iterative search exhausted its configured budget before certifying its
/// target; carries the best bound that was reached.
class budget_error : public std::runtime_error {
public:
    budget_error(const std::string& msg, double achieved)
        : std::runtime_error(msg), achieved_(achieved) {}

    double achieved() const noexcept { return achieved_; }

private:
    double achieved_;
};

} // namespace gexpect
