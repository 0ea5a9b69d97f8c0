#pragma once

#include <stdexcept>
#include <string>

namespace bkd {

// Base class for everything this library throws on purpose.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad user-facing input (CLI flags, config files, empty ranges).
struct usage_error : error {
    using error::error;
};

// Argument outside a documented precondition.
struct domain_error : error {
    using error::error;
};

// A stated invariant failed (flags that lie, broken norms, bad grids).
struct contract_error : error {
    using error::error;
};

// Solver breakdowns and other floating-point casualties.
struct numeric_error : error {
    using error::error;
};

// Requested problem size exceeds the configured memory budget.
struct resource_error : error {
    using error::error;
};

// A correlation denominator underflowed; `factor` names the culprit ("D1" or "D2").
struct denominator_error : numeric_error {
    std::string factor;
    denominator_error(std::string f, const std::string& msg)
        : numeric_error(msg), factor(std::move(f)) {}
};

// Truncated basis can no longer represent the state. `horizon` is the last
// time at which the result was still trustworthy (0 if it never was).
struct truncation_error : error {
    double horizon;
    truncation_error(double h, const std::string& msg) : error(msg), horizon(h) {}
};

}  // namespace bkd
