#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace casb {

inline constexpr const char* kVersion = "0.1.0";

// Absolute floor applied before any log of a density.
inline constexpr double kAbsDensityFloor = 1e-300;
// Relative floor (times the field max) applied to divisors.
inline constexpr double kRelDensityFloor = 1e-14;

// Bad user-facing configuration: missing keys, malformed values, shape
// mismatches between a config and stored data.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A numerical procedure failed (divergence, CFL violation, instability,
// particle blow-up, domain too small for a kernel, ...).
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// One sweep of the bridge fixed-point iteration: L1 marginal mismatches at
// both endpoints and the number of floored divisor nodes encountered.
struct IterationRecord {
    int iteration = 0;
    double err_initial = 0.0;
    double err_terminal = 0.0;
    long floored_nodes = 0;
};

struct ConvergenceError : NumericalError {
    ConvergenceError(const std::string& what, std::vector<IterationRecord> log_)
        : NumericalError(what), log(std::move(log_)) {}
    std::vector<IterationRecord> log;
};

}  // namespace casb
