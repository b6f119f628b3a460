#pragma once

#include <stdexcept>
#include <string>

namespace bdt {

// Bad user input: malformed files, out-of-range arguments, missing columns.
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Solver or arithmetic failure: non-finite values, factorization breakdown.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Surface stoichiometry exhausted; protocols treat this as a cutoff, not a crash.
class SaturationError : public std::runtime_error {
public:
    explicit SaturationError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace bdt
