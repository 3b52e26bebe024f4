#pragma once

#include <stdexcept>
#include <string>

namespace perfodyn {

/// Input violates a documented precondition (bad file, bad dimensions, bad range).
class InvalidInputError : public std::invalid_argument {
public:
    explicit InvalidInputError(const std::string& what) : std::invalid_argument(what) {}
};

/// A numerical procedure failed (non-convergence, singular system, degenerate family).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace perfodyn
