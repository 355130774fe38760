#pragma once

#include <stdexcept>
#include <string>

namespace fgse {

// Raised when an input file cannot be read or is not valid JSON.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& msg) : std::runtime_error("parse error: " + msg) {}
};

// Raised when inputs are well-formed but violate a domain invariant.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg)
        : std::runtime_error("validation error: " + msg) {}
};

// Raised when a numerical procedure fails (non-convergence, singularity, NaN).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg)
        : std::runtime_error("numerical error: " + msg) {}
};

}  // namespace fgse
