#pragma once

#include <stdexcept>
#include <string>

namespace bodyfit {

// Bad arguments, dimension mismatches, infeasible configurations.
class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// Missing, truncated or garbled files.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values where the math requires finite ones.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// A file-mode sampler ran out of entries.
class EndOfDataError : public std::runtime_error {
public:
    explicit EndOfDataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace bodyfit
