#pragma once

#include <stdexcept>
#include <string>

namespace qelab {

// Bad inputs or broken preconditions (CLI maps these to exit code 2).
class validation_error : public std::runtime_error {
public:
    explicit validation_error(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failures: non-convergence, invariant violations, corrupt data
// (CLI maps these to exit code 3).
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace qelab
