#pragma once

#include <stdexcept>
#include <string>

namespace qflow {

// Bad parameters or inputs; the CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A run that went non-finite or otherwise broke down mid-computation.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

}  // namespace qflow
