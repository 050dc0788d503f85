#pragma once

#include <stdexcept>

namespace comppn {

// Invalid configuration, experiment description or argument (CLI exit code 2).
class config_error : public std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Numerical failure inside a solver or Monte-Carlo routine (CLI exit code 3).
class numeric_error : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace comppn
