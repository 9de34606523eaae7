#pragma once
#include <stdexcept>
#include <string>

namespace emx {

// Error taxonomy; the CLI maps these onto exit codes (config/usage -> 2, the rest -> 1).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
    using Error::Error;
};
struct ParameterError : Error {
    using Error::Error;
};
struct NumericalError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace emx
