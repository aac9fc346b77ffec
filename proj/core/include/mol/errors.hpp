#pragma once

#include <stdexcept>
#include <string>

namespace mol {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// shape / layout mismatch between an operator and its argument
struct DimensionError : Error {
    using Error::Error;
};

// argument outside its admissible range
struct ParameterError : Error {
    using Error::Error;
};

// non-finite value or iteration blow-up; message carries the iteration index
struct NumericError : Error {
    using Error::Error;
};

// inner linear solve or backward iteration did not reach tolerance
struct SolverError : Error {
    SolverError(const std::string& what, double residual)
        : Error(what), final_residual(residual) {}
    double final_residual;
};

struct IoError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

}  // namespace mol
