#pragma once

#include <stdexcept>
#include <string>

namespace dosedr {

//! Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

//! Bad arguments, unknown config keys, missing columns.
class UsageError : public Error {
public:
    using Error::Error;
};

//! Malformed input files (CSV cells, config lines).
class ParseError : public Error {
public:
    using Error::Error;
};

//! Nuisance fitting failures (rank deficiency, separation, degenerate density).
class FitError : public Error {
public:
    using Error::Error;
};

//! No feasible bandwidth candidate / degenerate smoothing windows.
class BandwidthError : public Error {
public:
    using Error::Error;
};

//! Dataset invariant violations (R/Y consistency, empty data).
class ValidationError : public Error {
public:
    using Error::Error;
};

} // namespace dosedr
