#pragma once

#include <stdexcept>
#include <string>

namespace homduet {

// Base for every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid arguments or configuration; the message names the offending field when known.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Raised when a correlation estimate has no counts to normalize against.
class InsufficientStatistics : public Error {
public:
    using Error::Error;
};

// Binary timestamp file problems (bad magic, truncation, ordering).
class FormatError : public Error {
public:
    using Error::Error;
};

// Least-squares fit did not converge or found no significant feature.
class FitError : public Error {
public:
    using Error::Error;
};

// A value with its 1-sigma statistical uncertainty.
struct Estimate {
    double value = 0.0;
    double error = 0.0;
};

}  // namespace homduet
