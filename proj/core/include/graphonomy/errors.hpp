#pragma once

#include <stdexcept>
#include <string>

namespace graphonomy {

// Error taxonomy shared by all modules. The CLI maps categories onto exit
// codes: usage/config -> 1, data/parse -> 2, numeric -> 3.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
    virtual int exit_code() const { return 1; }
};

// Caller misuse: bad arguments, wrong call sequence.
class UsageError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 1; }
};

// Invalid configuration value or unknown key/dataset.
class ConfigError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 1; }
};

// Tensor/matrix shape violations.
class DimensionError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 1; }
};

// Bad input data (labels out of range, missing files, inconsistent records).
class DataError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 2; }
};

// Malformed file contents; message carries line number or byte offset.
class ParseError : public DataError {
public:
    using DataError::DataError;
};

// Label-taxonomy structural violations.
class TaxonomyError : public DataError {
public:
    using DataError::DataError;
};

// Non-finite values or failed numeric verification.
class NumericError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 3; }
};

} // namespace graphonomy
