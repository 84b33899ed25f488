#pragma once

#include <stdexcept>
#include <string>

namespace sessrec {

// Error taxonomy mirrors the CLI exit codes: config/usage -> 1,
// data -> 2, numeric failure -> 3.

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Programming-contract breach (mismatched vocabularies, bad dimensions).
class ContractViolation : public std::logic_error {
public:
    explicit ContractViolation(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace sessrec
