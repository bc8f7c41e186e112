#ifndef EBSR_ERROR_HPP
#define EBSR_ERROR_HPP

#include <stdexcept>
#include <string>

namespace ebsr {

// Error categories map 1:1 onto CLI exit codes (see tools/).
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ChecksumError : std::runtime_error {
    explicit ChecksumError(const std::string& msg) : std::runtime_error(msg) {}
};

// Violation of a numeric precondition (e.g. non-±1 input to the signed
// reference kernel, non-positive RSign alpha).
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainingAbort : std::runtime_error {
    explicit TrainingAbort(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ebsr

#endif  // EBSR_ERROR_HPP
