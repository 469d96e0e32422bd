#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

namespace lorentzavg {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad input to an operation: unit-norm violations, empty sets, nonpositive steps.
class DomainError : public Error {
public:
    using Error::Error;
};

// Integration or evaluation produced something unusable. Carries the module
// and, for ensemble work, the offending sample.
class NumericError : public Error {
public:
    NumericError(std::string module, const std::string& what,
                 std::optional<std::size_t> sample = std::nullopt)
        : Error(module + ": " + what +
                (sample ? " (sample " + std::to_string(*sample) + ")" : std::string{})),
          module_(std::move(module)),
          sample_(sample)
    {
    }

    const std::string& module() const noexcept { return module_; }
    std::optional<std::size_t> sample() const noexcept { return sample_; }

private:
    std::string module_;
    std::optional<std::size_t> sample_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace lorentzavg
