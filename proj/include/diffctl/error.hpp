#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace diffctl {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Artifacts (dataset, checkpoint, sample file) disagree on the task setting
/// or model kind.
class MismatchError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

/// Raised by the solver when a state entry stops being finite or a stability
/// bound is violated.
class NumericalBlowup : public Error {
public:
    NumericalBlowup(const std::string& what, std::ptrdiff_t index)
        : Error(what + " (grid index " + std::to_string(index) + ")"), index_(index) {}

    std::ptrdiff_t index() const noexcept { return index_; }

private:
    std::ptrdiff_t index_;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

} // namespace diffctl
