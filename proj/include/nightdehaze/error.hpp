#pragma once

#include <stdexcept>
#include <string>

namespace nightdehaze {

/// Base of every error raised by the library. `kind()` is a short stable tag
/// used by the CLI when printing machine-parseable diagnostics.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

/// Shapes or channel counts that do not line up.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& m) : Error("dimension", m) {}
};

/// A scalar parameter outside its admissible range.
class ParameterError : public Error {
public:
    explicit ParameterError(const std::string& m) : Error("parameter", m) {}
};

/// Input data violating a value contract (non-finite, non-binary mask, ...).
class DataError : public Error {
public:
    explicit DataError(const std::string& m) : Error("data", m) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& m) : Error("io", m) {}
};

/// Missing, truncated or mismatched checkpoint.
class LoadError : public Error {
public:
    explicit LoadError(const std::string& m) : Error("load", m) {}
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& m, long step) : Error("divergence", m), step_(step) {}
    long step() const noexcept { return step_; }

private:
    long step_;
};

}  // namespace nightdehaze
