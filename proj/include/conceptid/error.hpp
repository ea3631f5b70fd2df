#pragma once

#include <stdexcept>
#include <string>

namespace conceptid {

// Broken precondition inside the library (wrong genome length, misaligned
// regions, ...). Callers that validate their inputs never see this.
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Bad user input: malformed files, mismatched schemas, unknown ids.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SchemaMismatch : public InputError {
public:
    SchemaMismatch(std::string const& column, std::string const& what)
        : InputError(what), column_(column) {}
    [[nodiscard]] auto column() const -> std::string const& { return column_; }

private:
    std::string column_;
};

class ParseError : public InputError {
public:
    ParseError(std::size_t row, std::size_t column, std::string const& what)
        : InputError(what), row_(row), column_(column) {}
    [[nodiscard]] auto row() const -> std::size_t { return row_; }
    [[nodiscard]] auto column() const -> std::size_t { return column_; }

private:
    std::size_t row_;
    std::size_t column_;
};

class NotFound : public InputError {
public:
    using InputError::InputError;
};

// The optimizer could not continue (non-finite fitness and similar).
class OptimizerError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised from inside a run when its progress callback asks to stop.
class Cancelled : public std::runtime_error {
public:
    Cancelled() : std::runtime_error("cancelled") {}
};

} // namespace conceptid
