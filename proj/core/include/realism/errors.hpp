// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace realism {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input text or binary payload. `line()` is 0 when not applicable.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class EmptyMeshError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class DegenerateGeometryError : public Error {
public:
    using Error::Error;
};

/// Non-finite weights, activations or losses.
class NumericError : public Error {
public:
    using Error::Error;
};

class SequenceTooLongError : public Error {
public:
    using Error::Error;
};

/// Correlation is undefined for the given inputs (zero variance, all ties).
class UndefinedCorrelationError : public Error {
public:
    using Error::Error;
};

class CheckpointError : public Error {
public:
    using Error::Error;
};

/// Annotation state-machine misuse: out-of-order calls, duplicates, unknown pairs.
class SessionError : public Error {
public:
    enum class Kind { Sequencing, Duplicate, UnknownPair, InvalidWinner, Incomplete, Invalid };
    SessionError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    [[nodiscard]] Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

}  // namespace realism
