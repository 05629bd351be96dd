#pragma once

#include <stdexcept>
#include <string>

namespace flamesift {

// Tensor or argument dimensions do not line up.
class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// An invalid configuration: layer chain, schedule, training split, flags.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// API called out of order or with an argument of the wrong kind.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Training diverged (non-finite loss).
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ParseErrorKind {
    missing_file,
    io_failure,
    bad_magic,
    version_mismatch,
    truncated,
    crc_mismatch,
    bad_descriptor,
    bad_header,
    bad_label,
    bad_line,
};

const char* to_string(ParseErrorKind kind);

class ParseError : public std::runtime_error {
public:
    ParseError(ParseErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ParseErrorKind kind() const noexcept { return kind_; }

private:
    ParseErrorKind kind_;
};

}  // namespace flamesift
