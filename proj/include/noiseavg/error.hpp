#pragma once

#include <stdexcept>
#include <string>

namespace noiseavg {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad arguments, shape mismatches, malformed configs. CLI maps this to exit code 2.
struct ValidationError : Error {
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// Unparseable or internally inconsistent file content.
struct MalformedFileError : Error {
    explicit MalformedFileError(const std::string& msg) : Error(msg) {}
};

// File declares a format_version this build does not understand.
struct VersionError : Error {
    explicit VersionError(const std::string& msg) : Error(msg) {}
};

// Declared shapes do not match the actual payload.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// IDX-specific faults, kept distinct so callers can tell them apart.
struct BadMagicError : Error {
    explicit BadMagicError(const std::string& msg) : Error(msg) {}
};

struct TruncatedFileError : Error {
    explicit TruncatedFileError(const std::string& msg) : Error(msg) {}
};

struct CountMismatchError : Error {
    explicit CountMismatchError(const std::string& msg) : Error(msg) {}
};

} // namespace noiseavg
