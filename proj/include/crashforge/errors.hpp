#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace crashforge {

/// Base of every error the pipeline raises on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---- ingest ---------------------------------------------------------------

class SyntaxError : public Error {
public:
    SyntaxError(std::string message, std::size_t line, std::size_t column)
        : Error(message + " (line " + std::to_string(line) + ", column " + std::to_string(column) + ")"),
          line_(line), column_(column) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }
    [[nodiscard]] std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

/// Missing or mistyped field. `path()` is a JSON pointer into the source document.
class SchemaError : public Error {
public:
    SchemaError(std::string path, const std::string& message)
        : Error(message + " at " + (path.empty() ? std::string("/") : path)), path_(std::move(path)) {}

    [[nodiscard]] const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

class VersionError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

// ---- analysis / inference -------------------------------------------------

class ConfigError : public Error {
public:
    using Error::Error;
};

class ChannelMissing : public Error {
public:
    using Error::Error;
};

class NoEvents : public Error {
public:
    NoEvents() : Error("case has no crash events") {}
};

class RoleIndeterminate : public Error {
public:
    using Error::Error;
};

// ---- agent ----------------------------------------------------------------

class AuthError : public Error {
public:
    using Error::Error;
};

class TimeoutError : public Error {
public:
    using Error::Error;
};

class TransportError : public Error {
public:
    using Error::Error;
};

class UnsupportedImage : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class EmptyInput : public Error {
public:
    using Error::Error;
};

class TemplateError : public Error {
public:
    using Error::Error;
};

// ---- synth ----------------------------------------------------------------

class SpecError : public Error {
public:
    using Error::Error;
};

/// Short class name of a pipeline error ("NoEvents", "AuthError", ...);
/// "Error" for anything else.
std::string error_kind(const std::exception& e);

}  // namespace crashforge
