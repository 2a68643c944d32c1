#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace iotmap {

/// Base of every error raised by the toolkit. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input. Carries the 1-based line and the offending field when known.
class ParseError : public Error {
public:
    ParseError(std::string source, std::size_t line, std::string field, const std::string& what)
        : Error(format(source, line, field, what)),
          source_(std::move(source)),
          line_(line),
          field_(std::move(field)) {}

    const std::string& source() const noexcept { return source_; }
    std::size_t line() const noexcept { return line_; }
    const std::string& field() const noexcept { return field_; }

private:
    static std::string format(const std::string& source, std::size_t line, const std::string& field,
                              const std::string& what) {
        std::string out = source.empty() ? std::string("<input>") : source;
        if (line > 0) out += ":" + std::to_string(line);
        if (!field.empty()) out += ": field '" + field + "'";
        return out + ": " + what;
    }

    std::string source_;
    std::size_t line_;
    std::string field_;
};

/// Well-formed input that violates a domain invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// A pipeline stage was requested before the stage producing its input ran.
class UpstreamMissingError : public Error {
public:
    UpstreamMissingError(std::string stage, const std::string& what)
        : Error(what), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

}  // namespace iotmap
