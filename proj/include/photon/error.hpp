#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace photon {

/// Base for every error raised by the library. Carries the name of the
/// module that rejected the input so the CLI can report it with context.
class Error : public std::runtime_error {
public:
    Error(std::string_view module, const std::string& what)
        : std::runtime_error(std::string(module) + ": " + what), module_(module) {}

    const std::string& module() const noexcept { return module_; }

private:
    std::string module_;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class CalibrationError : public Error {
public:
    using Error::Error;
};

class RoutingError : public Error {
public:
    using Error::Error;
};

class EnumerationError : public Error {
public:
    using Error::Error;
};

class CodecError : public Error {
public:
    using Error::Error;
};

}  // namespace photon
