#pragma once

#include <stdexcept>
#include <string>

namespace sqzkit {

// Base class for all library errors. Each subclass prepends a stable
// one-line prefix so callers (and the CLI) can classify errors by message.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error("shape error: " + msg) {}
};

class ParamError : public Error {
public:
    explicit ParamError(const std::string& msg) : Error("parameter error: " + msg) {}
};

class MetaparamError : public Error {
public:
    explicit MetaparamError(const std::string& msg) : Error("metaparameter error: " + msg) {}
};

class BypassError : public Error {
public:
    explicit BypassError(const std::string& msg) : Error("bypass error: " + msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error("configuration error: " + msg) {}
};

class ParseError : public Error {
public:
    explicit ParseError(const std::string& msg) : Error("parse error: " + msg) {}
};

class FormatError : public Error {
public:
    explicit FormatError(const std::string& msg) : Error("format error: " + msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

}  // namespace sqzkit
