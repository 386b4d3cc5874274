#pragma once

#include <stdexcept>
#include <string>

namespace mmgraph {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

/// Checkpoint or dataset content that cannot be parsed or does not match the configuration.
class FormatError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Non-finite loss or gradient during optimization.
class DivergenceError : public Error {
public:
    using Error::Error;
};

}  // namespace mmgraph
