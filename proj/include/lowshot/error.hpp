#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lowshot {

// Base of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

// A configuration document with an unknown key, a wrong type or an invalid
// value. `key_path` is dotted, with [i] for array elements.
class ConfigError : public InvalidArgument {
public:
    ConfigError(const std::string& key_path, const std::string& what)
        : InvalidArgument("config key '" + key_path + "': " + what), key_path_(key_path) {}
    const std::string& key_path() const noexcept { return key_path_; }

private:
    std::string key_path_;
};

// Malformed binary or structured-text input. `offset` is the byte position
// at which parsing stopped (0 for whole-document problems).
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, std::size_t iteration)
        : Error(what + " (iteration " + std::to_string(iteration) + ")"), iteration_(iteration) {}

    std::size_t iteration() const noexcept { return iteration_; }

private:
    std::size_t iteration_;
};

// Filesystem problems surfaced from readers and writers.
class IoError : public Error {
public:
    using Error::Error;
};

#define LOWSHOT_REQUIRE(cond, msg)                                                 \
    do {                                                                           \
        if (!(cond)) throw ::lowshot::InvalidArgument(std::string(msg));           \
    } while (0)

}  // namespace lowshot
