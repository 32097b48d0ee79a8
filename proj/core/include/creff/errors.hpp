#ifndef CREFF_ERRORS_HPP
#define CREFF_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace creff {

// File-format failures. Each variant names the offending field in what().
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BadMagicError : public ParseError {
public:
    using ParseError::ParseError;
};

class TruncatedError : public ParseError {
public:
    using ParseError::ParseError;
};

class CountMismatchError : public ParseError {
public:
    using ParseError::ParseError;
};

class VersionError : public ParseError {
public:
    using ParseError::ParseError;
};

// Configuration problems; carries the offending key.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, const std::string& msg)
        : std::runtime_error("config key \"" + key + "\": " + msg), key_(std::move(key)) {}

    const std::string& key() const { return key_; }

private:
    std::string key_;
};

}  // namespace creff

#endif  // CREFF_ERRORS_HPP
