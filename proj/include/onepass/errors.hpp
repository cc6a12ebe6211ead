#pragma once

#include <stdexcept>
#include <string>

namespace onepass {

// Base of every error thrown by the library. Callers that only care about
// "something went wrong in onepass" catch this.
class Error : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// Invalid model or experiment configuration (dimension mismatch, bad flags).
class ConfigError : public Error {
   public:
    explicit ConfigError(const std::string& what) : Error("config error: " + what) {}
};

// Caller supplied an argument outside the operation's domain.
class InputError : public Error {
   public:
    explicit InputError(const std::string& what) : Error("input error: " + what) {}
};

// Non-finite values produced or consumed.
class NumericError : public Error {
   public:
    explicit NumericError(const std::string& what) : Error("numeric error: " + what) {}
};

// Persisted artifact failed validation (truncation, checksum, bad magic).
class CorruptionError : public Error {
   public:
    explicit CorruptionError(const std::string& what) : Error("corruption error: " + what) {}
};

class VersionError : public Error {
   public:
    explicit VersionError(const std::string& what) : Error("version error: " + what) {}
};

}  // namespace onepass
