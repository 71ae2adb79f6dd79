#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace brwre {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid model or run configuration. `field` names the offending key and
/// `line` is 1-based when the problem came from a config file (0 otherwise).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message, std::string field = {},
                       std::size_t line = 0)
      : Error(format(message, field, line)), message_(message), field_(std::move(field)), line_(line) {}

  /// Message without the line and field prefix.
  const std::string& message() const noexcept { return message_; }
  const std::string& field() const noexcept { return field_; }
  std::size_t line() const noexcept { return line_; }

 private:
  static std::string format(const std::string& message, const std::string& field,
                            std::size_t line) {
    std::string out;
    if (line > 0) out += "line " + std::to_string(line) + ": ";
    if (!field.empty()) out += "field '" + field + "': ";
    return out + message;
  }

  std::string message_;
  std::string field_;
  std::size_t line_;
};

/// A numeric routine could not certify its result (e.g. non-convex input).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Caller passed mismatched or inconsistent arguments.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// The request is well-formed but outside what the model family supports.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of the operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// CLT normalizer b_n vanished; the normalized measure is undefined.
class DegenerateNormalizerError : public Error {
 public:
  using Error::Error;
};

/// The tree grew past the configured particle cap.
class PopulationOverflow : public Error {
 public:
  PopulationOverflow(std::size_t generation_reached, std::uint64_t attempted,
                     std::uint64_t cap)
      : Error("population overflow: generation " + std::to_string(generation_reached + 1) +
              " would hold " + std::to_string(attempted) + "+ particles (cap " +
              std::to_string(cap) + "); last complete generation " +
              std::to_string(generation_reached)),
        generation_reached_(generation_reached) {}

  std::size_t generation_reached() const noexcept { return generation_reached_; }

 private:
  std::size_t generation_reached_;
};

}  // namespace brwre
