#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace terrafuse {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class UnsupportedRegion : public Error {
 public:
  using Error::Error;
};

class FrameMismatch : public Error {
 public:
  using Error::Error;
};

class GimbalSingularity : public Error {
 public:
  using Error::Error;
};

class CovarianceDegenerate : public Error {
 public:
  using Error::Error;
};

class OutOfMap : public Error {
 public:
  using Error::Error;
};

class StreamOrderError : public Error {
 public:
  using Error::Error;
};

class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary stream. Carries the byte offset at which decoding failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class IncompatibleRecording : public Error {
 public:
  using Error::Error;
};

/// Configuration problems, one entry per violation ("section.key: message").
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<std::string> violations)
      : Error(join(violations)), violations_(std::move(violations)) {}

  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out = "invalid configuration:";
    for (const auto& s : v) out += "\n  " + s;
    return out;
  }

  std::vector<std::string> violations_;
};

/// I/O failure during a scenario run; names the groups that completed.
class PartialArtifactError : public Error {
 public:
  PartialArtifactError(const std::string& what, std::vector<std::string> completed)
      : Error(what), completed_(std::move(completed)) {}

  const std::vector<std::string>& completed() const noexcept { return completed_; }

 private:
  std::vector<std::string> completed_;
};

}  // namespace terrafuse
