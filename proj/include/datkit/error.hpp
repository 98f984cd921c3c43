#pragma once

#include <stdexcept>
#include <string>

namespace datkit {

// Base of every error the toolkit raises on bad data or misuse.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed binary input (pixmaps).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Malformed text input; carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  explicit ParseError(const std::string& what) : Error(what) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_ = 0;
};

// Inputs that parse but violate a cross-field or cross-file constraint.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class SpecError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// A baseline cannot run on this input (e.g. tracker-only without any
// ground truth to start from).
class UnusableBaselineError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// API misuse, e.g. updating a tracker that was never initialized.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// A tracker could not be initialized on the given box (e.g. it has no
// area inside the frame).
class TrackerInitError : public Error {
 public:
  using Error::Error;
};

class EngineError : public Error {
 public:
  using Error::Error;
};

// Failures talking to an external detector process. The CLI maps this
// family to its own exit status.
class ExternalDetectorError : public Error {
 public:
  using Error::Error;
};

class DetectorUnavailable : public ExternalDetectorError {
 public:
  using ExternalDetectorError::ExternalDetectorError;
};

class ProtocolError : public ExternalDetectorError {
 public:
  ProtocolError(const std::string& what, std::string offending_line)
      : ExternalDetectorError(what + ": " + offending_line),
        line_(std::move(offending_line)) {}

  const std::string& offending_line() const noexcept { return line_; }

 private:
  std::string line_;
};

class ChannelClosed : public ExternalDetectorError {
 public:
  using ExternalDetectorError::ExternalDetectorError;
};

}  // namespace datkit
