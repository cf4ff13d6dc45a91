#pragma once

#include <stdexcept>
#include <string>

namespace qattack {

enum class ErrorKind {
  kValidation,   // bad configuration or arguments
  kParse,        // malformed input file
  kIo,           // file system failure
  kModel,        // a model implementation reported failure
  kTimeout,      // remote model did not answer in time
  kHttpStatus,   // remote model answered with a non-2xx status
  kSchema,       // remote model answered with a malformed body
  kTransport,    // connection-level failure after retries
  kRuntime,      // anything else (divergence, internal invariants)
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

  // True for the kinds that originate in a remote model endpoint.
  bool is_remote() const {
    return kind_ == ErrorKind::kTimeout || kind_ == ErrorKind::kHttpStatus ||
           kind_ == ErrorKind::kSchema || kind_ == ErrorKind::kTransport;
  }

 private:
  ErrorKind kind_;
};

// Failure of one element inside a batched model call. The whole batch is
// rejected; `index` names the first failing item.
class BatchError : public Error {
 public:
  BatchError(const Error& cause, size_t index)
      : Error(cause.kind(), "batch item " + std::to_string(index) + ": " +
                                cause.what()),
        index_(index) {}

  size_t index() const { return index_; }

 private:
  size_t index_;
};

}  // namespace qattack
