#pragma once

#include <functional>
#include <stdexcept>
#include <string>

namespace euclidnet {

enum class ErrorCode {
  Shape,
  NumericInput,
  Range,
  Degenerate,
  Label,
  Divergence,
  Config,
  Data,
  Checkpoint,
  Quantization,
  Tiling,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Distinct failure reasons for checkpoint I/O.
enum class CheckpointFault { BadMagic, Truncated, VersionMismatch, Incompatible, Io };

class CheckpointError : public Error {
 public:
  CheckpointError(CheckpointFault fault, const std::string& what)
      : Error(ErrorCode::Checkpoint, what), fault_(fault) {}
  CheckpointFault fault() const noexcept { return fault_; }

 private:
  CheckpointFault fault_;
};

// IDX parse failures carry the byte offset where parsing stopped.
class DataError : public Error {
 public:
  DataError(const std::string& what, long long offset = -1)
      : Error(ErrorCode::Data, what), offset_(offset) {}
  long long offset() const noexcept { return offset_; }

 private:
  long long offset_;
};

// Warnings go through a replaceable sink so tests can observe them.
using WarningSink = std::function<void(const std::string&)>;
void set_warning_sink(WarningSink sink);
void warn(const std::string& message);

}  // namespace euclidnet
