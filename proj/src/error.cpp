#include "euclidnet/error.hpp"

#include <iostream>
#include <mutex>

namespace euclidnet {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Shape: return "shape";
    case ErrorCode::NumericInput: return "numeric-input";
    case ErrorCode::Range: return "range";
    case ErrorCode::Degenerate: return "degenerate-input";
    case ErrorCode::Label: return "label";
    case ErrorCode::Divergence: return "divergence";
    case ErrorCode::Config: return "config";
    case ErrorCode::Data: return "data";
    case ErrorCode::Checkpoint: return "checkpoint";
    case ErrorCode::Quantization: return "quantization";
    case ErrorCode::Tiling: return "tiling";
  }
  return "unknown";
}

namespace {

std::mutex g_sink_mutex;

WarningSink& sink() {
  static WarningSink s = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  return s;
}

}  // namespace

void set_warning_sink(WarningSink s) {
  std::lock_guard lock(g_sink_mutex);
  sink() = std::move(s);
}

void warn(const std::string& message) {
  std::lock_guard lock(g_sink_mutex);
  if (sink()) sink()(message);
}

}  // namespace euclidnet
