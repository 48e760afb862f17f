#include "euclidnet/similarity.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "euclidnet/error.hpp"

namespace euclidnet {

SimilarityKind SimilarityKind::homotopy(float lambda) {
  if (!(lambda >= 0.0f && lambda <= 1.0f))
    throw Error(ErrorCode::Range, "homotopy lambda must lie in [0,1], got " + std::to_string(lambda));
  return {SimTag::Homotopy, lambda};
}

std::string_view tag_name(SimTag tag) {
  switch (tag) {
    case SimTag::Conv: return "conv";
    case SimTag::Euclid: return "euclid";
    case SimTag::Adder: return "adder";
    case SimTag::Mfo: return "mfo";
    case SimTag::Synapse: return "synapse";
    case SimTag::Homotopy: return "homotopy";
  }
  return "unknown";
}

std::string to_string(const SimilarityKind& kind) {
  std::string s(tag_name(kind.tag));
  if (kind.tag == SimTag::Homotopy) {
    std::ostringstream os;
    os << ':' << kind.lambda;
    s += os.str();
  }
  return s;
}

std::optional<SimilarityKind> parse_similarity(std::string_view text) {
  const auto colon = text.find(':');
  const auto head = text.substr(0, colon);
  if (colon != std::string_view::npos && head != "homotopy") return std::nullopt;
  if (head == "conv") return SimilarityKind::conv();
  if (head == "euclid") return SimilarityKind::euclid();
  if (head == "adder") return SimilarityKind::adder();
  if (head == "mfo") return SimilarityKind::mfo();
  if (head == "synapse") return SimilarityKind::synapse();
  if (head == "homotopy") {
    float lambda = 0.0f;
    if (colon != std::string_view::npos) {
      const auto tail = text.substr(colon + 1);
      const auto res = std::from_chars(tail.data(), tail.data() + tail.size(), lambda);
      if (res.ec != std::errc{} || res.ptr != tail.data() + tail.size()) return std::nullopt;
    }
    if (!(lambda >= 0.0f && lambda <= 1.0f)) return std::nullopt;
    return SimilarityKind{SimTag::Homotopy, lambda};
  }
  return std::nullopt;
}

namespace {

void check_finite(float x, float w) {
  if (!std::isfinite(x) || !std::isfinite(w))
    throw Error(ErrorCode::NumericInput, "non-finite similarity operand");
}

}  // namespace

float sim_eval(const SimilarityKind& kind, float x, float w) {
  check_finite(x, w);
  switch (kind.tag) {
    case SimTag::Conv: return term::conv(x, w);
    case SimTag::Euclid: return term::euclid(x, w);
    case SimTag::Adder: return term::adder(x, w);
    case SimTag::Mfo: return term::mfo(x, w);
    case SimTag::Synapse: return term::synapse(x, w);
    case SimTag::Homotopy: return term::homotopy(x, w, kind.lambda);
  }
  return 0.0f;
}

SimGrad sim_grad(const SimilarityKind& kind, float x, float w) {
  check_finite(x, w);
  switch (kind.tag) {
    case SimTag::Conv: return {term::conv_dx(x, w), term::conv_dw(x, w)};
    case SimTag::Euclid: return {term::euclid_dx(x, w), term::euclid_dw(x, w)};
    case SimTag::Adder: return {term::adder_dx(x, w, kind.adder_grad), term::adder_dw(x, w, kind.adder_grad)};
    case SimTag::Mfo: return {term::mfo_dx(x, w), term::mfo_dw(x, w)};
    case SimTag::Synapse: return {term::synapse_dx(x, w), term::synapse_dw(x, w)};
    case SimTag::Homotopy:
      return {term::homotopy_dx(x, w, kind.lambda), term::homotopy_dw(x, w, kind.lambda)};
  }
  return {};
}

void validate(const HomotopySchedule& sched) {
  if (!(sched.lambda0 > 0.0f && sched.lambda0 < 1.0f))
    throw Error(ErrorCode::Config, "homotopy lambda0 must lie in (0,1), got " + std::to_string(sched.lambda0));
  if (sched.epochs < 1)
    throw Error(ErrorCode::Config, "homotopy epochs must be >= 1, got " + std::to_string(sched.epochs));
}

float lambda_at(const HomotopySchedule& sched, int k) {
  validate(sched);
  if (k < 0 || k > sched.epochs)
    throw Error(ErrorCode::Range, "homotopy step " + std::to_string(k) + " outside [0," +
                                      std::to_string(sched.epochs) + "]");
  if (k == sched.epochs) return 1.0f;
  const double l0 = sched.lambda0;
  const double value = l0 + (1.0 - l0) / sched.epochs * k;
  return std::clamp(static_cast<float>(value), sched.lambda0, 1.0f);
}

float cosine_similarity(std::span<const float> x, std::span<const float> w) {
  if (x.size() != w.size())
    throw Error(ErrorCode::Shape, "cosine_similarity length mismatch " + std::to_string(x.size()) + " vs " +
                                      std::to_string(w.size()));
  float dot = 0.0f, nx = 0.0f, nw = 0.0f;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * w[i];
    nx += x[i] * x[i];
    nw += w[i] * w[i];
  }
  if (nx == 0.0f || nw == 0.0f) throw Error(ErrorCode::Degenerate, "cosine_similarity of a zero-norm vector");
  return dot / (std::sqrt(nx) * std::sqrt(nw));
}

float euclid_sum(std::span<const float> x, std::span<const float> w) {
  if (x.size() != w.size())
    throw Error(ErrorCode::Shape, "euclid_sum length mismatch " + std::to_string(x.size()) + " vs " +
                                      std::to_string(w.size()));
  float acc = 0.0f;
  for (std::size_t i = 0; i < x.size(); ++i) acc += term::euclid(x[i], w[i]);
  return acc;
}

}  // namespace euclidnet
