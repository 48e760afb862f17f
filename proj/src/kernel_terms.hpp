#pragma once

// Per-kind functors used to instantiate the convolution loops once per
// similarity so the inner loops stay branch-free.

#include <utility>

#include "euclidnet/similarity.hpp"

namespace euclidnet::detail {

struct ConvTerm {
  float operator()(float x, float w) const noexcept { return term::conv(x, w); }
  float dx(float x, float w) const noexcept { return term::conv_dx(x, w); }
  float dw(float x, float w) const noexcept { return term::conv_dw(x, w); }
};

struct EuclidTerm {
  float operator()(float x, float w) const noexcept { return term::euclid(x, w); }
  float dx(float x, float w) const noexcept { return term::euclid_dx(x, w); }
  float dw(float x, float w) const noexcept { return term::euclid_dw(x, w); }
};

struct AdderTerm {
  AdderGrad rule;
  float operator()(float x, float w) const noexcept { return term::adder(x, w); }
  float dx(float x, float w) const noexcept { return term::adder_dx(x, w, rule); }
  float dw(float x, float w) const noexcept { return term::adder_dw(x, w, rule); }
};

struct MfoTerm {
  float operator()(float x, float w) const noexcept { return term::mfo(x, w); }
  float dx(float x, float w) const noexcept { return term::mfo_dx(x, w); }
  float dw(float x, float w) const noexcept { return term::mfo_dw(x, w); }
};

struct SynapseTerm {
  float operator()(float x, float w) const noexcept { return term::synapse(x, w); }
  float dx(float x, float w) const noexcept { return term::synapse_dx(x, w); }
  float dw(float x, float w) const noexcept { return term::synapse_dw(x, w); }
};

struct HomotopyTerm {
  float lambda;
  float operator()(float x, float w) const noexcept { return term::homotopy(x, w, lambda); }
  float dx(float x, float w) const noexcept { return term::homotopy_dx(x, w, lambda); }
  float dw(float x, float w) const noexcept { return term::homotopy_dw(x, w, lambda); }
};

template <typename Fn>
decltype(auto) dispatch_term(const SimilarityKind& kind, Fn&& fn) {
  switch (kind.tag) {
    case SimTag::Euclid: return fn(EuclidTerm{});
    case SimTag::Adder: return fn(AdderTerm{kind.adder_grad});
    case SimTag::Mfo: return fn(MfoTerm{});
    case SimTag::Synapse: return fn(SynapseTerm{});
    case SimTag::Homotopy: return fn(HomotopyTerm{kind.lambda});
    case SimTag::Conv: break;
  }
  return fn(ConvTerm{});
}

}  // namespace euclidnet::detail
