#pragma once

#include <cstdint>
#include <string>

// Multiplier-count cost model for n-bit multiplication and squaring built from
// m-bit primitives by splitting operands into halves, a = a1 * 2^t + a2.
// Shifts are free; each combining addition counts once.

namespace euclidnet {

enum class Tiling {
  FourMult,   // a*b = a1b1 2^2t + (a1b2 + a2b1) 2^t + a2b2
  Karatsuba,  // middle term as (a1 + a2)(b1 + b2) - a1b1 - a2b2
};

struct CostReport {
  int n_bits = 0;
  int m_bits = 0;
  std::int64_t mults = 0;
  std::int64_t adds = 0;
  int depth = 0;

  bool operator==(const CostReport&) const = default;
};

/// Throws Error(Tiling) unless n = m * 2^k with n >= m >= 1.
int tiling_depth(int n, int m);

/// M(m) = {1, 0}; M(2t) = 4 M(t) + 3 adds (Karatsuba: 3 M(t) + 6 adds).
CostReport mult_cost(int n, int m, Tiling tiling = Tiling::FourMult);
/// Sq(m) = {1, 0}; Sq(2t) = 2 Sq(t) + M(t) + 2 adds.
CostReport square_cost(int n, int m, Tiling tiling = Tiling::FourMult);

struct OpCost {
  std::int64_t mults = 0;
  std::int64_t adds = 0;
};

struct ComparisonReport {
  int bits = 0;
  int m_bits = 0;
  std::int64_t macs = 0;
  OpCost conv;    // one n-bit multiply per MAC
  OpCost euclid;  // one subtraction and one n-bit square per MAC
  double ratio = 0.0;  // square mults / mult mults
  std::uint64_t lut_entries = 0;  // square table size for differences of bits-wide operands
  Tiling tiling = Tiling::FourMult;
};

ComparisonReport euclid_vs_conv_report(int bits, int m, std::int64_t macs = 1, Tiling tiling = Tiling::FourMult);

/// "mult: 4 mults 3 adds; square: 3 mults 2 adds; ratio 0.75"
std::string summary_line(const ComparisonReport& report);
std::string report_table(const ComparisonReport& report);
std::string report_json(const ComparisonReport& report);

struct OpCounter {
  std::int64_t mults = 0;
  std::int64_t adds = 0;
};

/// Tiled arithmetic on unsigned n-bit operands, counting primitive uses. The
/// m-bit primitive asserts its operands fit; Karatsuba sums carry one extra
/// bit per level, so its primitive is allowed m + depth bits.
std::uint64_t tiled_mult(std::uint64_t a, std::uint64_t b, int n, int m, OpCounter& ops,
                         Tiling tiling = Tiling::FourMult);
std::uint64_t tiled_square(std::uint64_t a, int n, int m, OpCounter& ops, Tiling tiling = Tiling::FourMult);

/// Exhaustively checks the tiled multiply (all a, b) and square (all a) against
/// native arithmetic for n-bit operands, and that every evaluation used exactly
/// the counted primitives. Requires n <= 16.
bool bitexact_tiling_check(int n, int m, Tiling tiling = Tiling::FourMult);

}  // namespace euclidnet
