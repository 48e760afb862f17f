#include "euclidnet/costmodel.hpp"

#include <sstream>

#include "euclidnet/error.hpp"
#include "json.hpp"

namespace euclidnet {

namespace {

const char* tiling_name(Tiling t) { return t == Tiling::Karatsuba ? "karatsuba" : "four-mult"; }

std::uint64_t primitive(std::uint64_t a, std::uint64_t b, int width, OpCounter& ops) {
  if ((a >> width) != 0 || (b >> width) != 0)
    throw Error(ErrorCode::Tiling, "operand exceeds the " + std::to_string(width) + "-bit primitive");
  ++ops.mults;
  return a * b;
}

// `carry` is the number of extra bits Karatsuba sums may have accumulated.
std::uint64_t mult_rec(std::uint64_t a, std::uint64_t b, int n, int m, int carry, OpCounter& ops, Tiling tiling) {
  if (n == m) return primitive(a, b, m + carry, ops);
  const int t = n / 2;
  const std::uint64_t mask = (std::uint64_t{1} << t) - 1;
  const std::uint64_t a1 = a >> t, a2 = a & mask, b1 = b >> t, b2 = b & mask;
  if (tiling == Tiling::FourMult) {
    const auto hh = mult_rec(a1, b1, t, m, carry, ops, tiling);
    const auto hl = mult_rec(a1, b2, t, m, carry, ops, tiling);
    const auto lh = mult_rec(a2, b1, t, m, carry, ops, tiling);
    const auto ll = mult_rec(a2, b2, t, m, carry, ops, tiling);
    ops.adds += 3;
    return (hh << (2 * t)) + ((hl + lh) << t) + ll;
  }
  const auto hh = mult_rec(a1, b1, t, m, carry, ops, tiling);
  const auto ll = mult_rec(a2, b2, t, m, carry, ops, tiling);
  const auto mid = mult_rec(a1 + a2, b1 + b2, t, m, carry + 1, ops, tiling);
  ops.adds += 6;  // two operand sums, two subtractions, two combining additions
  return (hh << (2 * t)) + ((mid - hh - ll) << t) + ll;
}

std::uint64_t square_rec(std::uint64_t a, int n, int m, OpCounter& ops, Tiling tiling) {
  if (n == m) return primitive(a, a, m, ops);
  const int t = n / 2;
  const std::uint64_t mask = (std::uint64_t{1} << t) - 1;
  const std::uint64_t a1 = a >> t, a2 = a & mask;
  const auto hh = square_rec(a1, t, m, ops, tiling);
  const auto ll = square_rec(a2, t, m, ops, tiling);
  const auto cross = mult_rec(a1, a2, t, m, 0, ops, tiling);
  ops.adds += 2;
  return (hh << (2 * t)) + (cross << (t + 1)) + ll;
}

}  // namespace

int tiling_depth(int n, int m) {
  if (m < 1 || n < m)
    throw Error(ErrorCode::Tiling, "need n >= m >= 1, got n=" + std::to_string(n) + " m=" + std::to_string(m));
  int depth = 0;
  int w = m;
  while (w < n) {
    if (depth >= 30) break;
    w *= 2;
    ++depth;
  }
  if (w != n)
    throw Error(ErrorCode::Tiling, std::to_string(n) + "-bit operands cannot be tiled by halving into " +
                                       std::to_string(m) + "-bit parts");
  return depth;
}

CostReport mult_cost(int n, int m, Tiling tiling) {
  const int depth = tiling_depth(n, m);
  CostReport r{m, m, 1, 0, 0};
  for (int level = 1; level <= depth; ++level) {
    if (tiling == Tiling::FourMult) {
      r.mults *= 4;
      r.adds = 4 * r.adds + 3;
    } else {
      r.mults *= 3;
      r.adds = 3 * r.adds + 6;
    }
  }
  r.n_bits = n;
  r.depth = depth;
  return r;
}

CostReport square_cost(int n, int m, Tiling tiling) {
  const int depth = tiling_depth(n, m);
  CostReport r{m, m, 1, 0, 0};
  for (int level = 1; level <= depth; ++level) {
    const auto half_mult = mult_cost(m << (level - 1), m, tiling);
    r.mults = 2 * r.mults + half_mult.mults;
    r.adds = 2 * r.adds + half_mult.adds + 2;
  }
  r.n_bits = n;
  r.depth = depth;
  return r;
}

ComparisonReport euclid_vs_conv_report(int bits, int m, std::int64_t macs, Tiling tiling) {
  if (macs < 1) throw Error(ErrorCode::Config, "mac count must be >= 1");
  const auto mul = mult_cost(bits, m, tiling);
  const auto sq = square_cost(bits, m, tiling);
  ComparisonReport r;
  r.bits = bits;
  r.m_bits = m;
  r.macs = macs;
  r.tiling = tiling;
  r.conv = {mul.mults * macs, mul.adds * macs};
  r.euclid = {sq.mults * macs, (sq.adds + 1) * macs};
  r.ratio = static_cast<double>(sq.mults) / static_cast<double>(mul.mults);
  r.lut_entries = bits < 63 ? (std::uint64_t{1} << (bits + 1)) - 1 : 0;
  return r;
}

std::string summary_line(const ComparisonReport& r) {
  const auto mul = mult_cost(r.bits, r.m_bits, r.tiling);
  const auto sq = square_cost(r.bits, r.m_bits, r.tiling);
  std::ostringstream os;
  os << "mult: " << mul.mults << " mults " << mul.adds << " adds; square: " << sq.mults << " mults " << sq.adds
     << " adds; ratio " << r.ratio;
  return os.str();
}

std::string report_table(const ComparisonReport& r) {
  std::ostringstream os;
  auto row = [&](const std::string& a, const std::string& b, const std::string& c) {
    os << a << std::string(a.size() < 14 ? 14 - a.size() : 1, ' ') << b
       << std::string(b.size() < 14 ? 14 - b.size() : 1, ' ') << c << '\n';
  };
  os << r.bits << "-bit operands from " << r.m_bits << "-bit multipliers (" << tiling_name(r.tiling) << "), "
     << r.macs << " MAC" << (r.macs == 1 ? "" : "s") << '\n';
  row("op", "mults", "adds");
  row("S_conv", std::to_string(r.conv.mults), std::to_string(r.conv.adds));
  row("S_euclid", std::to_string(r.euclid.mults), std::to_string(r.euclid.adds));
  os << "multiplier ratio " << r.ratio << '\n';
  os << "square table entries " << r.lut_entries << '\n';
  return os.str();
}

std::string report_json(const ComparisonReport& r) {
  nlohmann::ordered_json j;
  j["n"] = r.bits;
  j["m"] = r.m_bits;
  j["macs"] = r.macs;
  j["tiling"] = tiling_name(r.tiling);
  j["conv"] = {{"mults", r.conv.mults}, {"adds", r.conv.adds}};
  j["euclid"] = {{"mults", r.euclid.mults}, {"adds", r.euclid.adds}};
  j["ratio"] = r.ratio;
  j["lut_entries"] = r.lut_entries;
  return j.dump(2) + "\n";
}

std::uint64_t tiled_mult(std::uint64_t a, std::uint64_t b, int n, int m, OpCounter& ops, Tiling tiling) {
  tiling_depth(n, m);
  if (n < 64 && ((a >> n) != 0 || (b >> n) != 0))
    throw Error(ErrorCode::Range, "operand wider than " + std::to_string(n) + " bits");
  return mult_rec(a, b, n, m, 0, ops, tiling);
}

std::uint64_t tiled_square(std::uint64_t a, int n, int m, OpCounter& ops, Tiling tiling) {
  tiling_depth(n, m);
  if (n < 64 && (a >> n) != 0) throw Error(ErrorCode::Range, "operand wider than " + std::to_string(n) + " bits");
  return square_rec(a, n, m, ops, tiling);
}

bool bitexact_tiling_check(int n, int m, Tiling tiling) {
  if (n > 16) throw Error(ErrorCode::Range, "exhaustive tiling check supports n <= 16");
  const auto mc = mult_cost(n, m, tiling);
  const auto sc = square_cost(n, m, tiling);
  const std::int64_t count = std::int64_t{1} << n;
  bool ok = true;
#pragma omp parallel for schedule(static) reduction(&& : ok)
  for (std::int64_t a = 0; a < count; ++a) {
    const auto ua = static_cast<std::uint64_t>(a);
    try {
      OpCounter sq_ops;
      ok = ok && tiled_square(ua, n, m, sq_ops, tiling) == ua * ua && sq_ops.mults == sc.mults &&
           sq_ops.adds == sc.adds;
      for (std::uint64_t b = 0; b < static_cast<std::uint64_t>(count) && ok; ++b) {
        OpCounter ops;
        ok = tiled_mult(ua, b, n, m, ops, tiling) == ua * b && ops.mults == mc.mults && ops.adds == mc.adds;
      }
    } catch (const Error&) {
      ok = false;
    }
  }
  return ok;
}

}  // namespace euclidnet
