#include <string>

#include "doctest.h"
#include "euclidnet/costmodel.hpp"
#include "euclidnet/error.hpp"
#include "json.hpp"

using namespace euclidnet;

TEST_SUITE("costmodel") {

TEST_CASE("one level of splitting") {
  CHECK(mult_cost(16, 8) == CostReport{16, 8, 4, 3, 1});
  CHECK(square_cost(16, 8) == CostReport{16, 8, 3, 2, 1});
  CHECK(mult_cost(8, 8) == CostReport{8, 8, 1, 0, 0});
  CHECK(square_cost(8, 8) == CostReport{8, 8, 1, 0, 0});
}

TEST_CASE("two levels of splitting") {
  const auto m = mult_cost(16, 4);
  CHECK(m.mults == 16);
  CHECK(m.adds == 15);
  const auto s = square_cost(16, 4);
  CHECK(s.mults == 10);
  CHECK(s.adds == 9);
}

TEST_CASE("closed forms over depth") {
  for (int m : {1, 2, 4}) {
    std::int64_t M = 1, MA = 0, S = 1, SA = 0;
    for (int k = 1; m << k <= 64; ++k) {
      const auto nS = 2 * S + M, nSA = 2 * SA + MA + 2;
      const auto nM = 4 * M, nMA = 4 * MA + 3;
      S = nS;
      SA = nSA;
      M = nM;
      MA = nMA;
      const int n = m << k;
      CAPTURE(n);
      CHECK(mult_cost(n, m).mults == M);
      CHECK(mult_cost(n, m).adds == MA);
      CHECK(square_cost(n, m).mults == S);
      CHECK(square_cost(n, m).adds == SA);
      CHECK(square_cost(n, m).mults < mult_cost(n, m).mults);
      CHECK(square_cost(n, m).adds < mult_cost(n, m).adds);
    }
  }
}

TEST_CASE("karatsuba counts") {
  CHECK(mult_cost(16, 8, Tiling::Karatsuba) == CostReport{16, 8, 3, 6, 1});
  CHECK(mult_cost(16, 4, Tiling::Karatsuba).mults == 9);
  CHECK(mult_cost(16, 4, Tiling::Karatsuba).adds == 24);
  // Squaring saves additions but not multiplications once the multiply is Karatsuba.
  CHECK(square_cost(16, 8, Tiling::Karatsuba).mults == 3);
  CHECK(square_cost(16, 8, Tiling::Karatsuba).adds == 2);
  CHECK(square_cost(32, 4, Tiling::Karatsuba).mults == mult_cost(32, 4, Tiling::Karatsuba).mults);
}

TEST_CASE("invalid tilings") {
  for (auto [n, m] : {std::pair{12, 8}, {8, 16}, {0, 1}, {8, 0}, {24, 8}}) {
    CAPTURE(n);
    CAPTURE(m);
    try {
      mult_cost(n, m);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Tiling);
    }
    CHECK_THROWS_AS(square_cost(n, m), Error);
  }
  CHECK(tiling_depth(32, 4) == 3);
}

TEST_CASE("comparison report") {
  const auto r = euclid_vs_conv_report(16, 8);
  CHECK(r.ratio == 0.75);
  CHECK(summary_line(r) == "mult: 4 mults 3 adds; square: 3 mults 2 adds; ratio 0.75");
  CHECK(euclid_vs_conv_report(16, 4).ratio == 0.625);
  const auto one = euclid_vs_conv_report(8, 2, 7);
  const auto two = euclid_vs_conv_report(8, 2, 14);
  CHECK(two.conv.mults == 2 * one.conv.mults);
  CHECK(two.conv.adds == 2 * one.conv.adds);
  CHECK(two.euclid.mults == 2 * one.euclid.mults);
  CHECK(two.euclid.adds == 2 * one.euclid.adds);
  // One subtraction per MAC on top of the square.
  CHECK(one.euclid.adds == 7 * (square_cost(8, 2).adds + 1));
  CHECK(r.lut_entries == 131071);
  const auto j = nlohmann::json::parse(report_json(r));
  CHECK(j.at("ratio") == 0.75);
  CHECK(report_table(r).find("square") != std::string::npos);
  CHECK_THROWS_AS(euclid_vs_conv_report(16, 8, 0), Error);
}

TEST_CASE("tiled arithmetic is exact and counted") {
  OpCounter ops;
  CHECK(tiled_mult(0xBEEF, 0x1234, 16, 4, ops) == 0xBEEFull * 0x1234ull);
  CHECK(ops.mults == 16);
  CHECK(ops.adds == 15);
  OpCounter sq;
  CHECK(tiled_square(0xFFFF, 16, 4, sq) == 0xFFFFull * 0xFFFFull);
  CHECK(sq.mults == 10);
  CHECK(sq.adds == 9);
  OpCounter k;
  CHECK(tiled_mult(0xFFFF, 0xFFFF, 16, 4, k, Tiling::Karatsuba) == 0xFFFFull * 0xFFFFull);
  CHECK(k.mults == 9);
}

TEST_CASE("exhaustive bit-exact checks") {
  CHECK(bitexact_tiling_check(4, 2));
  CHECK(bitexact_tiling_check(8, 4));
  CHECK(bitexact_tiling_check(8, 2));
  CHECK(bitexact_tiling_check(8, 1));
  CHECK(bitexact_tiling_check(8, 8));
  CHECK(bitexact_tiling_check(8, 2, Tiling::Karatsuba));
  CHECK(bitexact_tiling_check(10, 5, Tiling::Karatsuba));
  CHECK_THROWS_AS(bitexact_tiling_check(32, 16), Error);
}

}
