#include <random>
#include <string>

#include "doctest.h"
#include "euclidnet/error.hpp"
#include "euclidnet/tensor.hpp"
#include "oracle.hpp"

using namespace euclidnet;

TEST_SUITE("tensor") {

TEST_CASE("construction") {
  const auto z = tensor_create({2, 2}, 0.0f);
  CHECK(z.shape() == Shape{2, 2});
  CHECK(z.values() == std::vector<float>{0, 0, 0, 0});
  const auto v = tensor_create({3}, std::vector<float>{1, 2, 3});
  CHECK(v.values() == std::vector<float>{1, 2, 3});
  try {
    tensor_create({2}, std::vector<float>{1, 2, 3});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Shape);
    const std::string msg = e.what();
    CHECK(msg.find('3') != std::string::npos);
    CHECK(msg.find('2') != std::string::npos);
  }
  CHECK_THROWS_AS(tensor_create({}, 0.0f), Error);
  CHECK_THROWS_AS(tensor_create({2, 0}, 0.0f), Error);
  CHECK(Tensor().empty());
}

TEST_CASE("reshape keeps data") {
  const auto t = tensor_create({2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6});
  const auto r = t.reshaped({3, 2});
  CHECK(r.values() == t.values());
  CHECK(r.shape() == Shape{3, 2});
  CHECK_THROWS_AS(t.reshaped({4, 2}), Error);
}

TEST_CASE("im2col enumerates receptive fields") {
  const auto x = tensor_create({1, 1, 3, 3}, std::vector<float>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  const auto p = im2col(x, 2, 2, 1, 0);
  REQUIRE(p.rows == 4);
  REQUIRE(p.cols == 4);
  CHECK(p.data == std::vector<float>{1, 2, 4, 5, 2, 3, 5, 6, 4, 5, 7, 8, 5, 6, 8, 9});

  const auto one = im2col(x, 1, 1, 1, 0);
  CHECK(one.rows == 9);
  CHECK(one.data == x.values());

  const auto padded = im2col(x, 3, 3, 1, 1);
  CHECK(padded.rows == 9);
  CHECK(padded.data[0] == 0.0f);  // top-left corner of the first window is padding
  CHECK(padded.at(0, 4) == 1.0f);

  const auto zeros = im2col(Tensor({2, 3, 5, 5}), 3, 3, 2, 1);
  for (float v : zeros.data) CHECK(v == 0.0f);
}

TEST_CASE("im2col rejects oversized kernels") {
  CHECK_THROWS_AS(im2col(Tensor({1, 1, 2, 2}), 3, 3, 1, 0), Error);
  CHECK_NOTHROW(im2col(Tensor({1, 1, 2, 2}), 3, 3, 1, 1));
  CHECK_THROWS_AS(im2col(Tensor({1, 1, 4, 4}), 2, 2, 0, 0), Error);
  CHECK_THROWS_AS(im2col(Tensor({1, 4, 4}), 2, 2, 1, 0), Error);
}

TEST_CASE("col2im of ones counts patch coverage") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> dim(1, 9), k(1, 3), s(1, 2), p(0, 1), nc(1, 3);
  for (int trial = 0; trial < 200; ++trial) {
    const Shape shape{static_cast<std::size_t>(nc(rng) > 2 ? 2 : 1), static_cast<std::size_t>(nc(rng)),
                      static_cast<std::size_t>(dim(rng)), static_cast<std::size_t>(dim(rng))};
    const int kh = k(rng), kw = k(rng), stride = s(rng), pad = p(rng);
    if (static_cast<int>(shape[2]) + 2 * pad < kh || static_cast<int>(shape[3]) + 2 * pad < kw) continue;
    const Tensor x(shape, 1.0f);
    auto patches = im2col(x, kh, kw, stride, pad);
    std::fill(patches.data.begin(), patches.data.end(), 1.0f);
    const auto cover = col2im(patches, shape, kh, kw, stride, pad);
    const auto g = ConvGeometry::make(shape, 1, kh, kw, stride, pad);
    for (std::size_t n = 0; n < shape[0]; ++n)
      for (std::size_t c = 0; c < shape[1]; ++c)
        for (std::size_t h = 0; h < shape[2]; ++h)
          for (std::size_t w = 0; w < shape[3]; ++w) {
            int count = 0;
            for (std::size_t oh = 0; oh < g.out_h; ++oh)
              for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                const long top = static_cast<long>(oh * g.stride) - pad;
                const long left = static_cast<long>(ow * g.stride) - pad;
                if (static_cast<long>(h) >= top && static_cast<long>(h) < top + kh &&
                    static_cast<long>(w) >= left && static_cast<long>(w) < left + kw)
                  ++count;
              }
            REQUIRE(cover.at(n, c, h, w) == static_cast<float>(count));
          }
  }
}

TEST_CASE("im2col is linear and col2im is its adjoint") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = oracle::random_tensor({2, 2, 6, 5}, rng, -1.0f, 1.0f);
    const auto p = im2col(x, 3, 2, 1 + trial % 2, trial % 2);
    Tensor ax = x;
    for (auto& v : ax.data()) v *= 4.0f;
    const auto pa = im2col(ax, 3, 2, 1 + trial % 2, trial % 2);
    for (std::size_t i = 0; i < p.data.size(); ++i) REQUIRE(pa.data[i] == 4.0f * p.data[i]);

    PatchMatrix r = p;
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    for (auto& v : r.data) v = u(rng);
    const auto back = col2im(r, x.shape(), 3, 2, 1 + trial % 2, trial % 2);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < p.data.size(); ++i) lhs += static_cast<double>(p.data[i]) * r.data[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += static_cast<double>(x[i]) * back[i];
    REQUIRE(lhs == doctest::Approx(rhs).epsilon(1e-5));
  }
}

TEST_CASE("argmax_row") {
  CHECK(argmax_row(tensor_create({1, 2}, std::vector<float>{0.1f, 0.9f})) == std::vector<std::size_t>{1});
  CHECK(argmax_row(tensor_create({1, 2}, std::vector<float>{0.5f, 0.5f})) == std::vector<std::size_t>{0});
  CHECK(argmax_row(tensor_create({2, 2}, std::vector<float>{1, 2, 3, 0})) == std::vector<std::size_t>{1, 0});
  CHECK_THROWS_AS(argmax_row(Tensor({2, 2, 1})), Error);
}

}
