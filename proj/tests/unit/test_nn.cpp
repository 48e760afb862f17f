#include <cmath>
#include <random>
#include <string>

#include "doctest.h"
#include "euclidnet/error.hpp"
#include "euclidnet/nn.hpp"
#include "gradcheck.hpp"
#include "oracle.hpp"
#include "warnings.hpp"

using namespace euclidnet;

TEST_SUITE("nn") {

TEST_CASE("batchnorm on standardized input is the identity") {
  auto bn = make_batchnorm(2);
  // Each channel: values +-1 over N*H*W = 4, mean 0, biased variance 1.
  const auto x = tensor_create({2, 2, 1, 2}, std::vector<float>{1, -1, 2, 0, -1, 1, -2, 0});
  Tensor x2 = x;
  for (std::size_t i = 0; i < 8; ++i) x2[i] = (i / 2) % 2 == 0 ? x[i] : x[i] / std::sqrt(2.0f);
  const auto y = batchnorm_forward(x2, bn, true);
  for (std::size_t i = 0; i < 8; ++i) CHECK(std::fabs(y[i] - x2[i]) < 1e-5f);
}

TEST_CASE("batchnorm on a constant channel returns beta exactly") {
  auto bn = make_batchnorm(1);
  bn.beta[0] = 0.75f;
  bn.gamma[0] = 3.0f;
  const Tensor x({3, 1, 2, 2}, 4.2f);
  const auto y = batchnorm_forward(x, bn, true);
  for (float v : y.data()) CHECK(v == 0.75f);
}

TEST_CASE("batchnorm inference uses running statistics") {
  auto bn = make_batchnorm(1);
  bn.gamma[0] = 2.0f;
  bn.beta[0] = 1.0f;
  std::mt19937_64 rng(1);
  const auto x = oracle::random_tensor({4, 1, 3, 3}, rng, -2.0f, 2.0f);
  const auto y = batchnorm_infer(x, bn);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(2.0f * x[i] + 1.0f).epsilon(1e-5));
  CHECK(batchnorm_forward(x, bn, false) == y);
}

TEST_CASE("batchnorm training updates running statistics by momentum") {
  auto bn = make_batchnorm(1);
  const auto x = tensor_create({4, 1}, std::vector<float>{1, 2, 3, 6});
  batchnorm_forward(x, bn, true);
  CHECK(bn.running_mean[0] == doctest::Approx(0.1f * 3.0f));
  // Running variance takes the unbiased batch estimate: 14 / 3.
  const float unbiased = 14.0f / 3.0f;
  CHECK(bn.running_var[0] == doctest::Approx(0.9f + 0.1f * unbiased).epsilon(1e-5));
  bn.freeze_stats = true;
  const float keep = bn.running_mean[0];
  batchnorm_forward(x, bn, true);
  CHECK(bn.running_mean[0] == keep);
}

TEST_CASE("batchnorm on one value per channel warns") {
  WarningCapture cap;
  auto bn = make_batchnorm(2);
  const auto y = batchnorm_forward(tensor_create({1, 2}, std::vector<float>{3, -1}), bn, true);
  CHECK(cap.messages.size() == 1);
  CHECK(y[0] == 0.0f);
  CHECK(y[1] == 0.0f);
}

TEST_CASE("batchnorm channel mismatch") {
  auto bn = make_batchnorm(3);
  CHECK_THROWS_AS(batchnorm_forward(Tensor({2, 2}), bn, true), Error);
}

TEST_CASE("relu maxpool flatten") {
  const auto r = relu_forward(tensor_create({2}, std::vector<float>{-1, 2}));
  CHECK(r.values() == std::vector<float>{0, 2});
  std::vector<std::uint32_t> argmax;
  const auto m = maxpool2x2_forward(tensor_create({1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4}), &argmax);
  CHECK(m.values() == std::vector<float>{4});
  const auto tie = maxpool2x2_forward(tensor_create({1, 1, 2, 2}, std::vector<float>{5, 5, 5, 5}), &argmax);
  const auto back = maxpool2x2_backward({1, 1, 2, 2}, argmax, Tensor({1, 1, 1, 1}, 1.0f));
  CHECK(back.values() == std::vector<float>{1, 0, 0, 0});
  CHECK_THROWS_AS(maxpool2x2_forward(Tensor({1, 1, 3, 2})), Error);
  const Tensor x({3, 2, 2, 2}, 1.0f);
  const auto f = flatten_forward(x);
  CHECK(f.shape() == Shape{3, 8});
  CHECK(flatten_backward(x.shape(), f).shape() == x.shape());
}

TEST_CASE("softmax cross entropy") {
  const Tensor uniform({2, 10}, 0.3f);
  const auto res = softmax_cross_entropy(uniform, {3, 7});
  CHECK(res.loss == doctest::Approx(2.302585f).epsilon(1e-6));
  const auto big = tensor_create({1, 3}, std::vector<float>{1e4f, 0.0f, -1e4f});
  const auto r2 = softmax_cross_entropy(big, {2});
  CHECK(std::isfinite(r2.loss));
  CHECK(r2.loss == doctest::Approx(2e4f));
  std::mt19937_64 rng(2);
  const auto z = oracle::random_tensor({5, 4}, rng, -3.0f, 3.0f);
  const auto r3 = softmax_cross_entropy(z, {0, 1, 2, 3, 0});
  for (std::size_t n = 0; n < 5; ++n) {
    double s = 0.0;
    for (std::size_t c = 0; c < 4; ++c) s += r3.grad[n * 4 + c];
    CHECK(std::fabs(s) < 1e-6);
  }
  try {
    softmax_cross_entropy(z, {0, 1, 2, 4, 0});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Label);
  }
  CHECK_THROWS_AS(softmax_cross_entropy(z, {0, 1}), Error);
}

TEST_CASE("layer gradients against central differences") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    CHECK(gradcheck::check_batchnorm({3, 2, 3, 2}, rng) < 1e-3);
    CHECK(gradcheck::check_batchnorm({5, 4}, rng) < 1e-3);
    CHECK(gradcheck::check_relu({2, 3, 4, 4}, rng) < 1e-3);
    CHECK(gradcheck::check_maxpool({2, 2, 4, 6}, rng) < 1e-3);
    CHECK(gradcheck::check_flatten({2, 3, 2, 2}, rng) < 1e-3);
    CHECK(gradcheck::check_loss(4, 5, rng) < 1e-3);
  }
}

TEST_CASE("whole model gradients against central differences") {
  std::mt19937_64 rng(4);
  for (auto kind : {SimilarityKind::conv(), SimilarityKind::euclid(), SimilarityKind::homotopy(0.4f)}) {
    CAPTURE(to_string(kind));
    for (int trial = 0; trial < 3; ++trial) CHECK(gradcheck::check_model(kind, rng) < 1e-2);
  }
}

TEST_CASE("single 1x1 conv layer is a linear map") {
  Model m;
  m.input_shape = {2, 1, 1};
  m.class_count = 2;
  m.layers = {SimConv2d{tensor_create({2, 2, 1, 1}, std::vector<float>{1, 0, 2, -1}), {}, SimilarityKind::conv()},
              Flatten{}};
  validate_model(m);
  const auto y = model_infer(m, tensor_create({1, 2, 1, 1}, std::vector<float>{3, 5}));
  CHECK(y.values() == std::vector<float>{3, 1});
}

TEST_CASE("homotopy(0) leaves default model logits unchanged") {
  std::mt19937_64 rng(5);
  ModelSpec spec;
  spec.in_h = spec.in_w = 12;
  auto m = build_default_model(spec, 9);
  const auto x = oracle::random_tensor({3, 1, 12, 12}, rng, 0.0f, 1.0f);
  const auto conv = model_infer(m, x);
  set_similarity(m, SimilarityKind::homotopy(0.0f));
  CHECK(model_infer(m, x) == conv);
  Model t = m;
  CHECK(model_forward(t, x, true) == [&] {
    Model c = m;
    set_similarity(c, SimilarityKind::conv());
    return model_forward(c, x, true);
  }());
}

TEST_CASE("shape errors name the failing layer") {
  ModelSpec spec;
  spec.in_h = spec.in_w = 8;
  auto m = build_default_model(spec, 1);
  try {
    model_infer(m, Tensor({1, 3, 8, 8}));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Shape);
    CHECK(std::string(e.what()).rfind("layer 0 (sim_conv2d[conv])", 0) == 0);
  }
  m.class_count = 7;
  CHECK_THROWS_AS(validate_model(m), Error);
  CHECK_THROWS_AS(build_default_model({1, 10, 10}, 1), Error);
}

TEST_CASE("parameters and state are enumerated in layer order") {
  ModelSpec spec;
  spec.in_h = spec.in_w = 8;
  auto m = build_default_model(spec, 1);
  const auto params = model_parameters(m);
  REQUIRE(params.size() == 9);
  CHECK(params[0].similarity);
  CHECK_FALSE(params[1].similarity);
  CHECK(model_state(m).size() == 15);
  const auto again = build_default_model(spec, 1);
  CHECK(std::get<SimConv2d>(again.layers[0]).weight == std::get<SimConv2d>(m.layers[0]).weight);
}

}
