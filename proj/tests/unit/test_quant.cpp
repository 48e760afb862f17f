#include <cmath>
#include <random>
#include <string>

#include "doctest.h"
#include "euclidnet/error.hpp"
#include "euclidnet/quant.hpp"
#include "euclidnet/train.hpp"
#include "json.hpp"
#include "oracle.hpp"
#include "qoracle.hpp"
#include "warnings.hpp"

using namespace euclidnet;

namespace {

QTensor random_q(Shape shape, std::mt19937_64& rng, QuantParams p) {
  QTensor q{shape, std::vector<std::int8_t>(shape_numel(shape)), p};
  std::uniform_int_distribution<int> u(-p.qmax(), p.qmax());
  for (auto& v : q.data) v = static_cast<std::int8_t>(u(rng));
  return q;
}

Dataset blobs(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> noise(0.0f, 0.3f);
  Dataset ds{Tensor({n, 1, 8, 8}), std::vector<int>(n), 2};
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels[i] = static_cast<int>(i % 2);
    for (std::size_t h = 0; h < 8; ++h)
      for (std::size_t w = 0; w < 8; ++w)
        ds.images.at(i, 0, h, w) = ((w < 4) == (i % 2 == 0) ? 0.7f : 0.0f) + noise(rng);
  }
  return ds;
}

Model trained_euclid(const Dataset& data, const NormStats& norm) {
  ModelSpec s;
  s.in_h = s.in_w = 8;
  s.classes = 2;
  s.conv1 = 4;
  s.conv2 = 4;
  s.kind = SimilarityKind::euclid();
  auto m = build_default_model(s, 3);
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 16;
  cfg.eta = 0.1f;
  train(m, data, nullptr, norm, cfg);
  return m;
}

}  // namespace

TEST_SUITE("quant") {

TEST_CASE("calibration") {
  const Tensor t = tensor_create({3}, std::vector<float>{-1.0f, 0.25f, 1.0f});
  CHECK(calibrate(std::span<const Tensor>(&t, 1)).scale == 1.0f / 127.0f);
  const Tensor one({1}, 12.7f);
  CHECK(calibrate(std::span<const Tensor>(&one, 1)).scale == doctest::Approx(0.1f).epsilon(1e-7));
  WarningCapture cap;
  const Tensor zero({4}, 0.0f);
  CHECK(calibrate(std::span<const Tensor>(&zero, 1)).scale == 1.0f);
  CHECK(cap.messages.size() == 1);
  CHECK(calibrate_max_abs(7.0f, 4).scale == 1.0f);
  CHECK_THROWS_AS(calibrate_max_abs(1.0f, 1), Error);
  CHECK_THROWS_AS(calibrate_max_abs(NAN, 8), Error);
}

TEST_CASE("quantize and dequantize") {
  const QuantParams p{0.05f, 8};
  CHECK(quantize_value(0.0f, p) == 0);
  CHECK(quantize_value(0.05f * 100.0f, p) == 100);
  CHECK(quantize_value(1e6f, p) == 127);
  CHECK(quantize_value(-1e6f, p) == -127);
  CHECK(quantize_value(0.025f, {1.0f / 40.0f, 8}) == 1);
  CHECK(quantize_value(-2.5f, {1.0f, 8}) == -3);  // half away from zero
  CHECK(quantize_value(2.5f, {1.0f, 8}) == 3);
  CHECK(quantize_value(5.0f, {1.0f, 3}) == 3);
  const auto q = quantize(tensor_create({2}, std::vector<float>{0.0f, 0.05f * 100.0f}), p);
  CHECK(q.data == std::vector<std::int8_t>{0, 100});
  CHECK(dequantize(q)[0] == 0.0f);
  CHECK_THROWS_AS(quantize(Tensor({1}), {0.0f, 8}), Error);
  CHECK_THROWS_AS(quantize(Tensor({1}), {1.0f, 9}), Error);
}

TEST_CASE("round trip error is at most half a step") {
  std::mt19937_64 rng(1);
  for (int bits : {2, 4, 8}) {
    const auto t = oracle::random_tensor({2000}, rng, -3.0f, 3.0f);
    const auto p = calibrate(std::span<const Tensor>(&t, 1), bits);
    const auto back = dequantize(quantize(t, p));
    for (std::size_t i = 0; i < t.size(); ++i) REQUIRE(std::fabs(back[i] - t[i]) <= p.scale * 0.5f * (1.0f + 1e-6f));
  }
}

TEST_CASE("square table") {
  const SquareLut lut(8);
  CHECK(lut.size() == 511);
  CHECK(lut[0] == 0);
  CHECK(lut[-255] == 65025);
  CHECK(lut[16] == 256);
  for (int d = -255; d <= 255; ++d) REQUIRE(lut[d] == static_cast<std::uint32_t>(d * d));
  CHECK_THROWS_AS(lut.at(256), Error);
  CHECK(build_square_lut(4).size() == 31);
  CHECK_THROWS_AS(SquareLut(13), Error);
}

TEST_CASE("integer euclid examples") {
  const SquareLut lut(8);
  const QuantParams p{0.5f, 8};
  QTensor x{{1, 1, 1, 1}, {10}, p}, w{{1, 1, 1, 1}, {4}, p};
  CHECK(qeuclid_conv2d(x, w, lut, {})[0] == -4.5f);
  std::mt19937_64 rng(2);
  auto qx = random_q({1, 2, 3, 3}, rng, p);
  QTensor qw{{1, 2, 3, 3}, qx.data, p};
  CHECK(qeuclid_conv2d(qx, qw, lut, {})[0] == 0.0f);
}

TEST_CASE("integer euclid equals the float oracle on every int8 pair") {
  const SquareLut lut(8);
  const QuantParams p{0.0137f, 8};
  QTensor qx{{256, 1, 1, 1}, std::vector<std::int8_t>(256), p};
  QTensor qw{{256, 1, 1, 1}, std::vector<std::int8_t>(256), p};
  for (int i = 0; i < 256; ++i) qx.data[i] = qw.data[i] = static_cast<std::int8_t>(i - 128);
  const auto y = qeuclid_conv2d(qx, qw, lut, {});
  const auto o = oracle::qeuclid(qx, qw, 1, 0);
  REQUIRE(y.size() == 65536);
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < y.size(); ++i) mismatches += y[i] != o[i];
  CHECK(mismatches == 0);
}

TEST_CASE("integer euclid equals the float oracle on random convolutions") {
  const SquareLut lut(8);
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> n(1, 2), c(1, 3), l(1, 3), hw(3, 7), k(1, 3);
  std::uniform_int_distribution<int> st(1, 2), pd(0, 1);
  std::uniform_real_distribution<float> sc(1e-3f, 0.2f);
  for (int trial = 0; trial < 100; ++trial) {
    const QuantParams p{sc(rng), 8};
    const auto C = c(rng), K = k(rng);
    const auto qx = random_q({n(rng), C, hw(rng), hw(rng)}, rng, p);
    const auto qw = random_q({l(rng), C, K, K}, rng, p);
    const int stride = st(rng), pad = pd(rng);
    const auto y = qeuclid_conv2d(qx, qw, lut, {stride, pad});
    const auto o = oracle::qeuclid(qx, qw, stride, pad);
    REQUIRE(y.shape() == o.shape());
    for (std::size_t i = 0; i < y.size(); ++i) REQUIRE(y[i] == o[i]);
  }
}

TEST_CASE("integer euclid rejects mismatched parameters") {
  const SquareLut lut(8);
  QTensor x{{1, 1, 1, 1}, {1}, {0.5f, 8}}, w{{1, 1, 1, 1}, {1}, {0.25f, 8}};
  try {
    qeuclid_conv2d(x, w, lut, {});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Quantization);
  }
  w.params = x.params;
  CHECK_THROWS_AS(qeuclid_conv2d(x, w, SquareLut(4), {}), Error);
}

TEST_CASE("model quantization") {
  const auto data = blobs(64, 5);
  const auto norm = compute_norm_stats(data);
  const auto model = trained_euclid(data, norm);
  const auto out = quantize_and_report(model, norm, data, data, 8);
  const auto& r = out.report;
  CHECK(r.per_layer.size() == 3);
  CHECK(r.top1_float >= 0.95f);
  CHECK(r.top1_float - r.top1_quant <= 0.01f + 1e-6f);
  CHECK(r.calib_count == 64);
  for (const auto& l : r.per_layer) {
    CHECK(l.scale > 0.0f);
    CHECK(l.max_err <= l.scale * 0.5f * (1.0f + 1e-5f));
  }
  const auto j = nlohmann::json::parse(report_json(r));
  CHECK(j.at("bits") == 8);
  CHECK(j.at("per_layer").size() == 3);
  CHECK(j.contains("top1_quant_calib_on_eval"));

  // Integer inference matches float inference over the dequantized weights closely.
  const auto x = normalize(data.images, norm);
  const auto qy = quantized_infer(out.model, x);
  const auto fy = model_infer(out.model.model, x);
  CHECK(argmax_row(qy) == argmax_row(fy));

  const auto low = quantize_and_report(model, norm, data, data, 2);
  CHECK(low.report.top1_quant <= r.top1_quant);
}

TEST_CASE("non-euclid layers cannot be quantized") {
  ModelSpec s;
  s.in_h = s.in_w = 8;
  const auto m = build_default_model(s, 1);
  Dataset d{Tensor({2, 1, 8, 8}, 0.5f), {0, 1}, 10};
  try {
    quantize_model(m, d, {{0.5f}, {0.2f}}, 8);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Quantization);
    CHECK(std::string(e.what()).find("unsupported similarity") != std::string::npos);
  }
}

TEST_CASE("quantized checkpoint round trip") {
  const auto data = blobs(32, 6);
  const auto norm = compute_norm_stats(data);
  const auto model = trained_euclid(data, norm);
  const auto qm = quantize_model(model, data, norm, 8);
  const auto bytes = encode_quantized_checkpoint(qm, norm, {3, 1.0f, 11});
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "EUCQ");
  const auto back = decode_quantized_checkpoint(bytes);
  CHECK(back.meta.seed == 11);
  CHECK(back.norm.mean == norm.mean);
  REQUIRE(back.model.layers.size() == qm.layers.size());
  for (std::size_t i = 0; i < qm.layers.size(); ++i) {
    CHECK(back.model.layers[i].params == qm.layers[i].params);
    CHECK(back.model.layers[i].weight.data == qm.layers[i].weight.data);
  }
  const auto x = normalize(data.images, norm);
  CHECK(quantized_infer(back.model, x) == quantized_infer(qm, x));
  CHECK(encode_quantized_checkpoint(back.model, back.norm, back.meta) == bytes);
  auto bad = bytes;
  bad.resize(bad.size() - 3);
  CHECK_THROWS_AS(decode_quantized_checkpoint(bad), CheckpointError);
  bad = bytes;
  bad[3] = 'N';
  CHECK_THROWS_AS(decode_quantized_checkpoint(bad), CheckpointError);
}

}
