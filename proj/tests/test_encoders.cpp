#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"

using namespace softneg;

TEST(Encoders, OutputsAreUnitNorm) {
  const auto p = ModelParams::init(ModelShape{}, 4);
  for (const auto& x : testing_util::small_corpus(100, 4)) {
    EXPECT_NEAR(norm2(encode_image(x.image, p)), 1.0, 1e-12);
    EXPECT_NEAR(norm2(encode_text(x.report, p)), 1.0, 1e-12);
    EXPECT_EQ(encode_image(x.image, p).size(), 8u);
  }
}

TEST(Encoders, ZeroWeightsFallBackToFirstBasisVector) {
  auto p = ModelParams::init(ModelShape{}, 4);
  p.weights = zeros_like(p.weights);
  const Vec e = encode_image(testing_util::small_corpus(1)[0].image, p);
  EXPECT_EQ(e, basis_vector(8));
  EXPECT_EQ(encode_text(parse_report("No edema."), p), basis_vector(8));
}

TEST(Encoders, EmptyReportIsFirstBasisVector) {
  const auto p = ModelParams::init(ModelShape{}, 4);
  EXPECT_EQ(encode_text(Report{}, p), basis_vector(8));
}

TEST(Encoders, SentenceOrderDoesNotMatter) {
  const auto p = ModelParams::init(ModelShape{}, 6);
  const auto r = parse_report("There is edema. No pneumothorax. Mild atelectasis. Fracture is not seen.");
  const Vec a = encode_text(r, p);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Vec b = encode_text(shuffle_sentences(r, s), p);
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
  }
}

TEST(Encoders, TextTruncatesAtLimit) {
  const auto p = ModelParams::init(ModelShape{}, 6);
  std::string long_text, prefix;
  for (int i = 0; i < 150; ++i) {
    const std::string s = i % 2 ? "There is edema. " : "There is pneumonia. ";
    long_text += s;
    if (i < 100) prefix += s;  // 3 tokens each: exactly 300
  }
  const Report lr = parse_report(long_text);
  const Report pr = parse_report(prefix);
  EXPECT_EQ(tokenize(pr).size(), kMaxTextTokens);
  EXPECT_EQ(tokenize(lr).size(), kMaxTextTokens);
  EXPECT_EQ(text_features(lr, 32), text_features(pr, 32));
  EXPECT_EQ(encode_text(lr, p), encode_text(pr, p));
}

TEST(Encoders, TextFeaturesAreTokenMeans) {
  const Vec f = text_features(parse_report("No edema."), 4);
  const Vec a = token_embed("no", 4), b = token_embed("edema", 4);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(f[k], 0.5 * (a[k] + b[k]), 1e-15);
}

TEST(Encoders, InitWithinFanInBound) {
  const auto p = ModelParams::init(ModelShape{}, 9);
  auto check = [](const Dense& d) {
    const double a = 1.0 / std::sqrt(static_cast<double>(d.w.cols()));
    for (double x : d.w.flat()) EXPECT_LE(std::abs(x), a);
    for (double x : d.b) EXPECT_LE(std::abs(x), a);
  };
  check(p.weights.image.l1);
  check(p.weights.image.l2);
  check(p.weights.text.l1);
  check(p.weights.text.l2);
  EXPECT_NE(flatten(p.weights), flatten(ModelParams::init(ModelShape{}, 10).weights));
  EXPECT_EQ(flatten(p.weights), flatten(ModelParams::init(ModelShape{}, 9).weights));
}

TEST(Encoders, FlattenRoundTrip) {
  auto p = ModelParams::init(ModelShape{}, 2);
  Vec flat = flatten(p.weights);
  EXPECT_EQ(flat.size(), parameter_count(p.weights));
  for (auto& x : flat) x += 0.25;
  unflatten(p.weights, flat);
  EXPECT_EQ(flatten(p.weights), flat);
  flat.pop_back();
  EXPECT_THROW(unflatten(p.weights, flat), ShapeError);
}

TEST(Logits, TemperatureScaling) {
  Matrix u(1, 2), v(3, 2);
  u(0, 0) = 1.0;
  v(0, 0) = 1.0;
  v(1, 1) = 1.0;
  v(2, 0) = -1.0;
  const Matrix l = cosine_logits(u, v, 0.1);
  EXPECT_NEAR(l(0, 0), 10.0, 1e-12);
  EXPECT_NEAR(l(0, 1), 0.0, 1e-12);
  EXPECT_NEAR(cosine_logits(u, v, 1.0)(0, 2), -1.0, 1e-12);
  EXPECT_THROW(cosine_logits(u, v, 0.0), std::invalid_argument);
  EXPECT_THROW(cosine_logits(u, Matrix(1, 3), 0.1), ShapeError);
}

TEST(Hyper, Validation) {
  HyperBlock h;
  EXPECT_NO_THROW(h.validate());
  h.tau_t = 1.5;  // above 1 simply gates everything off
  EXPECT_NO_THROW(h.validate());
  h.tau_t = std::nan("");
  EXPECT_THROW(h.validate(), std::invalid_argument);
  h = HyperBlock{};
  h.w_c = -0.1;
  EXPECT_THROW(h.validate(), std::invalid_argument);
}
