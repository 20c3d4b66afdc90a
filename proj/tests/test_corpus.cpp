#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "helpers.hpp"

using namespace softneg;

TEST(Corpus, AllTemplatedNormals) {
  CorpusSpec spec;
  spec.n_reports = 100;
  spec.normal_fraction = 1.0;
  spec.duplicate_mass = 1.0;
  const auto c = generate_corpus(spec);
  ASSERT_EQ(c.size(), 100u);
  std::set<std::string> texts;
  for (const auto& p : c) {
    EXPECT_TRUE(p.report.is_templated_normal);
    EXPECT_FALSE(p.report.any_present());
    texts.insert(render(p.report));
  }
  EXPECT_LE(texts.size(), 3u);
}

TEST(Corpus, DeterministicPerSeed) {
  CorpusSpec spec;
  spec.n_reports = 300;
  spec.seed = 99;
  EXPECT_EQ(to_jsonl(generate_corpus(spec)), to_jsonl(generate_corpus(spec)));
  spec.seed = 100;
  const auto other = generate_corpus(spec);
  spec.seed = 99;
  EXPECT_NE(to_jsonl(generate_corpus(spec)), to_jsonl(other));
}

TEST(Corpus, PairsAreIndependentStreams) {
  CorpusSpec spec;
  spec.n_reports = 50;
  const auto c = generate_corpus(spec);
  const FeatureMap map(spec.features);
  for (std::uint64_t i : {0u, 17u, 49u}) {
    const Pair p = generate_pair(spec, map, i);
    EXPECT_EQ(render(p.report), render(c[i].report));
    EXPECT_EQ(p.image, c[i].image);
  }
}

TEST(Corpus, NormalFraction) {
  CorpusSpec spec;
  spec.n_reports = 10000;
  spec.normal_fraction = 0.5;
  std::size_t normal = 0;
  for (const auto& p : generate_corpus(spec)) normal += label_vector(p.report).is_normal() ? 1 : 0;
  const double frac = static_cast<double>(normal) / 10000.0;
  EXPECT_GE(frac, 0.48);
  EXPECT_LE(frac, 0.52);
}

TEST(Corpus, EntityHistogramTracksFrequency) {
  CorpusSpec spec;
  spec.n_reports = 10000;
  const auto freq = normalized_frequency(spec);
  std::array<double, kFindingCount> counts{};
  double total = 0.0;
  for (const auto& p : generate_corpus(spec))
    for (const auto& s : p.report.sentences)
      if (s.fact.polarity == Polarity::Present) {
        counts[static_cast<std::size_t>(s.fact.entity.index())] += 1.0;
        total += 1.0;
      }
  for (int e = 0; e < kFindingCount; ++e)
    EXPECT_NEAR(counts[static_cast<std::size_t>(e)] / total, freq[static_cast<std::size_t>(e)], 0.02)
        << EntityId(e).name();
}

TEST(Corpus, EmptySpecRejected) {
  CorpusSpec spec;
  spec.n_reports = 0;
  EXPECT_THROW(generate_corpus(spec), EmptyCorpusError);
  spec.n_reports = 5;
  spec.entity_frequency.fill(0.0);
  EXPECT_THROW(generate_corpus(spec), std::invalid_argument);
}

TEST(Corpus, DuplicatesAreByteIdenticalAndDedupRemovesThem) {
  CorpusSpec spec;
  spec.n_reports = 500;
  spec.normal_fraction = 0.6;
  spec.duplicate_mass = 0.9;
  const auto c = generate_corpus(spec);
  std::size_t templated = 0;
  for (const auto& p : c)
    if (p.report.is_templated_normal) {
      ++templated;
      EXPECT_TRUE(is_normal_template_text(render(p.report)));
    }
  const auto d = deduplicate(c);
  std::set<std::string> texts;
  for (const auto& p : d) EXPECT_TRUE(texts.insert(render(p.report)).second);
  EXPECT_GT(templated, 200u);
  EXPECT_LT(d.size(), c.size() - templated + 4);
}

TEST(Features, BasisIsOrthogonal) {
  const FeatureMap map;
  const Matrix& q = map.basis();
  for (std::size_t i = 0; i < q.cols(); ++i)
    for (std::size_t j = 0; j < q.cols(); ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < q.rows(); ++r) s += q(r, i) * q(r, j);
      EXPECT_NEAR(s, i == j ? 1.0 : 0.0, 1e-12);
    }
}

TEST(Features, NoiselessDecodeRecoversLatent) {
  CorpusSpec spec;
  spec.n_reports = 200;
  spec.features.noise_sigma = 0.0;
  const FeatureMap map(spec.features);
  for (const auto& p : generate_corpus(spec)) {
    const Vec z = map.latent(p.report);
    const Vec back = map.decode(p.image);
    for (std::size_t k = 0; k < z.size(); ++k) EXPECT_NEAR(back[k], z[k], 1e-12);
    EXPECT_EQ(map.decode_labels(p.image), label_vector(p.report));
  }
}

TEST(Features, NoisyDecodeMostlyExact) {
  const auto c = testing_util::small_corpus(2000, 8);
  const FeatureMap map;
  std::size_t ok = 0;
  for (const auto& p : c) {
    EXPECT_EQ(p.image.size(), 24u);
    ok += map.decode_labels(p.image) == label_vector(p.report) ? 1 : 0;
  }
  EXPECT_GT(static_cast<double>(ok) / 2000.0, 0.99);
}

TEST(Features, SeverityAndLocationShiftTheLatent) {
  const FeatureMap map;
  const Vec plain = map.latent(parse_report("Edema is present."));
  const Vec severe = map.latent(parse_report("Severe edema."));
  const Vec mild = map.latent(parse_report("Mild edema."));
  const Vec left = map.latent(parse_report("Edema in the left."));
  EXPECT_DOUBLE_EQ(plain[10], 1.0);
  EXPECT_DOUBLE_EQ(severe[10], 1.2);
  EXPECT_DOUBLE_EQ(mild[10], 0.8);
  EXPECT_DOUBLE_EQ(left[kLatentLocationOffset + 0], 0.3);
  EXPECT_DOUBLE_EQ(plain[kLatentLocationOffset + 0], 0.0);
}
