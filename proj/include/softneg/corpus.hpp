#pragma once

// Synthetic long-tailed corpora of (report, image feature) pairs.
//
// Image features stand in for pixels: a fixed orthogonal map of a latent code
// holding the finding bits (scaled by severity) plus location offsets, with
// Gaussian noise. The map depends only on FeatureConfig::basis_seed, so corpora
// generated with different seeds share one image "world".

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "softneg/clinical.hpp"
#include "softneg/linalg.hpp"
#include "softneg/reports.hpp"
#include "softneg/rng.hpp"

namespace softneg {

struct ImageFeature {
  Vec values;
  bool operator==(const ImageFeature&) const = default;
  std::size_t size() const { return values.size(); }
};

struct FeatureConfig {
  std::size_t dim = 24;
  double noise_sigma = 0.1;
  std::uint64_t basis_seed = 0x51CA7E5EEDULL;
  double severity_step = 0.2;  // mild -step, severe +step on the finding coordinate
  double location_gain = 0.3;
};

inline constexpr std::size_t kLatentLocationOffset = kEntityCount;  // latent slots 14..18
inline constexpr std::size_t kMinFeatureDim = kEntityCount + kLocationWords.size();

class FeatureMap {
 public:
  explicit FeatureMap(FeatureConfig cfg = {}) : cfg_(cfg) {
    if (cfg_.dim < kMinFeatureDim)
      throw std::invalid_argument("image feature dim must be >= " + std::to_string(kMinFeatureDim));
    if (!(cfg_.noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be >= 0");
    basis_ = random_orthogonal(cfg_.dim, cfg_.basis_seed);
  }

  const FeatureConfig& config() const { return cfg_; }
  const Matrix& basis() const { return basis_; }

  /// Noise-free latent code of a report.
  Vec latent(const Report& r) const {
    Vec z(cfg_.dim, 0.0);
    const auto labels = label_vector(r);
    for (int e = 0; e < kEntityCount; ++e) z[static_cast<std::size_t>(e)] = labels[e];
    for (const auto& s : r.sentences) {
      const Fact& f = s.fact;
      if (f.polarity != Polarity::Present) continue;
      auto& slot = z[static_cast<std::size_t>(f.entity.index())];
      if (f.severity == Severity::Mild) slot = std::min(slot, 1.0 - cfg_.severity_step);
      if (f.severity == Severity::Severe) slot = std::max(slot, 1.0 + cfg_.severity_step);
      if (f.location) z[kLatentLocationOffset + static_cast<std::size_t>(*f.location)] += cfg_.location_gain;
    }
    return z;
  }

  ImageFeature sample(const Report& r, Rng& rng) const {
    const Vec z = latent(r);
    std::normal_distribution<double> noise(0.0, 1.0);
    ImageFeature x;
    x.values.resize(cfg_.dim);
    for (std::size_t i = 0; i < cfg_.dim; ++i) x.values[i] = dot(basis_.row(i), z);
    for (auto& v : x.values) v += cfg_.noise_sigma * noise(rng);
    return x;
  }

  /// Least-squares latent estimate (basis is orthogonal, so this is Q^T x).
  Vec decode(const ImageFeature& x) const {
    if (x.size() != cfg_.dim) throw ShapeError("decode: feature dim mismatch");
    Vec z(cfg_.dim, 0.0);
    for (std::size_t i = 0; i < cfg_.dim; ++i)
      for (std::size_t j = 0; j < cfg_.dim; ++j) z[j] += basis_(i, j) * x.values[i];
    return z;
  }

  /// Finding bits recovered by thresholding the decoded latent at 1/2.
  ClinicalLabelVector decode_labels(const ImageFeature& x) const {
    const Vec z = decode(x);
    std::array<bool, kFindingCount> present{};
    for (int e = 0; e < kFindingCount; ++e) present[static_cast<std::size_t>(e)] = z[static_cast<std::size_t>(e)] > 0.5;
    return ClinicalLabelVector::from_findings(present);
  }

 private:
  static Matrix random_orthogonal(std::size_t n, std::uint64_t seed) {
    Rng rng = make_rng(seed, "feature-basis");
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix q(n, n);
    // Gram-Schmidt over columns
    for (std::size_t c = 0; c < n; ++c) {
      Vec v(n);
      for (auto& x : v) x = g(rng);
      for (int pass = 0; pass < 2; ++pass)
        for (std::size_t k = 0; k < c; ++k) {
          double proj = 0.0;
          for (std::size_t r = 0; r < n; ++r) proj += q(r, k) * v[r];
          for (std::size_t r = 0; r < n; ++r) v[r] -= proj * q(r, k);
        }
      const double nv = norm2(v);
      for (std::size_t r = 0; r < n; ++r) q(r, c) = v[r] / nv;
    }
    return q;
  }

  FeatureConfig cfg_;
  Matrix basis_;
};

/// Default long-tailed finding frequencies (13 findings, canonical order).
inline std::array<double, kFindingCount> default_entity_frequency() {
  return {0.14, 0.16, 0.14, 0.03, 0.16, 0.02, 0.12, 0.03, 0.01, 0.05, 0.08, 0.03, 0.03};
}

struct CorpusSpec {
  std::size_t n_reports = 1000;
  double normal_fraction = 0.3;
  double duplicate_mass = 0.6;
  std::array<double, kFindingCount> entity_frequency = default_entity_frequency();
  std::uint64_t seed = 1;
  FeatureConfig features{};

  /// Probabilities for the number of Present facts in an abnormal report (1, 2, 3).
  std::array<double, 3> positives_per_report{0.5, 0.3, 0.2};
};

class EmptyCorpusError : public std::invalid_argument {
 public:
  EmptyCorpusError() : std::invalid_argument("corpus spec requests zero reports") {}
};

inline std::array<double, kFindingCount> normalized_frequency(const CorpusSpec& spec) {
  auto w = spec.entity_frequency;
  double total = 0.0;
  for (double x : w) {
    if (!(x >= 0.0)) throw std::invalid_argument("entity_frequency weights must be nonnegative");
    total += x;
  }
  if (!(total > 0.0)) throw std::invalid_argument("entity_frequency weights sum to zero");
  for (double& x : w) x /= total;
  return w;
}

inline void validate(const CorpusSpec& spec) {
  if (spec.n_reports == 0) throw EmptyCorpusError();
  if (!(spec.normal_fraction >= 0.0 && spec.normal_fraction <= 1.0))
    throw std::invalid_argument("normal_fraction must lie in [0,1]");
  if (!(spec.duplicate_mass >= 0.0 && spec.duplicate_mass <= 1.0))
    throw std::invalid_argument("duplicate_mass must lie in [0,1]");
  (void)normalized_frequency(spec);
}

struct Pair {
  std::uint64_t id = 0;
  Report report;
  ImageFeature image;
};

using Corpus = std::vector<Pair>;

namespace detail {

inline Report templated_normal(Rng& rng) {
  std::array<double, kNormalTemplates.size()> w{};
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = kNormalTemplates[i].weight;
  Report r = parse_report(kNormalTemplates[weighted_index(rng, w)].text);
  r.is_templated_normal = true;
  return r;
}

inline Fact random_absent(EntityId e, Rng& rng) {
  const auto& lex = default_negation_lexicon();
  return Fact::absent(e, lex[uniform_index(rng, lex.size())]);
}

inline Sentence random_sentence(const Fact& f, Rng& rng) {
  return render_fact(f, uniform_index(rng, sentence_variants(f)));
}

inline std::vector<EntityId> distinct_entities(Rng& rng, std::array<double, kFindingCount> w, std::size_t k) {
  std::vector<EntityId> out;
  for (std::size_t i = 0; i < k; ++i) {
    if (std::all_of(w.begin(), w.end(), [](double x) { return x <= 0.0; })) break;
    const auto e = weighted_index(rng, w);
    out.emplace_back(static_cast<int>(e));
    w[e] = 0.0;
  }
  return out;
}

inline Report random_normal(Rng& rng) {
  std::array<double, kFindingCount> uniform;
  uniform.fill(1.0);
  const std::size_t k = 2 + uniform_index(rng, 3);
  Report r;
  for (EntityId e : distinct_entities(rng, uniform, k)) r.sentences.push_back(random_sentence(random_absent(e, rng), rng));
  return r;
}

inline Report random_abnormal(Rng& rng, const CorpusSpec& spec, const std::array<double, kFindingCount>& freq) {
  const std::size_t k = 1 + weighted_index(rng, spec.positives_per_report);
  const auto positives = distinct_entities(rng, freq, k);
  Report r;
  for (EntityId e : positives) {
    std::optional<Severity> sev;
    std::optional<Location> loc;
    if (uniform01(rng) < 0.5) sev = static_cast<Severity>(uniform_index(rng, 3));
    if (uniform01(rng) < 0.5) loc = static_cast<Location>(uniform_index(rng, 5));
    r.sentences.push_back(random_sentence(Fact::present(e, sev, loc), rng));
  }
  // a few negated findings for other entities
  std::array<double, kFindingCount> others;
  others.fill(1.0);
  for (EntityId e : positives) others[static_cast<std::size_t>(e.index())] = 0.0;
  const std::size_t n_absent = uniform_index(rng, 3);
  for (EntityId e : distinct_entities(rng, others, n_absent))
    r.sentences.push_back(random_sentence(random_absent(e, rng), rng));
  seeded_shuffle(r.sentences, rng);
  return r;
}

}  // namespace detail

/// One pair, generated from its own derived stream so pairs are independent of each other.
inline Pair generate_pair(const CorpusSpec& spec, const FeatureMap& features, std::uint64_t index) {
  const auto freq = normalized_frequency(spec);
  Rng rng = make_rng(spec.seed, "pair", {index});
  Pair p;
  p.id = index;
  if (uniform01(rng) < spec.normal_fraction) {
    p.report = uniform01(rng) < spec.duplicate_mass ? detail::templated_normal(rng) : detail::random_normal(rng);
  } else {
    p.report = detail::random_abnormal(rng, spec, freq);
  }
  p.image = features.sample(p.report, rng);
  return p;
}

inline Corpus generate_corpus(const CorpusSpec& spec) {
  validate(spec);
  const FeatureMap features(spec.features);
  Corpus out;
  out.reserve(spec.n_reports);
  for (std::size_t i = 0; i < spec.n_reports; ++i) out.push_back(generate_pair(spec, features, i));
  return out;
}

/// Keeps the first occurrence of every distinct report text.
inline Corpus deduplicate(const Corpus& corpus) {
  Corpus out;
  std::unordered_set<std::string> seen;
  for (const auto& p : corpus)
    if (seen.insert(render(p.report)).second) out.push_back(p);
  return out;
}

}  // namespace softneg
