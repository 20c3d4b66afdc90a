#pragma once

// Negation hard negatives: a report with one Present finding flipped to a
// negated statement, appended as an extra text candidate that no image targets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "softneg/reports.hpp"
#include "softneg/rng.hpp"

namespace softneg {

struct NegationConfig {
  std::vector<std::string> lexicon = default_negation_lexicon();
  std::size_t flips = 1;
};

/// Canonical sentence for a negated entity: the first template carrying `phrase`.
inline Sentence negated_sentence(EntityId e, const std::string& phrase) {
  return render_fact(Fact::absent(e, phrase), 0);
}

inline std::optional<Report> negate_report(const Report& r, std::uint64_t seed, const NegationConfig& cfg = {}) {
  std::vector<std::size_t> present;
  for (std::size_t i = 0; i < r.sentences.size(); ++i)
    if (r.sentences[i].fact.polarity == Polarity::Present) present.push_back(i);
  if (present.empty()) return std::nullopt;
  if (cfg.lexicon.empty()) throw std::invalid_argument("negation lexicon is empty");

  Rng rng = make_rng(seed, "negate");
  seeded_shuffle(present, rng);
  const std::size_t n = std::min(std::max<std::size_t>(cfg.flips, 1), present.size());
  Report out = r;
  out.is_templated_normal = false;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t idx = present[k];
    const EntityId e = out.sentences[idx].fact.entity;
    const std::string& phrase = cfg.lexicon[uniform_index(rng, cfg.lexicon.size())];
    out.sentences[idx] = negated_sentence(e, phrase);
    // any other sentence asserting the same finding goes too
    for (std::size_t j = 0; j < out.sentences.size(); ++j)
      if (j != idx && out.sentences[j].fact.entity == e && out.sentences[j].fact.polarity == Polarity::Present)
        out.sentences[j] = negated_sentence(e, phrase);
  }
  return out;
}

struct HardNegatives {
  std::vector<Report> reports;     // appended text candidates, in source-row order
  std::vector<std::size_t> source;  // batch row each negative came from

  std::size_t count() const { return reports.size(); }
};

/// Negates round(rate * eligible) seeded-chosen rows that have a Present finding.
inline HardNegatives attach_hard_negatives(const std::vector<Report>& batch, double rate, std::uint64_t seed,
                                           const NegationConfig& cfg = {}) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("hard-negative rate must lie in [0,1]");
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < batch.size(); ++i)
    if (batch[i].any_present()) eligible.push_back(i);
  const auto take = static_cast<std::size_t>(std::llround(rate * static_cast<double>(eligible.size())));
  Rng rng = make_rng(seed, "hard-negatives");
  seeded_shuffle(eligible, rng);
  eligible.resize(take);
  std::sort(eligible.begin(), eligible.end());

  HardNegatives out;
  for (std::size_t row : eligible) {
    auto neg = negate_report(batch[row], derive_seed(seed, "negate-row", {row}), cfg);
    out.reports.push_back(std::move(*neg));
    out.source.push_back(row);
  }
  return out;
}

}  // namespace softneg
