#pragma once

// Structured chest-report model: entities, facts, the closed sentence grammar,
// parsing, and sentence-shuffle augmentation.
//
// Every sentence states exactly one fact about one entity. The grammar is a
// closed set of templates, so parse() is an exact table lookup and
// parse(render(r)) recovers the fact multiset of any generated report.

#include <algorithm>
#include <array>
#include <cctype>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "softneg/rng.hpp"

namespace softneg {

inline constexpr int kEntityCount = 14;
inline constexpr int kFindingCount = 13;  // entities a fact may name
inline constexpr int kNoFindings = 13;

inline constexpr std::array<std::string_view, kEntityCount> kEntityNames = {
    "Cardiomegaly",     "Lung Opacity",  "Atelectasis",   "Lung Lesion",
    "Pleural Effusion", "Fracture",      "Support Devices", "Enlarged Cardiomediastinum",
    "Pleural Other",    "Consolidation", "Edema",         "Pneumothorax",
    "Pneumonia",        "No Findings"};

class EntityId {
 public:
  constexpr EntityId() = default;
  constexpr explicit EntityId(int index) : index_(index) {
    if (index < 0 || index >= kEntityCount) throw std::out_of_range("EntityId out of range");
  }
  constexpr int index() const { return index_; }
  std::string_view name() const { return kEntityNames[static_cast<std::size_t>(index_)]; }
  /// Lower-case surface form used inside sentences.
  std::string surface() const {
    std::string s(name());
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  }
  constexpr auto operator<=>(const EntityId&) const = default;

 private:
  int index_ = 0;
};

namespace entity {
inline constexpr EntityId Cardiomegaly{0};
inline constexpr EntityId LungOpacity{1};
inline constexpr EntityId Atelectasis{2};
inline constexpr EntityId LungLesion{3};
inline constexpr EntityId PleuralEffusion{4};
inline constexpr EntityId Fracture{5};
inline constexpr EntityId SupportDevices{6};
inline constexpr EntityId EnlargedCardiomediastinum{7};
inline constexpr EntityId PleuralOther{8};
inline constexpr EntityId Consolidation{9};
inline constexpr EntityId Edema{10};
inline constexpr EntityId Pneumothorax{11};
inline constexpr EntityId Pneumonia{12};
inline constexpr EntityId NoFindings{13};
}  // namespace entity

inline std::optional<EntityId> entity_from_name(std::string_view name) {
  for (int i = 0; i < kEntityCount; ++i)
    if (kEntityNames[static_cast<std::size_t>(i)] == name) return EntityId(i);
  return std::nullopt;
}

inline bool is_mediastinal(EntityId e) {
  return e == entity::Cardiomegaly || e == entity::EnlargedCardiomediastinum;
}

enum class Polarity { Present, Absent };
enum class Severity { Mild, Moderate, Severe };
enum class Location { Left, Right, Bilateral, Upper, Lower };

inline constexpr std::array<std::string_view, 3> kSeverityWords = {"mild", "moderate", "severe"};
inline constexpr std::array<std::string_view, 5> kLocationWords = {"left", "right", "bilateral", "upper",
                                                                   "lower"};

inline std::string_view to_string(Polarity p) { return p == Polarity::Present ? "present" : "absent"; }
inline std::string_view to_string(Severity s) { return kSeverityWords[static_cast<std::size_t>(s)]; }
inline std::string_view to_string(Location l) { return kLocationWords[static_cast<std::size_t>(l)]; }

/// The fixed negation lexicon. Order is significant: it indexes seeded draws.
inline const std::vector<std::string>& default_negation_lexicon() {
  static const std::vector<std::string> lexicon = {"no",       "not",       "without", "resolved",
                                                   "removed",  "rule out",  "free of", "absence of"};
  return lexicon;
}

/// Returns the first lexicon phrase occurring as a whole-word sequence in `sentence`.
inline std::optional<std::string> find_negation_phrase(std::string_view sentence,
                                                       const std::vector<std::string>& lexicon =
                                                           default_negation_lexicon()) {
  std::string lower;
  lower.reserve(sentence.size() + 2);
  lower.push_back(' ');
  for (char c : sentence)
    lower.push_back(std::isalpha(static_cast<unsigned char>(c))
                        ? static_cast<char>(std::tolower(static_cast<unsigned char>(c)))
                        : ' ');
  lower.push_back(' ');
  for (const auto& phrase : lexicon)
    if (lower.find(" " + phrase + " ") != std::string::npos) return phrase;
  return std::nullopt;
}

struct Fact {
  EntityId entity;
  Polarity polarity = Polarity::Present;
  std::optional<Severity> severity;
  std::optional<Location> location;
  std::optional<std::string> negation_phrase;

  auto operator<=>(const Fact&) const = default;
  bool operator==(const Fact&) const = default;

  static Fact present(EntityId e, std::optional<Severity> s = {}, std::optional<Location> l = {}) {
    return Fact{e, Polarity::Present, s, l, std::nullopt};
  }
  static Fact absent(EntityId e, std::optional<std::string> phrase = std::string("no")) {
    return Fact{e, Polarity::Absent, std::nullopt, std::nullopt, std::move(phrase)};
  }
};

inline void validate(const Fact& f) {
  if (f.entity == entity::NoFindings) throw std::invalid_argument("facts may not name No Findings");
  if (f.polarity == Polarity::Absent && (f.severity || f.location))
    throw std::invalid_argument("absent facts carry no severity or location");
  if (f.polarity == Polarity::Present && f.negation_phrase)
    throw std::invalid_argument("present facts carry no negation phrase");
}

struct Sentence {
  std::string text;
  Fact fact;
  bool operator==(const Sentence&) const = default;
};

struct Report {
  std::vector<Sentence> sentences;
  bool is_templated_normal = false;

  bool operator==(const Report&) const = default;

  std::vector<Fact> facts() const {
    std::vector<Fact> out;
    out.reserve(sentences.size());
    for (const auto& s : sentences) out.push_back(s.fact);
    return out;
  }
  bool has_present(EntityId e) const {
    return std::any_of(sentences.begin(), sentences.end(), [&](const Sentence& s) {
      return s.fact.entity == e && s.fact.polarity == Polarity::Present;
    });
  }
  bool any_present() const {
    return std::any_of(sentences.begin(), sentences.end(),
                       [](const Sentence& s) { return s.fact.polarity == Polarity::Present; });
  }
};

/// Sorted copy of the facts, for multiset comparison.
inline std::vector<Fact> fact_multiset(const Report& r) {
  auto f = r.facts();
  std::sort(f.begin(), f.end());
  return f;
}

class ParseError : public std::runtime_error {
 public:
  explicit ParseError(std::string sentence)
      : std::runtime_error("unrecognized sentence: \"" + sentence + "\""), sentence_(std::move(sentence)) {}
  const std::string& sentence() const { return sentence_; }

 private:
  std::string sentence_;
};

// ---------------------------------------------------------------------------
// Grammar

namespace grammar {

// Placeholders: {E}/{e} entity (capitalised / lower), {S}/{s} severity, {l} location.
struct SentenceTemplate {
  std::string_view pattern;
  Polarity polarity;
  bool severity;
  bool location;
  std::string_view phrase;  // negation phrase for Absent templates
};

inline constexpr std::array<SentenceTemplate, 6> kPresentTemplates = {{
    {"{E} is present.", Polarity::Present, false, false, ""},
    {"There is {e}.", Polarity::Present, false, false, ""},
    {"{S} {e}.", Polarity::Present, true, false, ""},
    {"{E} in the {l}.", Polarity::Present, false, true, ""},
    {"{S} {e} in the {l}.", Polarity::Present, true, true, ""},
    {"{E} is present on the {l}.", Polarity::Present, false, true, ""},
}};

inline constexpr std::array<SentenceTemplate, 12> kAbsentTemplates = {{
    {"No {e}.", Polarity::Absent, false, false, "no"},
    {"There is no {e}.", Polarity::Absent, false, false, "no"},
    {"No {e} is seen.", Polarity::Absent, false, false, "no"},
    {"No {e} is observed.", Polarity::Absent, false, false, "no"},
    {"No evidence of {e}.", Polarity::Absent, false, false, "no"},
    {"{E} is not seen.", Polarity::Absent, false, false, "not"},
    {"The lungs are clear without {e}.", Polarity::Absent, false, false, "without"},
    {"The {e} has resolved.", Polarity::Absent, false, false, "resolved"},
    {"The {e} has been removed.", Polarity::Absent, false, false, "removed"},
    {"Findings rule out {e}.", Polarity::Absent, false, false, "rule out"},
    {"The chest is free of {e}.", Polarity::Absent, false, false, "free of"},
    {"There is absence of {e}.", Polarity::Absent, false, false, "absence of"},
}};

/// The four lung-finding negation templates used by the alignment benchmark, in order.
inline constexpr std::array<std::string_view, 4> kLungNegationTemplates = {
    "No {e} is seen.", "No {e} is observed.", "There is no {e}.", "No evidence of {e}."};

struct FixedSentence {
  std::string_view text;
  EntityId entity;
  std::string_view phrase;  // empty when no lexicon phrase occurs
};

/// The five mediastinal normal statements, in order.
inline constexpr std::array<FixedSentence, 5> kMediastinalSentences = {{
    {"The cardiomediastinal silhouette is normal.", entity::EnlargedCardiomediastinum, ""},
    {"The cardiac silhouette is unremarkable.", entity::Cardiomegaly, ""},
    {"The heart size is normal.", entity::Cardiomegaly, ""},
    {"The cardiomediastinal silhouette is within normal limits.", entity::EnlargedCardiomediastinum, ""},
    {"No cardiomegaly.", entity::Cardiomegaly, "no"},
}};

inline std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

inline std::string fill(std::string_view pattern, EntityId e, std::optional<Severity> sev,
                        std::optional<Location> loc) {
  std::string out;
  out.reserve(pattern.size() + 32);
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] != '{') {
      out.push_back(pattern[i]);
      continue;
    }
    const std::size_t close = pattern.find('}', i);
    const std::string_view key = pattern.substr(i + 1, close - i - 1);
    if (key == "E") out += capitalize(e.surface());
    else if (key == "e") out += e.surface();
    else if (key == "S") out += capitalize(std::string(to_string(*sev)));
    else if (key == "s") out += to_string(*sev);
    else if (key == "l") out += to_string(*loc);
    else throw std::logic_error("bad template key");
    i = close;
  }
  return out;
}

inline Fact fact_for(const SentenceTemplate& t, EntityId e, std::optional<Severity> sev,
                     std::optional<Location> loc) {
  Fact f{e, t.polarity, sev, loc, std::nullopt};
  if (t.polarity == Polarity::Absent) f.negation_phrase = std::string(t.phrase);
  return f;
}

/// Exact sentence -> fact table covering the whole grammar.
inline const std::unordered_map<std::string, Fact>& sentence_table() {
  static const std::unordered_map<std::string, Fact> table = [] {
    std::unordered_map<std::string, Fact> t;
    auto add = [&t](std::string text, Fact f) {
      auto [it, inserted] = t.emplace(text, f);
      if (!inserted && !(it->second == f)) throw std::logic_error("ambiguous grammar sentence: " + text);
    };
    auto enumerate = [&](const SentenceTemplate& tpl) {
      for (int ei = 0; ei < kFindingCount; ++ei) {
        const EntityId e(ei);
        std::vector<std::optional<Severity>> sevs{std::nullopt};
        std::vector<std::optional<Location>> locs{std::nullopt};
        if (tpl.severity) sevs = {Severity::Mild, Severity::Moderate, Severity::Severe};
        if (tpl.location)
          locs = {Location::Left, Location::Right, Location::Bilateral, Location::Upper, Location::Lower};
        for (auto s : sevs)
          for (auto l : locs) add(fill(tpl.pattern, e, s, l), fact_for(tpl, e, s, l));
      }
    };
    for (const auto& tpl : kPresentTemplates) enumerate(tpl);
    for (const auto& tpl : kAbsentTemplates) enumerate(tpl);
    for (const auto& m : kMediastinalSentences) {
      Fact f = Fact::absent(m.entity, std::nullopt);
      if (!m.phrase.empty()) f.negation_phrase = std::string(m.phrase);
      add(std::string(m.text), f);
    }
    return t;
  }();
  return table;
}

/// Templates able to express `f`, in table order.
inline std::vector<const SentenceTemplate*> templates_for(const Fact& f) {
  std::vector<const SentenceTemplate*> out;
  auto consider = [&](const SentenceTemplate& t) {
    if (t.polarity != f.polarity) return;
    if (t.severity != f.severity.has_value() || t.location != f.location.has_value()) return;
    if (f.polarity == Polarity::Absent && (!f.negation_phrase || t.phrase != *f.negation_phrase)) return;
    out.push_back(&t);
  };
  for (const auto& t : kPresentTemplates) consider(t);
  for (const auto& t : kAbsentTemplates) consider(t);
  return out;
}

}  // namespace grammar

/// Number of surface variants available for a fact.
inline std::size_t sentence_variants(const Fact& f) {
  if (f.polarity == Polarity::Absent && !f.negation_phrase) {
    std::size_t n = 0;
    for (const auto& m : grammar::kMediastinalSentences)
      if (m.entity == f.entity && m.phrase.empty()) ++n;
    return n;
  }
  return grammar::templates_for(f).size();
}

/// Render one fact as a sentence. `variant` picks among equivalent templates (mod count).
inline Sentence render_fact(const Fact& f, std::size_t variant = 0) {
  validate(f);
  if (f.polarity == Polarity::Absent && !f.negation_phrase) {
    std::vector<std::string_view> fixed;
    for (const auto& m : grammar::kMediastinalSentences)
      if (m.entity == f.entity && m.phrase.empty()) fixed.push_back(m.text);
    if (fixed.empty()) throw std::invalid_argument("no phrase-free sentence for " + std::string(f.entity.name()));
    return {std::string(fixed[variant % fixed.size()]), f};
  }
  const auto candidates = grammar::templates_for(f);
  if (candidates.empty()) throw std::invalid_argument("no template renders this fact");
  const auto* t = candidates[variant % candidates.size()];
  return {grammar::fill(t->pattern, f.entity, f.severity, f.location), f};
}

inline std::string render(const Report& r) {
  std::string out;
  for (std::size_t i = 0; i < r.sentences.size(); ++i) {
    if (i) out.push_back(' ');
    out += r.sentences[i].text;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

/// Split on sentence-final periods. A trailing fragment without a period is kept.
inline std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '.') continue;
    const auto s = trim(text.substr(start, i + 1 - start));
    if (!s.empty()) out.emplace_back(s);
    start = i + 1;
  }
  const auto rest = trim(text.substr(std::min(start, text.size())));
  if (!rest.empty()) out.emplace_back(rest);
  return out;
}

inline Sentence parse_sentence(std::string_view raw) {
  std::string s(trim(raw));
  if (!s.empty() && s.back() != '.') s.push_back('.');
  const auto& table = grammar::sentence_table();
  auto it = table.find(s);
  if (it == table.end()) throw ParseError(std::string(trim(raw)));
  return {s, it->second};
}

/// The fully-normal boilerplate reports that dominate duplicated corpora,
/// with relative frequencies.
struct NormalTemplate {
  std::string_view text;
  double weight;
};
inline constexpr std::array<NormalTemplate, 3> kNormalTemplates = {{
    {"No pneumothorax. No pleural effusion. The heart size is normal. The lungs are clear without "
     "consolidation.",
     2209.0},
    {"There is no consolidation. There is no pleural effusion. There is no pneumothorax. The "
     "cardiomediastinal silhouette is normal.",
     1763.0},
    {"No pleural effusion is seen. No pneumothorax is seen. The cardiac silhouette is unremarkable.", 1635.0},
}};

inline bool is_normal_template_text(std::string_view text) {
  return std::any_of(kNormalTemplates.begin(), kNormalTemplates.end(),
                     [&](const NormalTemplate& t) { return t.text == text; });
}

inline Report parse_report(std::string_view text) {
  Report r;
  for (const auto& s : split_sentences(text)) r.sentences.push_back(parse_sentence(s));
  r.is_templated_normal = !r.sentences.empty() && is_normal_template_text(render(r));
  return r;
}

/// Sentence-order augmentation. Fixed seed gives a fixed permutation.
inline Report shuffle_sentences(const Report& r, std::uint64_t seed) {
  Report out = r;
  Rng rng = make_rng(seed, "shuffle");
  seeded_shuffle(out.sentences, rng);
  return out;
}

}  // namespace softneg
