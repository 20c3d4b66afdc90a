#pragma once

// Negation-alignment benchmark generation and the evaluation protocols:
// alignment accuracy, zero-shot classification, report retrieval (clinical
// macro-F1), normal-case detection and the two-entity adversarial table.
//
// Protocols are templated on an Embedder: anything exposing
// embed_image(ImageFeature) and embed_text(Report) returning unit vectors.

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "softneg/clinical.hpp"
#include "softneg/corpus.hpp"
#include "softneg/encoders.hpp"
#include "softneg/log.hpp"
#include "softneg/parallel.hpp"
#include "softneg/reports.hpp"
#include "softneg/rng.hpp"

namespace softneg {

template <class M>
concept Embedder = requires(const M& m, const ImageFeature& x, const Report& r) {
  { m.embed_image(x) } -> std::convertible_to<Vec>;
  { m.embed_text(r) } -> std::convertible_to<Vec>;
};

/// Trained (or freshly initialised) towers.
class ParamsModel {
 public:
  explicit ParamsModel(ModelParams p) : p_(std::move(p)) {}
  Vec embed_image(const ImageFeature& x) const { return encode_image(x, p_); }
  Vec embed_text(const Report& r) const { return encode_text(r, p_); }
  const ModelParams& params() const { return p_; }

 private:
  ModelParams p_;
};

inline Vec label_embedding(const ClinicalLabelVector& v) {
  Vec out(kEntityCount);
  for (int e = 0; e < kEntityCount; ++e) out[static_cast<std::size_t>(e)] = v[e];
  const double n = norm2(out);
  for (auto& x : out) x /= n;
  return out;
}

/// Upper-bound model: both towers return the normalised clinical label vector,
/// the image side decoding it from the known feature map.
class OracleModel {
 public:
  explicit OracleModel(FeatureConfig cfg = {}) : map_(cfg) {}
  Vec embed_image(const ImageFeature& x) const { return label_embedding(map_.decode_labels(x)); }
  Vec embed_text(const Report& r) const { return label_embedding(label_vector(r)); }

 private:
  FeatureMap map_;
};

struct LabeledImage {
  ImageFeature image;
  ClinicalLabelVector labels;
};

inline std::vector<LabeledImage> labeled_images(const Corpus& corpus) {
  std::vector<LabeledImage> out;
  out.reserve(corpus.size());
  for (const auto& p : corpus) out.push_back({p.image, label_vector(p.report)});
  return out;
}

template <Embedder M>
std::vector<Vec> embed_images(const M& model, const std::vector<LabeledImage>& images, std::size_t threads = 1) {
  std::vector<Vec> out(images.size());
  parallel_for(images.size(), threads, [&](std::size_t i) { out[i] = model.embed_image(images[i].image); });
  return out;
}

template <Embedder M>
std::vector<Vec> embed_reports(const M& model, const std::vector<Report>& reports, std::size_t threads = 1) {
  std::vector<Vec> out(reports.size());
  parallel_for(reports.size(), threads, [&](std::size_t i) { out[i] = model.embed_text(reports[i]); });
  return out;
}

// ---------------------------------------------------------------------------
// Alignment triplets

enum class InsertPosition { Begin, Middle, End };

inline std::string_view to_string(InsertPosition p) {
  constexpr std::array<std::string_view, 3> names = {"begin", "middle", "end"};
  return names[static_cast<std::size_t>(p)];
}

inline std::optional<InsertPosition> position_from_string(std::string_view s) {
  if (s == "begin") return InsertPosition::Begin;
  if (s == "middle") return InsertPosition::Middle;
  if (s == "end") return InsertPosition::End;
  return std::nullopt;
}

struct AlignTriplet {
  std::uint64_t source_id = 0;
  ImageFeature image;
  Report original;
  Report perturbed;
  EntityId entity;
  InsertPosition insert_pos = InsertPosition::Begin;
  int template_id = 0;            // into the mediastinal or lung template list, per entity group
  std::size_t insert_index = 0;   // sentence index of the inserted statement in `perturbed`

  bool mediastinal() const { return is_mediastinal(entity); }
};

struct AlignConfig {
  std::array<double, kFindingCount> entity_weights = default_entity_frequency();
  double priority_multiplier = 2.0;
  std::vector<EntityId> priority = {entity::Cardiomegaly, entity::Atelectasis,  entity::Edema,
                                    entity::PleuralEffusion, entity::Pneumothorax, entity::Consolidation};
};

/// The sentence inserted for a given entity group and template id.
inline Sentence negation_template_sentence(EntityId e, int template_id) {
  if (is_mediastinal(e)) {
    const auto& m = grammar::kMediastinalSentences.at(static_cast<std::size_t>(template_id));
    return parse_sentence(m.text);
  }
  const auto pattern = grammar::kLungNegationTemplates.at(static_cast<std::size_t>(template_id));
  return parse_sentence(grammar::fill(pattern, e, std::nullopt, std::nullopt));
}

inline std::optional<AlignTriplet> make_align_triplet(const Pair& pair, std::uint64_t seed, const AlignConfig& cfg = {}) {
  const Report& r = pair.report;
  std::array<double, kFindingCount> weights{};
  for (int e = 0; e < kFindingCount; ++e) {
    const EntityId id(e);
    if (!r.has_present(id)) continue;
    double w = cfg.entity_weights[static_cast<std::size_t>(e)];
    if (std::find(cfg.priority.begin(), cfg.priority.end(), id) != cfg.priority.end()) w *= cfg.priority_multiplier;
    weights[static_cast<std::size_t>(e)] = w;
  }
  if (std::all_of(weights.begin(), weights.end(), [](double w) { return w <= 0.0; })) return std::nullopt;

  Rng rng = make_rng(seed, "align", {pair.id});
  AlignTriplet t;
  t.source_id = pair.id;
  t.image = pair.image;
  t.original = r;
  t.entity = EntityId(static_cast<int>(weighted_index(rng, weights)));

  Report perturbed;
  for (const auto& s : r.sentences)
    if (s.fact.entity != t.entity) perturbed.sentences.push_back(s);

  // Statement choice; mediastinal statements that would contradict a remaining
  // Present fact about the other mediastinal entity are skipped.
  std::vector<int> allowed;
  if (t.mediastinal()) {
    for (int k = 0; k < static_cast<int>(grammar::kMediastinalSentences.size()); ++k)
      if (!perturbed.has_present(grammar::kMediastinalSentences[static_cast<std::size_t>(k)].entity)) allowed.push_back(k);
  } else {
    for (int k = 0; k < static_cast<int>(grammar::kLungNegationTemplates.size()); ++k) allowed.push_back(k);
  }
  t.template_id = allowed[uniform_index(rng, allowed.size())];
  const Sentence inserted = negation_template_sentence(t.entity, t.template_id);

  const std::size_t n = perturbed.sentences.size();
  std::vector<InsertPosition> positions{InsertPosition::Begin};
  if (n >= 2) positions.push_back(InsertPosition::Middle);
  if (n >= 1) positions.push_back(InsertPosition::End);
  t.insert_pos = positions[uniform_index(rng, positions.size())];
  switch (t.insert_pos) {
    case InsertPosition::Begin: t.insert_index = 0; break;
    case InsertPosition::Middle: t.insert_index = 1 + uniform_index(rng, n - 1); break;
    case InsertPosition::End: t.insert_index = n; break;
  }
  perturbed.sentences.insert(perturbed.sentences.begin() + static_cast<std::ptrdiff_t>(t.insert_index), inserted);
  t.perturbed = std::move(perturbed);
  return t;
}

inline std::vector<AlignTriplet> generate_align_set(const Corpus& corpus, std::uint64_t seed, const AlignConfig& cfg = {}) {
  std::vector<AlignTriplet> out;
  for (const auto& p : corpus)
    if (auto t = make_align_triplet(p, seed, cfg)) out.push_back(std::move(*t));
  return out;
}

/// Structural checks: original has the entity Present; perturbed has none, parses
/// cleanly, carries exactly the inserted statement for the entity group, and its
/// labels equal the original's with the entity bit cleared.
inline std::optional<std::string> check_triplet(const AlignTriplet& t) {
  if (!t.original.has_present(t.entity)) return "original lacks the entity";
  if (t.perturbed.has_present(t.entity)) return "perturbed still asserts the entity";
  Report reparsed;
  try {
    reparsed = parse_report(render(t.perturbed));
  } catch (const ParseError& e) {
    return std::string("perturbed does not parse: ") + e.what();
  }
  if (fact_multiset(reparsed) != fact_multiset(t.perturbed)) return "perturbed facts do not survive a parse";
  if (t.insert_index >= t.perturbed.sentences.size()) return "insert index out of range";
  const Fact& ins = t.perturbed.sentences[t.insert_index].fact;
  const bool group_ok = t.mediastinal() ? is_mediastinal(ins.entity) : ins.entity == t.entity;
  if (ins.polarity != Polarity::Absent || !group_ok) return "inserted sentence is not a negation for the entity";
  std::size_t mentions = 0;
  for (const auto& s : t.perturbed.sentences)
    if (s.fact.entity == t.entity) ++mentions;
  if (!t.mediastinal() && mentions != 1) return "entity must be mentioned exactly once after perturbation";
  auto expected = label_vector(t.original).bits();
  expected[static_cast<std::size_t>(t.entity.index())] = 0;
  bool any = false;
  for (int e = 0; e < kFindingCount; ++e) any = any || expected[static_cast<std::size_t>(e)];
  expected[kNoFindings] = any ? 0 : 1;
  if (label_vector(t.perturbed).bits() != expected) return "perturbed labels differ from cleared-bit oracle";
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Alignment accuracy

struct AccuracyCell {
  std::size_t n = 0;
  std::size_t correct = 0;
  double accuracy() const { return n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0; }
  void add(bool ok) {
    ++n;
    correct += ok ? 1 : 0;
  }
};

struct AlignReport {
  AccuracyCell overall;
  std::map<std::string, AccuracyCell> by_entity;
  std::map<std::string, AccuracyCell> by_position;
  std::map<int, AccuracyCell> by_mediastinal_template;
  std::map<int, AccuracyCell> by_lung_template;
};

/// Correct iff cos(image, original) > cos(image, perturbed); ties fail.
template <Embedder M>
AlignReport eval_align(const M& model, const std::vector<AlignTriplet>& triplets, std::size_t threads = 1) {
  if (triplets.empty()) throw std::invalid_argument("eval_align: no triplets");
  std::vector<char> ok(triplets.size());
  parallel_for(triplets.size(), threads, [&](std::size_t i) {
    const auto& t = triplets[i];
    const Vec img = model.embed_image(t.image);
    ok[i] = dot(img, model.embed_text(t.original)) > dot(img, model.embed_text(t.perturbed));
  });
  AlignReport rep;
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const auto& t = triplets[i];
    rep.overall.add(ok[i]);
    rep.by_entity[std::string(t.entity.name())].add(ok[i]);
    rep.by_position[std::string(to_string(t.insert_pos))].add(ok[i]);
    (t.mediastinal() ? rep.by_mediastinal_template : rep.by_lung_template)[t.template_id].add(ok[i]);
  }
  return rep;
}

inline std::string align_csv(const AlignReport& r) {
  std::ostringstream os;
  os << "panel,key,n,correct,accuracy\n" << std::setprecision(6);
  os << "overall,all," << r.overall.n << ',' << r.overall.correct << ',' << r.overall.accuracy() << '\n';
  for (const auto& [k, c] : r.by_entity) os << "entity," << k << ',' << c.n << ',' << c.correct << ',' << c.accuracy() << '\n';
  for (const auto& [k, c] : r.by_position) os << "position," << k << ',' << c.n << ',' << c.correct << ',' << c.accuracy() << '\n';
  for (const auto& [k, c] : r.by_mediastinal_template)
    os << "mediastinal_template," << k << ',' << c.n << ',' << c.correct << ',' << c.accuracy() << '\n';
  for (const auto& [k, c] : r.by_lung_template)
    os << "lung_template," << k << ',' << c.n << ',' << c.correct << ',' << c.accuracy() << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Zero-shot classification

inline std::pair<std::string, std::string> zeroshot_prompts(EntityId e) {
  return {"There is " + e.surface(), "There is no " + e.surface()};
}

/// Area under the ROC curve of `scores` (positives vs negatives), ties counted half.
inline double roc_auc(const std::vector<double>& scores, const std::vector<char>& positive) {
  std::vector<std::size_t> idx(scores.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  double n_pos = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (positive[idx[k]]) rank_sum += avg_rank;
    i = j;
  }
  for (char p : positive) n_pos += p ? 1.0 : 0.0;
  const double n_neg = static_cast<double>(scores.size()) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) return 0.5;
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

struct ZeroShotEntry {
  EntityId entity;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  double accuracy = 0.0;
  double auc = 0.5;
};

struct ZeroShotReport {
  std::vector<ZeroShotEntry> entries;
  std::vector<EntityId> skipped;  // no positive image in the test set

  double mean_accuracy() const {
    double s = 0.0;
    for (const auto& e : entries) s += e.accuracy;
    return entries.empty() ? 0.0 : s / static_cast<double>(entries.size());
  }
  double mean_auc() const {
    double s = 0.0;
    for (const auto& e : entries) s += e.auc;
    return entries.empty() ? 0.5 : s / static_cast<double>(entries.size());
  }
};

template <Embedder M>
std::pair<Vec, Vec> prompt_embeddings(const M& model, EntityId e) {
  const auto [pos, neg] = zeroshot_prompts(e);
  return {model.embed_text(parse_report(pos)), model.embed_text(parse_report(neg))};
}

/// Predict positive iff the positive prompt is strictly closer; AUC of the cosine margin.
template <Embedder M>
ZeroShotReport eval_zeroshot(const M& model, const std::vector<LabeledImage>& testset, std::size_t threads = 1) {
  const auto img = embed_images(model, testset, threads);
  ZeroShotReport rep;
  for (int ei = 0; ei < kFindingCount; ++ei) {
    const EntityId e(ei);
    const auto [pos, neg] = prompt_embeddings(model, e);
    std::vector<double> margin(testset.size());
    std::vector<char> truth(testset.size());
    ZeroShotEntry entry{e};
    std::size_t correct = 0;
    for (std::size_t i = 0; i < testset.size(); ++i) {
      margin[i] = dot(img[i], pos) - dot(img[i], neg);
      truth[i] = testset[i].labels[e] == 1;
      (truth[i] ? entry.positives : entry.negatives)++;
      if ((margin[i] > 0.0) == static_cast<bool>(truth[i])) ++correct;
    }
    if (entry.positives == 0) {
      log::info("zero-shot: no positive image for ", e.name(), ", skipped");
      rep.skipped.push_back(e);
      continue;
    }
    entry.accuracy = static_cast<double>(correct) / static_cast<double>(testset.size());
    entry.auc = roc_auc(margin, truth);
    rep.entries.push_back(entry);
  }
  return rep;
}

inline std::string zeroshot_csv(const ZeroShotReport& r) {
  std::ostringstream os;
  os << "entity,positives,negatives,accuracy,auc\n" << std::setprecision(6);
  for (const auto& e : r.entries)
    os << e.entity.name() << ',' << e.positives << ',' << e.negatives << ',' << e.accuracy << ',' << e.auc << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Report retrieval

struct RetrievalReport {
  double macro_f1 = 0.0;
  std::array<double, kEntityCount> f1{};
  std::array<bool, kEntityCount> counted{};  // labels with any positive or predicted positive
};

/// Top-1 report by cosine per query image; its label vector is the prediction.
/// Macro-F1 averages labels that occur in the truth or the predictions.
template <Embedder M>
RetrievalReport eval_retrieval(const M& model, const std::vector<LabeledImage>& queries,
                               const std::vector<Report>& gallery, std::size_t threads = 1) {
  if (gallery.empty()) throw std::invalid_argument("eval_retrieval: empty gallery");
  const auto q = embed_images(model, queries, threads);
  const auto g = embed_reports(model, gallery, threads);
  std::vector<ClinicalLabelVector> gallery_labels;
  for (const auto& r : gallery) gallery_labels.push_back(label_vector(r));

  std::array<std::size_t, kEntityCount> tp{}, fp{}, fn{};
  for (std::size_t i = 0; i < queries.size(); ++i) {
    std::size_t best = 0;
    double best_score = -2.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double s = dot(q[i], g[j]);
      if (s > best_score) {
        best_score = s;
        best = j;
      }
    }
    const auto& pred = gallery_labels[best];
    const auto& truth = queries[i].labels;
    for (int e = 0; e < kEntityCount; ++e) {
      const auto k = static_cast<std::size_t>(e);
      if (pred[e] && truth[e]) ++tp[k];
      else if (pred[e]) ++fp[k];
      else if (truth[e]) ++fn[k];
    }
  }
  RetrievalReport rep;
  double sum = 0.0;
  int n = 0;
  for (std::size_t k = 0; k < kEntityCount; ++k) {
    const std::size_t denom = 2 * tp[k] + fp[k] + fn[k];
    rep.counted[k] = denom > 0;
    if (!rep.counted[k]) continue;
    rep.f1[k] = 2.0 * static_cast<double>(tp[k]) / static_cast<double>(denom);
    sum += rep.f1[k];
    ++n;
  }
  rep.macro_f1 = n ? sum / n : 0.0;
  return rep;
}

// ---------------------------------------------------------------------------
// Normal-case detection

struct NormalDetectionReport {
  std::vector<std::size_t> ranks;  // 1 = normal report ranked first
  double top1 = 0.0;
  double median_rank = 0.0;
};

inline double median(std::vector<std::size_t> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? static_cast<double>(v[m]) : 0.5 * static_cast<double>(v[m - 1] + v[m]);
}

/// Rank of the single normal report among all candidates for each normal image.
/// Ties are ranked against the normal report.
template <Embedder M>
NormalDetectionReport eval_normal_detection(const M& model, const Report& normal_report,
                                            const std::vector<Report>& abnormal_reports,
                                            const std::vector<LabeledImage>& normal_images, std::size_t threads = 1) {
  if (!label_vector(normal_report).is_normal()) throw std::invalid_argument("normal_report has findings");
  for (const auto& r : abnormal_reports)
    if (label_vector(r).is_normal()) throw std::invalid_argument("candidate set must contain exactly one normal report");
  const Vec normal = model.embed_text(normal_report);
  const auto abnormal = embed_reports(model, abnormal_reports, threads);
  const auto img = embed_images(model, normal_images, threads);
  NormalDetectionReport rep;
  for (const auto& x : img) {
    const double s = dot(x, normal);
    std::size_t rank = 1;
    for (const auto& a : abnormal)
      if (dot(x, a) >= s) ++rank;
    rep.ranks.push_back(rank);
  }
  const auto hits = std::count(rep.ranks.begin(), rep.ranks.end(), std::size_t{1});
  rep.top1 = rep.ranks.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(rep.ranks.size());
  rep.median_rank = median(rep.ranks);
  return rep;
}

/// One normal query report plus distinct abnormal candidates and normal images
/// drawn from a held-out corpus.
struct NormalDetectionSet {
  Report normal_report;
  std::vector<Report> abnormal_reports;
  std::vector<LabeledImage> normal_images;
};

inline NormalDetectionSet make_normal_detection_set(const Corpus& corpus, std::size_t max_abnormal,
                                                    std::size_t max_images) {
  NormalDetectionSet s{parse_report(kNormalTemplates[0].text), {}, {}};
  std::unordered_set<std::string> seen;
  for (const auto& p : corpus) {
    const auto l = label_vector(p.report);
    if (l.is_normal()) {
      if (s.normal_images.size() < max_images) s.normal_images.push_back({p.image, l});
    } else if (s.abnormal_reports.size() < max_abnormal && seen.insert(render(p.report)).second) {
      s.abnormal_reports.push_back(p.report);
    }
  }
  return s;
}

template <Embedder M>
NormalDetectionReport eval_normal_detection(const M& model, const NormalDetectionSet& s, std::size_t threads = 1) {
  return eval_normal_detection(model, s.normal_report, s.abnormal_reports, s.normal_images, threads);
}

inline std::string normal_detection_csv(const NormalDetectionReport& r) {
  std::ostringstream os;
  os << "images,top1,median_rank\n" << std::setprecision(6) << r.ranks.size() << ',' << r.top1 << ',' << r.median_rank << '\n';
  return os.str();
}

inline std::string retrieval_csv(const RetrievalReport& r) {
  std::ostringstream os;
  os << "label,counted,f1\n" << std::setprecision(6);
  for (int e = 0; e < kEntityCount; ++e) {
    const auto k = static_cast<std::size_t>(e);
    os << EntityId(e).name() << ',' << (r.counted[k] ? 1 : 0) << ',' << r.f1[k] << '\n';
  }
  os << "macro,1," << r.macro_f1 << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Adversarial two-entity prediction

struct AdversarialTable {
  EntityId first;
  EntityId second;
  std::size_t present_positive = 0;
  std::size_t present_negative = 0;
  std::size_t absent_positive = 0;
  std::size_t absent_negative = 0;
};

/// Images where exactly one of `a`, `b` is present.
inline std::vector<LabeledImage> adversarial_testset(const Corpus& corpus, EntityId a, EntityId b) {
  std::vector<LabeledImage> out;
  for (const auto& p : corpus) {
    const auto l = label_vector(p.report);
    if (l[a] + l[b] == 1) out.push_back({p.image, l});
  }
  return out;
}

template <Embedder M>
AdversarialTable eval_adversarial(const M& model, const std::vector<LabeledImage>& testset, EntityId a, EntityId b,
                                  std::size_t threads = 1) {
  if (a == b) throw std::invalid_argument("adversarial entities must differ");
  for (const auto& x : testset)
    if (x.labels[a] + x.labels[b] != 1) throw std::invalid_argument("adversarial images need exactly one of the two entities");
  const auto img = embed_images(model, testset, threads);
  const auto pa = prompt_embeddings(model, a);
  const auto pb = prompt_embeddings(model, b);
  AdversarialTable t{a, b};
  for (std::size_t i = 0; i < testset.size(); ++i) {
    const bool call_a = dot(img[i], pa.first) > dot(img[i], pa.second);
    const bool call_b = dot(img[i], pb.first) > dot(img[i], pb.second);
    const bool a_present = testset[i].labels[a] == 1;
    const bool present_call = a_present ? call_a : call_b;
    const bool absent_call = a_present ? call_b : call_a;
    (present_call ? t.present_positive : t.present_negative)++;
    (absent_call ? t.absent_positive : t.absent_negative)++;
  }
  return t;
}

inline std::string adversarial_csv(const AdversarialTable& t) {
  std::ostringstream os;
  os << "entities,present_positive,present_negative,absent_positive,absent_negative\n";
  os << t.first.name() << '|' << t.second.name() << ',' << t.present_positive << ',' << t.present_negative << ','
     << t.absent_positive << ',' << t.absent_negative << '\n';
  return os.str();
}

}  // namespace softneg
