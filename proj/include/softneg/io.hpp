#pragma once

// Line-delimited JSON for corpora and alignment triplets. Field order is fixed
// and doubles use shortest round-trip form, so files are byte-reproducible.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "softneg/benchmark.hpp"
#include "softneg/corpus.hpp"

namespace softneg {

using ordered_json = nlohmann::ordered_json;

inline ordered_json to_json(const Fact& f) {
  ordered_json j{{"entity", f.entity.name()}, {"polarity", to_string(f.polarity)}};
  if (f.severity) j["severity"] = to_string(*f.severity);
  if (f.location) j["location"] = to_string(*f.location);
  if (f.negation_phrase) j["negation"] = *f.negation_phrase;
  return j;
}

inline ordered_json facts_json(const Report& r) {
  ordered_json a = ordered_json::array();
  for (const auto& s : r.sentences) a.push_back(to_json(s.fact));
  return a;
}

inline ordered_json to_json(const Pair& p) {
  return ordered_json{{"report_text", render(p.report)},
                      {"facts", facts_json(p.report)},
                      {"image_feature", p.image.values},
                      {"id", p.id}};
}

/// Facts are re-derived from the text; a stored fact list that disagrees is an error.
inline Report report_from_json(const nlohmann::json& j, const char* text_key, const char* facts_key) {
  Report r = parse_report(j.at(text_key).get<std::string>());
  if (j.contains(facts_key) && j.at(facts_key) != nlohmann::json::parse(facts_json(r).dump()))
    throw std::runtime_error(std::string("stored facts disagree with ") + text_key);
  return r;
}

inline Pair pair_from_json(const nlohmann::json& j) {
  Pair p;
  p.report = report_from_json(j, "report_text", "facts");
  p.image.values = j.at("image_feature").get<Vec>();
  p.id = j.at("id").get<std::uint64_t>();
  return p;
}

inline ordered_json to_json(const AlignTriplet& t) {
  return ordered_json{{"source_id", t.source_id},
                      {"entity", t.entity.name()},
                      {"insert_pos", to_string(t.insert_pos)},
                      {"template_id", t.template_id},
                      {"insert_index", t.insert_index},
                      {"original", render(t.original)},
                      {"original_facts", facts_json(t.original)},
                      {"perturbed", render(t.perturbed)},
                      {"perturbed_facts", facts_json(t.perturbed)},
                      {"image_feature", t.image.values}};
}

inline AlignTriplet triplet_from_json(const nlohmann::json& j) {
  AlignTriplet t;
  t.source_id = j.at("source_id").get<std::uint64_t>();
  const auto e = entity_from_name(j.at("entity").get<std::string>());
  if (!e) throw ParseError(j.at("entity").get<std::string>());
  t.entity = *e;
  const auto pos = position_from_string(j.at("insert_pos").get<std::string>());
  if (!pos) throw std::runtime_error("unknown insert position");
  t.insert_pos = *pos;
  t.template_id = j.at("template_id").get<int>();
  t.insert_index = j.at("insert_index").get<std::size_t>();
  t.original = report_from_json(j, "original", "original_facts");
  t.perturbed = report_from_json(j, "perturbed", "perturbed_facts");
  t.image.values = j.at("image_feature").get<Vec>();
  return t;
}

template <class T>
std::string to_jsonl(const std::vector<T>& items) {
  std::string out;
  for (const auto& x : items) {
    out += to_json(x).dump();
    out += '\n';
  }
  return out;
}

template <class F>
auto from_jsonl(std::istream& in, F&& parse) {
  std::vector<decltype(parse(nlohmann::json{}))> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(parse(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

/// Outputs are write-once: an existing file is left alone when it already holds
/// exactly `content`, and is an error otherwise.
inline void write_new_file(const std::filesystem::path& path, const std::string& content) {
  if (std::filesystem::exists(path)) {
    if (read_file(path) == content) return;
    throw std::runtime_error("refusing to overwrite " + path.string());
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline ordered_json to_json(const FeatureConfig& f) {
  return ordered_json{{"dim", f.dim},
                      {"noise_sigma", f.noise_sigma},
                      {"basis_seed", f.basis_seed},
                      {"severity_step", f.severity_step},
                      {"location_gain", f.location_gain}};
}

inline FeatureConfig feature_config_from_json(const nlohmann::json& j, FeatureConfig f = {}) {
  f.dim = j.value("dim", f.dim);
  f.noise_sigma = j.value("noise_sigma", f.noise_sigma);
  f.basis_seed = j.value("basis_seed", f.basis_seed);
  f.severity_step = j.value("severity_step", f.severity_step);
  f.location_gain = j.value("location_gain", f.location_gain);
  return f;
}

inline ordered_json to_json(const CorpusSpec& c) {
  return ordered_json{{"n_reports", c.n_reports},
                      {"normal_fraction", c.normal_fraction},
                      {"duplicate_mass", c.duplicate_mass},
                      {"entity_frequency", c.entity_frequency},
                      {"positives_per_report", c.positives_per_report},
                      {"seed", c.seed},
                      {"features", to_json(c.features)}};
}

/// Overlays the keys present in `j` onto `c`.
inline CorpusSpec corpus_spec_from_json(const nlohmann::json& j, CorpusSpec c = {}) {
  c.n_reports = j.value("n_reports", c.n_reports);
  c.normal_fraction = j.value("normal_fraction", c.normal_fraction);
  c.duplicate_mass = j.value("duplicate_mass", c.duplicate_mass);
  if (j.contains("entity_frequency")) c.entity_frequency = j.at("entity_frequency").get<std::array<double, kFindingCount>>();
  if (j.contains("positives_per_report"))
    c.positives_per_report = j.at("positives_per_report").get<std::array<double, 3>>();
  c.seed = j.value("seed", c.seed);
  if (j.contains("features")) c.features = feature_config_from_json(j.at("features"), c.features);
  validate(c);
  return c;
}

inline Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return from_jsonl(in, pair_from_json);
}

inline std::vector<AlignTriplet> load_triplets(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return from_jsonl(in, triplet_from_json);
}

}  // namespace softneg
