#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "softneg/softneg.hpp"

namespace testing_util {

inline softneg::Corpus small_corpus(std::size_t n, std::uint64_t seed = 1) {
  softneg::CorpusSpec spec;
  spec.n_reports = n;
  spec.seed = seed;
  return softneg::generate_corpus(spec);
}

inline softneg::Report report(std::string_view text) { return softneg::parse_report(text); }

inline softneg::ClinicalLabelVector labels_with(std::initializer_list<int> present) {
  std::array<bool, softneg::kFindingCount> p{};
  for (int e : present) p[static_cast<std::size_t>(e)] = true;
  return softneg::ClinicalLabelVector::from_findings(p);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("softneg-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline softneg::Batch batch_from(const softneg::ModelParams& p, const softneg::Corpus& corpus, double hardneg_rate,
                                 std::uint64_t seed) {
  std::vector<softneg::Report> reports;
  std::vector<softneg::ImageFeature> images;
  for (const auto& x : corpus) {
    reports.push_back(x.report);
    images.push_back(x.image);
  }
  return softneg::make_batch(p, reports, images, softneg::attach_hard_negatives(reports, hardneg_rate, seed));
}

}  // namespace testing_util
