#pragma once

// Clinical label vectors: exact finding labels read off report facts, plus the
// derived "No Findings" slot, and the similarity kernel between them.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "softneg/reports.hpp"

namespace softneg {

class ClinicalLabelVector {
 public:
  /// All findings absent: the No Findings slot is set.
  ClinicalLabelVector() { bits_[kNoFindings] = 1; }

  static ClinicalLabelVector from_findings(const std::array<bool, kFindingCount>& present) {
    ClinicalLabelVector v;
    bool any = false;
    for (int e = 0; e < kFindingCount; ++e) {
      v.bits_[static_cast<std::size_t>(e)] = present[static_cast<std::size_t>(e)] ? 1 : 0;
      any = any || present[static_cast<std::size_t>(e)];
    }
    v.bits_[kNoFindings] = any ? 0 : 1;
    return v;
  }

  /// Accepts a full 14-slot vector; rejects one that breaks the No Findings rule.
  static ClinicalLabelVector from_bits(const std::array<std::uint8_t, kEntityCount>& bits) {
    std::array<bool, kFindingCount> present{};
    for (int e = 0; e < kFindingCount; ++e) {
      if (bits[static_cast<std::size_t>(e)] > 1) throw std::invalid_argument("label bits must be 0/1");
      present[static_cast<std::size_t>(e)] = bits[static_cast<std::size_t>(e)] == 1;
    }
    auto v = from_findings(present);
    if (v.bits_[kNoFindings] != bits[kNoFindings])
      throw std::invalid_argument("No Findings bit must be set iff no finding is present");
    return v;
  }

  int operator[](int e) const { return bits_.at(static_cast<std::size_t>(e)); }
  int operator[](EntityId e) const { return (*this)[e.index()]; }
  const std::array<std::uint8_t, kEntityCount>& bits() const { return bits_; }

  int count() const {
    int n = 0;
    for (auto b : bits_) n += b;
    return n;
  }
  bool is_normal() const { return bits_[kNoFindings] == 1; }

  bool operator==(const ClinicalLabelVector&) const = default;

 private:
  std::array<std::uint8_t, kEntityCount> bits_{};
};

inline ClinicalLabelVector label_vector(const Report& r) {
  std::array<bool, kFindingCount> present{};
  for (const auto& s : r.sentences)
    if (s.fact.polarity == Polarity::Present && s.fact.entity.index() < kFindingCount)
      present[static_cast<std::size_t>(s.fact.entity.index())] = true;
  return ClinicalLabelVector::from_findings(present);
}

enum class SimilarityKernel { Cosine, Jaccard };

/// Similarity of two label vectors in [0,1]; cosine unless configured otherwise.
inline double clinical_similarity(const ClinicalLabelVector& a, const ClinicalLabelVector& b,
                                  SimilarityKernel kernel = SimilarityKernel::Cosine) {
  int both = 0;
  int either = 0;
  for (int e = 0; e < kEntityCount; ++e) {
    both += a[e] & b[e];
    either += a[e] | b[e];
  }
  if (kernel == SimilarityKernel::Jaccard) return static_cast<double>(both) / either;
  return both / std::sqrt(static_cast<double>(a.count()) * b.count());
}

}  // namespace softneg
