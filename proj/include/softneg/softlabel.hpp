#pragma once

// Dynamic soft targets.
//
// For a batch of B pairs and H appended negation candidates:
//   R[i][i] = 1
//   R[i][j] = max(0, sum_m w_m * S_m[i][j] * [S_m[i][j] >= tau_m])   j < B, j != i
//   R[i][j] = 0                                                      j >= B
//   T = row-normalise(R)
// with m over textual, clinical and graph similarity. The similarities are
// recomputed from the current encoders each step and treated as constants.

#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>
#include <string>
#include <vector>

#include "softneg/clinical.hpp"
#include "softneg/encoders.hpp"
#include "softneg/linalg.hpp"

namespace softneg {

struct SimilarityBundle {
  Matrix text;
  Matrix clin;
  Matrix graph;

  std::size_t size() const { return text.rows(); }
};

struct SoftTargetMatrix {
  Matrix t;                  // B × (B + H)
  std::size_t hard_negatives = 0;

  std::size_t batch() const { return t.rows(); }
};

inline void check_bundle(const SimilarityBundle& s) {
  const std::size_t b = s.text.rows();
  for (const Matrix* m : {&s.text, &s.clin, &s.graph})
    if (m->rows() != b || m->cols() != b) throw ShapeError("similarity matrices must all be B×B");
}

inline SoftTargetMatrix fuse_targets(const SimilarityBundle& s, const HyperBlock& hyper, std::size_t hard_negatives) {
  check_bundle(s);
  hyper.validate();
  const std::size_t b = s.size();
  SoftTargetMatrix out{Matrix(b, b + hard_negatives), hard_negatives};
  auto gated = [](double sim, double threshold, double weight) { return sim >= threshold ? weight * sim : 0.0; };
  for (std::size_t i = 0; i < b; ++i) {
    double row_sum = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      double r = 1.0;
      if (i != j) {
        r = gated(s.text(i, j), hyper.tau_t, hyper.w_t) + gated(s.clin(i, j), hyper.tau_c, hyper.w_c) +
            gated(s.graph(i, j), hyper.tau_g, hyper.w_g);
        r = std::max(0.0, r);
      }
      out.t(i, j) = r;
      row_sum += r;
    }
    for (std::size_t j = 0; j < b; ++j) out.t(i, j) /= row_sum;
  }
  return out;
}

/// Similarities from current text/graph embeddings (rows) and fixed label vectors.
inline SimilarityBundle batch_similarities(const Matrix& text_embeddings, const Matrix& graph_embeddings,
                                           const std::vector<ClinicalLabelVector>& labels,
                                           SimilarityKernel kernel = SimilarityKernel::Cosine) {
  const std::size_t b = labels.size();
  if (text_embeddings.rows() != b || graph_embeddings.rows() != b)
    throw ShapeError("batch_similarities: embedding rows must match label count");
  SimilarityBundle s{cosine_matrix(text_embeddings), Matrix(b, b), cosine_matrix(graph_embeddings)};
  for (std::size_t i = 0; i < b; ++i) {
    s.clin(i, i) = 1.0;
    for (std::size_t j = i + 1; j < b; ++j) s.clin(i, j) = s.clin(j, i) = clinical_similarity(labels[i], labels[j], kernel);
  }
  return s;
}

/// Convenience overload: encodes the batch reports with the current parameters.
inline SimilarityBundle batch_similarities(const std::vector<Report>& batch, const ModelParams& params,
                                           SimilarityKernel kernel = SimilarityKernel::Cosine) {
  if (batch.empty()) throw std::invalid_argument("batch_similarities: empty batch");
  const std::size_t d = params.shape.embed_dim;
  Matrix text(batch.size(), d);
  Matrix graph(batch.size(), d);
  std::vector<ClinicalLabelVector> labels;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    text.set_row(i, encode_text(batch[i], params));
    graph.set_row(i, encode_graph(batch[i], params));
    labels.push_back(label_vector(batch[i]));
  }
  return batch_similarities(text, graph, labels, kernel);
}

/// Targets for the text->image direction: the B×B block transposed, rows renormalised.
inline Matrix transpose_targets(const SoftTargetMatrix& s) {
  const std::size_t b = s.batch();
  Matrix out(b, b);
  for (std::size_t i = 0; i < b; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < b; ++j) sum += out(i, j) = s.t(j, i);
    for (std::size_t j = 0; j < b; ++j) out(i, j) /= sum;
  }
  return out;
}

inline bool is_row_stochastic(const Matrix& t, double tol = 1e-9) {
  for (std::size_t i = 0; i < t.rows(); ++i) {
    double sum = 0.0;
    for (double v : t.row(i)) {
      if (!(v >= 0.0)) return false;
      sum += v;
    }
    if (std::abs(sum - 1.0) > tol) return false;
  }
  return true;
}

/// Appends one step's target matrix to a CSV debug dump (step,row,col,value).
inline void dump_targets_csv(const std::string& path, std::size_t step, const SoftTargetMatrix& s) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open target dump " + path);
  out << std::setprecision(17);
  for (std::size_t i = 0; i < s.t.rows(); ++i)
    for (std::size_t j = 0; j < s.t.cols(); ++j) out << step << ',' << i << ',' << j << ',' << s.t(i, j) << '\n';
}

}  // namespace softneg
