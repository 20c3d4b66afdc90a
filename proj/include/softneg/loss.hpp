#pragma once

// Symmetric soft-label contrastive loss with analytic gradients, and a
// central-difference verifier.
//
//   i2t = -(1/B) sum_i sum_j T[i][j] log softmax(L_i2t[i])[j]     (B × (B+H))
//   t2i = -(1/B) sum_j sum_i T'[j][i] log softmax(L_t2i[j])[i]    (B × B)
//   total = (i2t + t2i) / 2
//
// Targets are constants: gradients flow only through the logits, back through
// the cosine, the L2 normalisation and both towers. The graph encoder only
// feeds the targets, so its gradient is identically zero.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "softneg/clinical.hpp"
#include "softneg/encoders.hpp"
#include "softneg/linalg.hpp"
#include "softneg/negation.hpp"
#include "softneg/rng.hpp"
#include "softneg/softlabel.hpp"

namespace softneg {

class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct SoftCrossEntropy {
  double value = 0.0;
  Matrix grad;  // d value / d logits
};

/// Mean over rows of the cross-entropy between target rows and softmax(logit rows).
inline SoftCrossEntropy soft_cross_entropy(const Matrix& logits, const Matrix& targets) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols())
    throw ShapeError("soft_cross_entropy: logits and targets differ in shape");
  if (!is_row_stochastic(targets)) throw ContractError("soft targets are not row-stochastic");
  const std::size_t b = logits.rows();
  SoftCrossEntropy out{0.0, Matrix(b, logits.cols())};
  if (b == 0) return out;
  for (std::size_t i = 0; i < b; ++i) {
    const auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double log_p = row[j] - log_z;
      const double t = targets(i, j);
      if (t > 0.0) out.value -= t * log_p;
      out.grad(i, j) = (std::exp(log_p) - t) / static_cast<double>(b);
    }
  }
  out.value /= static_cast<double>(b);
  return out;
}

struct LogitLoss {
  double total = 0.0;
  double i2t = 0.0;
  double t2i = 0.0;
  Matrix d_i2t;  // d total / d logits_i2t
  Matrix d_t2i;
};

inline LogitLoss soft_contrastive_loss(const Matrix& logits_i2t, const Matrix& logits_t2i,
                                       const SoftTargetMatrix& targets_i2t, const Matrix& targets_t2i) {
  const std::size_t b = logits_i2t.rows();
  if (logits_t2i.rows() != b || logits_t2i.cols() != b) throw ShapeError("t2i logits must be B×B");
  if (logits_i2t.cols() != b + targets_i2t.hard_negatives) throw ShapeError("i2t logits must be B×(B+H)");
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = b; j < targets_i2t.t.cols(); ++j)
      if (targets_i2t.t(i, j) != 0.0) throw ContractError("hard-negative target columns must be zero");
  auto a = soft_cross_entropy(logits_i2t, targets_i2t.t);
  auto c = soft_cross_entropy(logits_t2i, targets_t2i);
  LogitLoss out;
  out.i2t = a.value;
  out.t2i = c.value;
  out.total = 0.5 * (a.value + c.value);
  for (auto& g : a.grad.flat()) g *= 0.5;
  for (auto& g : c.grad.flat()) g *= 0.5;
  out.d_i2t = std::move(a.grad);
  out.d_t2i = std::move(c.grad);
  return out;
}

// ---------------------------------------------------------------------------
// Model-level loss

/// Encoder-ready batch: B image features, B paired texts then H appended negatives.
struct Batch {
  Matrix images;                  // B × d_img
  std::vector<Vec> texts;         // B + H mean-pooled token features (empty = empty report)
  std::vector<ClinicalLabelVector> labels;  // B
  Matrix graph;                   // B × d_emb graph embeddings
  std::vector<std::size_t> negative_source;  // H source rows

  std::size_t paired() const { return images.rows(); }
  std::size_t hard_negatives() const { return texts.size() - images.rows(); }
};

inline Batch make_batch(const ModelParams& p, const std::vector<Report>& reports,
                        const std::vector<ImageFeature>& images, const HardNegatives& negatives = {}) {
  if (reports.size() != images.size()) throw ShapeError("make_batch: reports and images differ in count");
  if (reports.empty()) throw std::invalid_argument("make_batch: empty batch");
  Batch b;
  b.images = Matrix(reports.size(), p.shape.image_dim);
  b.graph = Matrix(reports.size(), p.shape.embed_dim);
  for (std::size_t i = 0; i < reports.size(); ++i) {
    b.images.set_row(i, images[i].values);
    b.texts.push_back(text_features(reports[i], p.shape.text_token_dim));
    b.labels.push_back(label_vector(reports[i]));
    b.graph.set_row(i, encode_graph(reports[i], p));
  }
  for (const auto& r : negatives.reports) b.texts.push_back(text_features(r, p.shape.text_token_dim));
  b.negative_source = negatives.source;
  return b;
}

struct Targets {
  SoftTargetMatrix i2t;
  Matrix t2i;
};

struct Embeddings {
  std::vector<TowerTrace> image;
  std::vector<TowerTrace> text;  // trace.input empty for empty reports
  Matrix u;                       // B × d
  Matrix v;                       // (B+H) × d
};

inline Embeddings embed_batch(const ModelParams& p, const Batch& b) {
  Embeddings e;
  const std::size_t d = p.shape.embed_dim;
  e.u = Matrix(b.paired(), d);
  e.v = Matrix(b.texts.size(), d);
  for (std::size_t i = 0; i < b.paired(); ++i) {
    e.image.push_back(tower_forward(p.weights.image, b.images.row(i)));
    e.u.set_row(i, e.image.back().out);
  }
  for (std::size_t j = 0; j < b.texts.size(); ++j) {
    if (b.texts[j].empty()) {
      TowerTrace t;
      t.fallback = true;
      t.out = basis_vector(d);
      e.text.push_back(std::move(t));
    } else {
      e.text.push_back(tower_forward(p.weights.text, b.texts[j]));
    }
    e.v.set_row(j, e.text.back().out);
  }
  return e;
}

/// Dynamic targets from the current text embeddings of the paired rows.
inline Targets make_targets(const Matrix& paired_text_embeddings, const Batch& b, const HyperBlock& hyper,
                            SimilarityKernel kernel = SimilarityKernel::Cosine) {
  const auto bundle = batch_similarities(paired_text_embeddings, b.graph, b.labels, kernel);
  Targets t{fuse_targets(bundle, hyper, b.hard_negatives()), {}};
  t.t2i = transpose_targets(t.i2t);
  return t;
}

inline Targets make_targets(const ModelParams& p, const Batch& b, SimilarityKernel kernel = SimilarityKernel::Cosine) {
  const auto e = embed_batch(p, b);
  Matrix paired(b.paired(), p.shape.embed_dim);
  for (std::size_t i = 0; i < b.paired(); ++i) paired.set_row(i, e.v.row(i));
  return make_targets(paired, b, p.hyper, kernel);
}

struct LossReport {
  double total = 0.0;
  double i2t = 0.0;
  double t2i = 0.0;
  Vec grad;  // flat, canonical tensor order (see for_each_tensor)
};

inline LogitLoss logit_loss(const ModelParams& p, const Embeddings& e, const Targets& t) {
  const std::size_t b = e.u.rows();
  Matrix paired(b, e.v.cols());
  for (std::size_t i = 0; i < b; ++i) paired.set_row(i, e.v.row(i));
  return soft_contrastive_loss(cosine_logits(e.u, e.v, p.tau), cosine_logits(paired, e.u, p.tau), t.i2t, t.t2i);
}

inline double contrastive_loss_value(const ModelParams& p, const Batch& b, const Targets& t) {
  return logit_loss(p, embed_batch(p, b), t).total;
}

inline LossReport contrastive_loss(const ModelParams& p, const Batch& b, const Targets& t) {
  const Embeddings e = embed_batch(p, b);
  const LogitLoss l = logit_loss(p, e, t);
  const std::size_t n_img = e.u.rows();
  const std::size_t n_txt = e.v.rows();
  const std::size_t d = e.u.cols();
  const double inv_tau = 1.0 / p.tau;

  Matrix du(n_img, d);
  Matrix dv(n_txt, d);
  for (std::size_t i = 0; i < n_img; ++i)
    for (std::size_t j = 0; j < n_txt; ++j) {
      const double g = l.d_i2t(i, j) * inv_tau;
      if (g == 0.0) continue;
      for (std::size_t k = 0; k < d; ++k) {
        du(i, k) += g * e.v(j, k);
        dv(j, k) += g * e.u(i, k);
      }
    }
  for (std::size_t j = 0; j < n_img; ++j)  // text rows of the t2i direction
    for (std::size_t i = 0; i < n_img; ++i) {
      const double g = l.d_t2i(j, i) * inv_tau;
      if (g == 0.0) continue;
      for (std::size_t k = 0; k < d; ++k) {
        dv(j, k) += g * e.u(i, k);
        du(i, k) += g * e.v(j, k);
      }
    }

  Weights grad = zeros_like(p.weights);
  for (std::size_t i = 0; i < n_img; ++i) tower_backward(p.weights.image, e.image[i], du.row(i), grad.image);
  for (std::size_t j = 0; j < n_txt; ++j) tower_backward(p.weights.text, e.text[j], dv.row(j), grad.text);

  return {l.total, l.i2t, l.t2i, flatten(grad)};
}

// ---------------------------------------------------------------------------
// Finite-difference verification

class GradientCheckError : public std::runtime_error {
 public:
  GradientCheckError(const std::string& what, std::size_t coordinate)
      : std::runtime_error(what + " at coordinate " + std::to_string(coordinate)), coordinate_(coordinate) {}
  std::size_t coordinate() const { return coordinate_; }

 private:
  std::size_t coordinate_;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_coordinate = 0;
  std::size_t checked = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;

  bool passed(double tol = 1e-4) const { return max_rel_error < tol; }
};

/// Name of the tensor holding flat coordinate `index`.
inline std::string tensor_of(const Weights& w, std::size_t index) {
  std::string name = "?";
  std::size_t pos = 0;
  for_each_tensor(w, [&](const char* n, auto span, std::size_t, std::size_t) {
    if (index >= pos && index < pos + span.size()) name = n;
    pos += span.size();
  });
  return name;
}

/// Sorted coordinate subset: everything when max_coords == 0 or covers all.
inline std::vector<std::size_t> sample_coordinates(std::size_t n, std::size_t max_coords, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (max_coords == 0 || max_coords >= n) return idx;
  Rng rng = make_rng(seed, "gradcheck-coords");
  seeded_shuffle(idx, rng);
  idx.resize(max_coords);
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// Central differences on frozen targets vs a supplied analytic gradient.
/// Error per coordinate: |numeric - analytic| / (|analytic| + 1e-8).
inline GradCheckResult compare_gradients(const ModelParams& params, const Batch& batch, const Targets& targets,
                                         std::span<const double> analytic, double epsilon,
                                         const std::vector<std::size_t>& coordinates) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) throw std::invalid_argument("epsilon must lie in [1e-7, 1e-3]");
  Vec flat = flatten(params.weights);
  if (analytic.size() != flat.size()) throw ShapeError("analytic gradient length mismatch");
  ModelParams probe = params;
  GradCheckResult r;
  for (std::size_t c : coordinates) {
    const double orig = flat[c];
    flat[c] = orig + epsilon;
    unflatten(probe.weights, flat);
    const double up = contrastive_loss_value(probe, batch, targets);
    flat[c] = orig - epsilon;
    unflatten(probe.weights, flat);
    const double down = contrastive_loss_value(probe, batch, targets);
    flat[c] = orig;
    const double numeric = (up - down) / (2.0 * epsilon);
    if (!std::isfinite(numeric) || !std::isfinite(analytic[c]))
      throw GradientCheckError("non-finite gradient in " + tensor_of(params.weights, c), c);
    const double rel = std::abs(numeric - analytic[c]) / (std::abs(analytic[c]) + 1e-8);
    if (r.checked == 0 || rel > r.max_rel_error) {
      r.max_rel_error = rel;
      r.worst_coordinate = c;
      r.analytic_at_worst = analytic[c];
      r.numeric_at_worst = numeric;
    }
    ++r.checked;
  }
  return r;
}

/// Builds targets once from `params`, freezes them, and checks the analytic gradient.
inline GradCheckResult gradient_check(const ModelParams& params, const Batch& batch, double epsilon,
                                      std::size_t max_coords = 0, std::uint64_t seed = 0) {
  const Targets targets = make_targets(params, batch);
  const LossReport loss = contrastive_loss(params, batch, targets);
  if (!std::isfinite(loss.total)) throw GradientCheckError("non-finite loss", 0);
  const auto coords = sample_coordinates(loss.grad.size(), max_coords, seed);
  return compare_gradients(params, batch, targets, loss.grad, epsilon, coords);
}

}  // namespace softneg
