#pragma once

// Image and text towers projecting into a shared unit-norm embedding space,
// the graph encoder parameters, and temperature-scaled cosine logits.
//
// Each tower is affine+tanh twice followed by L2 normalisation. A tower whose
// pre-normalisation output is exactly zero returns e1 instead of NaN.

#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "softneg/corpus.hpp"
#include "softneg/graph.hpp"
#include "softneg/linalg.hpp"
#include "softneg/log.hpp"
#include "softneg/reports.hpp"
#include "softneg/rng.hpp"

namespace softneg {

inline constexpr std::size_t kMaxTextTokens = 300;

/// Soft-target gates and fusion weights.
struct HyperBlock {
  double tau_t = 0.9;
  double tau_c = 0.8;
  double tau_g = 0.7;
  double w_t = 0.167;
  double w_c = 0.167;
  double w_g = 0.167;

  void validate() const {
    for (double w : {w_t, w_c, w_g})
      if (!(w >= 0.0)) throw std::invalid_argument("fusion weights must be nonnegative");
    for (double t : {tau_t, tau_c, tau_g})
      if (!std::isfinite(t)) throw std::invalid_argument("similarity thresholds must be finite");
  }
  /// Thresholds above 1 disable every off-diagonal target: plain one-hot contrastive labels.
  static HyperBlock hard_labels() {
    HyperBlock h;
    h.tau_t = h.tau_c = h.tau_g = 1.0 + 1e-6;
    return h;
  }
  bool operator==(const HyperBlock&) const = default;
};

struct Dense {
  Matrix w;  // out × in
  Vec b;
};

struct Mlp {
  Dense l1;
  Dense l2;
  std::size_t input_dim() const { return l1.w.cols(); }
  std::size_t output_dim() const { return l2.w.rows(); }
};

struct ModelShape {
  std::size_t image_dim = 24;
  std::size_t text_token_dim = 32;
  std::size_t hidden = 16;
  std::size_t embed_dim = 8;
  GcnShape gcn{16, 8, 8};

  void validate() const {
    if (!image_dim || !text_token_dim || !hidden || !embed_dim) throw std::invalid_argument("model dims must be >= 1");
    if (gcn.out != embed_dim) throw std::invalid_argument("graph encoder output must equal embed_dim");
  }
  static ModelShape desk() { return {}; }
  static ModelShape full() {
    ModelShape s;
    s.text_token_dim = 768;
    s.hidden = 512;
    s.embed_dim = 512;
    s.gcn = GcnShape::full();
    return s;
  }
  bool operator==(const ModelShape&) const = default;
};

struct Weights {
  Mlp image;
  Mlp text;
  GcnParams gcn;
};

/// Visits every tensor in canonical order: f(name, span, rows, cols).
template <class W, class F>
  requires std::is_same_v<std::remove_const_t<W>, Weights>
void for_each_tensor(W& w, F&& f) {
  auto mat = [&f](const char* name, auto& m) { f(name, m.flat(), m.rows(), m.cols()); };
  auto vec = [&f](const char* name, auto& v) {
    using T = std::conditional_t<std::is_const_v<std::remove_reference_t<decltype(v)>>, const double, double>;
    f(name, std::span<T>(v.data(), v.size()), std::size_t{1}, v.size());
  };
  mat("image.l1.w", w.image.l1.w);
  vec("image.l1.b", w.image.l1.b);
  mat("image.l2.w", w.image.l2.w);
  vec("image.l2.b", w.image.l2.b);
  mat("text.l1.w", w.text.l1.w);
  vec("text.l1.b", w.text.l1.b);
  mat("text.l2.w", w.text.l2.w);
  vec("text.l2.b", w.text.l2.b);
  mat("gcn.w1", w.gcn.w1);
  mat("gcn.w2", w.gcn.w2);
}

inline std::size_t parameter_count(const Weights& w) {
  std::size_t n = 0;
  for_each_tensor(w, [&n](const char*, auto span, std::size_t, std::size_t) { n += span.size(); });
  return n;
}

inline Vec flatten(const Weights& w) {
  Vec out;
  out.reserve(parameter_count(w));
  for_each_tensor(w, [&out](const char*, auto span, std::size_t, std::size_t) {
    out.insert(out.end(), span.begin(), span.end());
  });
  return out;
}

inline void unflatten(Weights& w, std::span<const double> flat) {
  if (flat.size() != parameter_count(w)) throw ShapeError("unflatten: parameter count mismatch");
  std::size_t pos = 0;
  for_each_tensor(w, [&](const char*, std::span<double> span, std::size_t, std::size_t) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), span.size(), span.begin());
    pos += span.size();
  });
}

inline Weights zeros_like(const Weights& w) {
  Weights z = w;
  for_each_tensor(z, [](const char*, std::span<double> span, std::size_t, std::size_t) {
    std::fill(span.begin(), span.end(), 0.0);
  });
  return z;
}

namespace detail {
inline Dense init_dense(std::size_t in, std::size_t out, Rng& rng) {
  const double a = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-a, a);
  Dense d{Matrix(out, in), Vec(out)};
  for (auto& x : d.w.flat()) x = u(rng);
  for (auto& x : d.b) x = u(rng);
  return d;
}
inline Mlp init_mlp(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  Dense l1 = init_dense(in, hidden, rng);
  Dense l2 = init_dense(hidden, out, rng);
  return {std::move(l1), std::move(l2)};
}
}  // namespace detail

struct ModelParams {
  ModelShape shape;
  Weights weights;
  double tau = 0.1;
  HyperBlock hyper;

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
  static ModelParams init(const ModelShape& shape, std::uint64_t seed) {
    shape.validate();
    ModelParams p;
    p.shape = shape;
    Rng img = make_rng(seed, "init-image");
    Rng txt = make_rng(seed, "init-text");
    p.weights.image = detail::init_mlp(shape.image_dim, shape.hidden, shape.embed_dim, img);
    p.weights.text = detail::init_mlp(shape.text_token_dim, shape.hidden, shape.embed_dim, txt);
    p.weights.gcn = GcnParams::init(shape.gcn, derive_seed(seed, "init-gcn"));
    return p;
  }
};

// ---------------------------------------------------------------------------
// Tower forward / backward

struct TowerTrace {
  Vec input;
  Vec hidden;    // tanh(W1 x + b1)
  Vec pre_norm;  // tanh(W2 h + b2)
  Vec out;       // unit vector
  double norm = 0.0;
  bool fallback = false;
};

inline Vec basis_vector(std::size_t dim) {
  Vec e(dim, 0.0);
  if (dim) e[0] = 1.0;
  return e;
}

inline void warn_zero_embedding_once() {
  static std::atomic<bool> warned{false};
  if (!warned.exchange(true)) log::warn("zero embedding before normalisation; substituting e1");
}

inline TowerTrace tower_forward(const Mlp& m, std::span<const double> x) {
  if (x.size() != m.input_dim())
    throw ShapeError("tower input has " + std::to_string(x.size()) + " dims, expected " +
                     std::to_string(m.input_dim()));
  TowerTrace t;
  t.input.assign(x.begin(), x.end());
  t.hidden = affine(m.l1.w, x, m.l1.b);
  for (auto& v : t.hidden) v = std::tanh(v);
  t.pre_norm = affine(m.l2.w, t.hidden, m.l2.b);
  for (auto& v : t.pre_norm) v = std::tanh(v);
  t.norm = norm2(t.pre_norm);
  if (t.norm == 0.0) {
    warn_zero_embedding_once();
    t.fallback = true;
    t.out = basis_vector(t.pre_norm.size());
  } else {
    t.out = t.pre_norm;
    for (auto& v : t.out) v /= t.norm;
  }
  return t;
}

/// Accumulates d(loss)/d(weights) into `grad` given d(loss)/d(out).
inline void tower_backward(const Mlp& m, const TowerTrace& t, std::span<const double> d_out, Mlp& grad) {
  if (t.fallback) return;  // constant output
  const std::size_t n_out = t.out.size();
  const double proj = dot(t.out, d_out);
  Vec d_pre2(n_out);
  for (std::size_t k = 0; k < n_out; ++k) {
    const double d_y = (d_out[k] - t.out[k] * proj) / t.norm;
    d_pre2[k] = d_y * (1.0 - t.pre_norm[k] * t.pre_norm[k]);
  }
  const std::size_t n_hidden = t.hidden.size();
  Vec d_hidden(n_hidden, 0.0);
  for (std::size_t k = 0; k < n_out; ++k) {
    grad.l2.b[k] += d_pre2[k];
    for (std::size_t j = 0; j < n_hidden; ++j) {
      grad.l2.w(k, j) += d_pre2[k] * t.hidden[j];
      d_hidden[j] += m.l2.w(k, j) * d_pre2[k];
    }
  }
  for (std::size_t j = 0; j < n_hidden; ++j) {
    const double d_pre1 = d_hidden[j] * (1.0 - t.hidden[j] * t.hidden[j]);
    grad.l1.b[j] += d_pre1;
    for (std::size_t i = 0; i < t.input.size(); ++i) grad.l1.w(j, i) += d_pre1 * t.input[i];
  }
}

// ---------------------------------------------------------------------------
// Text features

/// Lower-cased alphanumeric word tokens of the rendered report, at most 300.
inline std::vector<std::string> tokenize(const Report& r) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty() && tokens.size() < kMaxTextTokens) tokens.push_back(cur);
    cur.clear();
  };
  for (const auto& s : r.sentences) {
    for (char c : s.text) {
      if (std::isalnum(static_cast<unsigned char>(c)))
        cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      else
        flush();
    }
    flush();
    if (tokens.size() >= kMaxTextTokens) break;
  }
  return tokens;
}

/// Mean of token embeddings. Empty vector when the report has no tokens.
inline Vec text_features(const Report& r, std::size_t token_dim) {
  const auto tokens = tokenize(r);
  if (tokens.empty()) return {};
  Vec mean(token_dim, 0.0);
  for (const auto& tok : tokens) {
    const Vec e = token_embed(tok, token_dim);
    for (std::size_t k = 0; k < token_dim; ++k) mean[k] += e[k];
  }
  for (auto& v : mean) v /= static_cast<double>(tokens.size());
  return mean;
}

inline Vec encode_image_features(std::span<const double> x, const ModelParams& p) {
  return tower_forward(p.weights.image, x).out;
}

inline Vec encode_image(const ImageFeature& x, const ModelParams& p) { return encode_image_features(x.values, p); }

/// `features` from text_features(); empty means an empty report, which maps to e1.
inline Vec encode_text_features(std::span<const double> features, const ModelParams& p) {
  if (features.empty()) return basis_vector(p.shape.embed_dim);
  return tower_forward(p.weights.text, features).out;
}

inline Vec encode_text(const Report& r, const ModelParams& p) {
  return encode_text_features(text_features(r, p.shape.text_token_dim), p);
}

inline Vec encode_graph(const Report& r, const ModelParams& p) {
  return gcn_encode(build_graph(r, p.shape.gcn.token_dim), p.weights.gcn);
}

/// logits[i][j] = <U_i, V_j> / tau.
inline Matrix cosine_logits(const Matrix& u, const Matrix& v, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (u.cols() != v.cols()) throw ShapeError("cosine_logits: embedding widths differ");
  Matrix out(u.rows(), v.rows());
  for (std::size_t i = 0; i < u.rows(); ++i)
    for (std::size_t j = 0; j < v.rows(); ++j) out(i, j) = dot(u.row(i), v.row(j)) / tau;
  return out;
}

}  // namespace softneg
