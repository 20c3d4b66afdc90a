#pragma once

// Report graphs and the two-layer graph-convolutional encoder.
//
// Nodes: one observation node per fact (OBS-DP present / OBS-DA absent), one
// anatomy node per location word, one uncertainty/modifier node per severity
// word. Edges join each observation to its own location and severity nodes.
// Node features are a token embedding followed by a 4-slot one-hot class code.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "softneg/linalg.hpp"
#include "softneg/reports.hpp"
#include "softneg/rng.hpp"

namespace softneg {

enum class NodeClass { AnatDp = 0, ObsDp = 1, ObsDa = 2, ObsU = 3 };
inline constexpr std::size_t kNodeClassCount = 4;

inline std::string_view to_string(NodeClass c) {
  constexpr std::array<std::string_view, 4> names = {"ANAT-DP", "OBS-DP", "OBS-DA", "OBS-U"};
  return names[static_cast<std::size_t>(c)];
}

/// Deterministic unit vector seeded by a hash of the token. dim == 1 gives +-1.
inline Vec token_embed(std::string_view token, std::size_t dim) {
  if (dim == 0) throw std::invalid_argument("token_embed: dim must be >= 1");
  Rng rng(derive_seed(fnv1a64(token), "token", {dim}));
  std::normal_distribution<double> g(0.0, 1.0);
  Vec v(dim);
  double n = 0.0;
  while (n == 0.0) {
    for (auto& x : v) x = g(rng);
    n = norm2(v);
  }
  for (auto& x : v) x /= n;
  return v;
}

struct GraphNode {
  std::string token;
  NodeClass cls;
};

struct ReportGraph {
  std::vector<GraphNode> nodes;
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // undirected, no self-loops
  Matrix node_features;                                    // nodes × (token_dim + 4)

  std::size_t size() const { return nodes.size(); }
};

inline std::size_t add_node(ReportGraph& g, std::string token, NodeClass cls) {
  g.nodes.push_back({std::move(token), cls});
  return g.nodes.size() - 1;
}

inline void fill_node_features(ReportGraph& g, std::size_t token_dim) {
  g.node_features = Matrix(g.nodes.size(), token_dim + kNodeClassCount);
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const Vec t = token_embed(g.nodes[i].token, token_dim);
    for (std::size_t k = 0; k < token_dim; ++k) g.node_features(i, k) = t[k];
    g.node_features(i, token_dim + static_cast<std::size_t>(g.nodes[i].cls)) = 1.0;
  }
}

inline ReportGraph build_graph(const Report& r, std::size_t token_dim = 16) {
  ReportGraph g;
  for (const auto& s : r.sentences) {
    const Fact& f = s.fact;
    const auto obs =
        add_node(g, f.entity.surface(), f.polarity == Polarity::Present ? NodeClass::ObsDp : NodeClass::ObsDa);
    if (f.location) g.edges.emplace_back(obs, add_node(g, std::string(to_string(*f.location)), NodeClass::AnatDp));
    if (f.severity) g.edges.emplace_back(obs, add_node(g, std::string(to_string(*f.severity)), NodeClass::ObsU));
  }
  fill_node_features(g, token_dim);
  return g;
}

/// D^{-1/2} (A + I) D^{-1/2}.
inline Matrix normalized_adjacency(const ReportGraph& g) {
  const std::size_t n = g.size();
  Matrix a = Matrix::identity(n);
  for (auto [u, v] : g.edges) {
    if (u >= n || v >= n) throw std::out_of_range("graph edge references a missing node");
    if (u == v) continue;
    a(u, v) = 1.0;
    a(v, u) = 1.0;
  }
  Vec inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < n; ++j) d += a(i, j);
    inv_sqrt_deg[i] = 1.0 / std::sqrt(d);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) *= inv_sqrt_deg[i] * inv_sqrt_deg[j];
  return a;
}

struct GcnShape {
  std::size_t token_dim = 16;
  std::size_t hidden = 8;
  std::size_t out = 8;

  std::size_t input() const { return token_dim + kNodeClassCount; }
  /// 768-dim word vectors + 4 class slots, 256 hidden, 512 out.
  static GcnShape full() { return {768, 256, 512}; }
  bool operator==(const GcnShape&) const = default;
};

struct GcnParams {
  Matrix w1;  // d_in × d_hidden
  Matrix w2;  // d_hidden × d_out

  static GcnParams init(const GcnShape& shape, std::uint64_t seed) {
    GcnParams p{Matrix(shape.input(), shape.hidden), Matrix(shape.hidden, shape.out)};
    Rng rng = make_rng(seed, "gcn-init");
    auto fill = [&rng](Matrix& m) {
      const double a = 1.0 / std::sqrt(static_cast<double>(m.rows()));
      std::uniform_real_distribution<double> u(-a, a);
      for (auto& x : m.flat()) x = u(rng);
    };
    fill(p.w1);
    fill(p.w2);
    return p;
  }
};

/// relu(Â X W1) -> Â H1 W2 -> mean over nodes -> L2 normalize (zero stays zero).
inline Vec gcn_encode(const ReportGraph& g, const GcnParams& p) {
  if (p.w1.cols() != p.w2.rows()) throw ShapeError("gcn: W1 and W2 inner dims differ");
  if (g.size() == 0) return Vec(p.w2.cols(), 0.0);
  if (g.node_features.cols() != p.w1.rows())
    throw ShapeError("gcn: node features have " + std::to_string(g.node_features.cols()) + " columns, W1 expects " +
                     std::to_string(p.w1.rows()));
  const Matrix a_hat = normalized_adjacency(g);
  Matrix h1 = matmul(a_hat, matmul(g.node_features, p.w1));
  for (auto& x : h1.flat()) x = std::max(0.0, x);
  const Matrix h2 = matmul(a_hat, matmul(h1, p.w2));
  Vec pooled(h2.cols(), 0.0);
  for (std::size_t i = 0; i < h2.rows(); ++i)
    for (std::size_t k = 0; k < h2.cols(); ++k) pooled[k] += h2(i, k);
  for (auto& x : pooled) x /= static_cast<double>(h2.rows());
  const double n = norm2(pooled);
  if (n > 0.0)
    for (auto& x : pooled) x /= n;
  return pooled;
}

}  // namespace softneg
