#pragma once

// Checkpoints: one JSON document holding model shape, temperature, the
// hyperparameter block and every tensor as a named flat array with its shape.
// Doubles are written in shortest round-trip form, so load(save(p)) is bit-exact.

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "softneg/encoders.hpp"

namespace softneg {

using ordered_json = nlohmann::ordered_json;

inline ordered_json to_json(const HyperBlock& h) {
  return ordered_json{{"tau_t", h.tau_t}, {"tau_c", h.tau_c}, {"tau_g", h.tau_g},
                      {"w_t", h.w_t},     {"w_c", h.w_c},     {"w_g", h.w_g}};
}

inline HyperBlock hyper_from_json(const nlohmann::json& j, HyperBlock h = {}) {
  h.tau_t = j.value("tau_t", h.tau_t);
  h.tau_c = j.value("tau_c", h.tau_c);
  h.tau_g = j.value("tau_g", h.tau_g);
  h.w_t = j.value("w_t", h.w_t);
  h.w_c = j.value("w_c", h.w_c);
  h.w_g = j.value("w_g", h.w_g);
  h.validate();
  return h;
}

inline ordered_json to_json(const ModelShape& s) {
  return ordered_json{{"image_dim", s.image_dim},
                      {"text_token_dim", s.text_token_dim},
                      {"hidden", s.hidden},
                      {"embed_dim", s.embed_dim},
                      {"gcn_token_dim", s.gcn.token_dim},
                      {"gcn_hidden", s.gcn.hidden}};
}

inline ModelShape shape_from_json(const nlohmann::json& j, ModelShape s = {}) {
  s.image_dim = j.value("image_dim", s.image_dim);
  s.text_token_dim = j.value("text_token_dim", s.text_token_dim);
  s.hidden = j.value("hidden", s.hidden);
  s.embed_dim = j.value("embed_dim", s.embed_dim);
  s.gcn.token_dim = j.value("gcn_token_dim", s.gcn.token_dim);
  s.gcn.hidden = j.value("gcn_hidden", s.gcn.hidden);
  s.gcn.out = s.embed_dim;
  s.validate();
  return s;
}

inline ordered_json checkpoint_json(const ModelParams& p) {
  ordered_json tensors = ordered_json::array();
  for_each_tensor(p.weights, [&](const char* name, auto span, std::size_t rows, std::size_t cols) {
    tensors.push_back(ordered_json{{"name", name},
                                   {"shape", {rows, cols}},
                                   {"data", std::vector<double>(span.begin(), span.end())}});
  });
  return ordered_json{{"format", "softneg-checkpoint"},
                      {"version", 1},
                      {"shape", to_json(p.shape)},
                      {"tau", p.tau},
                      {"hyper", to_json(p.hyper)},
                      {"tensors", std::move(tensors)}};
}

inline ModelParams checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "softneg-checkpoint") throw std::runtime_error("not a softneg checkpoint");
  ModelParams p = ModelParams::init(shape_from_json(j.at("shape")), 0);
  p.tau = j.at("tau").get<double>();
  if (!(p.tau > 0.0)) throw std::runtime_error("checkpoint temperature must be positive");
  p.hyper = hyper_from_json(j.at("hyper"));
  const auto& tensors = j.at("tensors");
  std::size_t k = 0;
  for_each_tensor(p.weights, [&](const char* name, std::span<double> span, std::size_t rows, std::size_t cols) {
    if (k >= tensors.size()) throw std::runtime_error("checkpoint is missing tensor " + std::string(name));
    const auto& t = tensors[k++];
    if (t.at("name").get<std::string>() != name) throw std::runtime_error("checkpoint tensor order mismatch at " + std::string(name));
    const auto shape = t.at("shape").get<std::vector<std::size_t>>();
    if (shape != std::vector<std::size_t>{rows, cols}) throw ShapeError("checkpoint tensor " + std::string(name) + " has wrong shape");
    const auto data = t.at("data").get<std::vector<double>>();
    if (data.size() != span.size()) throw ShapeError("checkpoint tensor " + std::string(name) + " has wrong length");
    std::copy(data.begin(), data.end(), span.begin());
  });
  if (k != tensors.size()) throw std::runtime_error("checkpoint has unexpected extra tensors");
  return p;
}

inline std::string checkpoint_text(const ModelParams& p) { return checkpoint_json(p).dump(1) + "\n"; }

inline void save_checkpoint(const std::string& path, const ModelParams& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out << checkpoint_text(p);
}

inline ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path);
  return checkpoint_from_json(nlohmann::json::parse(in));
}

}  // namespace softneg
