#pragma once

// Mini-batch training loop: seeded shuffles, per-step dynamic targets and
// hard negatives, SGD (optional momentum) or AdamW, per-epoch metrics.
//
// The serial schedule is bit-reproducible per seed.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "softneg/checkpoint.hpp"
#include "softneg/corpus.hpp"
#include "softneg/encoders.hpp"
#include "softneg/log.hpp"
#include "softneg/loss.hpp"
#include "softneg/negation.hpp"
#include "softneg/softlabel.hpp"

namespace softneg {

enum class OptimizerKind { Sgd, AdamW };

struct TrainConfig {
  std::string name = "soft+hardneg";
  std::uint64_t seed = 0;
  std::size_t epochs = 30;
  // Hard-label, negative-free epochs run first from the seeded init, standing in
  // for pretrained encoders; identical across ablation arms that share a seed.
  std::size_t pretrain_epochs = 10;
  std::size_t batch_size = 32;
  double lr = 1e-2;
  OptimizerKind optimizer = OptimizerKind::Sgd;
  double momentum = 0.0;
  double weight_decay = 0.0;  // AdamW only
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  double tau = 0.1;
  bool soft_labels = true;
  HyperBlock hyper{};
  SimilarityKernel clinical_kernel = SimilarityKernel::Cosine;
  double hardneg_rate = 0.5;
  NegationConfig negation{};
  ModelShape shape{};

  bool record_wall_time = false;   // wall_ms column is 0 unless set
  std::string dump_targets_csv;    // empty = no dump

  void validate() const {
    if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
    if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0,1)");
    if (!(hardneg_rate >= 0.0 && hardneg_rate <= 1.0)) throw std::invalid_argument("hardneg_rate must lie in [0,1]");
    hyper.validate();
    shape.validate();
  }

  /// Gating actually applied: the configured block, or one that admits no off-diagonal mass.
  HyperBlock effective_hyper() const { return soft_labels ? hyper : HyperBlock::hard_labels(); }

  static TrainConfig desk() { return {}; }
  /// Large-scale reference values; far too slow for desk runs.
  static TrainConfig full() {
    TrainConfig c;
    c.name = "full";
    c.lr = 4e-6;
    c.batch_size = 64;
    c.epochs = 10;
    c.optimizer = OptimizerKind::AdamW;
    c.shape = ModelShape::full();
    return c;
  }
};

inline ordered_json to_json(const TrainConfig& c) {
  return ordered_json{
      {"name", c.name},
      {"seed", c.seed},
      {"epochs", c.epochs},
      {"pretrain_epochs", c.pretrain_epochs},
      {"batch_size", c.batch_size},
      {"lr", c.lr},
      {"optimizer", c.optimizer == OptimizerKind::Sgd ? "sgd" : "adamw"},
      {"momentum", c.momentum},
      {"weight_decay", c.weight_decay},
      {"adam_beta1", c.adam_beta1},
      {"adam_beta2", c.adam_beta2},
      {"adam_eps", c.adam_eps},
      {"tau", c.tau},
      {"soft_labels", c.soft_labels},
      {"hyper", to_json(c.hyper)},
      {"clinical_kernel", c.clinical_kernel == SimilarityKernel::Cosine ? "cosine" : "jaccard"},
      {"hardneg_rate", c.hardneg_rate},
      {"negation_lexicon", c.negation.lexicon},
      {"negation_flips", c.negation.flips},
      {"shape", to_json(c.shape)},
      {"record_wall_time", c.record_wall_time},
      {"dump_targets_csv", c.dump_targets_csv},
  };
}

/// Overlays the keys present in `j` onto `base`.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  c.name = j.value("name", c.name);
  c.seed = j.value("seed", c.seed);
  c.epochs = j.value("epochs", c.epochs);
  c.pretrain_epochs = j.value("pretrain_epochs", c.pretrain_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  if (j.contains("optimizer")) {
    const auto o = j.at("optimizer").get<std::string>();
    if (o == "sgd") c.optimizer = OptimizerKind::Sgd;
    else if (o == "adamw") c.optimizer = OptimizerKind::AdamW;
    else throw std::invalid_argument("unknown optimizer " + o);
  }
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.tau = j.value("tau", c.tau);
  c.soft_labels = j.value("soft_labels", c.soft_labels);
  if (j.contains("hyper")) c.hyper = hyper_from_json(j.at("hyper"), c.hyper);
  if (j.contains("clinical_kernel")) {
    const auto k = j.at("clinical_kernel").get<std::string>();
    if (k == "cosine") c.clinical_kernel = SimilarityKernel::Cosine;
    else if (k == "jaccard") c.clinical_kernel = SimilarityKernel::Jaccard;
    else throw std::invalid_argument("unknown clinical kernel " + k);
  }
  c.hardneg_rate = j.value("hardneg_rate", c.hardneg_rate);
  if (j.contains("negation_lexicon")) c.negation.lexicon = j.at("negation_lexicon").get<std::vector<std::string>>();
  c.negation.flips = j.value("negation_flips", c.negation.flips);
  if (j.contains("shape")) c.shape = shape_from_json(j.at("shape"), c.shape);
  c.record_wall_time = j.value("record_wall_time", c.record_wall_time);
  c.dump_targets_csv = j.value("dump_targets_csv", c.dump_targets_csv);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Optimisers

class Optimizer {
 public:
  explicit Optimizer(const TrainConfig& cfg, std::size_t n) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::vector<double>& theta, std::span<const double> grad) {
    if (grad.size() != theta.size()) throw ShapeError("optimizer: gradient length mismatch");
    ++t_;
    if (cfg_.optimizer == OptimizerKind::Sgd) {
      for (std::size_t i = 0; i < theta.size(); ++i) {
        m_[i] = cfg_.momentum * m_[i] + grad[i];
        theta[i] -= cfg_.lr * m_[i];
      }
      return;
    }
    const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
      v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
      theta[i] -= cfg_.lr * ((m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.adam_eps) + cfg_.weight_decay * theta[i]);
    }
  }

 private:
  TrainConfig cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Training

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss = 0.0;
  double i2t = 0.0;
  double t2i = 0.0;
  double h_mean = 0.0;
  double wall_ms = 0.0;
};

inline constexpr const char* kMetricsHeader = "epoch,loss,i2t,t2i,H_mean,wall_ms";

inline std::string metrics_csv(const std::vector<EpochMetrics>& rows) {
  std::ostringstream os;
  os << kMetricsHeader << '\n' << std::setprecision(17);
  for (const auto& m : rows)
    os << m.epoch << ',' << m.loss << ',' << m.i2t << ',' << m.t2i << ',' << m.h_mean << ',' << m.wall_ms << '\n';
  return os.str();
}

struct TrainResult {
  ModelParams params;
  std::vector<EpochMetrics> metrics;  // row 0: loss before the first update of the main phase
  std::vector<EpochMetrics> pretrain_metrics;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, ModelParams last_good)
      : std::runtime_error(what), last_good_(std::move(last_good)) {}
  const ModelParams& last_good() const { return last_good_; }

 private:
  ModelParams last_good_;
};

/// Per-corpus constants reused every step.
struct CorpusCache {
  std::vector<Vec> text;
  std::vector<ClinicalLabelVector> labels;
  std::vector<Vec> graph;

  CorpusCache(const Corpus& corpus, const ModelParams& p) {
    for (const auto& pair : corpus) {
      text.push_back(text_features(pair.report, p.shape.text_token_dim));
      labels.push_back(label_vector(pair.report));
      graph.push_back(encode_graph(pair.report, p));
    }
  }
};

inline Batch assemble_batch(const ModelParams& p, const Corpus& corpus, const CorpusCache& cache,
                            const std::vector<std::size_t>& rows, const HardNegatives& negatives) {
  Batch b;
  b.images = Matrix(rows.size(), p.shape.image_dim);
  b.graph = Matrix(rows.size(), p.shape.embed_dim);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    b.images.set_row(k, corpus[rows[k]].image.values);
    b.texts.push_back(cache.text[rows[k]]);
    b.labels.push_back(cache.labels[rows[k]]);
    b.graph.set_row(k, cache.graph[rows[k]]);
  }
  for (const auto& r : negatives.reports) b.texts.push_back(text_features(r, p.shape.text_token_dim));
  b.negative_source = negatives.source;
  return b;
}

inline Targets step_targets(const ModelParams& p, const Batch& b, const TrainConfig& cfg) {
  const auto e = embed_batch(p, b);
  Matrix paired(b.paired(), p.shape.embed_dim);
  for (std::size_t i = 0; i < b.paired(); ++i) paired.set_row(i, e.v.row(i));
  Targets t = make_targets(paired, b, cfg.effective_hyper(), cfg.clinical_kernel);
  if (!cfg.soft_labels) {
    for (std::size_t i = 0; i < t.i2t.t.rows(); ++i)
      for (std::size_t j = 0; j < t.i2t.t.cols(); ++j)
        if (t.i2t.t(i, j) != (i == j ? 1.0 : 0.0)) throw ContractError("hard-label targets must equal [I|0]");
  }
  return t;
}

inline void check_training_input(const Corpus& corpus, const ModelShape& shape) {
  if (corpus.empty()) throw EmptyCorpusError();
  for (const auto& p : corpus)
    if (p.image.size() != shape.image_dim) throw ShapeError("corpus image features do not match image_dim");
}

/// `init` (optional) replaces the seeded initialisation, e.g. a pretrained checkpoint.
inline TrainResult train(const TrainConfig& cfg, const Corpus& corpus, const ModelParams* init = nullptr) {
  cfg.validate();
  check_training_input(corpus, cfg.shape);
  if (init && !(init->shape == cfg.shape)) throw ShapeError("initial checkpoint shape differs from the config shape");
  std::vector<EpochMetrics> pretrain_metrics;
  std::optional<ModelParams> pretrained;
  if (!init && cfg.pretrain_epochs > 0) {
    TrainConfig pre = cfg;
    pre.name = cfg.name + "/pretrain";
    pre.epochs = cfg.pretrain_epochs;
    pre.pretrain_epochs = 0;
    pre.soft_labels = false;
    pre.hardneg_rate = 0.0;
    pre.dump_targets_csv.clear();
    auto r = train(pre, corpus);
    pretrain_metrics = std::move(r.metrics);
    pretrained = std::move(r.params);
    init = &*pretrained;
  }
  ModelParams params = init ? *init : ModelParams::init(cfg.shape, cfg.seed);
  params.tau = cfg.tau;
  params.hyper = cfg.hyper;
  const CorpusCache cache(corpus, params);

  std::vector<double> theta = flatten(params.weights);
  Optimizer opt(cfg, theta.size());
  TrainResult result;
  ModelParams last_good = params;
  std::size_t global_step = 0;

  for (std::size_t epoch = 0; epoch <= cfg.epochs; ++epoch) {
    const bool update = epoch > 0;
    const auto started = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng = make_rng(cfg.seed, "epoch-order", {epoch});
    seeded_shuffle(order, rng);

    EpochMetrics m;
    m.epoch = epoch;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++steps) {
      const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(std::min(start + cfg.batch_size, order.size())));
      std::vector<Report> reports;
      for (auto r : rows) reports.push_back(corpus[r].report);
      const auto negatives =
          attach_hard_negatives(reports, cfg.hardneg_rate, derive_seed(cfg.seed, "hardneg", {epoch, steps}), cfg.negation);
      const Batch batch = assemble_batch(params, corpus, cache, rows, negatives);
      const Targets targets = step_targets(params, batch, cfg);
      if (!cfg.dump_targets_csv.empty()) dump_targets_csv(cfg.dump_targets_csv, global_step, targets.i2t);

      const LossReport loss = contrastive_loss(params, batch, targets);
      if (!std::isfinite(loss.total))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(steps),
                            last_good);
      last_good.weights = params.weights;
      m.loss += loss.total;
      m.i2t += loss.i2t;
      m.t2i += loss.t2i;
      m.h_mean += static_cast<double>(negatives.count());
      if (update) {
        opt.step(theta, loss.grad);
        unflatten(params.weights, theta);
        ++global_step;
      }
    }
    const double n = static_cast<double>(std::max<std::size_t>(steps, 1));
    m.loss /= n;
    m.i2t /= n;
    m.t2i /= n;
    m.h_mean /= n;
    if (cfg.record_wall_time)
      m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    log::info(cfg.name, " epoch ", epoch, " loss ", m.loss);
    result.metrics.push_back(m);
  }
  result.params = std::move(params);
  result.pretrain_metrics = std::move(pretrain_metrics);
  return result;
}

}  // namespace softneg
