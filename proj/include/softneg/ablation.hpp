#pragma once

// Ablation matrix: the same corpus and seeds trained under several target /
// hard-negative settings, scored on negation-alignment triplets from a held-out
// corpus.

#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "softneg/benchmark.hpp"
#include "softneg/corpus.hpp"
#include "softneg/parallel.hpp"
#include "softneg/trainer.hpp"

namespace softneg {

/// hard-labels, soft, hardneg, soft+hardneg; the first `n` (1..4) of them.
inline std::vector<TrainConfig> standard_ablation_configs(const TrainConfig& base, std::size_t n = 4,
                                                          double hardneg_rate = 0.5) {
  if (n == 0 || n > 4) throw std::invalid_argument("ablation supports 1 to 4 configs");
  std::vector<TrainConfig> out;
  auto add = [&](const char* name, bool soft, double rate) {
    TrainConfig c = base;
    c.name = name;
    c.soft_labels = soft;
    c.hardneg_rate = rate;
    out.push_back(c);
  };
  add("hard-labels", false, 0.0);
  add("soft", true, 0.0);
  add("hardneg", false, hardneg_rate);
  add("soft+hardneg", true, hardneg_rate);
  out.resize(n);
  return out;
}

struct AblationSetup {
  CorpusSpec train_corpus{};
  std::size_t eval_reports = 2000;  // held-out corpus that yields the triplets
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<TrainConfig> configs;
  std::size_t threads = 1;
};

struct AblationRow {
  std::string name;
  std::vector<double> accuracy;  // per seed
  std::vector<std::size_t> triplets;
  double mean() const {
    double s = 0.0;
    for (double a : accuracy) s += a;
    return accuracy.empty() ? 0.0 : s / static_cast<double>(accuracy.size());
  }
};

/// Training corpus uses the run seed; the evaluation corpus a seed derived from it.
inline CorpusSpec ablation_eval_spec(const AblationSetup& s, std::uint64_t seed) {
  CorpusSpec e = s.train_corpus;
  e.n_reports = s.eval_reports;
  e.seed = derive_seed(seed, "ablation-eval");
  return e;
}

inline std::vector<AblationRow> run_ablation(const AblationSetup& setup) {
  if (setup.configs.empty()) throw std::invalid_argument("ablation needs at least one config");
  if (setup.seeds.empty()) throw std::invalid_argument("ablation needs at least one seed");
  const std::size_t n_seed = setup.seeds.size();

  std::vector<Corpus> train_sets(n_seed);
  std::vector<std::vector<AlignTriplet>> triplet_sets(n_seed);
  for (std::size_t s = 0; s < n_seed; ++s) {
    CorpusSpec t = setup.train_corpus;
    t.seed = setup.seeds[s];
    train_sets[s] = generate_corpus(t);
    const Corpus held_out = generate_corpus(ablation_eval_spec(setup, setup.seeds[s]));
    triplet_sets[s] = generate_align_set(held_out, derive_seed(setup.seeds[s], "ablation-align"));
  }

  std::vector<AblationRow> rows(setup.configs.size());
  for (std::size_t c = 0; c < rows.size(); ++c) {
    rows[c].name = setup.configs[c].name;
    rows[c].accuracy.resize(n_seed);
    rows[c].triplets.resize(n_seed);
  }
  // each run writes its own slot
  parallel_for(rows.size() * n_seed, setup.threads, [&](std::size_t k) {
    const std::size_t c = k / n_seed;
    const std::size_t s = k % n_seed;
    TrainConfig cfg = setup.configs[c];
    cfg.seed = setup.seeds[s];
    const auto trained = train(cfg, train_sets[s]);
    const auto rep = eval_align(ParamsModel(trained.params), triplet_sets[s]);
    rows[c].accuracy[s] = rep.overall.accuracy();
    rows[c].triplets[s] = rep.overall.n;
  });
  return rows;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows, const std::vector<std::uint64_t>& seeds) {
  std::ostringstream os;
  os << "config";
  for (auto s : seeds) os << ",acc_seed" << s;
  os << ",mean\n" << std::setprecision(6) << std::fixed;
  for (const auto& r : rows) {
    os << r.name;
    for (double a : r.accuracy) os << ',' << a;
    os << ',' << r.mean() << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Duplicate robustness: soft labels on a duplicate-heavy corpus against hard
// labels on its deduplicated copy, scored by normal-report retrieval rank.

struct DuplicateSetup {
  CorpusSpec train_corpus = [] {
    CorpusSpec c;
    c.n_reports = 2000;
    c.normal_fraction = 0.6;
    c.duplicate_mass = 0.9;
    return c;
  }();
  std::size_t eval_reports = 4000;
  std::size_t abnormal_candidates = 999;
  std::size_t normal_images = 500;
  TrainConfig base{};
};

struct DuplicateRun {
  std::uint64_t seed = 0;
  double duplicate_fraction = 0.0;  // share of templated normals in the training corpus
  std::size_t dedup_size = 0;
  NormalDetectionReport soft;
  NormalDetectionReport dedup_baseline;
};

inline DuplicateRun run_duplicate_robustness(const DuplicateSetup& setup, std::uint64_t seed) {
  CorpusSpec spec = setup.train_corpus;
  spec.seed = seed;
  const Corpus corpus = generate_corpus(spec);
  const Corpus dedup = deduplicate(corpus);
  CorpusSpec eval_spec = setup.train_corpus;
  eval_spec.n_reports = setup.eval_reports;
  eval_spec.seed = derive_seed(seed, "duplicate-eval");
  const auto eval_set =
      make_normal_detection_set(generate_corpus(eval_spec), setup.abnormal_candidates, setup.normal_images);

  TrainConfig soft = setup.base;
  soft.name = "soft-duplicates";
  soft.seed = seed;
  soft.soft_labels = true;
  soft.hardneg_rate = 0.0;
  TrainConfig hard = soft;
  hard.name = "hard-dedup";
  hard.soft_labels = false;

  DuplicateRun run;
  run.seed = seed;
  std::size_t dup = 0;
  for (const auto& p : corpus) dup += p.report.is_templated_normal ? 1 : 0;
  run.duplicate_fraction = static_cast<double>(dup) / static_cast<double>(corpus.size());
  run.dedup_size = dedup.size();
  run.soft = eval_normal_detection(ParamsModel(train(soft, corpus).params), eval_set);
  run.dedup_baseline = eval_normal_detection(ParamsModel(train(hard, dedup).params), eval_set);
  return run;
}

}  // namespace softneg
