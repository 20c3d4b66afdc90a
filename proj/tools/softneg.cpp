// softneg command-line entry point.
//
//   softneg gen-corpus --n 100 --seed 1 --out-dir runs/corpus
//   softneg train --corpus runs/corpus/corpus.jsonl --out-dir runs/train
//   softneg gen-align --corpus runs/corpus/corpus.jsonl --out-dir runs/align
//   softneg eval --checkpoint runs/train/checkpoint.json --out-dir runs/eval
//   softneg ablate --configs 4 --out-dir runs/ablate
//   softneg grad-check --seed 7
//
// Exit codes: 0 success, 1 runtime failure, 2 bad flags.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "softneg/softneg.hpp"

#ifndef SOFTNEG_VERSION
#define SOFTNEG_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace softneg;

namespace {

struct EvalSettings {
  std::size_t n_reports = 2000;
  std::size_t normal_candidates = 999;
  std::size_t normal_images = 500;
  std::string adversarial_a = "Atelectasis";
  std::string adversarial_b = "Pleural Effusion";
};

struct AblationSettings {
  std::size_t n_reports = 2000;
  std::size_t eval_reports = 2000;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  double hardneg_rate = 0.5;
};

struct Settings {
  std::string preset = "desk";
  CorpusSpec corpus{};
  TrainConfig train{};
  EvalSettings eval{};
  AblationSettings ablation{};
};

Settings preset_settings(const std::string& name) {
  Settings s;
  s.preset = name;
  if (name == "full") {
    s.train = TrainConfig::full();
  } else if (name != "desk") {
    throw std::invalid_argument("unknown preset " + name);
  }
  return s;
}

void overlay(Settings& s, const nlohmann::json& j) {
  if (j.contains("corpus")) s.corpus = corpus_spec_from_json(j.at("corpus"), s.corpus);
  if (j.contains("train")) s.train = train_config_from_json(j.at("train"), s.train);
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    s.eval.n_reports = e.value("n_reports", s.eval.n_reports);
    s.eval.normal_candidates = e.value("normal_candidates", s.eval.normal_candidates);
    s.eval.normal_images = e.value("normal_images", s.eval.normal_images);
    s.eval.adversarial_a = e.value("adversarial_a", s.eval.adversarial_a);
    s.eval.adversarial_b = e.value("adversarial_b", s.eval.adversarial_b);
  }
  if (j.contains("ablation")) {
    const auto& a = j.at("ablation");
    s.ablation.n_reports = a.value("n_reports", s.ablation.n_reports);
    s.ablation.eval_reports = a.value("eval_reports", s.ablation.eval_reports);
    s.ablation.seeds = a.value("seeds", s.ablation.seeds);
    s.ablation.hardneg_rate = a.value("hardneg_rate", s.ablation.hardneg_rate);
  }
}

ordered_json to_json(const Settings& s) {
  return ordered_json{{"preset", s.preset},
                      {"corpus", softneg::to_json(s.corpus)},
                      {"train", softneg::to_json(s.train)},
                      {"eval",
                       {{"n_reports", s.eval.n_reports},
                        {"normal_candidates", s.eval.normal_candidates},
                        {"normal_images", s.eval.normal_images},
                        {"adversarial_a", s.eval.adversarial_a},
                        {"adversarial_b", s.eval.adversarial_b}}},
                      {"ablation",
                       {{"n_reports", s.ablation.n_reports},
                        {"eval_reports", s.ablation.eval_reports},
                        {"seeds", s.ablation.seeds},
                        {"hardneg_rate", s.ablation.hardneg_rate}}}};
}

std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

/// Collects artifacts and writes them, then the manifest, under one directory.
class OutputDir {
 public:
  explicit OutputDir(fs::path dir) : dir_(std::move(dir)) {}

  void write(const std::string& name, const std::string& content) {
    write_new_file(dir_ / name, content);
    artifacts_.push_back(
        ordered_json{{"name", name}, {"bytes", content.size()}, {"fnv1a64", hex64(fnv1a64(content))}});
  }

  void finish(const std::string& command, std::uint64_t seed, const ordered_json& config,
              const ordered_json& inputs) {
    const std::string cfg_text = config.dump();
    ordered_json m{{"tool", "softneg"},
                   {"version", SOFTNEG_VERSION},
                   {"command", command},
                   {"seed", seed},
                   {"config_hash", hex64(fnv1a64(cfg_text))},
                   {"config", config},
                   {"inputs", inputs},
                   {"artifacts", artifacts_},
                   {"versions",
                    {{"compiler", __VERSION__},
                     {"nlohmann_json",
                      std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                          "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                     {"cli11", CLI11_VERSION}}}};
    write_new_file(dir_ / "manifest.json", m.dump(1) + "\n");
  }

  const fs::path& path() const { return dir_; }

 private:
  fs::path dir_;
  ordered_json artifacts_ = ordered_json::array();
};

ordered_json input_record(const fs::path& p) {
  const std::string content = read_file(p);
  return ordered_json{{"path", p.string()}, {"fnv1a64", hex64(fnv1a64(content))}};
}

EntityId entity_arg(const std::string& name) {
  const auto e = entity_from_name(name);
  if (!e || *e == entity::NoFindings) throw std::invalid_argument("unknown finding: " + name);
  return *e;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Soft-label contrastive learning with negation hard negatives on synthetic chest X-ray data"};
  app.set_version_flag("--version", SOFTNEG_VERSION);
  app.require_subcommand(1);
  app.fallthrough();

  std::uint64_t seed = 1;
  std::string out_dir;
  std::string config_path;
  std::size_t threads = 1;
  std::string preset = "desk";
  auto* seed_opt = app.add_option("--seed", seed, "Base seed for all randomness")->capture_default_str();
  app.add_option("--out-dir", out_dir, "Directory for artifacts (default ./softneg-<command>)");
  app.add_option("--config", config_path, "JSON config file with corpus/train/eval/ablation sections")
      ->check(CLI::ExistingFile);
  app.add_option("--threads", threads, "Worker cap for evaluation and ablation")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--preset", preset, "Built-in defaults")->check(CLI::IsMember({"desk", "full"}))->capture_default_str();

  // gen-corpus
  auto* gen = app.add_subcommand("gen-corpus", "Generate a synthetic report/image corpus (corpus.jsonl)");
  std::optional<std::size_t> n_reports;
  std::optional<double> normal_fraction, duplicate_mass;
  bool dedup = false;
  gen->add_option("--n", n_reports, "Number of pairs");
  gen->add_option("--normal-fraction", normal_fraction, "Share of normal reports")->check(CLI::Range(0.0, 1.0));
  gen->add_option("--duplicate-mass", duplicate_mass, "Share of normals that are templated duplicates")
      ->check(CLI::Range(0.0, 1.0));
  gen->add_flag("--dedup", dedup, "Drop byte-identical reports after generation");

  // train
  auto* trn = app.add_subcommand("train", "Train the two towers (checkpoint.json, metrics.csv)");
  std::string corpus_path;
  std::optional<std::size_t> epochs, pretrain_epochs, batch_size;
  std::optional<double> lr, hardneg_rate;
  bool hard_labels = false;
  std::string dump_targets;
  trn->add_option("--corpus", corpus_path, "corpus.jsonl to train on (default: generate one)")->check(CLI::ExistingFile);
  trn->add_option("--n", n_reports, "Pairs to generate when --corpus is absent");
  trn->add_option("--epochs", epochs, "Main-phase epochs");
  trn->add_option("--pretrain-epochs", pretrain_epochs, "Hard-label warm-start epochs");
  trn->add_option("--batch-size", batch_size, "Batch size")->check(CLI::PositiveNumber);
  trn->add_option("--lr", lr, "Learning rate")->check(CLI::PositiveNumber);
  trn->add_option("--hardneg-rate", hardneg_rate, "Share of eligible rows given a negated copy")->check(CLI::Range(0.0, 1.0));
  trn->add_flag("--hard-labels", hard_labels, "One-hot targets instead of soft labels");
  trn->add_option("--dump-targets", dump_targets, "Append every step's target matrix to this CSV file");

  // gen-align
  auto* aln = app.add_subcommand("gen-align", "Generate negation-alignment triplets (triplets.jsonl)");
  aln->add_option("--corpus", corpus_path, "Source corpus.jsonl (default: generate one)")->check(CLI::ExistingFile);
  aln->add_option("--n", n_reports, "Pairs to generate when --corpus is absent");

  // eval
  auto* evl = app.add_subcommand("eval", "Run the five evaluation protocols (CSV tables)");
  std::string checkpoint_path, triplets_path, model_kind = "checkpoint";
  evl->add_option("--checkpoint", checkpoint_path, "Trained checkpoint.json")->check(CLI::ExistingFile);
  evl->add_option("--model", model_kind, "checkpoint, oracle or random")
      ->check(CLI::IsMember({"checkpoint", "oracle", "random"}))
      ->capture_default_str();
  evl->add_option("--corpus", corpus_path, "Held-out corpus.jsonl (default: generate one)")->check(CLI::ExistingFile);
  evl->add_option("--triplets", triplets_path, "triplets.jsonl (default: derived from the held-out corpus)")
      ->check(CLI::ExistingFile);
  evl->add_option("--n", n_reports, "Held-out pairs to generate when --corpus is absent");

  // ablate
  auto* abl = app.add_subcommand("ablate", "Train the ablation arms and score negation alignment (ablation.csv)");
  std::size_t n_configs = 4;
  abl->add_option("--configs", n_configs, "Number of arms: hard-labels, soft, hardneg, soft+hardneg")
      ->check(CLI::Range(1, 4))
      ->capture_default_str();
  abl->add_option("--n", n_reports, "Training pairs per seed");
  abl->add_option("--epochs", epochs, "Main-phase epochs");

  // grad-check
  auto* gck = app.add_subcommand("grad-check", "Compare analytic and central-difference gradients");
  double epsilon = 1e-5, tolerance = 1e-4;
  std::size_t max_coords = 0, gc_batch = 16;
  gck->add_option("--epsilon", epsilon, "Finite-difference step")->check(CLI::Range(1e-7, 1e-3))->capture_default_str();
  gck->add_option("--tolerance", tolerance, "Pass threshold on max relative error")->capture_default_str();
  gck->add_option("--coords", max_coords, "Coordinates to check (0 = all)")->capture_default_str();
  gck->add_option("--batch-size", gc_batch, "Batch size")->check(CLI::PositiveNumber)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    Settings s = preset_settings(preset);
    if (!config_path.empty()) overlay(s, nlohmann::json::parse(read_file(config_path)));
    if (seed_opt->count() || config_path.empty()) {
      s.corpus.seed = seed;
      s.train.seed = seed;
      s.ablation.seeds = {seed, seed + 1, seed + 2};
    } else {
      seed = s.train.seed;
    }

    CLI::App* sub = app.get_subcommands().front();
    const std::string command = sub->get_name();
    OutputDir out(out_dir.empty() ? fs::path("softneg-" + command) : fs::path(out_dir));
    ordered_json inputs = ordered_json::object();

    auto corpus_from_flags = [&](std::uint64_t corpus_seed, std::size_t default_n) {
      if (!corpus_path.empty()) {
        inputs["corpus"] = input_record(corpus_path);
        return load_corpus(corpus_path);
      }
      CorpusSpec spec = s.corpus;
      spec.seed = corpus_seed;
      spec.n_reports = n_reports.value_or(default_n);
      return generate_corpus(spec);
    };

    if (command == "gen-corpus") {
      if (n_reports) s.corpus.n_reports = *n_reports;
      if (normal_fraction) s.corpus.normal_fraction = *normal_fraction;
      if (duplicate_mass) s.corpus.duplicate_mass = *duplicate_mass;
      Corpus corpus = generate_corpus(s.corpus);
      if (dedup) corpus = deduplicate(corpus);
      out.write("corpus.jsonl", to_jsonl(corpus));
      ordered_json cfg{{"corpus", softneg::to_json(s.corpus)}, {"dedup", dedup}};
      out.finish(command, seed, cfg, inputs);
      std::cout << "wrote " << corpus.size() << " pairs to " << (out.path() / "corpus.jsonl").string() << "\n";
    } else if (command == "train") {
      if (epochs) s.train.epochs = *epochs;
      if (pretrain_epochs) s.train.pretrain_epochs = *pretrain_epochs;
      if (batch_size) s.train.batch_size = *batch_size;
      if (lr) s.train.lr = *lr;
      if (hardneg_rate) s.train.hardneg_rate = *hardneg_rate;
      if (hard_labels) s.train.soft_labels = false;
      if (!dump_targets.empty()) {
        if (fs::exists(dump_targets)) throw std::runtime_error("refusing to overwrite " + dump_targets);
        s.train.dump_targets_csv = dump_targets;
      }
      s.train.validate();
      const Corpus corpus = corpus_from_flags(s.corpus.seed, s.corpus.n_reports);
      const auto result = train(s.train, corpus);
      out.write("checkpoint.json", checkpoint_text(result.params));
      out.write("metrics.csv", metrics_csv(result.metrics));
      if (!result.pretrain_metrics.empty()) out.write("pretrain_metrics.csv", metrics_csv(result.pretrain_metrics));
      out.write("train_config.json", softneg::to_json(s.train).dump(1) + "\n");
      ordered_json cfg{{"train", softneg::to_json(s.train)}};
      if (corpus_path.empty()) cfg["corpus"] = softneg::to_json(s.corpus);
      out.finish(command, seed, cfg, inputs);
      std::cout << "loss " << result.metrics.front().loss << " -> " << result.metrics.back().loss << "\n";
    } else if (command == "gen-align") {
      const Corpus corpus = corpus_from_flags(s.corpus.seed, s.corpus.n_reports);
      const auto triplets = generate_align_set(corpus, seed);
      out.write("triplets.jsonl", to_jsonl(triplets));
      ordered_json cfg = ordered_json::object();
      if (corpus_path.empty()) cfg["corpus"] = softneg::to_json(s.corpus);
      out.finish(command, seed, cfg, inputs);
      std::cout << "wrote " << triplets.size() << " triplets\n";
    } else if (command == "eval") {
      const Corpus test = corpus_from_flags(derive_seed(seed, "eval-corpus"), s.eval.n_reports);
      std::vector<AlignTriplet> triplets;
      if (!triplets_path.empty()) {
        inputs["triplets"] = input_record(triplets_path);
        triplets = load_triplets(triplets_path);
      } else {
        triplets = generate_align_set(test, derive_seed(seed, "eval-align"));
      }
      const auto a = entity_arg(s.eval.adversarial_a);
      const auto b = entity_arg(s.eval.adversarial_b);

      auto run = [&](const auto& model) {
        const auto images = labeled_images(test);
        std::vector<Report> gallery;
        for (const auto& p : test) gallery.push_back(p.report);
        const auto align = eval_align(model, triplets, threads);
        const auto zs = eval_zeroshot(model, images, threads);
        const auto ret = eval_retrieval(model, images, gallery, threads);
        const auto nd = eval_normal_detection(
            model, make_normal_detection_set(test, s.eval.normal_candidates, s.eval.normal_images), threads);
        const auto adv = eval_adversarial(model, adversarial_testset(test, a, b), a, b, threads);
        out.write("align.csv", align_csv(align));
        out.write("zeroshot.csv", zeroshot_csv(zs));
        out.write("retrieval.csv", retrieval_csv(ret));
        out.write("normal_detection.csv", normal_detection_csv(nd));
        out.write("adversarial.csv", adversarial_csv(adv));
        std::cout << "align " << align.overall.accuracy() << " zeroshot_auc " << zs.mean_auc() << " retrieval_f1 "
                  << ret.macro_f1 << " normal_median_rank " << nd.median_rank << "\n";
      };
      ordered_json cfg{{"model", model_kind}, {"eval", to_json(s)["eval"]}};
      if (model_kind == "checkpoint") {
        if (checkpoint_path.empty()) throw CLI::RequiredError("--checkpoint");
        inputs["checkpoint"] = input_record(checkpoint_path);
        run(ParamsModel(load_checkpoint(checkpoint_path)));
      } else if (model_kind == "oracle") {
        run(OracleModel(s.corpus.features));
      } else {
        ModelParams p = ModelParams::init(s.train.shape, derive_seed(seed, "random-model"));
        p.tau = s.train.tau;
        run(ParamsModel(p));
      }
      if (corpus_path.empty()) cfg["corpus"] = softneg::to_json(s.corpus);
      out.finish(command, seed, cfg, inputs);
    } else if (command == "ablate") {
      if (n_reports) s.ablation.n_reports = *n_reports;
      if (epochs) s.train.epochs = *epochs;
      AblationSetup setup;
      setup.train_corpus = s.corpus;
      setup.train_corpus.n_reports = s.ablation.n_reports;
      setup.eval_reports = s.ablation.eval_reports;
      setup.seeds = s.ablation.seeds;
      setup.configs = standard_ablation_configs(s.train, n_configs, s.ablation.hardneg_rate);
      setup.threads = threads;
      const auto rows = run_ablation(setup);
      out.write("ablation.csv", ablation_csv(rows, setup.seeds));
      ordered_json cfg{{"configs", n_configs},
                       {"corpus", softneg::to_json(setup.train_corpus)},
                       {"train", softneg::to_json(s.train)},
                       {"ablation", to_json(s)["ablation"]}};
      out.finish(command, seed, cfg, inputs);
      std::cout << ablation_csv(rows, setup.seeds);
    } else if (command == "grad-check") {
      CorpusSpec spec = s.corpus;
      spec.n_reports = gc_batch;
      const Corpus corpus = generate_corpus(spec);
      ModelParams p = ModelParams::init(s.train.shape, seed);
      p.tau = s.train.tau;
      p.hyper = s.train.hyper;
      std::vector<Report> reports;
      std::vector<ImageFeature> images;
      for (const auto& x : corpus) {
        reports.push_back(x.report);
        images.push_back(x.image);
      }
      const auto negatives = attach_hard_negatives(reports, s.train.hardneg_rate, derive_seed(seed, "gradcheck-hardneg"));
      const Batch batch = make_batch(p, reports, images, negatives);
      const auto r = gradient_check(p, batch, epsilon, max_coords, seed);
      std::ostringstream os;
      os << std::setprecision(17) << "seed,epsilon,checked,max_rel_error,worst_tensor,analytic,numeric,passed\n"
         << seed << ',' << epsilon << ',' << r.checked << ',' << r.max_rel_error << ','
         << tensor_of(p.weights, r.worst_coordinate) << ',' << r.analytic_at_worst << ',' << r.numeric_at_worst << ','
         << (r.passed(tolerance) ? 1 : 0) << '\n';
      if (!out_dir.empty()) {
        out.write("gradcheck.csv", os.str());
        out.finish(command, seed, ordered_json{{"epsilon", epsilon}, {"coords", max_coords}, {"batch_size", gc_batch}},
                   inputs);
      }
      std::cout << "max relative error " << r.max_rel_error << " over " << r.checked << " coordinates ("
                << (r.passed(tolerance) ? "pass" : "FAIL") << ")\n";
      return r.passed(tolerance) ? 0 : 1;
    }
    return 0;
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
