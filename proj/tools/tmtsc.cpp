#include "run_manifest.hpp"

#include "tmtsc/config.hpp"
#include "tmtsc/data/pipeline.hpp"
#include "tmtsc/data/schema.hpp"
#include "tmtsc/errors.hpp"
#include "tmtsc/evaluation/metrics.hpp"
#include "tmtsc/evaluation/report.hpp"
#include "tmtsc/io.hpp"
#include "tmtsc/models/checkpoint.hpp"
#include "tmtsc/portfolio/simulate.hpp"
#include "tmtsc/synthetic/generator.hpp"
#include "tmtsc/training/benchmark.hpp"
#include "tmtsc/training/train.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace tmtsc::cli {
namespace {

constexpr const char* kSeedVariable = "TMTSC_SEED";
constexpr const char* kPanelsFormat = "tmtsc-panels/1";

int exit_code(ErrorKind kind) { return 10 + static_cast<int>(kind); }

std::uint64_t default_seed() {
  const char* env = std::getenv(kSeedVariable);
  if (env == nullptr || *env == '\0') return 0;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(env, &used);
    if (used == std::string_view(env).size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::configuration, fmt::format("{}='{}' is not an unsigned integer", kSeedVariable, env));
}

// Output directories belong to one run.
void claim_directory(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw Error(ErrorKind::io, dir.string() + " exists and is not a directory");
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw Error(ErrorKind::io, dir.string() + " is not empty; pass --force to overwrite");
  }
  fs::create_directories(dir);
}

void require_file(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::missing_file, "no such file or directory: " + path.string());
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

// ---- panel directories ------------------------------------------------------

struct PanelDir {
  fs::path dir;
  Task task = Task::vc;
  CategoryVocabulary vocabulary;
  DatasetSplit split;
};

fs::path part_file(const fs::path& dir, std::string_view part) { return dir / fmt::format("{}.jsonl", part); }

PanelDir load_panel_dir(const fs::path& dir, RunManifest& manifest) {
  require_file(dir);
  const fs::path meta_path = dir / "prepare.json";
  const json meta = read_json(meta_path);
  PanelDir out;
  out.dir = dir;
  try {
    if (meta.at("format").get<std::string>() != kPanelsFormat) throw Error(ErrorKind::validation, "unknown panel format");
    const auto hash = meta.at("schema_hash").get<std::string>();
    if (hash != schema_hash()) {
      throw Error(ErrorKind::schema_mismatch, fmt::format("panels in {} use feature schema {}, this build uses {}",
                                                          dir.string(), hash, schema_hash()));
    }
    out.task = parse_task(meta.at("task").get<std::string>());
    out.split.seed = meta.at("seed").get<std::uint64_t>();
    const json vocab = read_json(dir / "vocabulary.json");
    out.vocabulary.feature = vocab.at("feature").get<std::string>();
    out.vocabulary.categories = vocab.at("categories").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::validation, fmt::format("{}: {}", meta_path.string(), e.what()));
  }
  manifest.add_input(meta_path);
  auto load_part = [&](std::string_view part, std::vector<CompanyPanel>& into, bool optional) {
    const fs::path p = part_file(dir, part);
    if (optional && !fs::exists(p)) return;
    into = load_panels(p);
    manifest.add_input(p);
  };
  load_part("train", out.split.train, false);
  load_part("validation", out.split.validation, true);
  load_part("test", out.split.test, false);
  return out;
}

std::vector<int> labels_of(std::span<const CompanyPanel> panels, Task task) {
  std::vector<int> y;
  y.reserve(panels.size());
  for (const auto& p : panels) y.push_back(label_of(p, task));
  return y;
}

// ---- configuration files ----------------------------------------------------

struct RunConfig {
  json model = json::object();
  json training = json::object();
};

RunConfig load_run_config(const std::optional<fs::path>& path, RunManifest& manifest) {
  RunConfig rc;
  if (!path) return rc;
  const json j = load_config_file(*path);
  manifest.add_input(*path);
  if (!j.is_object()) throw Error(ErrorKind::configuration, path->string() + ": expected a table");
  for (const auto& [key, value] : j.items()) {
    if (key == "model") rc.model = value;
    else if (key == "training") rc.training = value;
    else throw Error(ErrorKind::configuration, fmt::format("{}: unknown section '{}'", path->string(), key));
  }
  return rc;
}

ModelConfig model_for(ModelKind kind, const PanelDir& panels, const json& overrides) {
  ModelConfig m;
  m.kind = kind;
  m.vocab_size = panels.vocabulary.size();
  m = model_config_from_json(overrides, m);
  if (m.kind != kind) throw Error(ErrorKind::configuration, "model section names a different model than --model");
  m.validate();
  return m;
}

// ---- commands ---------------------------------------------------------------

struct Common {
  std::vector<std::string> argv;
  std::optional<std::uint64_t> seed;
  bool force = false;

  [[nodiscard]] std::uint64_t seed_or(std::optional<std::uint64_t> fallback) const {
    if (seed) return *seed;
    if (fallback) return *fallback;
    return default_seed();
  }
};

struct SynthArgs {
  std::optional<fs::path> config;
  fs::path out;
};

void cmd_synth(const SynthArgs& a, const Common& c) {
  RunManifest manifest("synth", c.argv);
  SynthConfig sc;
  std::optional<std::uint64_t> config_seed;
  if (a.config) {
    const json j = load_config_file(*a.config);
    manifest.add_input(*a.config);
    sc = synth_config_from_json(j);
    if (j.contains("seed")) config_seed = sc.seed;
  }
  sc.seed = c.seed_or(config_seed);
  sc.validate();
  manifest.set_seed(sc.seed);
  manifest.set_config(to_json(sc));
  const auto records = generate(sc);
  save_dataset(a.out, records);
  manifest.add_output(a.out);
  manifest.note("companies", records.size());
  spdlog::info("wrote {} companies to {}", records.size(), a.out.string());
  manifest.write(fs::path(a.out) += ".run.json");
}

struct PrepareArgs {
  fs::path data;
  std::string task = "vc";
  std::string split = "0.73/0.13/0.14";
  fs::path out;
};

void cmd_prepare(const PrepareArgs& a, const Common& c) {
  RunManifest manifest("prepare", c.argv);
  const Task task = parse_task(a.task);
  const SplitFractions fractions = parse_split(a.split);
  const std::uint64_t seed = c.seed_or(std::nullopt);
  manifest.set_seed(seed);
  manifest.set_config({{"task", a.task}, {"split", {fractions.train, fractions.validation, fractions.test}}});
  require_file(a.data);
  const auto records = load_dataset(a.data);
  manifest.add_input(a.data);
  claim_directory(a.out, c.force);

  const PreparedData prepared = prepare_dataset(records, fractions, seed);
  const auto& s = prepared.split;
  auto write_part = [&](std::string_view part, const std::vector<CompanyPanel>& panels) {
    const fs::path p = part_file(a.out, part);
    save_panels(p, panels);
    manifest.add_output(p);
  };
  write_part("train", s.train);
  if (s.validation.empty()) {
    fs::remove(part_file(a.out, "validation"));
    spdlog::warn("validation part is empty; no validation file written and training will use the final epoch");
    manifest.note("warning", "empty validation part");
  } else {
    write_part("validation", s.validation);
  }
  write_part("test", s.test);

  write_json(a.out / "vocabulary.json",
             {{"feature", prepared.vocabulary.feature}, {"categories", prepared.vocabulary.categories}});
  manifest.add_output(a.out / "vocabulary.json");

  auto ids = [](const std::vector<CompanyPanel>& panels) {
    std::vector<std::string> out;
    for (const auto& p : panels) out.push_back(p.company_id);
    return out;
  };
  write_json(a.out / "split.json", {{"seed", seed},
                                    {"fractions", {fractions.train, fractions.validation, fractions.test}},
                                    {"train", ids(s.train)},
                                    {"validation", ids(s.validation)},
                                    {"test", ids(s.test)}});
  manifest.add_output(a.out / "split.json");

  auto counts = [&](const std::vector<CompanyPanel>& panels) {
    const auto y = labels_of(panels, task);
    return json{{"companies", panels.size()}, {"positive", std::count(y.begin(), y.end(), 1)}};
  };
  write_json(a.out / "prepare.json", {{"format", kPanelsFormat},
                                      {"schema_hash", schema_hash()},
                                      {"task", std::string(to_string(task))},
                                      {"seed", seed},
                                      {"records_in", records.size()},
                                      {"train", counts(s.train)},
                                      {"validation", counts(s.validation)},
                                      {"test", counts(s.test)}});
  manifest.add_output(a.out / "prepare.json");
  spdlog::info("{} records -> train {}, validation {}, test {}", records.size(), s.train.size(), s.validation.size(),
               s.test.size());
  manifest.write(a.out / "run.json");
}

struct TrainArgs {
  fs::path panels;
  std::string model = "tmtsc";
  std::optional<fs::path> config;
  std::optional<int> epochs;
  fs::path out;
};

void cmd_train(const TrainArgs& a, const Common& c) {
  RunManifest manifest("train", c.argv);
  const PanelDir panels = load_panel_dir(a.panels, manifest);
  const RunConfig rc = load_run_config(a.config, manifest);
  const ModelConfig model = model_for(parse_model_kind(a.model), panels, rc.model);
  TrainConfig tc;
  tc.task = panels.task;
  tc = train_config_from_json(rc.training, tc);
  tc.seed = c.seed_or(rc.training.contains("seed") ? std::optional(tc.seed) : std::nullopt);
  if (a.epochs) tc.max_epochs = *a.epochs;
  tc.validate();
  manifest.set_seed(tc.seed);
  const json snapshot{{"model", to_json(model)}, {"training", to_json(tc)}};
  manifest.set_config(snapshot);
  claim_directory(a.out, c.force);

  spdlog::info("training {} on {} companies ({} validation)", display_name(model.kind), panels.split.train.size(),
               panels.split.validation.size());
  const FitResult result = fit(model, init_params(model, tc.seed), panels.split.train, panels.split.validation, tc,
                               [](const EpochRecord& e) {
                                 spdlog::info("epoch {:3d}  loss {:.5f}  validation AUC {}", e.epoch, e.train_loss,
                                              e.validation_auc ? fmt::format("{:.4f}", *e.validation_auc) : "n/a");
                                 return true;
                               });
  manifest.mark("fit_seconds");
  manifest.note("seconds_per_step", result.report.seconds_per_step);

  save_checkpoint(a.out, Checkpoint{model, panels.vocabulary, tc.task, result.params});
  manifest.add_output(a.out / "manifest.json");
  manifest.add_output(a.out / "params.bin");
  write_json(a.out / "train_report.json", to_json(result.report, false));
  manifest.add_output(a.out / "train_report.json");
  write_json(a.out / "train_config.json", snapshot);
  manifest.add_output(a.out / "train_config.json");
  manifest.write(a.out / "run.json");
}

struct LoadedModel {
  fs::path dir;
  Checkpoint checkpoint;
  std::string name;
};

LoadedModel load_model(const fs::path& dir, const PanelDir& panels, RunManifest& manifest) {
  require_file(dir);
  LoadedModel m{dir, load_checkpoint(dir), {}};
  manifest.add_input(dir / "manifest.json");
  manifest.add_input(dir / "params.bin");
  if (m.checkpoint.vocabulary != panels.vocabulary) {
    throw Error(ErrorKind::validation,
                fmt::format("checkpoint {} was trained with another round_type vocabulary than {}", dir.string(),
                            panels.dir.string()));
  }
  if (m.checkpoint.task && *m.checkpoint.task != panels.task) {
    spdlog::warn("checkpoint {} was trained for {}, panels are prepared for {}", dir.string(),
                 to_string(*m.checkpoint.task), to_string(panels.task));
  }
  m.name = std::string(display_name(m.checkpoint.config.kind));
  return m;
}

struct EvalArgs {
  fs::path panels;
  fs::path checkpoint;
  int seeds = 1;
  double threshold = 0.5;
  fs::path out;
};

void cmd_eval(const EvalArgs& a, const Common& c) {
  RunManifest manifest("eval", c.argv);
  const PanelDir panels = load_panel_dir(a.panels, manifest);
  LoadedModel loaded = load_model(a.checkpoint, panels, manifest);
  const Task task = loaded.checkpoint.task.value_or(panels.task);
  const auto& test = panels.split.test;
  const auto labels = labels_of(test, task);
  claim_directory(a.out, c.force);

  SeededScorer scorer;
  std::uint64_t first_seed = 0;
  if (a.seeds == 1) {
    scorer = [&](std::uint64_t) { return predict_scores(loaded.checkpoint.params, loaded.checkpoint.config, test, task); };
  } else {
    // More than one seed retrains the checkpoint's configuration per seed.
    const fs::path cfg_path = a.checkpoint / "train_config.json";
    const json cfg = read_json(cfg_path);
    manifest.add_input(cfg_path);
    TrainConfig tc = train_config_from_json(cfg.at("training"));
    first_seed = c.seed_or(tc.seed);
    const ModelConfig model = loaded.checkpoint.config;
    scorer = [&, tc, model](std::uint64_t seed) mutable {
      tc.seed = seed;
      spdlog::info("seed {}: training {}", seed, display_name(model.kind));
      FitResult r = fit(model, init_params(model, seed), panels.split.train, panels.split.validation, tc);
      return predict_scores(r.params, model, test, task);
    };
  }
  manifest.set_seed(first_seed);
  manifest.set_config({{"seeds", a.seeds}, {"threshold", a.threshold}, {"model", to_json(loaded.checkpoint.config)}});

  std::vector<double> first_scores;
  MetricsReport report = evaluate_runs(
      [&](std::uint64_t seed) {
        auto s = scorer(seed);
        if (first_scores.empty()) first_scores = s;
        return s;
      },
      labels, a.seeds, first_seed, a.threshold);
  report.model = loaded.name;
  report.task = std::string(to_string(task));
  write_metrics_json(a.out / "metrics.json", report);
  manifest.add_output(a.out / "metrics.json");
  write_roc_csv(a.out / "roc.csv", roc_curve(first_scores, labels));
  manifest.add_output(a.out / "roc.csv");
  spdlog::info("{} {}: accuracy {:.4f} AUC-ROC {:.4f} over {} seed(s)", report.model, report.task,
               report.accuracy.mean, report.auc_roc.mean, a.seeds);
  manifest.write(a.out / "run.json");
}

struct SimulateArgs {
  fs::path panels;
  std::vector<fs::path> checkpoints;
  std::vector<int> sizes{10, 25, 50, 100};
  int repeats = 100;
  double threshold = 0.5;
  bool unpaired = false;
  fs::path out;
};

void cmd_simulate(const SimulateArgs& a, const Common& c) {
  RunManifest manifest("simulate", c.argv);
  const PanelDir panels = load_panel_dir(a.panels, manifest);
  const auto labels = labels_of(panels.split.test, panels.task);
  SimConfig cfg;
  cfg.portfolio_sizes = a.sizes;
  cfg.n_repeats = a.repeats;
  cfg.threshold = a.threshold;
  cfg.seed = c.seed_or(std::nullopt);
  if (panels.task == Task::gc) cfg.references.push_back(growth_capital_reference());
  manifest.set_seed(cfg.seed);
  manifest.set_config({{"sizes", cfg.portfolio_sizes}, {"repeats", cfg.n_repeats}, {"threshold", cfg.threshold},
                       {"paired", !a.unpaired}});

  std::vector<PoolScores> models;
  for (const auto& dir : a.checkpoints) {
    LoadedModel m = load_model(dir, panels, manifest);
    std::string name = m.name;
    for (const auto& existing : models) {
      if (existing.model == name) name = fmt::format("{} ({})", m.name, dir.filename().string());
    }
    const auto scores = predict_scores(m.checkpoint.params, m.checkpoint.config, panels.split.test, panels.task);
    models.push_back({name, positive_pool(scores, labels)});
  }
  const SimResult result = simulate(models, cfg, !a.unpaired);
  export_sim_csv(result, a.out);
  manifest.add_output(a.out);
  fs::path json_path = a.out;
  json_path.replace_extension(".json");
  write_json(json_path, to_json(result));
  manifest.add_output(json_path);
  manifest.write(fs::path(a.out) += ".run.json");
}

struct BenchArgs {
  fs::path panels;
  std::string models = "all";
  int steps = 50;
  Index batch_size = 512;
  std::optional<fs::path> config;
  fs::path out;
};

void cmd_bench(const BenchArgs& a, const Common& c) {
  RunManifest manifest("bench", c.argv);
  const PanelDir panels = load_panel_dir(a.panels, manifest);
  const RunConfig rc = load_run_config(a.config, manifest);
  if (a.steps < 1) throw Error(ErrorKind::configuration, "--steps must be >= 1");
  if (a.batch_size < 1) throw Error(ErrorKind::configuration, "--batch-size must be >= 1");
  std::vector<ModelKind> kinds;
  if (a.models == "all") {
    kinds = all_model_kinds();
  } else {
    std::stringstream ss(a.models);
    for (std::string name; std::getline(ss, name, ',');) kinds.push_back(parse_model_kind(name));
  }
  // One fixed batch drawn from the training part, cycling if it is short.
  const auto& train = panels.split.train;
  if (train.empty()) throw Error(ErrorKind::empty_batch, "no training panels to benchmark on");
  std::vector<std::size_t> idx(static_cast<std::size_t>(a.batch_size));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i % train.size();
  const Batch batch = make_batch(train, idx, panels.task);
  TrainConfig tc;
  tc.task = panels.task;
  tc = train_config_from_json(rc.training, tc);
  tc.seed = c.seed_or(std::nullopt);
  manifest.set_seed(tc.seed);

  std::vector<std::pair<ModelKind, double>> measured;
  json configs = json::object();
  for (ModelKind kind : kinds) {
    const ModelConfig model = model_for(kind, panels, rc.model.value(std::string(to_string(kind)), json::object()));
    configs[std::string(to_string(kind))] = to_json(model);
    const StepTiming t = benchmark_step_time(model, init_params(model, tc.seed), batch, a.steps, tc);
    spdlog::info("{}: {:.4f} s/step", display_name(kind), t.median_seconds);
    measured.emplace_back(kind, t.median_seconds);
  }
  manifest.set_config({{"steps", a.steps}, {"batch_size", a.batch_size}, {"models", configs}});
  const auto rows = timing_table(measured);
  write_timing_csv(a.out, rows);
  manifest.add_output(a.out);
  for (const auto& r : rows) {
    if (r.relative == 1.0) manifest.note("fastest", std::string(display_name(r.model)));
  }
  manifest.write(fs::path(a.out) += ".run.json");
}

int run(int argc, char** argv) {
  CLI::App app{"Time-series classifiers for venture and growth capital sourcing"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(TMTSC_VERSION));
  app.option_defaults()->always_capture_default();

  Common common;
  common.argv.assign(argv, argv + argc);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", common.seed, fmt::format("Random seed (default: ${} or 0)", kSeedVariable));
    sub->add_flag("--force", common.force, "Overwrite a non-empty output directory");
  };

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic company dataset (JSON lines)");
  s->add_option("--config", synth.config, "Generator settings (.json or .toml)")->check(CLI::ExistingFile);
  s->add_option("--out", synth.out, "Output dataset path")->required();
  add_common(s);

  PrepareArgs prep;
  auto* p = app.add_subcommand("prepare", "Build company panels and an investor-centric split");
  p->add_option("--data", prep.data, "Dataset in JSON lines")->required();
  p->add_option("--task", prep.task, "Label to predict")->check(CLI::IsMember({"vc", "gc"}));
  p->add_option("--split", prep.split, "train/validation/test fractions");
  p->add_option("--out", prep.out, "Output directory")->required();
  add_common(p);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train one model and write a checkpoint");
  t->add_option("--panels", train.panels, "Directory written by prepare")->required();
  t->add_option("--model", train.model, "Architecture")->check(CLI::IsMember({"tmtsc", "ugru", "mgru", "te"}));
  t->add_option("--config", train.config, "[model] and [training] settings (.json or .toml)");
  t->add_option("--epochs", train.epochs, "Override the maximum number of epochs");
  t->add_option("--out", train.out, "Checkpoint directory")->required();
  add_common(t);

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Score the test part; several seeds retrain the checkpoint's configuration");
  e->add_option("--panels", eval.panels, "Directory written by prepare")->required();
  e->add_option("--checkpoint", eval.checkpoint, "Directory written by train")->required();
  e->add_option("--seeds", eval.seeds, "Number of seeds")->check(CLI::PositiveNumber);
  e->add_option("--threshold", eval.threshold, "Decision threshold for accuracy and precision")
      ->check(CLI::Range(0.0, 1.0));
  e->add_option("--out", eval.out, "Output directory")->required();
  add_common(e);

  SimulateArgs sim;
  auto* m = app.add_subcommand("simulate", "Monte-Carlo portfolio simulation over the positive test companies");
  m->add_option("--panels", sim.panels, "Directory written by prepare")->required();
  m->add_option("--checkpoints", sim.checkpoints, "One or more checkpoint directories")->required()->expected(1, -1);
  m->add_option("--sizes", sim.sizes, "Portfolio sizes")->delimiter(',');
  m->add_option("--repeats", sim.repeats, "Repeats per size")->check(CLI::PositiveNumber);
  m->add_option("--threshold", sim.threshold, "Score at or above which a company is endorsed")
      ->check(CLI::Range(0.0, 1.0));
  m->add_flag("--unpaired", sim.unpaired, "Draw companies independently per model");
  m->add_option("--out", sim.out, "Output CSV; raw repeats go to the same name with .json")->required();
  add_common(m);

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "Median seconds per training step for each model");
  b->add_option("--panels", bench.panels, "Directory written by prepare")->required();
  b->add_option("--models", bench.models, "all or a comma-separated list");
  b->add_option("--steps", bench.steps, "Timed steps per model");
  b->add_option("--batch-size", bench.batch_size, "Companies per step");
  b->add_option("--config", bench.config, "[model.<name>] and [training] settings (.json or .toml)");
  b->add_option("--out", bench.out, "Output CSV")->required();
  add_common(b);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err);
  }
  spdlog::set_level(spdlog::level::from_str(log_level));
  spdlog::set_pattern("[%l] %v");

  if (s->parsed()) cmd_synth(synth, common);
  else if (p->parsed()) cmd_prepare(prep, common);
  else if (t->parsed()) cmd_train(train, common);
  else if (e->parsed()) cmd_eval(eval, common);
  else if (m->parsed()) cmd_simulate(sim, common);
  else if (b->parsed()) cmd_bench(bench, common);
  return 0;
}

}  // namespace
}  // namespace tmtsc::cli

int main(int argc, char** argv) {
  try {
    return tmtsc::cli::run(argc, argv);
  } catch (const tmtsc::Error& e) {
    std::cerr << fmt::format("error[{}]: {}\n", tmtsc::to_string(e.kind()), e.what());
    return tmtsc::cli::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << fmt::format("error[internal]: {}\n", e.what());
    return 1;
  }
}
