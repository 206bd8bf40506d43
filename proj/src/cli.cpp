#include "vlmpar/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "vlmpar/config.hpp"
#include "vlmpar/container.hpp"
#include "vlmpar/dataset.hpp"
#include "vlmpar/error.hpp"
#include "vlmpar/gradcheck.hpp"
#include "vlmpar/metrics.hpp"
#include "vlmpar/training.hpp"
#include "vlmpar/weights_io.hpp"

namespace vlmpar {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kToolVersion = "1.0.0";

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
      return kExitUsage;
    case ErrorKind::kNumeric:
      return kExitNumeric;
    default:
      return kExitData;
  }
}

// Attributes come from the dataset's prompts.json when a dataset is given.
Dataset load_data_for(RunConfig& cfg, const std::string& dir) {
  if (dir.empty()) throw ConfigError("no dataset path given (paths.data or --data)");
  Dataset data = load_dataset(dir);
  if (!cfg.model.attributes.empty()) {
    bool same = cfg.model.attributes.size() == data.attributes.size();
    for (std::size_t i = 0; same && i < data.attributes.size(); ++i) {
      same = cfg.model.attributes[i].name == data.attributes[i].name &&
             cfg.model.attributes[i].num_classes == data.attributes[i].num_classes &&
             cfg.model.attributes[i].prompt == data.attributes[i].prompt;
    }
    if (!same) throw ConfigError("config.model.attributes disagrees with " + dir + "/prompts.json");
  }
  cfg.model.attributes = data.attributes;
  return data;
}

Vocab load_vocab_for(const RunConfig& cfg, const Dataset& data) {
  if (!cfg.paths.vocab.empty()) return Vocab::load(cfg.paths.vocab);
  const fs::path p = data.root / "vocab.txt";
  if (fs::exists(p)) return Vocab::load(p);
  std::vector<std::string> prompts;
  for (const auto& a : data.attributes) prompts.push_back(a.prompt);
  return Vocab::from_texts(prompts);
}

Model build_model(const RunConfig& cfg, const Dataset& data) {
  Model model = Model::create(cfg.model, load_vocab_for(cfg, data), cfg.seed);
  if (!cfg.paths.weights_in.empty()) {
    apply_container(model, load_container(cfg.paths.weights_in), /*require_heads=*/false);
  }
  return model;
}

std::string require_path(const std::string& value, const char* what) {
  if (value.empty()) throw ConfigError(std::string("missing ") + what);
  return value;
}

std::string json_text(const ordered_json& j) { return j.dump(2) + "\n"; }

fs::path csv_sibling(const fs::path& report) {
  fs::path p = report;
  return p.replace_extension(".csv");
}

ordered_json history_json(const std::vector<EpochRecord>& h) {
  if (h.empty()) return nullptr;
  return ordered_json{{"epochs", h.back().epoch},
                      {"loss", h.back().loss},
                      {"mA", h.back().mean_accuracy},
                      {"F1", h.back().f1}};
}

struct TrainOutcome {
  Model model;
  std::vector<EpochRecord> history;
  std::uint64_t checksum_before = 0;
  std::uint64_t checksum_after = 0;
};

TrainOutcome run_training(const RunConfig& cfg, const Dataset& data, std::ostream& out) {
  TrainOutcome t{build_model(cfg, data), {}, 0, 0};
  t.checksum_before = t.model.encoders.checksum();
  const EncodedDataset encoded = cfg.paths.cache.empty()
                                     ? encode_dataset(data, t.model, cfg.train.threads)
                                     : embed_cache(data, t.model, cfg.paths.cache, cfg.train.threads);
  t.history = train(t.model, encoded, cfg.train, cfg.loss);
  t.checksum_after = t.model.encoders.checksum();
  for (const auto& r : t.history) {
    out << fmt::format("[{}] epoch {} loss {:.6f} mA {:.4f} F1 {:.4f}\n",
                       to_string(cfg.train.ablation), r.epoch, r.loss, r.mean_accuracy, r.f1);
  }
  return t;
}

ordered_json manifest_base(const RunConfig& cfg, const std::string& command) {
  return ordered_json{{"tool", "vlmpar"},
                      {"version", kToolVersion},
                      {"command", command},
                      {"resolved_config", cfg.to_json()},
                      {"seeds", {{"model", cfg.seed}, {"train", cfg.train.seed}}},
                      {"pooling", "mean"},
                      {"cosine_stage", "reported by zeroshot; not used in the loss"}};
}

// ---- commands ----------------------------------------------------------------

int cmd_gen_data(const std::string& spec_path, const std::string& out_dir, std::ostream& out) {
  std::ifstream in(spec_path);
  if (!in) throw ConfigError("cannot open spec file " + spec_path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(spec_path + ": " + e.what());
  }
  const SyntheticSpec spec = SyntheticSpec::from_json(j);
  generate_synthetic(spec, out_dir);
  out << fmt::format("wrote {} samples to {}\n", spec.num_samples, out_dir);
  return kExitOk;
}

int cmd_train(RunConfig cfg, const std::string& ablation, std::ostream& out) {
  if (!ablation.empty()) cfg.train.ablation = parse_ablation(ablation);
  const Dataset data = load_data_for(cfg, cfg.paths.data);
  const fs::path weights_out = require_path(cfg.paths.weights_out, "paths.weights_out");
  const fs::path report_dir = require_path(cfg.paths.report_out, "paths.report_out");

  TrainOutcome t = run_training(cfg, data, out);
  const bool with_fusion = cfg.train.ablation == AblationMode::kFull;
  save_container(model_container(t.model, with_fusion), weights_out);

  fs::create_directories(report_dir);
  write_text_file(report_dir / "history.csv", history_csv(t.history));
  ordered_json manifest = manifest_base(cfg, "train");
  manifest["ablation"] = to_string(cfg.train.ablation);
  manifest["encoder_checksum"] = checksum_hex(t.checksum_before);
  manifest["encoder_checksum_after"] = checksum_hex(t.checksum_after);
  manifest["trainable_parameters"] = t.model.trainable.parameter_count();
  manifest["fusion_in_weights"] = with_fusion;
  manifest["num_samples"] = data.records.size();
  manifest["final"] = history_json(t.history);
  write_text_file(report_dir / "manifest.json", json_text(manifest));
  out << fmt::format("weights -> {}\nreports -> {}\n", weights_out.string(), report_dir.string());
  return kExitOk;
}

struct LoadedForEval {
  Model model;
  Dataset data;
  AblationMode mode;
};

LoadedForEval load_for_eval(RunConfig& cfg, const std::string& weights, const std::string& data_dir,
                            bool require_heads) {
  Dataset data = load_data_for(cfg, data_dir.empty() ? cfg.paths.data : data_dir);
  Model model = Model::create(cfg.model, load_vocab_for(cfg, data), cfg.seed);
  const bool has_fusion = apply_container(model, load_container(weights), require_heads);
  return {std::move(model), std::move(data),
          has_fusion ? AblationMode::kFull : AblationMode::kNoCrossAttention};
}

int cmd_eval(RunConfig cfg, const std::string& weights, const std::string& data_dir,
             const std::string& report, std::ostream& out) {
  auto loaded = load_for_eval(cfg, weights, data_dir, /*require_heads=*/true);
  const EncodedDataset enc = encode_dataset(loaded.data, loaded.model, cfg.train.threads);
  const auto preds = predict_labels(loaded.model, enc, loaded.mode, cfg.train.threads);
  const MetricsReport r = build_report(preds, true_labels(enc), loaded.model.config.attributes);
  write_text_file(report, r.to_json());
  write_text_file(csv_sibling(report), r.to_csv());
  out << fmt::format("mode {} samples {} mA {:.4f} F1 {:.4f}\n", to_string(loaded.mode),
                     enc.samples.size(), r.mean_accuracy, r.mean_f1);
  return kExitOk;
}

int cmd_ablate(RunConfig cfg, const std::string& data_dir, const std::string& report_dir,
               std::ostream& out) {
  if (!data_dir.empty()) cfg.paths.data = data_dir;
  const Dataset data = load_data_for(cfg, cfg.paths.data);
  const Dataset eval_data =
      cfg.paths.eval_data.empty() ? data : load_data_for(cfg, cfg.paths.eval_data);
  const fs::path dir = report_dir.empty() ? fs::path(require_path(cfg.paths.report_out,
                                                                  "--report or paths.report_out"))
                                          : fs::path(report_dir);

  std::vector<std::vector<double>> accuracy;
  ordered_json runs = ordered_json::object();
  for (AblationMode mode : {AblationMode::kNoCrossAttention, AblationMode::kFull}) {
    RunConfig variant = cfg;
    variant.train.ablation = mode;
    TrainOutcome t = run_training(variant, data, out);
    const EncodedDataset enc = encode_dataset(eval_data, t.model, cfg.train.threads);
    accuracy.push_back(
        attribute_accuracy(predict_labels(t.model, enc, mode, cfg.train.threads), true_labels(enc)));
    fs::create_directories(dir);
    write_text_file(dir / fmt::format("history_{}.csv", to_string(mode)), history_csv(t.history));
    runs[to_string(mode)] = ordered_json{{"seed", variant.seed},
                                         {"train_seed", variant.train.seed},
                                         {"encoder_checksum", checksum_hex(t.checksum_after)},
                                         {"final", history_json(t.history)}};
  }

  std::string csv = "attribute,no_cross_attention,cross_attention,delta\n";
  double avg0 = 0.0, avg1 = 0.0;
  const auto& attrs = cfg.model.attributes;
  for (std::size_t i = 0; i < attrs.size(); ++i) {
    const double a0 = accuracy[0].empty() ? 0.0 : accuracy[0][i];
    const double a1 = accuracy[1].empty() ? 0.0 : accuracy[1][i];
    avg0 += a0;
    avg1 += a1;
    csv += fmt::format("{},{},{},{}\n", attrs[i].name, format_number(a0), format_number(a1),
                       format_number(a1 - a0));
  }
  avg0 /= static_cast<double>(attrs.size());
  avg1 /= static_cast<double>(attrs.size());
  csv += fmt::format("__average__,{},{},{}\n", format_number(avg0), format_number(avg1),
                     format_number(avg1 - avg0));
  write_text_file(dir / "ablation.csv", csv);

  ordered_json manifest = manifest_base(cfg, "ablate");
  manifest["shared_seed"] = cfg.seed;
  manifest["eval_data"] = cfg.paths.eval_data.empty() ? cfg.paths.data : cfg.paths.eval_data;
  manifest["runs"] = runs;
  write_text_file(dir / "manifest.json", json_text(manifest));
  out << fmt::format("average accuracy: no_cross_attention {:.4f} cross_attention {:.4f}\n", avg0,
                     avg1);
  return kExitOk;
}

int cmd_gradcheck(RunConfig cfg, double tolerance, std::size_t max_entries, std::size_t samples,
                  bool inject_fault, std::ostream& out) {
  if (!cfg.paths.data.empty() && fs::exists(fs::path(cfg.paths.data) / "prompts.json")) {
    cfg.model.attributes = load_prompts(fs::path(cfg.paths.data) / "prompts.json");
  }
  if (cfg.model.attributes.empty()) {
    cfg.model.attributes = {{"binary", "is it a binary attribute?", 2},
                            {"ternary", "which of three classes?", 3}};
  }
  const auto problem = make_gradcheck_problem(cfg.model, cfg.seed, samples, 3);
  GradCheckOptions opt;
  opt.tolerance = tolerance;
  opt.max_entries_per_tensor = max_entries;
  opt.seed = cfg.seed;
  opt.corrupt_gradient = inject_fault;
  const auto result = gradient_check(problem.model, problem.data, cfg.loss, AblationMode::kFull, opt);
  for (const auto& g : result.groups)
    out << fmt::format("{:<20} entries {:>6}  max_rel_error {:.3e}\n", g.name, g.checked,
                       g.max_rel_error);
  out << fmt::format("overall max_rel_error {:.3e} tolerance {:.1e}: {}\n", result.max_rel_error,
                     tolerance, result.passed ? "PASS" : "FAIL");
  return result.passed ? kExitOk : kExitNumeric;
}

int cmd_zeroshot(RunConfig cfg, const std::string& weights, const std::string& data_dir,
                 const std::string& report, std::ostream& out) {
  auto loaded = load_for_eval(cfg, weights, data_dir, /*require_heads=*/false);
  const EncodedDataset enc = encode_dataset(loaded.data, loaded.model, cfg.train.threads);
  std::string csv = "sample_id,attribute,score\n";
  for (const auto& s : enc.samples) {
    for (std::size_t i = 0; i < enc.text.size(); ++i) {
      const AlignmentScore a = cosine_align(s.features.cls, enc.text[i], i);
      csv += fmt::format("{},{},{}\n", s.id, loaded.model.config.attributes[i].name,
                         format_number(a.score));
    }
  }
  write_text_file(report, csv);
  out << fmt::format("wrote {} alignment rows to {}\n", enc.samples.size() * enc.text.size(),
                     report);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Vision-language attribute recognition toolkit"};
  app.require_subcommand(1);

  std::string spec, out_dir, config, ablation, weights, data, report;
  double tolerance = 1e-4;
  std::size_t max_entries = 64, samples = 3;
  bool inject_fault = false;

  auto* gen = app.add_subcommand("gen-data", "Generate a seeded synthetic dataset");
  gen->add_option("--spec", spec, "Synthetic spec JSON")->required();
  gen->add_option("--out", out_dir, "Output directory")->required();

  auto* tr = app.add_subcommand("train", "Train fusion and heads on frozen encoders");
  tr->add_option("--config", config, "Run config JSON")->required();
  tr->add_option("--ablation", ablation, "full | no_cross_attention");

  auto* ev = app.add_subcommand("eval", "Evaluate mA/F1 of trained weights");
  ev->add_option("--config", config)->required();
  ev->add_option("--weights", weights)->required();
  ev->add_option("--data", data)->required();
  ev->add_option("--report", report, "Report JSON path; CSV written alongside")->required();

  auto* ab = app.add_subcommand("ablate", "Train with and without cross-attention");
  ab->add_option("--config", config)->required();
  ab->add_option("--data", data);
  ab->add_option("--report", report, "Output directory");

  auto* gc = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  gc->add_option("--config", config)->required();
  gc->add_option("--tolerance", tolerance);
  gc->add_option("--max-entries", max_entries, "Entries checked per tensor (0 = all)");
  gc->add_option("--samples", samples, "Random samples in the checked batch");
  gc->add_flag("--inject-gradient-fault", inject_fault, "Corrupt one analytic gradient entry");

  auto* zs = app.add_subcommand("zeroshot", "Report per-attribute cosine alignment scores");
  zs->add_option("--config", config)->required();
  zs->add_option("--weights", weights)->required();
  zs->add_option("--data", data)->required();
  zs->add_option("--report", report, "Output CSV")->required();

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(spec, out_dir, out);
    RunConfig cfg = RunConfig::load(config);
    if (tr->parsed()) return cmd_train(cfg, ablation, out);
    if (ev->parsed()) return cmd_eval(cfg, weights, data, report, out);
    if (ab->parsed()) return cmd_ablate(cfg, data, report, out);
    if (gc->parsed()) return cmd_gradcheck(cfg, tolerance, max_entries, samples, inject_fault, out);
    if (zs->parsed()) return cmd_zeroshot(cfg, weights, data, report, out);
  } catch (const Error& e) {
    err << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "filesystem error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace vlmpar
