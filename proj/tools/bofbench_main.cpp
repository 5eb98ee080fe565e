// bofbench: soundscape categorization benchmark runner.
//
// Subcommands: extract, fit, distances, evaluate, run, compare, audit.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 pipeline error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "bofbench/baseline.hpp"
#include "bofbench/errors.hpp"
#include "bofbench/eval.hpp"
#include "bofbench/experiment.hpp"
#include "bofbench/features.hpp"
#include "bofbench/gmm.hpp"
#include "bofbench/parallel.hpp"

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string manifest;
  std::string policy = "whole";
  double unit_seconds = 180.0;
  bool normalize = false;
  bool drop_c0 = false;
  std::string method = "bof_mc";
  std::size_t components = bof::kDefaultMixtureComponents;
  std::size_t mc_samples = bof::kDefaultMcSamples;
  std::uint64_t seed = 0;
  std::size_t chance_trials = bof::kDefaultChanceTrials;
  std::string out_dir;
  std::string cache_dir;
  unsigned threads = 0;
  bool csv = false;

  std::string report_a, report_b, distances_file, label = "External";
  std::size_t permutations = 10000;
};

void add_dataset_options(CLI::App* sub, Options& o) {
  sub->add_option("-m,--manifest", o.manifest, "Dataset manifest CSV")->required();
  sub->add_option("--policy", o.policy, "Unit policy")
      ->check(CLI::IsMember({"whole", "segmented"}))
      ->capture_default_str();
  sub->add_option("--unit-seconds", o.unit_seconds,
                  "Unit length in seconds (segmented policy)")
      ->capture_default_str();
  sub->set_config("--config", "", "Flat key=value config file; flags override it");
}

void add_audio_options(CLI::App* sub, Options& o) {
  sub->add_flag("--normalize,!--no-normalize", o.normalize,
                "Peak-normalize recordings before encoding");
  sub->add_flag("--drop-c0", o.drop_c0, "Drop MFCC coefficient 0 (d becomes 19)");
  sub->add_option("--threads", o.threads, "Worker threads (0 = hardware)");
  sub->add_option("--cache-dir", o.cache_dir, "Content-hash artifact cache directory");
}

void add_method_options(CLI::App* sub, Options& o) {
  sub->add_option("--method", o.method, "bof_mc | bof_marginal | average")
      ->check(CLI::IsMember({"bof_mc", "bof_marginal", "average"}))
      ->capture_default_str();
  sub->add_option("-M,--components", o.components, "Mixture components per model")
      ->capture_default_str();
  sub->add_option("--mc-samples", o.mc_samples,
                  "Monte-Carlo samples per KL direction (bof_mc only)")
      ->capture_default_str();
  sub->add_option("--seed", o.seed, "RNG seed (mandatory for bof methods)");
  sub->add_option("--chance-trials", o.chance_trials,
                  "Random-matrix trials for the chance baseline")
      ->capture_default_str();
}

bof::UnitPolicy to_policy(const Options& o) {
  return o.policy == "segmented" ? bof::UnitPolicy::segmented(o.unit_seconds)
                                 : bof::UnitPolicy::whole();
}

bof::ExperimentConfig to_config(const CLI::App* sub, const Options& o) {
  bof::ExperimentConfig cfg;
  cfg.manifest = o.manifest;
  cfg.policy = to_policy(o);
  cfg.normalize_audio = o.normalize;
  cfg.include_c0 = !o.drop_c0;
  if (auto method = bof::parse_method(o.method))
    cfg.method = *method;
  else
    throw bof::UsageError("unknown method '" + o.method + "'");
  cfg.components = o.components;
  cfg.mc_samples = o.mc_samples;
  if (sub->count("--seed")) cfg.rng_seed = o.seed;
  cfg.chance_trials = o.chance_trials;
  cfg.output_dir = o.out_dir;
  cfg.cache_dir = o.cache_dir;
  cfg.threads = o.threads;
  if (sub->count("--mc-samples") && cfg.method != bof::DistanceMethod::monte_carlo)
    throw bof::UsageError("--mc-samples only applies to method bof_mc");
  return cfg;
}

std::string sanitize_filename(const std::string& id) {
  std::string out = id;
  for (char& c : out)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-' && c != '_')
      c = '_';
  return out;
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
  if (!out) throw bof::PipelineError(path.string() + ": write failed");
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw bof::DataError(path.string() + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void print_manifest_warnings(const bof::DatasetManifest& manifest) {
  for (const auto& w : manifest.warnings) std::cerr << "warning: " << w << "\n";
}

int cmd_run(const CLI::App* sub, const Options& o) {
  bof::ExperimentConfig cfg = to_config(sub, o);
  if (cfg.output_dir.empty()) throw bof::UsageError("run: --out is required");
  bof::ExperimentPipeline pipeline(cfg);
  print_manifest_warnings(pipeline.manifest());
  bof::EvalReport report = pipeline.report();

  fs::create_directories(cfg.output_dir);
  write_text_file(cfg.output_dir / "report.json", report.to_json_string() + "\n");
  const bof::EvalReport* r = &report;
  std::string table = bof::format_results_table({&r, 1});
  write_text_file(cfg.output_dir / "report.txt", table);
  pipeline.distances().save_csv(cfg.output_dir / "distances.csv");

  std::cout << table;
  std::cout << "report written to " << (cfg.output_dir / "report.json").string() << "\n";
  return 0;
}

int cmd_extract(const CLI::App* sub, const Options& o) {
  bof::ExperimentConfig cfg = to_config(sub, o);
  cfg.method = bof::DistanceMethod::euclidean_mean;  // no seed needed for features
  if (cfg.output_dir.empty()) throw bof::UsageError("extract: --out is required");
  bof::ExperimentPipeline pipeline(cfg);
  print_manifest_warnings(pipeline.manifest());
  const auto& features = pipeline.features();
  const auto& items = pipeline.manifest().items;

  fs::create_directories(cfg.output_dir);
  std::ofstream index(cfg.output_dir / "features_index.csv");
  index << "item_id,file,class_label,recording_id,location_id,segment_index,frames,dim\n";
  for (std::size_t i = 0; i < features.size(); ++i) {
    std::string base = sanitize_filename(items[i].item_id);
    bof::save_features(cfg.output_dir / (base + ".mfcc"), features[i]);
    if (o.csv) {
      std::ofstream csv(cfg.output_dir / (base + ".csv"));
      bof::write_features_csv(csv, features[i]);
    }
    index << items[i].item_id << "," << base << ".mfcc," << items[i].class_label << ","
          << items[i].recording_id << "," << items[i].location_id << ","
          << (items[i].segment_index >= 0 ? std::to_string(items[i].segment_index) : "")
          << "," << features[i].frames << "," << features[i].dim << "\n";
  }
  std::cout << "wrote " << features.size() << " feature files to " << o.out_dir << "\n";
  return 0;
}

int cmd_fit(const CLI::App* sub, const Options& o) {
  bof::ExperimentConfig cfg = to_config(sub, o);
  if (cfg.method == bof::DistanceMethod::euclidean_mean)
    throw bof::UsageError("fit: method 'average' fits no models");
  if (cfg.output_dir.empty()) throw bof::UsageError("fit: --out is required");
  bof::ExperimentPipeline pipeline(cfg);
  print_manifest_warnings(pipeline.manifest());
  const auto& models = pipeline.models();
  const auto& items = pipeline.manifest().items;

  fs::create_directories(cfg.output_dir);
  std::ofstream index(cfg.output_dir / "models_index.csv");
  index << "item_id,file,components,iterations,final_loglik\n";
  index.precision(17);
  for (std::size_t i = 0; i < models.size(); ++i) {
    std::string base = sanitize_filename(items[i].item_id);
    bof::save_model(cfg.output_dir / (base + ".gmm"), models[i]);
    for (const auto& w : models[i].fit.warnings)
      std::cerr << "warning: item '" << items[i].item_id << "': " << w << "\n";
    index << items[i].item_id << "," << base << ".gmm," << models[i].components << ","
          << models[i].fit.iterations << "," << models[i].fit.final_loglik << "\n";
  }
  std::cout << "wrote " << models.size() << " models to " << o.out_dir << "\n";
  return 0;
}

int cmd_distances(const CLI::App* sub, const Options& o) {
  bof::ExperimentConfig cfg = to_config(sub, o);
  if (cfg.output_dir.empty()) throw bof::UsageError("distances: --out is required");
  bof::ExperimentPipeline pipeline(cfg);
  print_manifest_warnings(pipeline.manifest());
  fs::create_directories(cfg.output_dir);
  pipeline.distances().save_csv(cfg.output_dir / "distances.csv");
  std::cout << "wrote " << (fs::path(cfg.output_dir) / "distances.csv").string() << "\n";
  return 0;
}

int cmd_evaluate(const CLI::App* sub, const Options& o) {
  bof::DistanceMatrix dm = bof::DistanceMatrix::load_csv(o.distances_file);
  bof::DatasetManifest manifest = bof::load_manifest(o.manifest, to_policy(o));
  print_manifest_warnings(manifest);

  std::map<std::string, std::string> label_of;
  for (const auto& item : manifest.items) label_of[item.item_id] = item.class_label;
  std::vector<std::string> labels;
  labels.reserve(dm.size());
  for (const auto& id : dm.ids()) {
    auto it = label_of.find(id);
    if (it == label_of.end())
      throw bof::DataError("evaluate: matrix item '" + id + "' not in manifest");
    labels.push_back(it->second);
  }

  bof::EvalReport report = bof::evaluate(dm, labels);
  report.dataset = manifest.name;
  report.method_label = o.label;
  std::uint64_t seed = sub->count("--seed") ? o.seed : 0;
  report.chance = bof::chance_baseline(labels, o.chance_trials, seed);
  report.config.emplace_back("distances", fs::path(o.distances_file).filename().string());
  report.config.emplace_back("policy", manifest.policy.label());

  const bof::EvalReport* r = &report;
  std::string table = bof::format_results_table({&r, 1});
  std::cout << table;
  if (!o.out_dir.empty()) {
    fs::create_directories(o.out_dir);
    write_text_file(fs::path(o.out_dir) / "report.json", report.to_json_string() + "\n");
    write_text_file(fs::path(o.out_dir) / "report.txt", table);
  }
  return 0;
}

int cmd_compare(const CLI::App* sub, const Options& o) {
  bof::EvalReport a = bof::EvalReport::from_json_string(read_text_file(o.report_a));
  bof::EvalReport b = bof::EvalReport::from_json_string(read_text_file(o.report_b));
  std::uint64_t seed = sub->count("--seed") ? o.seed : 0;
  bof::RunComparison cmp = bof::compare_runs(a, b, o.permutations, seed);
  std::cout << cmp.summary_text();
  const bof::EvalReport* rs[2] = {&a, &b};
  std::cout << "\n" << bof::format_results_table({rs, 2});
  if (!o.out_dir.empty()) {
    fs::create_directories(o.out_dir);
    write_text_file(fs::path(o.out_dir) / "comparison.json", cmp.to_json_string() + "\n");
  }
  return 0;
}

int cmd_audit(const Options& o) {
  bof::AuditReport report = bof::audit_manifest(o.manifest, to_policy(o));
  std::cout << report.text();
  if (!o.out_dir.empty()) {
    fs::create_directories(o.out_dir);
    write_text_file(fs::path(o.out_dir) / "audit.json", report.to_json_string() + "\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bag-of-frames soundscape categorization benchmark"};
  app.require_subcommand(1);
  Options o;

  CLI::App* run = app.add_subcommand("run", "End-to-end experiment");
  add_dataset_options(run, o);
  add_audio_options(run, o);
  add_method_options(run, o);
  run->add_option("-o,--out", o.out_dir, "Output directory")->required();

  CLI::App* extract = app.add_subcommand("extract", "Decode audio and write MFCC features");
  add_dataset_options(extract, o);
  add_audio_options(extract, o);
  extract->add_option("-o,--out", o.out_dir, "Output directory")->required();
  extract->add_flag("--csv", o.csv, "Also write per-item CSV feature dumps");

  CLI::App* fit = app.add_subcommand("fit", "Fit per-item mixture models");
  add_dataset_options(fit, o);
  add_audio_options(fit, o);
  add_method_options(fit, o);
  fit->add_option("-o,--out", o.out_dir, "Output directory")->required();

  CLI::App* distances = app.add_subcommand("distances", "Compute the pairwise distance matrix");
  add_dataset_options(distances, o);
  add_audio_options(distances, o);
  add_method_options(distances, o);
  distances->add_option("-o,--out", o.out_dir, "Output directory")->required();

  CLI::App* evaluate = app.add_subcommand("evaluate", "Evaluate a precomputed distance matrix");
  add_dataset_options(evaluate, o);
  evaluate->add_option("--distances", o.distances_file, "distances.csv from the distances step")
      ->required();
  evaluate->add_option("--label", o.label, "Method column label for the report");
  evaluate->add_option("--chance-trials", o.chance_trials)->capture_default_str();
  evaluate->add_option("--seed", o.seed, "Chance baseline RNG seed");
  evaluate->add_option("-o,--out", o.out_dir, "Output directory");

  CLI::App* compare = app.add_subcommand("compare", "Paired comparison of two run reports");
  compare->add_option("--report-a", o.report_a, "First report.json")->required();
  compare->add_option("--report-b", o.report_b, "Second report.json")->required();
  compare->add_option("--permutations", o.permutations)->capture_default_str();
  compare->add_option("--seed", o.seed, "Permutation test RNG seed");
  compare->add_option("-o,--out", o.out_dir, "Output directory");

  CLI::App* audit = app.add_subcommand("audit", "Dataset leakage audit");
  add_dataset_options(audit, o);
  audit->add_option("-o,--out", o.out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (run->parsed()) return cmd_run(run, o);
    if (extract->parsed()) return cmd_extract(extract, o);
    if (fit->parsed()) return cmd_fit(fit, o);
    if (distances->parsed()) return cmd_distances(distances, o);
    if (evaluate->parsed()) return cmd_evaluate(evaluate, o);
    if (compare->parsed()) return cmd_compare(compare, o);
    if (audit->parsed()) return cmd_audit(o);
  } catch (const bof::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const bof::PipelineError& e) {
    std::cerr << "pipeline error: " << e.what() << "\n";
    return 3;
  } catch (const bof::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
