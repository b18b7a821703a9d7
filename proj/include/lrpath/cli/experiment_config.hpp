#pragma once

// Experiment configuration documents and the library side of `lrpath run`
// and `lrpath compare`. The command-line tool only parses flags and maps
// error kinds to exit codes; everything else lives here.
//
// Config schema (every field optional except "paradigms"):
//
//   {
//     "paradigms": ["ptfs", "cpt-reset", "ours", {"family": "two_stage_probe", ...}],
//     "alpha": 0.6,
//     "equalize_cpt_cost": false,
//     "spec": {"num_versions": 4, "steps_per_version": 2000, "increments": [...],
//              "base_schedule": {...}},
//     "model": {"vocab_size": 256, "context_len": 8, "embed_dim": 32,
//               "hidden_dim": 128, "batch_size": 64},
//     "corpus": {"seed": 42, "file": null, "heldout_tokens": 50000},
//     "seeds": [1, 2, 3],
//     "output_dir": "runs/paradigm_comparison",
//     "log_stride": 50,
//     "jobs": 1
//   }

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "lrpath/error.hpp"
#include "lrpath/format.hpp"
#include "lrpath/lineage.hpp"
#include "lrpath/paradigm.hpp"
#include "lrpath/serialize.hpp"
#include "lrpath/trainer/experiment.hpp"

namespace lrpath::cli {

inline constexpr int kReportFormatVersion = 1;

/// Desk-scale scenario: four 2000-step increments, 200 warmup steps,
/// peak 3e-3 decaying to 3e-4.
inline UpdateSpec desk_scale_spec(int versions = 4, Step steps = 2000) {
  UpdateSpec spec;
  spec.num_versions = versions;
  spec.increments.assign(static_cast<std::size_t>(std::max(versions, 0)), steps);
  spec.base_schedule.eta_max = 3e-3;
  spec.base_schedule.eta_min = 3e-4;
  spec.base_schedule.warmup_steps = 200;
  spec.base_schedule.horizon = Horizon(steps);
  spec.seed = 1;
  return spec;
}

struct ExperimentConfig {
  std::vector<ParadigmKind> paradigms;
  double alpha = 0.6;
  bool equalize_cpt_cost = false;
  UpdateSpec spec = desk_scale_spec();
  trainer::ToyModelConfig model;
  trainer::CorpusConfig corpus;
  std::vector<std::uint64_t> seeds{1};
  std::optional<std::filesystem::path> output_dir;
  Step log_stride = 50;
  int jobs = 1;
};

namespace detail {

template <class T>
void read_if(const Json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

inline ParadigmKind paradigm_entry(const Json& j, double alpha) {
  if (j.is_string()) return parse_paradigm(j.get<std::string>(), alpha);
  if (j.is_object()) return paradigm_from_json(j);
  fail(ErrorKind::InvalidConfig, "paradigm entries must be names or objects");
}

}  // namespace detail

/// Parses a config document. Every violation surfaces as InvalidConfig.
inline ExperimentConfig config_from_json(const Json& j) {
  if (!j.is_object()) fail(ErrorKind::InvalidConfig, "config must be a JSON object");
  ExperimentConfig cfg;
  try {
    detail::read_if(j, "alpha", cfg.alpha);
    detail::read_if(j, "equalize_cpt_cost", cfg.equalize_cpt_cost);
    if (j.contains("paradigms")) {
      if (!j.at("paradigms").is_array()) fail(ErrorKind::InvalidConfig, "\"paradigms\" must be an array");
      for (const auto& p : j.at("paradigms")) cfg.paradigms.push_back(detail::paradigm_entry(p, cfg.alpha));
    }
    if (j.contains("spec")) {
      const auto& s = j.at("spec");
      int versions = cfg.spec.num_versions;
      Step steps = cfg.spec.increments.empty() ? 2000 : cfg.spec.increments.front();
      detail::read_if(s, "num_versions", versions);
      detail::read_if(s, "steps_per_version", steps);
      auto base = cfg.spec.base_schedule;
      cfg.spec = desk_scale_spec(versions, steps);
      cfg.spec.base_schedule = base;
      detail::read_if(s, "increments", cfg.spec.increments);
      if (s.contains("increments")) cfg.spec.num_versions = static_cast<int>(cfg.spec.increments.size());
      if (s.contains("base_schedule")) cfg.spec.base_schedule = schedule_from_json(s.at("base_schedule"), base);
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      detail::read_if(m, "vocab_size", cfg.model.vocab_size);
      detail::read_if(m, "context_len", cfg.model.context_len);
      detail::read_if(m, "embed_dim", cfg.model.embed_dim);
      detail::read_if(m, "hidden_dim", cfg.model.hidden_dim);
      detail::read_if(m, "batch_size", cfg.model.batch_size);
    }
    if (j.contains("corpus")) {
      const auto& c = j.at("corpus");
      detail::read_if(c, "seed", cfg.corpus.seed);
      detail::read_if(c, "heldout_tokens", cfg.corpus.heldout_tokens);
      if (c.contains("file") && !c.at("file").is_null()) cfg.corpus.file = c.at("file").get<std::string>();
    }
    detail::read_if(j, "seeds", cfg.seeds);
    if (j.contains("output_dir") && !j.at("output_dir").is_null())
      cfg.output_dir = j.at("output_dir").get<std::string>();
    detail::read_if(j, "log_stride", cfg.log_stride);
    detail::read_if(j, "jobs", cfg.jobs);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidConfig, std::string("config: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::InvalidConfig) throw;
    fail(ErrorKind::InvalidConfig, "config: " + e.detail());
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::InvalidConfig, "cannot read config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidConfig, "config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

inline TrainingPlan plan_for(const ParadigmKind& kind, const ExperimentConfig& cfg) {
  if (const auto* probe = std::get_if<TwoStageProbe>(&kind))
    return build_two_stage_probe(probe->first_cycle, probe->fork_step, probe->second_cycle, probe->second_len,
                                 cfg.spec);
  if (cfg.equalize_cpt_cost && std::holds_alternative<Cpt>(kind))
    return build_plan(kind, equalize_cpt_cost(cfg.spec, cfg.alpha));
  return build_plan(kind, cfg.spec);
}

/// A config that passed every static check, with its plans compiled.
struct PreparedRun {
  ExperimentConfig config;
  std::vector<TrainingPlan> plans;
  Step training_tokens = 0;
};

/// Static checks: plans compile and validate, seeds and workers are sane,
/// the corpus file exists and is large enough. Throws before any training.
inline PreparedRun prepare_run(const ExperimentConfig& cfg) {
  if (cfg.paradigms.empty()) fail(ErrorKind::InvalidConfig, "at least one paradigm is required");
  if (cfg.seeds.empty()) fail(ErrorKind::InvalidConfig, "at least one seed is required");
  if (cfg.jobs < 1) fail(ErrorKind::InvalidConfig, "jobs must be at least 1");
  if (cfg.log_stride < 1) fail(ErrorKind::InvalidConfig, "log_stride must be at least 1");
  if (cfg.corpus.heldout_tokens < 1) fail(ErrorKind::InvalidConfig, "corpus.heldout_tokens must be positive");
  cfg.model.validate();

  PreparedRun run{cfg, {}, 0};
  const auto tps = static_cast<Step>(cfg.model.tokens_per_step());
  for (const auto& kind : cfg.paradigms) {
    auto plan = plan_for(kind, cfg);
    validate_plan(plan);
    run.training_tokens = std::max(run.training_tokens, plan.spec.total_steps() * tps);
    run.plans.push_back(std::move(plan));
  }
  if (cfg.corpus.file) {
    std::error_code ec;
    const auto size = std::filesystem::file_size(*cfg.corpus.file, ec);
    if (ec) fail(ErrorKind::InvalidConfig, "corpus file " + cfg.corpus.file->string() + " is not readable");
    const auto need = cfg.corpus.heldout_tokens + run.training_tokens;
    if (static_cast<Step>(size) < need)
      fail(ErrorKind::CorpusExhausted, "corpus file " + cfg.corpus.file->string() + " holds " +
                                           std::to_string(size) + " tokens, the plans need " + std::to_string(need));
  }
  return run;
}

inline Json to_json(const trainer::ToyModelConfig& m) {
  Json j;
  j["vocab_size"] = m.vocab_size;
  j["context_len"] = m.context_len;
  j["embed_dim"] = m.embed_dim;
  j["hidden_dim"] = m.hidden_dim;
  j["batch_size"] = m.batch_size;
  return j;
}

inline Json to_json(const trainer::CorpusConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["file"] = c.file ? Json(c.file->generic_string()) : Json(nullptr);
  j["heldout_tokens"] = c.heldout_tokens;
  return j;
}

/// Runs every paradigm of a prepared config. With an output directory each
/// paradigm writes its lineage under `<out>/<label>/seed-<s>/` and the merged
/// report goes to `<out>/report.json`. The report holds no timings or paths
/// outside the config, so reruns reproduce it byte for byte.
inline Json run_prepared(const PreparedRun& run) {
  const auto& cfg = run.config;
  const auto corpus = trainer::prepare_corpus(cfg.corpus, run.training_tokens);

  Json doc;
  doc["format_version"] = kReportFormatVersion;
  doc["model"] = to_json(cfg.model);
  doc["corpus"] = to_json(cfg.corpus);
  doc["spec"] = lrpath::to_json(cfg.spec);
  doc["experiments"] = Json::array();
  for (const auto& plan : run.plans) {
    trainer::RunOptions options;
    options.log_stride = cfg.log_stride;
    options.jobs = cfg.jobs;
    if (cfg.output_dir) options.output_dir = *cfg.output_dir / trainer::output_label(plan.paradigm);
    const auto report = trainer::run_experiment(plan, corpus, cfg.model, cfg.seeds, options);
    doc["experiments"].push_back(trainer::to_json(report));
    if (cfg.output_dir) lrpath::detail::write_file_atomically(*cfg.output_dir / "report.json", doc.dump(2) + "\n");
  }
  return doc;
}

inline std::vector<trainer::ExperimentReport> reports_from_document(const Json& doc) {
  std::vector<trainer::ExperimentReport> out;
  try {
    for (const auto& e : doc.at("experiments")) out.push_back(trainer::report_from_json(e));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::SchemaMismatch, std::string("report: ") + e.what());
  }
  return out;
}

inline std::vector<trainer::ExperimentReport> load_reports(const std::filesystem::path& path) {
  const auto text = lrpath::detail::read_file(path);
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::SchemaMismatch, path.string() + " is not valid JSON: " + e.what());
  }
  return reports_from_document(doc);
}

/// One row per experiment: cost relative to from-scratch retraining and the
/// seed-mean PPL of every released version.
inline void write_comparison_csv(std::ostream& os, const std::vector<trainer::ExperimentReport>& reports) {
  int versions = 0;
  for (const auto& r : reports)
    for (const auto& v : r.versions) versions = std::max(versions, v.version);
  os << "paradigm,cost,relative";
  for (int v = 1; v <= versions; ++v) os << ",v" << v;
  os << '\n';
  for (const auto& r : reports) {
    os << r.name << ',' << r.cost << ',' << (r.relative_cost ? format_fixed(*r.relative_cost, 4) : "");
    for (int v = 1; v <= versions; ++v) {
      os << ',';
      for (const auto& s : r.versions)
        if (s.version == v) os << format_fixed(s.ppl_mean, 4);
    }
    os << '\n';
  }
}

inline void write_comparison_text(std::ostream& os, const std::vector<trainer::ExperimentReport>& reports) {
  int versions = 0;
  std::size_t name_width = 9;
  for (const auto& r : reports) {
    name_width = std::max(name_width, r.name.size() + 2);
    for (const auto& v : r.versions) versions = std::max(versions, v.version);
  }
  os << std::left << std::setw(static_cast<int>(name_width)) << "paradigm" << std::right << std::setw(10) << "cost"
     << std::setw(10) << "relative";
  for (int v = 1; v <= versions; ++v) os << std::setw(10) << ("V" + std::to_string(v));
  os << '\n';
  for (const auto& r : reports) {
    os << std::left << std::setw(static_cast<int>(name_width)) << r.name << std::right << std::setw(10) << r.cost
       << std::setw(10) << (r.relative_cost ? format_fixed(*r.relative_cost, 2) + "x" : "-");
    for (int v = 1; v <= versions; ++v) {
      std::string cell = "-";
      for (const auto& s : r.versions)
        if (s.version == v) cell = format_fixed(s.ppl_mean, 2);
      os << std::setw(10) << cell;
    }
    os << '\n';
  }
}

}  // namespace lrpath::cli
