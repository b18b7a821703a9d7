#pragma once

// Executes training plans end to end: corpus preparation, segment
// allocation, phase-by-phase training in dependency order, checkpoint
// lineage, held-out evaluation of every released version, and seed
// averaging.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "lrpath/cost.hpp"
#include "lrpath/error.hpp"
#include "lrpath/lineage.hpp"
#include "lrpath/paradigm.hpp"
#include "lrpath/serialize.hpp"
#include "lrpath/trainer/adam.hpp"
#include "lrpath/trainer/corpus.hpp"
#include "lrpath/trainer/model.hpp"
#include "lrpath/trainer/train.hpp"

namespace lrpath::trainer {

struct CorpusConfig {
  std::uint64_t seed = 42;
  std::optional<std::filesystem::path> file;
  std::int64_t heldout_tokens = 50000;

  friend bool operator==(const CorpusConfig&, const CorpusConfig&) = default;
};

/// A token stream split into a fixed held-out prefix and a training region.
struct Corpus {
  TokenStream tokens;
  std::int64_t heldout_tokens = 0;

  std::span<const Token> heldout() const { return {tokens.data(), static_cast<std::size_t>(heldout_tokens)}; }
  std::span<const Token> training() const {
    return {tokens.data() + heldout_tokens, tokens.size() - static_cast<std::size_t>(heldout_tokens)};
  }
};

/// Held-out set first, then at least `training_tokens` tokens of training
/// text. Synthetic streams are prefix-stable, so every plan drawn from the
/// same config evaluates on the same held-out tokens.
inline Corpus prepare_corpus(const CorpusConfig& cfg, std::int64_t training_tokens) {
  if (cfg.heldout_tokens < 1) fail(ErrorKind::InvalidConfig, "held-out set must not be empty");
  Corpus c;
  c.heldout_tokens = cfg.heldout_tokens;
  if (cfg.file) {
    c.tokens = load_corpus_file(*cfg.file);
    if (static_cast<std::int64_t>(c.tokens.size()) < cfg.heldout_tokens + training_tokens)
      fail(ErrorKind::CorpusExhausted, "corpus file " + cfg.file->string() + " holds " +
                                           std::to_string(c.tokens.size()) + " tokens, need " +
                                           std::to_string(cfg.heldout_tokens + training_tokens));
  } else {
    c.tokens = make_corpus(cfg.seed, static_cast<std::size_t>(cfg.heldout_tokens + training_tokens));
  }
  return c;
}

struct RunOptions {
  std::optional<std::filesystem::path> output_dir;
  Step log_stride = 50;
  int jobs = 1;
};

struct ReleasedVersion {
  EvalReport report;
  ModelState model;
};

struct PlanRun {
  Manifest manifest;
  std::map<int, ReleasedVersion> released;
};

namespace detail {

inline std::string label_for_path(std::string name) {
  for (auto& ch : name)
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '.' && ch != '-') ch = '_';
  while (!name.empty() && name.back() == '_') name.pop_back();
  return name;
}

inline Payload optimizer_payload(const AdamState& adam, std::uint64_t seed) {
  Payload p;
  p.seed = seed;
  p.step = static_cast<std::uint64_t>(adam.t);
  const auto m = adam.first_moment.values();
  const auto v = adam.second_moment.values();
  p.values.assign(m.begin(), m.end());
  p.values.insert(p.values.end(), v.begin(), v.end());
  return p;
}

}  // namespace detail

/// Runs every phase of `plan` once. Optimizer state travels with the model
/// along the lineage, so a phase initialized from a checkpoint resumes that
/// checkpoint's Adam moments.
inline PlanRun run_plan(const TrainingPlan& plan, const Corpus& corpus, const ToyModelConfig& cfg,
                        const RunOptions& options = {}) {
  validate_plan(plan);
  cfg.validate();
  const auto tps = static_cast<std::int64_t>(cfg.tokens_per_step());

  PlanRun run;
  run.manifest.spec = plan.spec;
  run.manifest.segments = allocate_segments(plan, static_cast<std::int64_t>(corpus.training().size()), tps);

  const auto& out_dir = options.output_dir;
  if (out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(*out_dir / "ckpt", ec);
    std::filesystem::create_directories(*out_dir / "traces", ec);
    if (ec) fail(ErrorKind::IoError, "cannot create " + out_dir->string() + ": " + ec.message());
    save_manifest(run.manifest, *out_dir / "manifest.json");
  }

  struct Saved {
    ModelState model;
    AdamState adam;
  };
  std::map<std::string, Saved> states;

  for (const auto& phase : plan.phases) {
    try {
      ModelState model;
      AdamState adam;
      std::int64_t global_step = 0;
      std::optional<std::string> parent;
      const auto init = resolve_init(run.manifest, phase);
      if (const auto* fresh = std::get_if<FreshInit>(&init)) {
        model = init_model(cfg, fresh->seed);
        adam = AdamState(cfg);
      } else {
        const auto& rec = std::get<CheckpointRecord>(init);
        const auto& saved = states.at(rec.phase_id);
        model = saved.model;
        adam = saved.adam;
        global_step = rec.global_step;
        parent = rec.ckpt_id;
      }

      const auto data = make_phase_data(phase, run.manifest.segments, corpus.training(), cfg);
      const auto trace = train_phase(model, adam, phase, data, options.log_stride);
      global_step += phase.num_steps;

      CheckpointRecord rec;
      rec.ckpt_id = checkpoint_id(phase.phase_id);
      rec.phase_id = phase.phase_id;
      rec.version = phase.version;
      rec.path = phase.path;
      rec.parent = parent;
      rec.global_step = global_step;
      rec.payload_file = "ckpt/" + rec.ckpt_id + ".bin";
      if (phase.emits_version_checkpoint) {
        rec.metrics = evaluate_ppl(model, corpus.heldout());
        run.released[phase.version] = {*rec.metrics, model};
      }
      run.manifest = record_checkpoint(std::move(run.manifest), rec);

      if (out_dir) {
        const std::vector<double> params(model.params.values().begin(), model.params.values().end());
        write_payload(*out_dir / rec.payload_file,
                      Payload{model.rng_seed, static_cast<std::uint64_t>(global_step), params});
        write_payload(*out_dir / "ckpt" / (rec.ckpt_id + ".adam.bin"), detail::optimizer_payload(adam, model.rng_seed));
        std::ofstream trace_out(*out_dir / "traces" / (phase.phase_id + ".csv"));
        if (!trace_out) fail(ErrorKind::IoError, "cannot write trace for " + phase.phase_id);
        write_trace_csv(trace_out, trace);
        save_manifest(run.manifest, *out_dir / "manifest.json");
      }
      states[phase.phase_id] = {std::move(model), std::move(adam)};
    } catch (const Error& e) {
      throw Error(e.kind(), "phase " + phase.phase_id + ": " + e.detail());
    }
  }
  return run;
}

struct VersionSummary {
  int version = 0;
  double ppl_mean = 0.0;
  double nll_mean = 0.0;
  std::vector<double> ppl_per_seed;
};

struct ExperimentReport {
  ParadigmKind paradigm;
  std::string name;
  Step cost = 0;
  std::optional<double> relative_cost;
  std::vector<std::uint64_t> seeds;
  std::vector<VersionSummary> versions;

  const VersionSummary& version(int v) const {
    for (const auto& s : versions)
      if (s.version == v) return s;
    fail(ErrorKind::InvalidArgument, "report has no version " + std::to_string(v));
  }
};

/// Runs `plan` once per seed (re-deriving fresh initializations and data
/// order from each seed) and averages the released versions' perplexities.
/// Seeds run on up to `options.jobs` threads; results do not depend on the
/// number of jobs.
inline ExperimentReport run_experiment(const TrainingPlan& plan, const Corpus& corpus, const ToyModelConfig& cfg,
                                       std::span<const std::uint64_t> seeds, const RunOptions& options = {}) {
  if (seeds.empty()) fail(ErrorKind::InvalidArgument, "at least one seed is required");
  std::vector<PlanRun> runs(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());

  auto run_one = [&](std::size_t i) {
    try {
      RunOptions local = options;
      if (options.output_dir) local.output_dir = *options.output_dir / ("seed-" + std::to_string(seeds[i]));
      runs[i] = run_plan(reseed_plan(plan, seeds[i]), corpus, cfg, local);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const auto workers = static_cast<std::size_t>(std::clamp(options.jobs, 1, static_cast<int>(seeds.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < seeds.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < seeds.size(); i = next++) run_one(i);
      });
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  ExperimentReport report;
  report.paradigm = plan.paradigm;
  report.name = paradigm_name(plan.paradigm);
  report.cost = plan_cost(plan);
  if (!std::holds_alternative<TwoStageProbe>(plan.paradigm))
    report.relative_cost = static_cast<double>(report.cost) /
                           static_cast<double>(paradigm_cost(Ptfs{}, plan.spec.increments));
  report.seeds.assign(seeds.begin(), seeds.end());
  for (const auto& [version, first] : runs.front().released) {
    VersionSummary s;
    s.version = version;
    for (const auto& run : runs) {
      const auto& r = run.released.at(version).report;
      s.ppl_per_seed.push_back(r.ppl);
      s.ppl_mean += r.ppl;
      s.nll_mean += r.nll;
    }
    s.ppl_mean /= static_cast<double>(runs.size());
    s.nll_mean /= static_cast<double>(runs.size());
    report.versions.push_back(std::move(s));
  }
  return report;
}

inline Json to_json(const ExperimentReport& r) {
  Json j;
  j["name"] = r.name;
  j["paradigm"] = lrpath::to_json(r.paradigm);
  j["cost"] = r.cost;
  j["relative_cost"] = r.relative_cost ? Json(*r.relative_cost) : Json(nullptr);
  j["seeds"] = r.seeds;
  Json versions = Json::array();
  for (const auto& v : r.versions) {
    Json jv;
    jv["version"] = v.version;
    jv["ppl_mean"] = v.ppl_mean;
    jv["nll_mean"] = v.nll_mean;
    jv["ppl_per_seed"] = v.ppl_per_seed;
    versions.push_back(std::move(jv));
  }
  j["versions"] = std::move(versions);
  return j;
}

inline ExperimentReport report_from_json(const Json& j) {
  try {
    ExperimentReport r;
    r.paradigm = paradigm_from_json(j.at("paradigm"));
    r.name = j.at("name").get<std::string>();
    r.cost = j.at("cost").get<Step>();
    if (!j.at("relative_cost").is_null()) r.relative_cost = j.at("relative_cost").get<double>();
    r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    for (const auto& jv : j.at("versions")) {
      VersionSummary v;
      v.version = jv.at("version").get<int>();
      v.ppl_mean = jv.at("ppl_mean").get<double>();
      v.nll_mean = jv.at("nll_mean").get<double>();
      v.ppl_per_seed = jv.at("ppl_per_seed").get<std::vector<double>>();
      r.versions.push_back(std::move(v));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::SchemaMismatch, std::string("experiment report: ") + e.what());
  }
}

inline std::string output_label(const ParadigmKind& kind) { return detail::label_for_path(paradigm_name(kind)); }

}  // namespace lrpath::trainer
