// lrpath: learning-rate path experiments from the command line.
//
//   lrpath schedule --kind cosine --horizon 10000          LR curve as CSV
//   lrpath cost --versions 4 --steps 10000 --alpha 0.6     training cost table
//   lrpath plan --paradigm ours --versions 4               TrainingPlan JSON
//   lrpath run --config configs/paradigm_comparison.json --jobs 3       train and evaluate
//   lrpath compare runs/a/report.json runs/b/report.json   PPL table
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lrpath/cli/experiment_config.hpp"
#include "lrpath/cost.hpp"
#include "lrpath/error.hpp"
#include "lrpath/paradigm.hpp"
#include "lrpath/schedule.hpp"
#include "lrpath/serialize.hpp"

namespace {

using namespace lrpath;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

/// Raised for anything the user can fix by changing flags or config.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Horizon parse_horizon(const std::string& text) {
  if (text == "inf" || text == "infinite" || text == "+inf") return Horizon::infinite();
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used == text.size()) return Horizon(v);
  } catch (const std::exception&) {
  }
  throw UsageError("horizon must be an integer or 'inf', got '" + text + "'");
}

/// Writes to `path`, or stdout when no path is given.
void emit(const std::optional<std::string>& path, const std::string& text) {
  if (!path) {
    std::cout << text;
    return;
  }
  std::ofstream out(*path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + *path);
  out << text;
}

struct ScheduleFlags {
  std::string kind = "cosine";
  double max_lr = 3e-4;
  double min_lr = 3e-5;
  Step warmup = 2000;
  std::string horizon = "10000";
  double knee_fraction = 0.5;

  void add_to(CLI::App& app) {
    app.add_option("--kind", kind, "cosine | knee | multistep | constant | inverse_sqrt")->capture_default_str();
    app.add_option("--max-lr", max_lr, "peak learning rate")->capture_default_str();
    app.add_option("--min-lr", min_lr, "final learning rate")->capture_default_str();
    app.add_option("--warmup", warmup, "linear warmup steps")->capture_default_str();
    app.add_option("--horizon", horizon, "decay horizon in steps, or 'inf'")->capture_default_str();
    app.add_option("--knee-fraction", knee_fraction, "post-warmup plateau fraction of the knee schedule")
        ->capture_default_str();
  }

  ScheduleConfig build() const {
    ScheduleConfig cfg;
    cfg.kind = parse_schedule_kind(kind);
    cfg.eta_max = max_lr;
    cfg.eta_min = min_lr;
    cfg.warmup_steps = warmup;
    cfg.horizon = parse_horizon(horizon);
    cfg.knee_explore_fraction = knee_fraction;
    return cfg;
  }
};

// ---------------------------------------------------------------------------

struct ScheduleCmd {
  ScheduleFlags flags;
  Step from = 0;
  std::optional<Step> to;
  Step stride = 100;
  std::optional<std::string> out;

  int run() const {
    const auto cfg = flags.build();
    validate_config(cfg);
    const Step last = to ? *to : (cfg.horizon.is_finite() ? cfg.horizon.steps() : 10000);
    std::ostringstream os;
    auto series = dump_curve(cfg, from, last, stride);
    if (series.back().step != last) series.push_back({last, lr_at(cfg, last)});
    write_curve_csv(os, series);
    emit(out, os.str());
    return kExitOk;
  }
};

struct CostCmd {
  std::int64_t versions = 4;
  std::int64_t steps = 10000;
  double alpha = 0.6;
  std::string format = "text";
  std::optional<std::string> out;

  int run() const {
    const auto rows = cost_table(versions, steps, alpha);
    std::ostringstream os;
    if (format == "csv") write_cost_csv(os, rows);
    else write_cost_text(os, rows);
    emit(out, os.str());
    return kExitOk;
  }
};

struct PlanCmd {
  std::string paradigm = "ours";
  double alpha = 0.6;
  int versions = 4;
  Step steps = 2000;
  std::uint64_t seed = 1;
  bool equalize = false;
  ScheduleFlags schedule{"cosine", 3e-3, 3e-4, 200, "2000", 0.5};
  std::string first_cycle = "inf";
  Step fork = 0;
  std::string second_cycle = "2000";
  Step second_len = 0;
  std::optional<std::string> out;

  int run() const {
    auto spec = cli::desk_scale_spec(versions, steps);
    spec.base_schedule = schedule.build();
    spec.seed = seed;
    TrainingPlan plan;
    if (paradigm == "probe") {
      plan = build_two_stage_probe(parse_horizon(first_cycle), fork > 0 ? fork : steps, parse_horizon(second_cycle),
                                   second_len > 0 ? second_len : steps, spec);
    } else {
      const auto kind = parse_paradigm(paradigm, alpha);
      plan = build_plan(kind, equalize && std::holds_alternative<Cpt>(kind) ? equalize_cpt_cost(spec, alpha) : spec);
    }
    validate_plan(plan);
    emit(out, to_json(plan).dump(2) + "\n");
    return kExitOk;
  }
};

struct RunCmd {
  std::optional<std::string> config;
  std::vector<std::string> paradigms;
  std::optional<double> alpha;
  std::optional<int> versions;
  std::optional<Step> steps;
  std::vector<std::uint64_t> seeds;
  std::optional<std::string> corpus_file;
  std::optional<std::string> out;
  std::optional<int> jobs;
  std::optional<Step> log_stride;
  bool quiet = false;

  cli::ExperimentConfig resolve() const {
    cli::ExperimentConfig cfg = config ? cli::load_config(*config) : cli::ExperimentConfig{};
    if (alpha) {
      cfg.alpha = *alpha;
      for (auto& p : cfg.paradigms)
        if (auto* ps = std::get_if<PathSwitch>(&p)) ps->alpha = *alpha;
    }
    if (!paradigms.empty()) {
      cfg.paradigms.clear();
      for (const auto& name : paradigms) cfg.paradigms.push_back(parse_paradigm(name, cfg.alpha));
    }
    if (versions || steps) {
      const int n = versions.value_or(cfg.spec.num_versions);
      const Step t = steps.value_or(cfg.spec.increments.empty() ? 2000 : cfg.spec.increments.front());
      const auto base = cfg.spec.base_schedule;
      const auto seed = cfg.spec.seed;
      cfg.spec = cli::desk_scale_spec(n, t);
      cfg.spec.base_schedule = base;
      cfg.spec.seed = seed;
    }
    if (!seeds.empty()) cfg.seeds = seeds;
    if (corpus_file) cfg.corpus.file = *corpus_file;
    if (jobs) cfg.jobs = *jobs;
    if (log_stride) cfg.log_stride = *log_stride;
    if (out) cfg.output_dir = *out;
    if (!cfg.output_dir) {
      if (const char* env = std::getenv("LRPATH_OUT"); env && *env) cfg.output_dir = env;
      else cfg.output_dir = "lrpath-out";
    }
    return cfg;
  }

  int run() const {
    cli::PreparedRun prepared;
    try {
      prepared = cli::prepare_run(resolve());
      std::error_code ec;
      std::filesystem::create_directories(*prepared.config.output_dir, ec);
      if (ec) fail(ErrorKind::InvalidConfig, "output directory " + prepared.config.output_dir->string() +
                                                 " is not writable: " + ec.message());
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    const auto doc = cli::run_prepared(prepared);
    if (!quiet) cli::write_comparison_text(std::cout, cli::reports_from_document(doc));
    return kExitOk;
  }
};

struct CompareCmd {
  std::vector<std::string> reports;
  std::string format = "text";
  std::optional<std::string> out;

  int run() const {
    std::vector<trainer::ExperimentReport> all;
    for (const auto& path : reports) {
      auto r = cli::load_reports(path);
      all.insert(all.end(), r.begin(), r.end());
    }
    std::ostringstream os;
    if (format == "csv") cli::write_comparison_csv(os, all);
    else cli::write_comparison_text(os, all);
    emit(out, os.str());
    return kExitOk;
  }
};

bool is_usage_kind(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidConfig:
    case ErrorKind::InvalidSpec:
    case ErrorKind::InvalidArgument:
    case ErrorKind::UnsupportedKind:
    case ErrorKind::AlphaDegenerate:
    case ErrorKind::StepOutOfRange:
      return true;
    default:
      return false;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learning-rate path switching experiments"};
  app.require_subcommand(1);

  ScheduleCmd schedule;
  auto* sc = app.add_subcommand("schedule", "Dump a learning-rate curve as CSV (step,lr)");
  schedule.flags.add_to(*sc);
  sc->add_option("--from", schedule.from, "first step")->capture_default_str();
  sc->add_option("--to", schedule.to, "last step (default: horizon, or 10000 when infinite)");
  sc->add_option("--stride", schedule.stride, "step stride")->capture_default_str();
  sc->add_option("--out", schedule.out, "write CSV here instead of stdout");

  CostCmd cost;
  auto* cc = app.add_subcommand("cost", "Training cost of PTFS, CPT and path switching");
  cc->add_option("--versions,-n", cost.versions, "number of version updates")->capture_default_str();
  cc->add_option("--steps,-T", cost.steps, "training steps per data increment")->capture_default_str();
  cc->add_option("--alpha", cost.alpha, "fast-decay fraction for path switching")->capture_default_str();
  cc->add_option("--format", cost.format, "text | csv")
      ->check(CLI::IsMember({"text", "csv"}))
      ->capture_default_str();
  cc->add_option("--out", cost.out, "write the table here instead of stdout");

  PlanCmd plan;
  auto* pc = app.add_subcommand("plan", "Compile a training plan and print it as JSON");
  pc->add_option("--paradigm", plan.paradigm, "ptfs | cpt-reset | cpt-rewarm | cpt-keepmin | ours | probe")
      ->capture_default_str();
  pc->add_option("--alpha", plan.alpha, "fast-decay fraction")->capture_default_str();
  pc->add_option("--versions,-n", plan.versions, "number of versions")->capture_default_str();
  pc->add_option("--steps,-T", plan.steps, "steps per increment")->capture_default_str();
  pc->add_option("--seed", plan.seed, "scenario seed")->capture_default_str();
  pc->add_flag("--equalize-cpt-cost", plan.equalize, "give CPT the step budget of path switching");
  plan.schedule.add_to(*pc);
  pc->add_option("--first-cycle", plan.first_cycle, "probe: stage-1 cosine cycle")->capture_default_str();
  pc->add_option("--fork", plan.fork, "probe: stage-1 length (default: --steps)");
  pc->add_option("--second-cycle", plan.second_cycle, "probe: stage-2 cosine cycle")->capture_default_str();
  pc->add_option("--second-len", plan.second_len, "probe: stage-2 length (default: --steps)");
  pc->add_option("--out", plan.out, "write JSON here instead of stdout");

  RunCmd run;
  auto* rc = app.add_subcommand("run", "Train every configured paradigm and write report.json");
  rc->add_option("--config,-c", run.config, "JSON experiment config")->check(CLI::ExistingFile);
  rc->add_option("--paradigm", run.paradigms, "override the paradigm list (repeatable)");
  rc->add_option("--alpha", run.alpha, "override alpha");
  rc->add_option("--versions,-n", run.versions, "override the number of versions");
  rc->add_option("--steps,-T", run.steps, "override steps per increment");
  rc->add_option("--seeds", run.seeds, "override the seed list");
  rc->add_option("--corpus-file", run.corpus_file, "train on the bytes of this file");
  rc->add_option("--out,-o", run.out, "output directory (default: $LRPATH_OUT, then ./lrpath-out)");
  rc->add_option("--jobs,-j", run.jobs, "concurrent seed runs");
  rc->add_option("--log-stride", run.log_stride, "trace every n-th step");
  rc->add_flag("--quiet,-q", run.quiet, "do not print the summary table");

  CompareCmd compare;
  auto* mc = app.add_subcommand("compare", "Merge report.json files into one PPL table");
  mc->add_option("reports", compare.reports, "report.json files")->required()->check(CLI::ExistingFile);
  mc->add_option("--format", compare.format, "text | csv")
      ->check(CLI::IsMember({"text", "csv"}))
      ->capture_default_str();
  mc->add_option("--out", compare.out, "write the table here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*sc) return schedule.run();
    if (*cc) return cost.run();
    if (*pc) return plan.run();
    if (*rc) return run.run();
    return compare.run();
  } catch (const UsageError& e) {
    std::cerr << "lrpath: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "lrpath: " << e.what() << '\n';
    return is_usage_kind(e.kind()) && !*rc ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "lrpath: " << e.what() << '\n';
    return kExitRuntime;
  }
}
