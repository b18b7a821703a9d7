#pragma once

// Compilation of version-update scenarios into explicit training plans.
//
// A plan is a topologically ordered list of phases. Each phase names the
// checkpoint it starts from, the exact learning rate of every local step and
// the slice of which data increment it consumes. Phases are never implicit:
// the path-switching main trajectory, its per-version branches and the
// continuation of the main path over the branch data are separate phases, so
// summing `num_steps` gives the real training cost.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "lrpath/error.hpp"
#include "lrpath/format.hpp"
#include "lrpath/rng.hpp"
#include "lrpath/schedule.hpp"

namespace lrpath {

enum class CptVariant { RewarmMax, ResetMax, KeepMin };

constexpr std::string_view to_string(CptVariant v) {
  switch (v) {
    case CptVariant::RewarmMax: return "rewarm_max";
    case CptVariant::ResetMax: return "reset_max";
    case CptVariant::KeepMin: return "keep_min";
  }
  return "?";
}

struct Ptfs {
  friend bool operator==(const Ptfs&, const Ptfs&) = default;
};
struct Cpt {
  CptVariant variant = CptVariant::ResetMax;
  friend bool operator==(const Cpt&, const Cpt&) = default;
};
struct PathSwitch {
  double alpha = 0.6;
  friend bool operator==(const PathSwitch&, const PathSwitch&) = default;
};
/// Two-stage learning-rate probe: train from scratch, fork, continue.
struct TwoStageProbe {
  Horizon first_cycle;
  Step fork_step = 0;
  Horizon second_cycle;
  Step second_len = 0;
  friend bool operator==(const TwoStageProbe&, const TwoStageProbe&) = default;
};

using ParadigmKind = std::variant<Ptfs, Cpt, PathSwitch, TwoStageProbe>;

inline std::string paradigm_name(const ParadigmKind& kind) {
  struct Visitor {
    std::string operator()(const Ptfs&) const { return "ptfs"; }
    std::string operator()(const Cpt& c) const { return "cpt/" + std::string(to_string(c.variant)); }
    std::string operator()(const PathSwitch& p) const { return "path_switch(" + format_double(p.alpha) + ")"; }
    std::string operator()(const TwoStageProbe& p) const {
      return "probe(" + to_string(p.first_cycle) + "@" + std::to_string(p.fork_step) + "," +
             to_string(p.second_cycle) + "x" + std::to_string(p.second_len) + ")";
    }
  };
  return std::visit(Visitor{}, kind);
}

/// Accepts "ptfs", "cpt" (ResetMax), "cpt-reset", "cpt-rewarm", "cpt-keepmin",
/// "ours" / "path-switch" (with `alpha`) and the canonical names produced by
/// paradigm_name.
inline ParadigmKind parse_paradigm(std::string_view name, double alpha = 0.6) {
  std::string s(name);
  std::replace(s.begin(), s.end(), '-', '_');
  if (s == "ptfs") return Ptfs{};
  if (s == "cpt" || s == "cpt_reset" || s == "cpt/reset_max" || s == "cpt_reset_max") return Cpt{CptVariant::ResetMax};
  if (s == "cpt_rewarm" || s == "cpt/rewarm_max" || s == "cpt_rewarm_max") return Cpt{CptVariant::RewarmMax};
  if (s == "cpt_keepmin" || s == "cpt/keep_min" || s == "cpt_keep_min") return Cpt{CptVariant::KeepMin};
  if (s == "ours" || s == "path_switch") return PathSwitch{alpha};
  if (s.starts_with("path_switch(") && s.ends_with(")")) {
    const std::string inner = s.substr(12, s.size() - 13);
    try {
      std::size_t used = 0;
      const double a = std::stod(inner, &used);
      if (used == inner.size()) return PathSwitch{a};
    } catch (const std::exception&) {
    }
  }
  fail(ErrorKind::InvalidArgument, "unknown paradigm '" + std::string(name) + "'");
}

struct UpdateSpec {
  int num_versions = 4;
  std::vector<Step> increments{10000, 10000, 10000, 10000};
  ScheduleConfig base_schedule;
  std::uint64_t seed = 0;

  static UpdateSpec uniform(int versions, Step steps, ScheduleConfig base, std::uint64_t seed = 0) {
    UpdateSpec spec;
    spec.num_versions = versions;
    spec.increments.assign(static_cast<std::size_t>(std::max(versions, 0)), steps);
    spec.base_schedule = base;
    spec.seed = seed;
    return spec;
  }

  Step increment(int version) const { return increments.at(static_cast<std::size_t>(version - 1)); }
  Step total_steps() const { return std::accumulate(increments.begin(), increments.end(), Step{0}); }

  void validate() const {
    auto bad = [](const std::string& why) { fail(ErrorKind::InvalidSpec, why); };
    if (num_versions < 1) bad("num_versions must be positive");
    if (increments.size() != static_cast<std::size_t>(num_versions)) bad("one increment per version is required");
    for (Step t : increments)
      if (t < 1) bad("every increment needs at least one step");
    try {
      validate_config(base_schedule.with_horizon(Horizon::infinite()));
    } catch (const Error& e) {
      bad(std::string("base schedule: ") + e.what());
    }
    if (base_schedule.warmup_steps >= increments.front()) bad("warmup must be shorter than the first increment");
  }

  friend bool operator==(const UpdateSpec&, const UpdateSpec&) = default;
};

enum class PathKind { Main, Branch, Scratch };

constexpr std::string_view to_string(PathKind p) {
  switch (p) {
    case PathKind::Main: return "main";
    case PathKind::Branch: return "branch";
    case PathKind::Scratch: return "scratch";
  }
  return "?";
}

struct FreshInit {
  std::uint64_t seed = 0;
  friend bool operator==(const FreshInit&, const FreshInit&) = default;
};
struct FromPhase {
  std::string phase_id;
  friend bool operator==(const FromPhase&, const FromPhase&) = default;
};
using InitSource = std::variant<FreshInit, FromPhase>;

/// Local step s runs at lr_at(schedule, offset + s).
struct ScheduleSpan {
  ScheduleConfig schedule;
  Step offset = 1;
  friend bool operator==(const ScheduleSpan&, const ScheduleSpan&) = default;
};
/// Local step s runs at decay_segment(schedule, length)[s].
struct DecaySpan {
  ScheduleConfig schedule;
  Step length = 1;
  friend bool operator==(const DecaySpan&, const DecaySpan&) = default;
};
using LrProfile = std::variant<ScheduleSpan, DecaySpan, LRSeries>;

/// `length` steps of data starting `offset` steps into increment `increment`
/// (1-based).
struct SegmentRef {
  int increment = 1;
  Step offset = 0;
  Step length = 0;
  friend bool operator==(const SegmentRef&, const SegmentRef&) = default;
};

struct Phase {
  std::string phase_id;
  int version = 1;
  PathKind path = PathKind::Scratch;
  InitSource init_from = FreshInit{};
  Step num_steps = 0;
  LrProfile lr_profile;
  std::vector<SegmentRef> data;
  bool emits_version_checkpoint = false;

  const std::string* parent_id() const {
    const auto* from = std::get_if<FromPhase>(&init_from);
    return from ? &from->phase_id : nullptr;
  }

  friend bool operator==(const Phase&, const Phase&) = default;
};

struct TrainingPlan {
  ParadigmKind paradigm;
  UpdateSpec spec;
  std::vector<Phase> phases;

  const Phase* find(std::string_view id) const {
    for (const auto& p : phases)
      if (p.phase_id == id) return &p;
    return nullptr;
  }
  const Phase* released(int version) const {
    for (const auto& p : phases)
      if (p.version == version && p.emits_version_checkpoint) return &p;
    return nullptr;
  }

  friend bool operator==(const TrainingPlan&, const TrainingPlan&) = default;
};

/// Every local learning rate of a profile, in order.
inline std::vector<double> materialize(const LrProfile& profile, Step num_steps) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(std::max<Step>(num_steps, 0)));
  if (const auto* span = std::get_if<ScheduleSpan>(&profile)) {
    for (Step s = 0; s < num_steps; ++s) out.push_back(lr_at(span->schedule, span->offset + s));
  } else if (const auto* decay = std::get_if<DecaySpan>(&profile)) {
    for (const auto& p : decay_segment(decay->schedule, decay->length)) out.push_back(p.lr);
  } else {
    for (const auto& p : std::get<LRSeries>(profile)) out.push_back(p.lr);
  }
  return out;
}

/// Number of steps a profile describes; nullopt when unbounded.
inline std::optional<Step> profile_span(const LrProfile& profile) {
  if (const auto* span = std::get_if<ScheduleSpan>(&profile)) {
    if (!span->schedule.horizon.is_finite()) return std::nullopt;
    return span->schedule.horizon.steps() - span->offset + 1;
  }
  if (const auto* decay = std::get_if<DecaySpan>(&profile)) return decay->length;
  return static_cast<Step>(std::get<LRSeries>(profile).size());
}

/// Fast-decay steps of an update of `increment` steps: floor(alpha * T),
/// tolerant to the representation error of alpha.
inline Step branch_steps(double alpha, Step increment) {
  return static_cast<Step>(std::floor(alpha * static_cast<double>(increment) + 1e-9));
}

inline std::uint64_t fresh_seed(std::uint64_t spec_seed, int version) {
  return derive_seed(spec_seed, static_cast<std::uint64_t>(version));
}

namespace detail {

inline std::string phase_id(std::string_view role, int version) {
  return std::string(role) + "-v" + std::to_string(version);
}

inline ScheduleConfig main_path_schedule(const ScheduleConfig& base) {
  auto cfg = base;
  cfg.kind = ScheduleKind::Constant;
  cfg.horizon = Horizon::infinite();
  return cfg;
}

inline void build_ptfs(TrainingPlan& plan) {
  const auto& spec = plan.spec;
  Step cumulative = 0;
  for (int v = 1; v <= spec.num_versions; ++v) {
    cumulative += spec.increment(v);
    Phase p;
    p.phase_id = phase_id("ptfs", v);
    p.version = v;
    p.path = PathKind::Scratch;
    p.init_from = FreshInit{fresh_seed(spec.seed, v)};
    p.num_steps = cumulative;
    p.lr_profile = ScheduleSpan{spec.base_schedule.with_horizon(Horizon(cumulative)), 1};
    for (int j = 1; j <= v; ++j) p.data.push_back({j, 0, spec.increment(j)});
    p.emits_version_checkpoint = true;
    plan.phases.push_back(std::move(p));
  }
}

inline void build_cpt(TrainingPlan& plan, CptVariant variant) {
  const auto& spec = plan.spec;
  const auto& base = spec.base_schedule;
  for (int v = 1; v <= spec.num_versions; ++v) {
    const Step t = spec.increment(v);
    Phase p;
    p.version = v;
    p.num_steps = t;
    p.data.push_back({v, 0, t});
    p.emits_version_checkpoint = true;
    if (v == 1) {
      p.phase_id = phase_id("cpt", v);
      p.path = PathKind::Scratch;
      p.init_from = FreshInit{fresh_seed(spec.seed, v)};
      p.lr_profile = ScheduleSpan{base.with_horizon(Horizon(t)), 1};
    } else {
      p.phase_id = phase_id("cpt", v);
      p.path = PathKind::Main;
      p.init_from = FromPhase{phase_id("cpt", v - 1)};
      switch (variant) {
        case CptVariant::ResetMax:
          p.lr_profile = ScheduleSpan{base.with_warmup(0).with_horizon(Horizon(t)), 1};
          break;
        case CptVariant::RewarmMax:
          if (base.warmup_steps >= t) fail(ErrorKind::InvalidSpec, "re-warmup does not fit into an increment");
          p.lr_profile = ScheduleSpan{base.with_horizon(Horizon(t)), 1};
          break;
        case CptVariant::KeepMin: {
          ScheduleConfig flat = base;
          flat.kind = ScheduleKind::Constant;
          flat.eta_max = base.eta_min;
          flat.warmup_steps = 0;
          flat.horizon = Horizon::infinite();
          p.lr_profile = ScheduleSpan{flat, 1};
          break;
        }
      }
    }
    plan.phases.push_back(std::move(p));
  }
}

inline void build_path_switch(TrainingPlan& plan, double alpha) {
  const auto& spec = plan.spec;
  const ScheduleConfig main_cfg = main_path_schedule(spec.base_schedule);
  if (spec.base_schedule.kind == ScheduleKind::Constant || spec.base_schedule.kind == ScheduleKind::InverseSqrt)
    fail(ErrorKind::UnsupportedKind, "path switching needs a schedule with a decay shape");

  Step main_steps = 0;  // steps already taken on the main path
  std::optional<std::string> main_tip;
  for (int v = 1; v <= spec.num_versions; ++v) {
    const Step t = spec.increment(v);
    const Step decay = branch_steps(alpha, t);
    const Step prefix = t - decay;
    if (decay < 1)
      fail(ErrorKind::AlphaDegenerate, "alpha " + format_double(alpha) + " leaves no fast-decay steps for version " +
                                           std::to_string(v));

    auto init_from_tip = [&]() -> InitSource {
      if (main_tip) return FromPhase{*main_tip};
      return FreshInit{fresh_seed(spec.seed, 1)};
    };

    if (prefix > 0) {
      Phase m;
      m.phase_id = phase_id("main", v);
      m.version = v;
      m.path = PathKind::Main;
      m.init_from = init_from_tip();
      m.num_steps = prefix;
      m.lr_profile = ScheduleSpan{main_cfg, main_steps + 1};
      m.data.push_back({v, 0, prefix});
      main_steps += prefix;
      main_tip = m.phase_id;
      plan.phases.push_back(std::move(m));
    }

    Phase b;
    b.phase_id = phase_id("branch", v);
    b.version = v;
    b.path = PathKind::Branch;
    b.init_from = init_from_tip();
    b.num_steps = decay;
    b.lr_profile = DecaySpan{spec.base_schedule.with_horizon(Horizon::infinite()), decay};
    b.data.push_back({v, prefix, decay});
    b.emits_version_checkpoint = true;
    plan.phases.push_back(std::move(b));

    if (v < spec.num_versions) {
      Phase c;
      c.phase_id = phase_id("cont", v);
      c.version = v;
      c.path = PathKind::Main;
      c.init_from = init_from_tip();
      c.num_steps = decay;
      c.lr_profile = ScheduleSpan{main_cfg, main_steps + 1};
      c.data.push_back({v, prefix, decay});
      main_steps += decay;
      main_tip = c.phase_id;
      plan.phases.push_back(std::move(c));
    }
  }
}

}  // namespace detail

inline TrainingPlan build_plan(const ParadigmKind& kind, const UpdateSpec& spec) {
  spec.validate();
  TrainingPlan plan{kind, spec, {}};
  if (std::holds_alternative<Ptfs>(kind)) {
    detail::build_ptfs(plan);
  } else if (const auto* cpt = std::get_if<Cpt>(&kind)) {
    detail::build_cpt(plan, cpt->variant);
  } else if (const auto* ps = std::get_if<PathSwitch>(&kind)) {
    if (!(ps->alpha >= 0.0 && ps->alpha <= 1.0)) fail(ErrorKind::InvalidSpec, "alpha must lie in [0, 1]");
    detail::build_path_switch(plan, ps->alpha);
  } else {
    fail(ErrorKind::InvalidSpec, "two-stage probes are built with build_two_stage_probe");
  }
  return plan;
}

/// Stage 1 trains from scratch under a cosine cycle of `first_cycle` steps
/// and stops at `fork_step`; stage 2 continues from that checkpoint for
/// `second_len` steps under a fresh cosine cycle of `second_cycle` steps with
/// no warmup. The stage-1 checkpoint is released as version 1 and the stage-2
/// result as version 2.
inline TrainingPlan build_two_stage_probe(Horizon first_cycle, Step fork_step, Horizon second_cycle,
                                          Step second_len, const UpdateSpec& spec) {
  auto bad = [](const std::string& why) { fail(ErrorKind::InvalidSpec, why); };
  if (fork_step < 1 || second_len < 1) bad("probe stages need at least one step");
  if (first_cycle.is_finite() && fork_step > first_cycle.steps()) bad("fork step lies beyond the first cycle");
  if (second_cycle.is_finite() && second_len > second_cycle.steps()) bad("second stage runs past its cycle");

  UpdateSpec probe_spec = spec;
  probe_spec.num_versions = 2;
  probe_spec.increments = {fork_step, second_len};
  probe_spec.validate();

  ScheduleConfig base = spec.base_schedule;
  base.kind = ScheduleKind::Cosine;
  auto first_cfg = base.with_horizon(first_cycle);
  auto second_cfg = base.with_warmup(0).with_horizon(second_cycle);
  try {
    validate_config(first_cfg);
    validate_config(second_cfg);
  } catch (const Error& e) {
    bad(e.what());
  }

  TrainingPlan plan{TwoStageProbe{first_cycle, fork_step, second_cycle, second_len}, probe_spec, {}};
  Phase first;
  first.phase_id = "stage1";
  first.version = 1;
  first.path = PathKind::Scratch;
  first.init_from = FreshInit{fresh_seed(spec.seed, 1)};
  first.num_steps = fork_step;
  first.lr_profile = ScheduleSpan{first_cfg, 1};
  first.data.push_back({1, 0, fork_step});
  first.emits_version_checkpoint = true;
  plan.phases.push_back(std::move(first));

  Phase second;
  second.phase_id = "stage2";
  second.version = 2;
  second.path = PathKind::Main;
  second.init_from = FromPhase{"stage1"};
  second.num_steps = second_len;
  second.lr_profile = ScheduleSpan{second_cfg, 1};
  second.data.push_back({2, 0, second_len});
  second.emits_version_checkpoint = true;
  plan.phases.push_back(std::move(second));
  return plan;
}

inline Step plan_cost(const TrainingPlan& plan) {
  Step total = 0;
  for (const auto& p : plan.phases) total += p.num_steps;
  return total;
}

/// Same plan with every fresh initialization re-derived from `seed`.
inline TrainingPlan reseed_plan(TrainingPlan plan, std::uint64_t seed) {
  plan.spec.seed = seed;
  for (auto& p : plan.phases)
    if (auto* fresh = std::get_if<FreshInit>(&p.init_from)) fresh->seed = fresh_seed(seed, p.version);
  return plan;
}

/// CPT scenario whose total step count matches path switching with `alpha`:
/// the extra alpha * sum_{i<N} T_i steps are spread evenly over the updates,
/// remainder to the earliest ones.
inline UpdateSpec equalize_cpt_cost(const UpdateSpec& spec, double alpha) {
  spec.validate();
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail(ErrorKind::InvalidSpec, "alpha must lie in [0, 1]");
  const Step carried = spec.total_steps() - spec.increments.back();
  const Step extra = static_cast<Step>(std::llround(alpha * static_cast<double>(carried)));
  UpdateSpec out = spec;
  const Step n = spec.num_versions;
  for (Step i = 0; i < n; ++i) out.increments[static_cast<std::size_t>(i)] += extra / n + (i < extra % n ? 1 : 0);
  return out;
}

/// Phases from the fresh initialization up to and including `id`.
inline std::vector<const Phase*> trajectory(const TrainingPlan& plan, std::string_view id) {
  std::vector<const Phase*> chain;
  const Phase* p = plan.find(id);
  while (p != nullptr) {
    chain.push_back(p);
    if (chain.size() > plan.phases.size()) throw PlanViolation(std::string(id), "initialization cycle");
    const auto* parent = p->parent_id();
    p = parent ? plan.find(*parent) : nullptr;
  }
  std::reverse(chain.begin(), chain.end());
  return chain;
}

inline void validate_plan(const TrainingPlan& plan) {
  const auto& spec = plan.spec;
  try {
    spec.validate();
  } catch (const Error& e) {
    throw PlanViolation("<spec>", e.what());
  }
  const auto& base = spec.base_schedule;
  const bool path_switch = std::holds_alternative<PathSwitch>(plan.paradigm);
  if (plan.phases.empty()) throw PlanViolation("<plan>", "plan has no phases");

  std::set<std::string> seen;
  std::map<int, int> emitters;
  for (const auto& p : plan.phases) {
    const auto& id = p.phase_id;
    if (id.empty()) throw PlanViolation("<unnamed>", "empty phase id");
    if (seen.count(id)) throw PlanViolation(id, "duplicate phase id");
    if (p.version < 1 || p.version > spec.num_versions) throw PlanViolation(id, "version out of range");
    if (p.num_steps < 1) throw PlanViolation(id, "phase must run at least one step");
    if (const auto* parent = p.parent_id(); parent && !seen.count(*parent))
      throw PlanViolation(id, "initializes from '" + *parent + "' which is not an earlier phase");
    seen.insert(id);
    if (p.emits_version_checkpoint) ++emitters[p.version];

    if (auto span = profile_span(p.lr_profile); span && *span != p.num_steps) {
      const bool schedule = std::holds_alternative<ScheduleSpan>(p.lr_profile);
      if (!schedule || *span < p.num_steps)
        throw PlanViolation(id, "learning-rate profile covers " + std::to_string(*span) + " steps, phase runs " +
                                    std::to_string(p.num_steps));
    }
    if (const auto* series = std::get_if<LRSeries>(&p.lr_profile)) {
      for (std::size_t i = 0; i < series->size(); ++i)
        if ((*series)[i].step != static_cast<Step>(i)) throw PlanViolation(id, "series steps must be 0, 1, 2, ...");
    }
    std::vector<double> lrs;
    try {
      lrs = materialize(p.lr_profile, p.num_steps);
    } catch (const Error& e) {
      throw PlanViolation(id, e.what());
    }
    for (double lr : lrs)
      if (!(lr >= 0.0 && lr <= base.eta_max)) throw PlanViolation(id, "learning rate outside [0, eta_max]");

    if (p.path == PathKind::Branch) {
      if (lrs.front() > base.eta_max) throw PlanViolation(id, "branch starts above eta_max");
      if (lrs.back() != base.eta_min) throw PlanViolation(id, "branch does not end at eta_min");
    }
    if (path_switch && p.path == PathKind::Main) {
      const auto* span = std::get_if<ScheduleSpan>(&p.lr_profile);
      for (Step s = 0; s < p.num_steps; ++s) {
        const bool warming = span && span->offset + s < span->schedule.warmup_steps;
        if (!warming && lrs[static_cast<std::size_t>(s)] != base.eta_max)
          throw PlanViolation(id, "main path leaves eta_max after warmup");
      }
    }

    Step consumed = 0;
    for (const auto& seg : p.data) {
      if (seg.increment < 1 || seg.increment > spec.num_versions) throw PlanViolation(id, "data from unknown increment");
      if (seg.offset < 0 || seg.length < 1 || seg.offset + seg.length > spec.increment(seg.increment))
        throw PlanViolation(id, "data segment outside its increment");
      consumed += seg.length;
    }
    if (consumed != p.num_steps) throw PlanViolation(id, "phase consumes a different amount of data than it trains");

    // No trajectory may see the same slice of an increment twice.
    std::map<int, std::vector<std::pair<Step, Step>>> used;
    for (const Phase* step : trajectory(plan, id))
      for (const auto& seg : step->data) used[seg.increment].emplace_back(seg.offset, seg.offset + seg.length);
    for (auto& [inc, ranges] : used) {
      std::sort(ranges.begin(), ranges.end());
      for (std::size_t i = 1; i < ranges.size(); ++i)
        if (ranges[i].first < ranges[i - 1].second)
          throw PlanViolation(id, "trajectory reuses data of increment " + std::to_string(inc));
    }
  }
  for (int v = 1; v <= spec.num_versions; ++v)
    if (emitters[v] != 1)
      throw PlanViolation("<version " + std::to_string(v) + ">",
                          std::to_string(emitters[v]) + " phases release this version; exactly one required");
}

}  // namespace lrpath
