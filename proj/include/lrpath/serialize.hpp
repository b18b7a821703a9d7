#pragma once

// JSON encodings of schedules, update scenarios and training plans.
// Field order is fixed so plan documents can be diffed against golden files.

#include <json.hpp>

#include <string>

#include "lrpath/error.hpp"
#include "lrpath/paradigm.hpp"
#include "lrpath/schedule.hpp"

namespace lrpath {

using Json = nlohmann::ordered_json;

inline Json horizon_to_json(const Horizon& h) {
  if (h.is_finite()) return h.steps();
  return "inf";
}

inline Horizon horizon_from_json(const Json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "infinite" || s == "+inf") return Horizon::infinite();
    fail(ErrorKind::InvalidConfig, "horizon must be an integer or \"inf\"");
  }
  if (!j.is_number_integer()) fail(ErrorKind::InvalidConfig, "horizon must be an integer or \"inf\"");
  return Horizon(j.get<Step>());
}

inline Json to_json(const ScheduleConfig& cfg) {
  Json j;
  j["kind"] = std::string(to_string(cfg.kind));
  j["eta_max"] = cfg.eta_max;
  j["eta_min"] = cfg.eta_min;
  j["warmup_steps"] = cfg.warmup_steps;
  j["horizon"] = horizon_to_json(cfg.horizon);
  j["knee_explore_fraction"] = cfg.knee_explore_fraction;
  j["multistep_breaks"] = {cfg.multistep_breaks[0], cfg.multistep_breaks[1]};
  j["multistep_factors"] = {cfg.multistep_factors[0], cfg.multistep_factors[1]};
  return j;
}

/// Missing fields keep the values already present in `defaults`.
inline ScheduleConfig schedule_from_json(const Json& j, ScheduleConfig defaults = {}) {
  if (!j.is_object()) fail(ErrorKind::InvalidConfig, "schedule must be a JSON object");
  try {
    auto cfg = defaults;
    if (j.contains("kind")) cfg.kind = parse_schedule_kind(j.at("kind").get<std::string>());
    if (j.contains("eta_max")) cfg.eta_max = j.at("eta_max").get<double>();
    if (j.contains("eta_min")) cfg.eta_min = j.at("eta_min").get<double>();
    if (j.contains("warmup_steps")) cfg.warmup_steps = j.at("warmup_steps").get<Step>();
    if (j.contains("horizon")) cfg.horizon = horizon_from_json(j.at("horizon"));
    if (j.contains("knee_explore_fraction")) cfg.knee_explore_fraction = j.at("knee_explore_fraction").get<double>();
    if (j.contains("multistep_breaks")) cfg.multistep_breaks = j.at("multistep_breaks").get<std::array<double, 2>>();
    if (j.contains("multistep_factors"))
      cfg.multistep_factors = j.at("multistep_factors").get<std::array<double, 2>>();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidConfig, std::string("schedule: ") + e.what());
  }
}

inline Json to_json(const UpdateSpec& spec) {
  Json j;
  j["num_versions"] = spec.num_versions;
  j["increments"] = spec.increments;
  j["base_schedule"] = to_json(spec.base_schedule);
  j["seed"] = spec.seed;
  return j;
}

inline UpdateSpec spec_from_json(const Json& j) {
  try {
    UpdateSpec spec;
    spec.num_versions = j.at("num_versions").get<int>();
    spec.increments = j.at("increments").get<std::vector<Step>>();
    spec.base_schedule = schedule_from_json(j.at("base_schedule"));
    spec.seed = j.at("seed").get<std::uint64_t>();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidSpec, std::string("update spec: ") + e.what());
  }
}

inline Json to_json(const ParadigmKind& kind) {
  Json j;
  if (std::holds_alternative<Ptfs>(kind)) {
    j["family"] = "ptfs";
  } else if (const auto* c = std::get_if<Cpt>(&kind)) {
    j["family"] = "cpt";
    j["variant"] = std::string(to_string(c->variant));
  } else if (const auto* p = std::get_if<PathSwitch>(&kind)) {
    j["family"] = "path_switch";
    j["alpha"] = p->alpha;
  } else {
    const auto& probe = std::get<TwoStageProbe>(kind);
    j["family"] = "two_stage_probe";
    j["first_cycle"] = horizon_to_json(probe.first_cycle);
    j["fork_step"] = probe.fork_step;
    j["second_cycle"] = horizon_to_json(probe.second_cycle);
    j["second_len"] = probe.second_len;
  }
  j["name"] = paradigm_name(kind);
  return j;
}

inline ParadigmKind paradigm_from_json(const Json& j) {
  try {
    const auto family = j.at("family").get<std::string>();
    if (family == "ptfs") return Ptfs{};
    if (family == "cpt") {
      const auto v = j.at("variant").get<std::string>();
      for (auto variant : {CptVariant::RewarmMax, CptVariant::ResetMax, CptVariant::KeepMin})
        if (to_string(variant) == v) return Cpt{variant};
      fail(ErrorKind::InvalidSpec, "unknown CPT variant " + v);
    }
    if (family == "path_switch") return PathSwitch{j.at("alpha").get<double>()};
    if (family == "two_stage_probe")
      return TwoStageProbe{horizon_from_json(j.at("first_cycle")), j.at("fork_step").get<Step>(),
                           horizon_from_json(j.at("second_cycle")), j.at("second_len").get<Step>()};
    fail(ErrorKind::InvalidSpec, "unknown paradigm family " + family);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidSpec, std::string("paradigm: ") + e.what());
  }
}

inline Json to_json(const LrProfile& profile) {
  Json j;
  if (const auto* span = std::get_if<ScheduleSpan>(&profile)) {
    j["type"] = "schedule";
    j["schedule"] = to_json(span->schedule);
    j["offset"] = span->offset;
  } else if (const auto* decay = std::get_if<DecaySpan>(&profile)) {
    j["type"] = "decay";
    j["schedule"] = to_json(decay->schedule);
    j["length"] = decay->length;
  } else {
    j["type"] = "series";
    Json points = Json::array();
    for (const auto& p : std::get<LRSeries>(profile)) points.push_back({p.step, p.lr});
    j["points"] = std::move(points);
  }
  return j;
}

inline LrProfile profile_from_json(const Json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "schedule") return ScheduleSpan{schedule_from_json(j.at("schedule")), j.at("offset").get<Step>()};
  if (type == "decay") return DecaySpan{schedule_from_json(j.at("schedule")), j.at("length").get<Step>()};
  if (type == "series") {
    LRSeries series;
    for (const auto& p : j.at("points")) series.push_back({p.at(0).get<Step>(), p.at(1).get<double>()});
    return series;
  }
  fail(ErrorKind::InvalidSpec, "unknown lr descriptor type " + type);
}

inline Json to_json(const Phase& p) {
  Json j;
  j["phase_id"] = p.phase_id;
  j["version"] = p.version;
  j["path"] = std::string(to_string(p.path));
  if (const auto* fresh = std::get_if<FreshInit>(&p.init_from)) {
    j["init_from"] = "fresh";
    j["init_seed"] = fresh->seed;
  } else {
    j["init_from"] = std::get<FromPhase>(p.init_from).phase_id;
  }
  j["num_steps"] = p.num_steps;
  j["lr"] = to_json(p.lr_profile);
  Json data = Json::array();
  for (const auto& s : p.data) data.push_back({{"increment", s.increment}, {"offset", s.offset}, {"length", s.length}});
  j["data"] = std::move(data);
  j["emits_version_checkpoint"] = p.emits_version_checkpoint;
  return j;
}

inline Phase phase_from_json(const Json& j) {
  Phase p;
  p.phase_id = j.at("phase_id").get<std::string>();
  p.version = j.at("version").get<int>();
  const auto path = j.at("path").get<std::string>();
  if (path == "main") p.path = PathKind::Main;
  else if (path == "branch") p.path = PathKind::Branch;
  else if (path == "scratch") p.path = PathKind::Scratch;
  else fail(ErrorKind::InvalidSpec, "unknown path kind " + path);
  const auto init = j.at("init_from").get<std::string>();
  if (init == "fresh") p.init_from = FreshInit{j.at("init_seed").get<std::uint64_t>()};
  else p.init_from = FromPhase{init};
  p.num_steps = j.at("num_steps").get<Step>();
  p.lr_profile = profile_from_json(j.at("lr"));
  for (const auto& s : j.at("data"))
    p.data.push_back({s.at("increment").get<int>(), s.at("offset").get<Step>(), s.at("length").get<Step>()});
  p.emits_version_checkpoint = j.at("emits_version_checkpoint").get<bool>();
  return p;
}

inline Json to_json(const TrainingPlan& plan) {
  Json j;
  j["paradigm"] = to_json(plan.paradigm);
  j["spec"] = to_json(plan.spec);
  j["cost"] = plan_cost(plan);
  Json phases = Json::array();
  for (const auto& p : plan.phases) phases.push_back(to_json(p));
  j["phases"] = std::move(phases);
  return j;
}

inline TrainingPlan plan_from_json(const Json& j) {
  try {
    TrainingPlan plan;
    plan.paradigm = paradigm_from_json(j.at("paradigm"));
    plan.spec = spec_from_json(j.at("spec"));
    for (const auto& p : j.at("phases")) plan.phases.push_back(phase_from_json(p));
    return plan;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidSpec, std::string("training plan: ") + e.what());
  }
}

}  // namespace lrpath
