#pragma once

// Learning-rate schedules as pure functions of (config, step).
//
// Every schedule starts with a linear warmup from 0 to eta_max over
// `warmup_steps` steps. After warmup the shape depends on the kind:
//
//   Cosine      eta_min + (eta_max - eta_min)/2 * (1 + cos(pi * (s - W) / (L - W)))
//   Knee        eta_max for a fraction of the post-warmup span, then linear to eta_min at L
//   MultiStep   eta_max, then factor1 * eta_max after break1 * L, factor2 * eta_max after break2 * L
//   Constant    eta_max
//   InverseSqrt eta_max * sqrt(W / s), never below eta_min
//
// An infinite horizon turns the three decaying kinds into a constant eta_max
// plateau after warmup.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lrpath/error.hpp"
#include "lrpath/format.hpp"

namespace lrpath {

using Step = std::int64_t;

enum class ScheduleKind { Cosine, Knee, MultiStep, Constant, InverseSqrt };

constexpr std::string_view to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::Cosine: return "cosine";
    case ScheduleKind::Knee: return "knee";
    case ScheduleKind::MultiStep: return "multistep";
    case ScheduleKind::Constant: return "constant";
    case ScheduleKind::InverseSqrt: return "inverse_sqrt";
  }
  return "?";
}

inline ScheduleKind parse_schedule_kind(std::string_view name) {
  for (auto kind : {ScheduleKind::Cosine, ScheduleKind::Knee, ScheduleKind::MultiStep,
                    ScheduleKind::Constant, ScheduleKind::InverseSqrt}) {
    if (to_string(kind) == name) return kind;
  }
  if (name == "multi" || name == "multi_step") return ScheduleKind::MultiStep;
  if (name == "inverse-sqrt" || name == "invsqrt") return ScheduleKind::InverseSqrt;
  fail(ErrorKind::InvalidConfig, "unknown schedule kind '" + std::string(name) + "'");
}

/// Schedule length in steps; an empty value means unbounded.
class Horizon {
 public:
  constexpr Horizon() = default;
  constexpr explicit Horizon(Step steps) : steps_(steps) {}

  static constexpr Horizon infinite() { return Horizon(); }

  constexpr bool is_finite() const { return steps_.has_value(); }
  constexpr Step steps() const { return *steps_; }

  friend constexpr bool operator==(const Horizon&, const Horizon&) = default;

 private:
  std::optional<Step> steps_;
};

inline std::string to_string(const Horizon& h) {
  return h.is_finite() ? std::to_string(h.steps()) : std::string("inf");
}

struct ScheduleConfig {
  ScheduleKind kind = ScheduleKind::Cosine;
  double eta_max = 3e-4;
  double eta_min = 3e-5;
  Step warmup_steps = 2000;
  Horizon horizon = Horizon(10000);
  double knee_explore_fraction = 0.5;
  std::array<double, 2> multistep_breaks{0.8, 0.9};
  std::array<double, 2> multistep_factors{0.316, 0.10};

  ScheduleConfig with_horizon(Horizon h) const {
    auto copy = *this;
    copy.horizon = h;
    return copy;
  }
  ScheduleConfig with_warmup(Step w) const {
    auto copy = *this;
    copy.warmup_steps = w;
    return copy;
  }

  friend bool operator==(const ScheduleConfig&, const ScheduleConfig&) = default;
};

/// One (step, lr) sample of a materialized curve.
struct LrPoint {
  Step step = 0;
  double lr = 0.0;
  friend bool operator==(const LrPoint&, const LrPoint&) = default;
};

using LRSeries = std::vector<LrPoint>;

inline void validate_config(const ScheduleConfig& cfg) {
  auto bad = [](const std::string& why) { fail(ErrorKind::InvalidConfig, why); };
  if (!(cfg.eta_max > 0.0) || !std::isfinite(cfg.eta_max)) bad("eta_max must be positive and finite");
  if (!(cfg.eta_min > 0.0) || !std::isfinite(cfg.eta_min)) bad("eta_min must be positive and finite");
  if (cfg.eta_min > cfg.eta_max) bad("eta_min must not exceed eta_max");
  if (cfg.warmup_steps < 0) bad("warmup_steps must be nonnegative");
  if (cfg.horizon.is_finite()) {
    if (cfg.horizon.steps() <= 0) bad("horizon must be positive");
    if (cfg.warmup_steps >= cfg.horizon.steps()) bad("warmup_steps must be smaller than the horizon");
  }
  if (!(cfg.knee_explore_fraction >= 0.0 && cfg.knee_explore_fraction <= 1.0))
    bad("knee_explore_fraction must lie in [0, 1]");
  const auto& b = cfg.multistep_breaks;
  if (!(b[0] > 0.0 && b[0] < b[1] && b[1] < 1.0)) bad("multistep_breaks must be strictly increasing in (0, 1)");
  const auto& f = cfg.multistep_factors;
  if (!(f[0] <= 1.0 && f[0] > f[1] && f[1] > 0.0)) bad("multistep_factors must be strictly decreasing in (0, 1]");
}

namespace detail {

// Shape of the post-warmup decay for u in [0, 1]; u = 0 is the start of the
// decay window and u = 1 its end.
inline double cosine_shape(const ScheduleConfig& cfg, double u) {
  return cfg.eta_min + 0.5 * (cfg.eta_max - cfg.eta_min) * (1.0 + std::cos(std::numbers::pi * u));
}

inline double linear_shape(const ScheduleConfig& cfg, double u) {
  return cfg.eta_max + (cfg.eta_min - cfg.eta_max) * u;
}

}  // namespace detail

/// Learning rate at an absolute schedule step.
inline double lr_at(const ScheduleConfig& cfg, Step step) {
  if (step < 0) fail(ErrorKind::StepOutOfRange, "negative step " + std::to_string(step));
  if (cfg.horizon.is_finite() && step > cfg.horizon.steps())
    fail(ErrorKind::StepOutOfRange,
         "step " + std::to_string(step) + " beyond horizon " + std::to_string(cfg.horizon.steps()));

  const Step warmup = cfg.warmup_steps;
  if (step < warmup) return cfg.eta_max * static_cast<double>(step) / static_cast<double>(warmup);

  switch (cfg.kind) {
    case ScheduleKind::Constant:
      return cfg.eta_max;
    case ScheduleKind::InverseSqrt: {
      const double ref = static_cast<double>(std::max<Step>(warmup, 1));
      const double s = std::max(static_cast<double>(step), ref);
      return std::max(cfg.eta_max * std::sqrt(ref / s), cfg.eta_min);
    }
    default:
      break;
  }
  if (!cfg.horizon.is_finite()) return cfg.eta_max;

  const double span = static_cast<double>(cfg.horizon.steps() - warmup);
  const double since = static_cast<double>(step - warmup);
  switch (cfg.kind) {
    case ScheduleKind::Cosine:
      return detail::cosine_shape(cfg, since / span);
    case ScheduleKind::Knee: {
      const double plateau = cfg.knee_explore_fraction * span;
      if (since <= plateau) return cfg.eta_max;
      return detail::linear_shape(cfg, (since - plateau) / (span - plateau));
    }
    case ScheduleKind::MultiStep: {
      const double horizon = static_cast<double>(cfg.horizon.steps());
      const double s = static_cast<double>(step);
      if (s < cfg.multistep_breaks[0] * horizon) return cfg.eta_max;
      if (s < cfg.multistep_breaks[1] * horizon) return cfg.multistep_factors[0] * cfg.eta_max;
      return cfg.multistep_factors[1] * cfg.eta_max;
    }
    default:
      return cfg.eta_max;
  }
}

/// Compressed decay from eta_max to eta_min over exactly `length` steps.
///
/// Point i carries the rate reached after i + 1 steps of the kind's decay
/// shape, so the first point is at most eta_max and the last is eta_min.
/// Knee decays linearly; MultiStep spends the first half of the window on its
/// middle plateau and the second half at eta_min.
inline LRSeries decay_segment(const ScheduleConfig& cfg, Step length) {
  if (length < 1) fail(ErrorKind::InvalidArgument, "decay length must be at least 1");
  if (cfg.kind == ScheduleKind::Constant || cfg.kind == ScheduleKind::InverseSqrt)
    fail(ErrorKind::UnsupportedKind, std::string(to_string(cfg.kind)) + " has no decay shape");

  LRSeries out;
  out.reserve(static_cast<std::size_t>(length));
  const double n = static_cast<double>(length);
  const Step half = length / 2;
  for (Step i = 0; i < length; ++i) {
    const double u = static_cast<double>(i + 1) / n;
    double lr = cfg.eta_min;
    if (i + 1 < length) {
      switch (cfg.kind) {
        case ScheduleKind::Cosine: lr = detail::cosine_shape(cfg, u); break;
        case ScheduleKind::Knee: lr = detail::linear_shape(cfg, u); break;
        case ScheduleKind::MultiStep:
          lr = i < half ? cfg.multistep_factors[0] * cfg.eta_max : cfg.eta_min;
          break;
        default: break;
      }
    }
    out.push_back({i, lr});
  }
  return out;
}

inline LRSeries dump_curve(const ScheduleConfig& cfg, Step from, Step to, Step stride) {
  if (from < 0 || from > to) fail(ErrorKind::InvalidArgument, "dump_curve needs 0 <= from <= to");
  if (stride < 1) fail(ErrorKind::InvalidArgument, "stride must be positive");
  LRSeries out;
  for (Step s = from; s <= to; s += stride) out.push_back({s, lr_at(cfg, s)});
  return out;
}

inline void write_curve_csv(std::ostream& os, const LRSeries& series) {
  os << "step,lr\n";
  for (const auto& p : series) os << p.step << ',' << format_double(p.lr) << '\n';
}

}  // namespace lrpath
