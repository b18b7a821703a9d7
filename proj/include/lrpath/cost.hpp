#pragma once

// Closed-form training cost (optimizer steps) of each update paradigm.
//
//   PTFS         sum_i i*T            = T*N*(N+1)/2
//   CPT          sum_i T              = T*N
//   PathSwitch   sum_{i<N} (T + a*T) + T = (1+a)*T*N - a*T
//
// These are computed without looking at any plan, so they can be used to
// cross-check plan_cost().

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "lrpath/error.hpp"
#include "lrpath/format.hpp"
#include "lrpath/paradigm.hpp"

namespace lrpath {

namespace detail {

inline void check_cost_args(const ParadigmKind& kind, std::int64_t n) {
  if (n < 1) fail(ErrorKind::InvalidArgument, "number of versions must be at least 1");
  if (std::holds_alternative<TwoStageProbe>(kind)) fail(ErrorKind::InvalidArgument, "probes have no paradigm cost");
  if (const auto* ps = std::get_if<PathSwitch>(&kind); ps && !(ps->alpha >= 0.0 && ps->alpha <= 1.0))
    fail(ErrorKind::InvalidArgument, "alpha must lie in [0, 1]");
}

}  // namespace detail

inline std::int64_t paradigm_cost(const ParadigmKind& kind, std::int64_t n, std::int64_t t) {
  detail::check_cost_args(kind, n);
  if (t < 1) fail(ErrorKind::InvalidArgument, "steps per update must be at least 1");
  if (std::holds_alternative<Ptfs>(kind)) return t * n * (n + 1) / 2;
  if (std::holds_alternative<Cpt>(kind)) return t * n;
  const double alpha = std::get<PathSwitch>(kind).alpha;
  return t * n + std::llround(alpha * static_cast<double>(t) * static_cast<double>(n - 1));
}

/// Cost for unequal per-version increments.
inline std::int64_t paradigm_cost(const ParadigmKind& kind, std::span<const std::int64_t> increments) {
  const auto n = static_cast<std::int64_t>(increments.size());
  detail::check_cost_args(kind, n);
  std::int64_t total = 0, cumulative = 0, ptfs = 0;
  for (auto t : increments) {
    if (t < 1) fail(ErrorKind::InvalidArgument, "steps per update must be at least 1");
    total += t;
    cumulative += t;
    ptfs += cumulative;
  }
  if (std::holds_alternative<Ptfs>(kind)) return ptfs;
  if (std::holds_alternative<Cpt>(kind)) return total;
  const double alpha = std::get<PathSwitch>(kind).alpha;
  return total + std::llround(alpha * static_cast<double>(total - increments.back()));
}

inline double relative_cost(const ParadigmKind& kind, std::int64_t n, std::int64_t t) {
  return static_cast<double>(paradigm_cost(kind, n, t)) / static_cast<double>(paradigm_cost(Ptfs{}, n, t));
}

struct CostReport {
  ParadigmKind paradigm;
  std::int64_t n_versions = 0;
  std::int64_t unit_steps = 0;
  std::int64_t absolute_steps = 0;
  double relative_to_ptfs = 0.0;
};

inline CostReport cost_report(const ParadigmKind& kind, std::int64_t n, std::int64_t t) {
  return {kind, n, t, paradigm_cost(kind, n, t), relative_cost(kind, n, t)};
}

/// The three paradigms compared in a cost table.
inline std::vector<CostReport> cost_table(std::int64_t n, std::int64_t t, double alpha) {
  return {cost_report(Ptfs{}, n, t), cost_report(Cpt{}, n, t), cost_report(PathSwitch{alpha}, n, t)};
}

inline std::string cost_label(const ParadigmKind& kind) {
  if (std::holds_alternative<Cpt>(kind)) return "cpt";
  return paradigm_name(kind);
}

inline void write_cost_csv(std::ostream& os, const std::vector<CostReport>& rows) {
  os << "paradigm,N_v,T,steps,relative\n";
  for (const auto& r : rows)
    os << cost_label(r.paradigm) << ',' << r.n_versions << ',' << r.unit_steps << ',' << r.absolute_steps << ','
       << format_fixed(r.relative_to_ptfs, 4) << '\n';
}

/// Aligned table; steps are also shown as a multiple of T.
inline void write_cost_text(std::ostream& os, const std::vector<CostReport>& rows) {
  os << std::left << std::setw(20) << "paradigm" << std::right << std::setw(6) << "N_v" << std::setw(10) << "T"
     << std::setw(14) << "steps" << std::setw(10) << "xT" << std::setw(10) << "relative" << '\n';
  for (const auto& r : rows) {
    const double multiple = static_cast<double>(r.absolute_steps) / static_cast<double>(r.unit_steps);
    os << std::left << std::setw(20) << cost_label(r.paradigm) << std::right << std::setw(6) << r.n_versions
       << std::setw(10) << r.unit_steps << std::setw(14) << r.absolute_steps << std::setw(9)
       << format_fixed(multiple, 1) << 'T' << std::setw(9) << format_fixed(r.relative_to_ptfs, 2) << 'x' << '\n';
  }
}

}  // namespace lrpath
