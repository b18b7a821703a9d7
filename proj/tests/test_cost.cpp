#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "lrpath/cost.hpp"
#include "lrpath/error.hpp"
#include "lrpath/paradigm.hpp"

using namespace lrpath;

namespace {

constexpr std::int64_t T = 10000;

// Closed forms written out by hand.
std::int64_t ptfs_oracle(std::int64_t n, std::int64_t t) { return t * n * (n + 1) / 2; }
std::int64_t cpt_oracle(std::int64_t n, std::int64_t t) { return t * n; }
std::int64_t ours_oracle(std::int64_t n, std::int64_t t, std::int64_t alpha_tenths) {
  return t * n + alpha_tenths * t * (n - 1) / 10;
}

}  // namespace

TEST(ParadigmCost, WorkedValuesForFourVersions) {
  EXPECT_EQ(paradigm_cost(Ptfs{}, 4, T), 10 * T);
  EXPECT_EQ(paradigm_cost(Cpt{}, 4, T), 4 * T);
  EXPECT_EQ(paradigm_cost(PathSwitch{0.6}, 4, T), 58 * T / 10);
}

TEST(ParadigmCost, WorkedValuesForTenVersions) {
  EXPECT_EQ(paradigm_cost(Ptfs{}, 10, T), 55 * T);
  EXPECT_EQ(paradigm_cost(Cpt{}, 10, T), 10 * T);
  EXPECT_EQ(paradigm_cost(PathSwitch{0.6}, 10, T), 154 * T / 10);
}

TEST(ParadigmCost, SingleVersionIsPlainPretraining) {
  for (double alpha : {0.0, 0.3, 0.6, 1.0}) EXPECT_EQ(paradigm_cost(PathSwitch{alpha}, 1, 777), 777);
  EXPECT_EQ(paradigm_cost(Ptfs{}, 1, 777), 777);
}

TEST(ParadigmCost, CptVariantsCostTheSame) {
  for (auto v : {CptVariant::RewarmMax, CptVariant::ResetMax, CptVariant::KeepMin})
    EXPECT_EQ(paradigm_cost(Cpt{v}, 6, 1234), 6 * 1234);
}

TEST(ParadigmCost, RejectsBadArguments) {
  EXPECT_THROW((void)paradigm_cost(Ptfs{}, 0, T), Error);
  EXPECT_THROW((void)paradigm_cost(Cpt{}, 4, 0), Error);
  EXPECT_THROW((void)paradigm_cost(PathSwitch{1.2}, 4, T), Error);
  EXPECT_THROW((void)paradigm_cost(PathSwitch{-0.1}, 4, T), Error);
  EXPECT_THROW((void)paradigm_cost(TwoStageProbe{Horizon(10), 5, Horizon(10), 5}, 2, T), Error);
  try {
    (void)paradigm_cost(Ptfs{}, 0, T);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidArgument);
  }
}

TEST(RelativeCost, TableValues) {
  EXPECT_NEAR(relative_cost(PathSwitch{0.6}, 4, T), 0.58, 0.005);
  EXPECT_NEAR(relative_cost(Cpt{}, 4, T), 0.40, 0.005);
  for (std::int64_t n : {1, 3, 9}) EXPECT_EQ(relative_cost(Ptfs{}, n, T), 1.0);
}

TEST(RelativeCost, FollowsClosedFormAcrossAlpha) {
  // (4 + 3 alpha) / 10 at four versions.
  for (double alpha : {0.2, 0.4, 0.6, 0.8}) EXPECT_NEAR(relative_cost(PathSwitch{alpha}, 4, T), (4 + 3 * alpha) / 10, 1e-12);
}

TEST(CostProperties, AgreesWithOracles) {
  std::mt19937_64 gen(99);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::int64_t n = std::uniform_int_distribution<std::int64_t>(1, 12)(gen);
    const std::int64_t t = 10 * std::uniform_int_distribution<std::int64_t>(1, 10000)(gen);
    const std::int64_t a = std::uniform_int_distribution<std::int64_t>(0, 10)(gen);
    EXPECT_EQ(paradigm_cost(Ptfs{}, n, t), ptfs_oracle(n, t));
    EXPECT_EQ(paradigm_cost(Cpt{}, n, t), cpt_oracle(n, t));
    EXPECT_EQ(paradigm_cost(PathSwitch{static_cast<double>(a) / 10.0}, n, t), ours_oracle(n, t, a));
  }
}

TEST(CostProperties, AgreesWithPlans) {
  std::mt19937_64 gen(1234);
  const std::vector<double> alphas{0.2, 0.4, 0.6, 0.8, 1.0};
  for (int trial = 0; trial < 300; ++trial) {
    const int n = std::uniform_int_distribution<int>(1, 12)(gen);
    const Step t = 5 * std::uniform_int_distribution<Step>(1, 20000)(gen);
    ScheduleConfig base;
    base.warmup_steps = std::min<Step>(t - 1, 2000);
    const auto spec = UpdateSpec::uniform(n, t, base, trial);
    for (const ParadigmKind& kind : {ParadigmKind{Ptfs{}}, ParadigmKind{Cpt{CptVariant::RewarmMax}},
                                     ParadigmKind{PathSwitch{alphas[static_cast<std::size_t>(trial) % alphas.size()]}}})
      EXPECT_EQ(plan_cost(build_plan(kind, spec)), paradigm_cost(kind, n, t)) << paradigm_name(kind) << " n=" << n
                                                                               << " T=" << t;
  }
}

TEST(CostProperties, GrowthDegree) {
  // Second differences in n: zero for the linear costs, constant T for PTFS.
  for (double alpha : {0.0, 0.4, 1.0}) {
    for (std::int64_t n = 1; n <= 10; ++n) {
      auto c = [&](const ParadigmKind& k, std::int64_t m) { return paradigm_cost(k, m, T); };
      EXPECT_EQ(c(PathSwitch{alpha}, n + 2) - 2 * c(PathSwitch{alpha}, n + 1) + c(PathSwitch{alpha}, n), 0);
      EXPECT_EQ(c(Cpt{}, n + 2) - 2 * c(Cpt{}, n + 1) + c(Cpt{}, n), 0);
      EXPECT_EQ(c(Ptfs{}, n + 2) - 2 * c(Ptfs{}, n + 1) + c(Ptfs{}, n), T);
    }
  }
}

TEST(CostProperties, Ordering) {
  for (std::int64_t n = 3; n <= 20; ++n)
    for (int a = 0; a <= 10; ++a) {
      const auto ours = paradigm_cost(PathSwitch{a / 10.0}, n, T);
      EXPECT_LE(paradigm_cost(Cpt{}, n, T), ours);
      EXPECT_LE(ours, 2 * paradigm_cost(Cpt{}, n, T));
      EXPECT_LE(2 * paradigm_cost(Cpt{}, n, T), paradigm_cost(Ptfs{}, n, T));
    }
}

TEST(CostProperties, RelativeCostInUnitInterval) {
  for (std::int64_t n = 1; n <= 12; ++n)
    for (int a = 0; a <= 10; ++a) {
      const double r = relative_cost(PathSwitch{a / 10.0}, n, T);
      EXPECT_GT(r, 0.0);
      EXPECT_LE(r, 1.0);
    }
}

TEST(CostProperties, UnequalIncrementsMatchUniformOverload) {
  const std::vector<std::int64_t> inc(5, 3000);
  for (const ParadigmKind& k : {ParadigmKind{Ptfs{}}, ParadigmKind{Cpt{}}, ParadigmKind{PathSwitch{0.6}}})
    EXPECT_EQ(paradigm_cost(k, inc), paradigm_cost(k, 5, 3000));
}

TEST(CostReport, FieldsAreConsistent) {
  const auto r = cost_report(PathSwitch{0.6}, 4, T);
  EXPECT_EQ(r.n_versions, 4);
  EXPECT_EQ(r.unit_steps, T);
  EXPECT_EQ(r.absolute_steps, 58000);
  EXPECT_DOUBLE_EQ(r.relative_to_ptfs, 58000.0 / 100000.0);
}

TEST(CostTable, CsvRendering) {
  std::ostringstream os;
  write_cost_csv(os, cost_table(4, T, 0.6));
  EXPECT_EQ(os.str(),
            "paradigm,N_v,T,steps,relative\n"
            "ptfs,4,10000,100000,1.0000\n"
            "cpt,4,10000,40000,0.4000\n"
            "path_switch(0.6),4,10000,58000,0.5800\n");
}

TEST(CostTable, TextRenderingShowsMultiples) {
  std::ostringstream os;
  write_cost_text(os, cost_table(10, T, 0.6));
  const auto text = os.str();
  EXPECT_NE(text.find("55.0T"), std::string::npos);
  EXPECT_NE(text.find("10.0T"), std::string::npos);
  EXPECT_NE(text.find("15.4T"), std::string::npos);
  EXPECT_NE(text.find("1.00x"), std::string::npos);
}
