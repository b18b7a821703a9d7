#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "lrpath/error.hpp"
#include "lrpath/lineage.hpp"
#include "lrpath/paradigm.hpp"
#include "lrpath/trainer/adam.hpp"
#include "lrpath/trainer/corpus.hpp"
#include "lrpath/trainer/model.hpp"
#include "lrpath/trainer/train.hpp"
#include "support/grad_check.hpp"

using namespace lrpath;
using namespace lrpath::trainer;

namespace {

ToyModelConfig small_config() {
  ToyModelConfig cfg;
  cfg.context_len = 4;
  cfg.embed_dim = 8;
  cfg.hidden_dim = 16;
  cfg.batch_size = 8;
  return cfg;
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no lrpath::Error thrown";
  return ErrorKind::InvalidArgument;
}

ModelState zero_model(const ToyModelConfig& cfg) {
  auto m = init_model(cfg, 1);
  std::fill(m.params.storage().begin(), m.params.storage().end(), 0.0);
  return m;
}

Batch duplicate(const Batch& b, int times) {
  Batch out{b.window, {}};
  for (int i = 0; i < times; ++i) out.tokens.insert(out.tokens.end(), b.tokens.begin(), b.tokens.end());
  return out;
}

struct PlanFixture {
  ToyModelConfig cfg = small_config();
  TrainingPlan plan;
  TokenStream corpus;
  std::vector<DataSegment> segments;

  PlanFixture() {
    ScheduleConfig base;
    base.eta_max = 3e-3;
    base.eta_min = 3e-4;
    base.warmup_steps = 20;
    plan = build_plan(PathSwitch{0.6}, UpdateSpec::uniform(2, 100, base, 11));
    const auto tps = static_cast<std::int64_t>(cfg.tokens_per_step());
    corpus = make_corpus(3, static_cast<std::size_t>(plan.spec.total_steps() * tps));
    segments = allocate_segments(plan, static_cast<std::int64_t>(corpus.size()), tps);
  }

  PhaseData data(const Phase& p) const { return make_phase_data(p, segments, corpus, cfg); }
};

}  // namespace

TEST(Corpus, SameSeedSameStream) {
  EXPECT_EQ(make_corpus(5, 4096), make_corpus(5, 4096));
  EXPECT_NE(make_corpus(5, 4096), make_corpus(6, 4096));
}

TEST(Corpus, PrefixStable) {
  const auto longer = make_corpus(9, 5000);
  const auto shorter = make_corpus(9, 1000);
  EXPECT_TRUE(std::equal(shorter.begin(), shorter.end(), longer.begin()));
}

TEST(Corpus, SingleToken) {
  const auto c = make_corpus(1, 1);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_GE(c[0], 0);
  EXPECT_LT(c[0], 256);
}

TEST(Corpus, TokensInVocabulary) {
  for (Token t : make_corpus(2, 20000)) {
    ASSERT_GE(t, 0);
    ASSERT_LT(t, 256);
  }
}

TEST(Corpus, ZeroSizeRejected) {
  EXPECT_EQ(kind_of([] { (void)make_corpus(1, 0); }), ErrorKind::InvalidArgument);
}

TEST(Corpus, MissingFileIsIoError) {
  EXPECT_EQ(kind_of([] { (void)load_corpus_file("/nonexistent/corpus.bin"); }), ErrorKind::IoError);
}

TEST(Corpus, FileBytesBecomeTokens) {
  const auto path = std::filesystem::temp_directory_path() / "lrpath_corpus_bytes.bin";
  {
    std::ofstream out(path, std::ios::binary);
    const unsigned char bytes[] = {0, 1, 200, 255};
    out.write(reinterpret_cast<const char*>(bytes), sizeof bytes);
  }
  EXPECT_EQ(load_corpus_file(path), (TokenStream{0, 1, 200, 255}));
  std::filesystem::remove(path);
}

TEST(ForwardLoss, ZeroModelIsUniform) {
  const auto cfg = small_config();
  const auto m = zero_model(cfg);
  EXPECT_NEAR(forward_loss(m, lrpath::testing::random_batch(cfg, 8, 1)).loss, std::log(256.0), 1e-12);
}

TEST(ForwardLoss, FreshModelNearUniform) {
  const ToyModelConfig cfg;
  const auto m = init_model(cfg, 3);
  EXPECT_NEAR(forward_loss(m, lrpath::testing::random_batch(cfg, 64, 2)).loss, std::log(256.0), 0.05);
}

TEST(ForwardLoss, DuplicatedBatchSameMean) {
  const auto cfg = small_config();
  const auto m = init_model(cfg, 4);
  const auto b = lrpath::testing::random_batch(cfg, 8, 5);
  EXPECT_NEAR(forward_loss(m, duplicate(b, 3)).loss, forward_loss(m, b).loss, 1e-12);
}

TEST(ForwardLoss, RejectsOutOfVocabularyToken) {
  const auto cfg = small_config();
  const auto m = init_model(cfg, 4);
  auto b = lrpath::testing::random_batch(cfg, 2, 5);
  b.tokens[3] = 256;
  EXPECT_EQ(kind_of([&] { (void)forward_loss(m, b); }), ErrorKind::ShapeMismatch);
  b.tokens[3] = -1;
  EXPECT_EQ(kind_of([&] { (void)forward_loss(m, b); }), ErrorKind::ShapeMismatch);
}

TEST(ForwardLoss, RejectsWrongWindow) {
  const auto cfg = small_config();
  const auto m = init_model(cfg, 4);
  Batch b{cfg.window() + 1, std::vector<Token>(cfg.window() + 1, 0)};
  EXPECT_EQ(kind_of([&] { (void)forward_loss(m, b); }), ErrorKind::ShapeMismatch);
  Batch empty{cfg.window(), {}};
  EXPECT_EQ(kind_of([&] { (void)forward_loss(m, empty); }), ErrorKind::ShapeMismatch);
}

TEST(Backward, MatchesFiniteDifferences) {
  const auto cfg = small_config();
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto m = init_model(cfg, seed);
    for (const auto& c : lrpath::testing::check_gradients(m, lrpath::testing::random_batch(cfg, 8, seed + 10), 200, seed))
      EXPECT_LT(c.worst_relative, 1e-4) << c.name << " seed " << seed;
  }
}

TEST(Backward, MatchesFiniteDifferencesAtDefaultSize) {
  const ToyModelConfig cfg;
  const auto m = init_model(cfg, 21);
  for (const auto& c : lrpath::testing::check_gradients(m, lrpath::testing::random_batch(cfg, 8, 4), 200, 8))
    EXPECT_LT(c.worst_relative, 1e-4) << c.name;
}

TEST(Backward, EmbeddingGradientOnlyOnUsedRows) {
  const auto cfg = small_config();
  const auto m = init_model(cfg, 6);
  Batch b{cfg.window(), {}};
  for (int i = 0; i < 4; ++i) {
    b.tokens.insert(b.tokens.end(), cfg.window() - 1, 42);
    b.tokens.push_back(7);
  }
  const auto g = backward(m, forward_loss(m, b).cache);
  const auto emb = g.embedding();
  for (Eigen::Index r = 0; r < emb.rows(); ++r) {
    if (r == 42)
      EXPECT_GT(emb.row(r).norm(), 0.0);
    else
      EXPECT_EQ(emb.row(r).norm(), 0.0) << "row " << r;
  }
}

TEST(Backward, DuplicatedBatchSameGradient) {
  const auto cfg = small_config();
  const auto m = init_model(cfg, 8);
  const auto b = lrpath::testing::random_batch(cfg, 8, 9);
  const auto g1 = backward(m, forward_loss(m, b).cache);
  const auto g2 = backward(m, forward_loss(m, duplicate(b, 2)).cache);
  for (std::size_t i = 0; i < g1.size(); ++i) ASSERT_NEAR(g1.values()[i], g2.values()[i], 1e-14);
}

TEST(Backward, StaleCacheRejected) {
  const auto cfg = small_config();
  auto m = init_model(cfg, 8);
  AdamState adam(cfg);
  const auto fwd = forward_loss(m, lrpath::testing::random_batch(cfg, 8, 9));
  adam_step(m, adam, backward(m, fwd.cache), 1e-3);
  EXPECT_EQ(kind_of([&] { (void)backward(m, fwd.cache); }), ErrorKind::StaleCache);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  const auto cfg = small_config();
  auto m = init_model(cfg, 2);
  const auto before = m.params;
  AdamState adam(cfg);
  Gradients zero(cfg);
  adam_step(m, adam, zero, 1e-3);
  EXPECT_EQ(m.params, before);
  EXPECT_EQ(adam.t, 1);
}

TEST(Adam, ZeroLearningRateLeavesParameters) {
  const auto cfg = small_config();
  auto m = init_model(cfg, 2);
  const auto before = m.params;
  AdamState adam(cfg);
  const auto g = backward(m, forward_loss(m, lrpath::testing::random_batch(cfg, 8, 1)).cache);
  adam_step(m, adam, g, 0.0);
  EXPECT_EQ(m.params, before);
  EXPECT_EQ(adam.t, 1);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // With bias correction the first step is lr * g / (|g| + eps).
  const auto cfg = small_config();
  auto m = init_model(cfg, 2);
  const auto before = m.params;
  AdamState adam(cfg);
  Gradients g(cfg);
  g.values()[5] = 1.0;
  g.values()[9] = -0.25;
  adam_step(m, adam, g, 1e-3);
  EXPECT_NEAR(m.params.values()[5] - before.values()[5], -1e-3, 1e-10);
  EXPECT_NEAR(m.params.values()[9] - before.values()[9], 1e-3, 1e-10);
  EXPECT_EQ(m.params.values()[6], before.values()[6]);
}

TEST(Adam, NonFiniteGradientRejectedWithoutChange) {
  const auto cfg = small_config();
  auto m = init_model(cfg, 2);
  const auto before = m.params;
  AdamState adam(cfg);
  Gradients g(cfg);
  g.values()[0] = std::nan("");
  EXPECT_EQ(kind_of([&] { adam_step(m, adam, g, 1e-3); }), ErrorKind::NonFiniteUpdate);
  EXPECT_EQ(m.params, before);
  EXPECT_EQ(adam.t, 0);
}

TEST(Adam, RejectsNegativeLearningRate) {
  const auto cfg = small_config();
  auto m = init_model(cfg, 2);
  AdamState adam(cfg);
  Gradients g(cfg);
  EXPECT_EQ(kind_of([&] { adam_step(m, adam, g, -1e-3); }), ErrorKind::InvalidArgument);
}

TEST(TrainPhase, PlateauPhaseTracesPeakRate) {
  PlanFixture f;
  const auto* main2 = f.plan.find("main-v2");
  ASSERT_NE(main2, nullptr);
  auto m = init_model(f.cfg, 1);
  AdamState adam(f.cfg);
  const auto trace = train_phase(m, adam, *main2, f.data(*main2), 7);
  ASSERT_FALSE(trace.empty());
  for (const auto& p : trace) EXPECT_EQ(p.lr, f.plan.spec.base_schedule.eta_max);
  EXPECT_EQ(trace.back().step, main2->num_steps - 1);
  EXPECT_EQ(adam.t, main2->num_steps);
}

TEST(TrainPhase, BranchEndsAtMinimumRate) {
  PlanFixture f;
  const auto* branch = f.plan.find("branch-v1");
  ASSERT_NE(branch, nullptr);
  auto m = init_model(f.cfg, 1);
  AdamState adam(f.cfg);
  const auto trace = train_phase(m, adam, *branch, f.data(*branch), 1000);
  ASSERT_EQ(trace.size(), 2u);
  EXPECT_NEAR(trace.back().lr, f.plan.spec.base_schedule.eta_min, 1e-15);
}

TEST(TrainPhase, LossDecreases) {
  PlanFixture f;
  const auto* main1 = f.plan.find("main-v1");
  auto m = init_model(f.cfg, 1);
  AdamState adam(f.cfg);
  const auto trace = train_phase(m, adam, *main1, f.data(*main1), 10);
  EXPECT_LT(trace.back().loss, trace.front().loss);
}

TEST(TrainPhase, Deterministic) {
  PlanFixture f;
  const auto* main1 = f.plan.find("main-v1");
  auto run = [&] {
    auto m = init_model(f.cfg, 1);
    AdamState adam(f.cfg);
    (void)train_phase(m, adam, *main1, f.data(*main1));
    return std::pair{m.params, adam};
  };
  EXPECT_EQ(run(), run());
}

TEST(TrainPhase, ShortDataIsExhausted) {
  PlanFixture f;
  auto phase = *f.plan.find("main-v1");
  const auto data = f.data(phase);
  phase.num_steps = data.steps() + 1;
  auto m = init_model(f.cfg, 1);
  AdamState adam(f.cfg);
  EXPECT_EQ(kind_of([&] { (void)train_phase(m, adam, phase, data); }), ErrorKind::DataExhausted);
}

TEST(TrainPhase, RejectsEmptyPhase) {
  PlanFixture f;
  auto phase = *f.plan.find("main-v1");
  phase.num_steps = 0;
  auto m = init_model(f.cfg, 1);
  AdamState adam(f.cfg);
  EXPECT_EQ(kind_of([&] { (void)train_phase(m, adam, phase, f.data(*f.plan.find("main-v1"))); }),
            ErrorKind::InvalidArgument);
}

TEST(PhaseData, WindowsAreDisjointAndInRegion) {
  PlanFixture f;
  const auto* main1 = f.plan.find("main-v1");
  const auto data = f.data(*main1);
  EXPECT_EQ(data.steps(), main1->num_steps);
  EXPECT_EQ(kind_of([&] { (void)data.batch(data.steps()); }), ErrorKind::DataExhausted);
}

TEST(EvaluatePpl, UniformPredictor) {
  const auto cfg = small_config();
  const auto r = evaluate_ppl(zero_model(cfg), make_corpus(4, 3000));
  EXPECT_NEAR(r.ppl, 256.0, 1.0);
  EXPECT_EQ(r.tokens_evaluated, 3000 - static_cast<std::int64_t>(cfg.window()) + 1);
}

TEST(EvaluatePpl, PplIsExpNll) {
  const auto cfg = small_config();
  const auto r = evaluate_ppl(init_model(cfg, 5), make_corpus(4, 2000));
  EXPECT_DOUBLE_EQ(r.ppl, std::exp(r.nll));
}

TEST(EvaluatePpl, ChunkSizeDoesNotMatter) {
  const auto cfg = small_config();
  const auto m = init_model(cfg, 5);
  const auto heldout = make_corpus(4, 2500);
  EXPECT_NEAR(evaluate_ppl(m, heldout, 7).nll, evaluate_ppl(m, heldout, 4096).nll, 1e-12);
}

TEST(EvaluatePpl, ConfidentCorrectPredictorApproachesOne) {
  const auto cfg = small_config();
  auto m = zero_model(cfg);
  m.params.b2()(7) = 40.0;
  const TokenStream heldout(500, 7);
  EXPECT_NEAR(evaluate_ppl(m, heldout).ppl, 1.0, 1e-9);
}

TEST(EvaluatePpl, TooShortIsEmptyEval) {
  const auto cfg = small_config();
  const TokenStream heldout(cfg.window() - 1, 0);
  EXPECT_EQ(kind_of([&] { (void)evaluate_ppl(init_model(cfg, 1), heldout); }), ErrorKind::EmptyEval);
}

TEST(PhaseData, SplitIncrementKeepsBatchOrder) {
  PlanFixture f;
  const auto ptfs = build_plan(Ptfs{}, f.plan.spec);
  const auto whole_segments = allocate_segments(ptfs, static_cast<std::int64_t>(f.corpus.size()),
                                                static_cast<std::int64_t>(f.cfg.tokens_per_step()));
  const auto whole = make_phase_data(ptfs.phases.front(), whole_segments, f.corpus, f.cfg);
  const auto main1 = f.data(*f.plan.find("main-v1"));
  const auto branch1 = f.data(*f.plan.find("branch-v1"));
  ASSERT_EQ(main1.steps() + branch1.steps(), whole.steps());
  for (Step s = 0; s < whole.steps(); ++s) {
    const auto expected = whole.batch(s).tokens;
    const auto actual = s < main1.steps() ? main1.batch(s).tokens : branch1.batch(s - main1.steps()).tokens;
    ASSERT_EQ(actual, expected) << "step " << s;
  }
}
