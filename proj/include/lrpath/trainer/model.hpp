#pragma once

// Fixed-context next-token predictor:
//
//   x = [E[t_1], ..., E[t_k]]            (k * embed)
//   h = tanh(x W1 + b1)                  (hidden)
//   p = softmax(h W2 + b2)               (vocab)
//
// All parameters live in one flat vector of doubles laid out as
// E | W1 | b1 | W2 | b2, row-major, so that checkpoints, optimizer moments
// and gradients share a single layout.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lrpath/error.hpp"
#include "lrpath/eval_report.hpp"
#include "lrpath/rng.hpp"
#include "lrpath/trainer/corpus.hpp"

namespace lrpath::trainer {

struct ToyModelConfig {
  int vocab_size = 256;
  int context_len = 8;
  int embed_dim = 32;
  int hidden_dim = 128;
  int batch_size = 64;

  void validate() const {
    if (vocab_size <= 0 || context_len <= 0 || embed_dim <= 0 || hidden_dim <= 0 || batch_size <= 0)
      fail(ErrorKind::InvalidConfig, "toy model dimensions must be positive");
  }
  std::size_t window() const { return static_cast<std::size_t>(context_len) + 1; }
  std::size_t tokens_per_step() const { return window() * static_cast<std::size_t>(batch_size); }

  friend bool operator==(const ToyModelConfig&, const ToyModelConfig&) = default;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixView = Eigen::Map<RowMatrix>;
using ConstMatrixView = Eigen::Map<const RowMatrix>;
using VectorView = Eigen::Map<Eigen::RowVectorXd>;
using ConstVectorView = Eigen::Map<const Eigen::RowVectorXd>;

/// Offsets of each tensor inside the flat parameter vector.
struct ParamLayout {
  std::size_t embedding = 0, w1 = 0, b1 = 0, w2 = 0, b2 = 0, total = 0;
  Eigen::Index vocab = 0, input = 0, embed = 0, hidden = 0;

  explicit ParamLayout(const ToyModelConfig& cfg)
      : vocab(cfg.vocab_size),
        input(static_cast<Eigen::Index>(cfg.context_len) * cfg.embed_dim),
        embed(cfg.embed_dim),
        hidden(cfg.hidden_dim) {
    const auto v = static_cast<std::size_t>(vocab), d = static_cast<std::size_t>(embed),
               in = static_cast<std::size_t>(input), h = static_cast<std::size_t>(hidden);
    w1 = embedding + v * d;
    b1 = w1 + in * h;
    w2 = b1 + h;
    b2 = w2 + h * v;
    total = b2 + v;
  }
};

/// A set of tensors laid out like the model; used for parameters, gradients
/// and optimizer moments. The buffer is aligned to Eigen's widest SIMD width
/// so vectorized kernels round identically from run to run.
class TensorSet {
 public:
  using Storage = std::vector<double, Eigen::aligned_allocator<double>>;

  TensorSet() : layout_(ToyModelConfig{}) {}
  explicit TensorSet(const ToyModelConfig& cfg) : layout_(cfg), values_(layout_.total, 0.0) {}

  const ParamLayout& layout() const { return layout_; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  Storage& storage() { return values_; }
  std::size_t size() const { return values_.size(); }

  MatrixView embedding() { return {values_.data() + layout_.embedding, layout_.vocab, layout_.embed}; }
  MatrixView w1() { return {values_.data() + layout_.w1, layout_.input, layout_.hidden}; }
  VectorView b1() { return {values_.data() + layout_.b1, layout_.hidden}; }
  MatrixView w2() { return {values_.data() + layout_.w2, layout_.hidden, layout_.vocab}; }
  VectorView b2() { return {values_.data() + layout_.b2, layout_.vocab}; }

  ConstMatrixView embedding() const { return {values_.data() + layout_.embedding, layout_.vocab, layout_.embed}; }
  ConstMatrixView w1() const { return {values_.data() + layout_.w1, layout_.input, layout_.hidden}; }
  ConstVectorView b1() const { return {values_.data() + layout_.b1, layout_.hidden}; }
  ConstMatrixView w2() const { return {values_.data() + layout_.w2, layout_.hidden, layout_.vocab}; }
  ConstVectorView b2() const { return {values_.data() + layout_.b2, layout_.vocab}; }

  friend bool operator==(const TensorSet& a, const TensorSet& b) { return a.values_ == b.values_; }

 private:
  ParamLayout layout_;
  Storage values_;
};

using Gradients = TensorSet;

struct ModelState {
  ToyModelConfig config;
  TensorSet params;
  std::uint64_t rng_seed = 0;
  // Bumped on every in-place update so forward caches can detect staleness.
  std::uint64_t revision = 0;

  ModelState() = default;
  explicit ModelState(const ToyModelConfig& cfg) : config(cfg), params(cfg) {}

  bool all_finite() const {
    for (double x : params.values())
      if (!std::isfinite(x)) return false;
    return true;
  }
};

/// Fresh model: N(0, 1) embeddings, fan-in scaled W1, small W2, zero biases.
inline ModelState init_model(const ToyModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelState model(cfg);
  model.rng_seed = seed;
  Rng rng(derive_seed(seed, 0x1417));
  auto fill = [&](auto view, double scale) {
    for (Eigen::Index r = 0; r < view.rows(); ++r)
      for (Eigen::Index c = 0; c < view.cols(); ++c) view(r, c) = scale * rng.normal();
  };
  const double fan_in = static_cast<double>(model.params.layout().input);
  fill(model.params.embedding(), 1.0);
  fill(model.params.w1(), 1.0 / std::sqrt(fan_in));
  fill(model.params.w2(), 0.02);
  return model;
}

/// `size` windows of `context_len + 1` tokens; the last token of each window
/// is the prediction target.
struct Batch {
  std::size_t window = 0;
  std::vector<Token> tokens;

  std::size_t size() const { return window == 0 ? 0 : tokens.size() / window; }
  std::span<const Token> row(std::size_t i) const { return {tokens.data() + i * window, window}; }
};

struct ForwardCache {
  std::uint64_t revision = 0;
  const ModelState* model = nullptr;
  Batch batch;
  RowMatrix inputs;   // batch x (k * embed)
  RowMatrix hidden;   // batch x hidden, post-tanh
  RowMatrix probs;    // batch x vocab
};

namespace detail {

inline void check_batch(const ModelState& model, const Batch& batch) {
  const auto& cfg = model.config;
  if (batch.window != cfg.window() || batch.tokens.size() % batch.window != 0 || batch.size() == 0)
    fail(ErrorKind::ShapeMismatch, "batch windows must hold context_len + 1 tokens");
  for (Token t : batch.tokens)
    if (t < 0 || t >= cfg.vocab_size)
      fail(ErrorKind::ShapeMismatch, "token id " + std::to_string(t) + " outside vocabulary");
}

inline void gather_inputs(const ModelState& model, const Batch& batch, RowMatrix& inputs) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  const auto k = static_cast<Eigen::Index>(model.config.context_len);
  const auto d = static_cast<Eigen::Index>(model.config.embed_dim);
  const auto emb = model.params.embedding();
  inputs.resize(n, k * d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = batch.row(static_cast<std::size_t>(i));
    for (Eigen::Index j = 0; j < k; ++j) inputs.block(i, j * d, 1, d) = emb.row(row[static_cast<std::size_t>(j)]);
  }
}

// Turns each row of logits into log-probabilities in place.
inline void log_softmax_rows(RowMatrix& logits) {
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    row.array() -= lse;
  }
}

}  // namespace detail

struct LossResult {
  double loss = 0.0;
  ForwardCache cache;
};

/// Mean next-token cross-entropy (nats) over the batch.
inline LossResult forward_loss(const ModelState& model, const Batch& batch) {
  detail::check_batch(model, batch);
  LossResult out;
  auto& cache = out.cache;
  cache.revision = model.revision;
  cache.model = &model;
  cache.batch = batch;
  detail::gather_inputs(model, batch, cache.inputs);
  cache.hidden = ((cache.inputs * model.params.w1()).rowwise() + model.params.b1()).array().tanh();
  RowMatrix logp = (cache.hidden * model.params.w2()).rowwise() + model.params.b2();
  detail::log_softmax_rows(logp);
  const auto n = static_cast<Eigen::Index>(batch.size());
  const std::size_t target = batch.window - 1;
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) total -= logp(i, batch.row(static_cast<std::size_t>(i))[target]);
  out.loss = total / static_cast<double>(n);
  cache.probs = logp.array().exp();
  return out;
}

/// Exact gradient of the mean loss computed by `forward_loss`.
inline Gradients backward(const ModelState& model, const ForwardCache& cache) {
  if (cache.model != &model || cache.revision != model.revision)
    fail(ErrorKind::StaleCache, "forward cache does not belong to the current model parameters");
  const auto& batch = cache.batch;
  const auto n = static_cast<Eigen::Index>(batch.size());
  const std::size_t target = batch.window - 1;

  RowMatrix dlogits = cache.probs;
  for (Eigen::Index i = 0; i < n; ++i) dlogits(i, batch.row(static_cast<std::size_t>(i))[target]) -= 1.0;
  dlogits /= static_cast<double>(n);

  Gradients grads(model.config);
  grads.w2().noalias() = cache.hidden.transpose() * dlogits;
  grads.b2() = dlogits.colwise().sum();
  RowMatrix dpre = (dlogits * model.params.w2().transpose()).array() * (1.0 - cache.hidden.array().square());
  grads.w1().noalias() = cache.inputs.transpose() * dpre;
  grads.b1() = dpre.colwise().sum();
  const RowMatrix dinputs = dpre * model.params.w1().transpose();

  const auto k = static_cast<Eigen::Index>(model.config.context_len);
  const auto d = static_cast<Eigen::Index>(model.config.embed_dim);
  auto demb = grads.embedding();
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = batch.row(static_cast<std::size_t>(i));
    for (Eigen::Index j = 0; j < k; ++j) demb.row(row[static_cast<std::size_t>(j)]) += dinputs.block(i, j * d, 1, d);
  }
  return grads;
}

using lrpath::EvalReport;

/// Perplexity over every next-token prediction in `heldout` that has a full
/// context window.
inline EvalReport evaluate_ppl(const ModelState& model, std::span<const Token> heldout,
                               std::size_t chunk = 1024) {
  const std::size_t window = model.config.window();
  if (heldout.size() < window) fail(ErrorKind::EmptyEval, "held-out set shorter than one window");
  const std::size_t positions = heldout.size() - window + 1;
  double total = 0.0;
  Batch batch;
  batch.window = window;
  for (std::size_t start = 0; start < positions; start += chunk) {
    const std::size_t count = std::min(chunk, positions - start);
    batch.tokens.clear();
    for (std::size_t i = 0; i < count; ++i)
      batch.tokens.insert(batch.tokens.end(), heldout.begin() + static_cast<std::ptrdiff_t>(start + i),
                          heldout.begin() + static_cast<std::ptrdiff_t>(start + i + window));
    detail::check_batch(model, batch);
    RowMatrix inputs;
    detail::gather_inputs(model, batch, inputs);
    RowMatrix hidden = ((inputs * model.params.w1()).rowwise() + model.params.b1()).array().tanh();
    RowMatrix logp = (hidden * model.params.w2()).rowwise() + model.params.b2();
    detail::log_softmax_rows(logp);
    for (std::size_t i = 0; i < count; ++i)
      total -= logp(static_cast<Eigen::Index>(i), batch.row(i)[window - 1]);
  }
  EvalReport report;
  report.tokens_evaluated = static_cast<std::int64_t>(positions);
  report.nll = total / static_cast<double>(positions);
  report.ppl = std::exp(report.nll);
  return report;
}

}  // namespace lrpath::trainer
