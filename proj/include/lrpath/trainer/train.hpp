#pragma once

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "lrpath/error.hpp"
#include "lrpath/format.hpp"
#include "lrpath/lineage.hpp"
#include "lrpath/paradigm.hpp"
#include "lrpath/rng.hpp"
#include "lrpath/trainer/adam.hpp"
#include "lrpath/trainer/model.hpp"

namespace lrpath::trainer {

/// Batches for the local steps of one phase. The windows of an increment
/// block are visited in a single order fixed by the increment's sampling
/// seed, and a segment is a contiguous slice of that order. Plans that read
/// the same steps of an increment therefore see the same batches, however
/// the increment is cut.
class PhaseData {
 public:
  /// Token range of a whole increment inside the training region.
  struct Block {
    std::int64_t start = 0;
    std::int64_t length = 0;
  };

  PhaseData(std::span<const Token> region, const ToyModelConfig& cfg) : region_(region), cfg_(cfg) {}

  void append_segment(const DataSegment& seg, Block block) {
    const auto window = static_cast<std::int64_t>(cfg_.window());
    if (block.start < 0 || block.start + block.length > static_cast<std::int64_t>(region_.size()))
      fail(ErrorKind::DataExhausted, "segment " + seg.segment_id + " lies outside the training corpus");
    if (seg.start_offset < block.start || seg.start_offset + seg.length > block.start + block.length ||
        (seg.start_offset - block.start) % window != 0)
      fail(ErrorKind::DataExhausted, "segment " + seg.segment_id + " is not aligned to its increment");
    std::vector<std::int64_t> order(static_cast<std::size_t>(block.length / window));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = block.start + static_cast<std::int64_t>(i) * window;
    Rng rng(seg.sampling_seed);
    rng.shuffle(order);
    const auto first = order.begin() + (seg.start_offset - block.start) / window;
    window_starts_.insert(window_starts_.end(), first, first + seg.length / window);
  }

  /// A segment read on its own, as if it were a whole increment.
  void append_segment(const DataSegment& seg) { append_segment(seg, {seg.start_offset, seg.length}); }

  Step steps() const { return static_cast<Step>(window_starts_.size()) / cfg_.batch_size; }

  Batch batch(Step step) const {
    if (step < 0 || step >= steps()) fail(ErrorKind::DataExhausted, "no data for local step " + std::to_string(step));
    Batch b;
    b.window = cfg_.window();
    b.tokens.reserve(cfg_.tokens_per_step());
    const auto first = static_cast<std::size_t>(step) * static_cast<std::size_t>(cfg_.batch_size);
    for (std::size_t i = 0; i < static_cast<std::size_t>(cfg_.batch_size); ++i) {
      const auto start = region_.begin() + window_starts_[first + i];
      b.tokens.insert(b.tokens.end(), start, start + static_cast<std::ptrdiff_t>(b.window));
    }
    return b;
  }

 private:
  std::span<const Token> region_;
  ToyModelConfig cfg_;
  std::vector<std::int64_t> window_starts_;
};

inline PhaseData make_phase_data(const Phase& phase, const std::vector<DataSegment>& segments,
                                 std::span<const Token> region, const ToyModelConfig& cfg) {
  PhaseData data(region, cfg);
  const auto tps = static_cast<std::int64_t>(cfg.tokens_per_step());
  for (const auto& ref : phase.data) {
    PhaseData::Block block{-1, 0};
    for (const auto& s : segments)
      if (s.increment_index == ref.increment) {
        block.start = block.start < 0 ? s.start_offset : std::min(block.start, s.start_offset);
        block.length += s.length;
      }
    for (const auto* seg : segments_for(ref, segments, tps)) data.append_segment(*seg, block);
  }
  return data;
}

struct TracePoint {
  Step step = 0;
  double lr = 0.0;
  double loss = 0.0;
};
using Trace = std::vector<TracePoint>;

inline void write_trace_csv(std::ostream& os, const Trace& trace) {
  os << "step,lr,loss\n";
  for (const auto& p : trace) os << p.step << ',' << format_double(p.lr) << ',' << format_double(p.loss) << '\n';
}

/// Runs exactly `phase.num_steps` Adam steps; local step s uses the phase's
/// learning rate for s. Every `log_stride`-th step and the last step are
/// traced with the loss measured before the update.
inline Trace train_phase(ModelState& model, AdamState& adam, const Phase& phase, const PhaseData& data,
                         Step log_stride = 50) {
  if (phase.num_steps < 1) fail(ErrorKind::InvalidArgument, "phase " + phase.phase_id + " has no steps");
  if (log_stride < 1) fail(ErrorKind::InvalidArgument, "log stride must be positive");
  if (data.steps() < phase.num_steps)
    fail(ErrorKind::DataExhausted, "phase " + phase.phase_id + " needs " + std::to_string(phase.num_steps) +
                                       " steps of data, segment holds " + std::to_string(data.steps()));
  const auto lrs = materialize(phase.lr_profile, phase.num_steps);
  if (static_cast<Step>(lrs.size()) < phase.num_steps)
    fail(ErrorKind::InvalidArgument, "learning-rate profile shorter than phase " + phase.phase_id);

  Trace trace;
  for (Step s = 0; s < phase.num_steps; ++s) {
    const double lr = lrs[static_cast<std::size_t>(s)];
    const auto batch = data.batch(s);
    auto fwd = forward_loss(model, batch);
    const auto grads = backward(model, fwd.cache);
    adam_step(model, adam, grads, lr);
    if (s % log_stride == 0 || s + 1 == phase.num_steps) trace.push_back({s, lr, fwd.loss});
  }
  return trace;
}

}  // namespace lrpath::trainer
