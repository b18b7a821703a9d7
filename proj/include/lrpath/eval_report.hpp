#pragma once

#include <cstdint>

namespace lrpath {

/// Held-out perplexity; ppl == exp(nll) with nll in nats per token.
struct EvalReport {
  double ppl = 0.0;
  double nll = 0.0;
  std::int64_t tokens_evaluated = 0;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

}  // namespace lrpath
