#pragma once

// Synthetic training text for the desk-scale trainer.
//
// Tokens come from an order-2 Markov source driven by a sticky hidden mode.
// Each of the 16 modes owns a small alphabet; inside a mode the next token is
// drawn from a mixture of a bigram successor, a trigram successor, a skip
// successor and uniform noise over the alphabet. The bigram part is learned
// quickly, the trigram part needs many updates, which keeps the toy model in
// the regime where the learning-rate path shows up in the final loss.

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "lrpath/error.hpp"
#include "lrpath/rng.hpp"

namespace lrpath::trainer {

using Token = std::int32_t;
using TokenStream = std::vector<Token>;

struct MarkovSourceParams {
  int modes = 16;
  int alphabet = 48;
  double stay_probability = 0.98;
  double p_bigram = 0.40;
  double p_trigram = 0.35;
  double p_skip = 0.15;
  // remainder: uniform over the mode alphabet
};

class MarkovSource {
 public:
  static constexpr int kVocab = 256;

  explicit MarkovSource(std::uint64_t seed, MarkovSourceParams params = {})
      : params_(params), rng_(derive_seed(seed, 0x5eed)) {
    Rng table_rng(derive_seed(seed, 0x7ab1e));
    const auto a = static_cast<std::size_t>(params_.alphabet);
    alphabets_.resize(static_cast<std::size_t>(params_.modes));
    for (auto& alphabet : alphabets_) {
      std::array<Token, kVocab> all{};
      for (int t = 0; t < kVocab; ++t) all[static_cast<std::size_t>(t)] = t;
      table_rng.shuffle(all);
      alphabet.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(a));
    }
    const auto m = static_cast<std::size_t>(params_.modes);
    bigram_.resize(m * kVocab);
    skip_.resize(m * kVocab);
    trigram_.resize(m * kVocab * kVocab);
    for (auto& x : bigram_) x = static_cast<std::uint8_t>(table_rng.below(a));
    for (auto& x : skip_) x = static_cast<std::uint8_t>(table_rng.below(a));
    for (auto& x : trigram_) x = static_cast<std::uint8_t>(table_rng.below(a));
    mode_ = static_cast<int>(rng_.below(m));
  }

  Token next() {
    if (rng_.uniform() >= params_.stay_probability)
      mode_ = static_cast<int>(rng_.below(static_cast<std::uint64_t>(params_.modes)));
    const auto mode = static_cast<std::size_t>(mode_);
    const auto& alphabet = alphabets_[mode];
    const auto a = static_cast<std::size_t>(prev2_);
    const auto b = static_cast<std::size_t>(prev1_);
    const double u = rng_.uniform();
    std::size_t idx;
    if (u < params_.p_bigram) {
      idx = bigram_[mode * kVocab + b];
    } else if (u < params_.p_bigram + params_.p_trigram) {
      idx = trigram_[(mode * kVocab + a) * kVocab + b];
    } else if (u < params_.p_bigram + params_.p_trigram + params_.p_skip) {
      idx = skip_[mode * kVocab + a];
    } else {
      idx = rng_.below(alphabet.size());
    }
    const Token t = alphabet[idx];
    prev2_ = prev1_;
    prev1_ = t;
    return t;
  }

 private:
  MarkovSourceParams params_;
  Rng rng_;
  std::vector<std::vector<Token>> alphabets_;
  std::vector<std::uint8_t> bigram_;
  std::vector<std::uint8_t> skip_;
  std::vector<std::uint8_t> trigram_;
  int mode_ = 0;
  Token prev1_ = 0;
  Token prev2_ = 0;
};

/// Deterministic synthetic stream of `size` byte tokens.
inline TokenStream make_corpus(std::uint64_t seed, std::size_t size, MarkovSourceParams params = {}) {
  if (size < 1) fail(ErrorKind::InvalidArgument, "corpus size must be at least 1");
  MarkovSource source(seed, params);
  TokenStream out;
  out.reserve(size);
  for (std::size_t i = 0; i < size; ++i) out.push_back(source.next());
  return out;
}

/// Raw bytes of a text file, one token per byte.
inline TokenStream load_corpus_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open corpus file " + path.string());
  TokenStream out;
  for (std::istreambuf_iterator<char> it(in), end; it != end; ++it)
    out.push_back(static_cast<Token>(static_cast<unsigned char>(*it)));
  if (out.empty()) fail(ErrorKind::IoError, "corpus file " + path.string() + " is empty");
  return out;
}

}  // namespace lrpath::trainer
