#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include "crfgen/model.hpp"
#include "crfgen/rng.hpp"

namespace crfgen {

enum class LengthMode { kHistogram, kFixed };

struct GenOptions {
  std::size_t n = 1;
  std::uint64_t seed = 1;
  LengthMode length_mode = LengthMode::kHistogram;
  std::size_t fixed_length = 0;
  bool unary_only = false;  // sample the ablation regardless of training mode
  std::size_t threads = 1;
};

// One sentence: draw T, a latent trajectory from the prior, then words
// through the exact conditionals. EOS is an ordinary word; a sentence is
// truncated at the first EOS drawn before position T.
inline std::vector<TokenId> sample_token_ids(const Model& model,
                                             const ChainCrfParams& crf,
                                             std::size_t T, Rng& rng) {
  Tape tape;
  std::vector<Var> h = prior_sample(tape, model.dyn, T, rng);
  CrfOnTape ctx(tape, crf);
  BackwardPass bp = backward_pass(ctx, h);
  std::vector<TokenId> ids = ancestral_sample(bp, rng);
  auto eos = std::find(ids.begin(), ids.end(), kEos);
  if (eos != ids.end()) ids.erase(eos, ids.end());
  return ids;
}

inline std::size_t worker_count(std::size_t requested) {
  std::size_t n = requested;
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* cap = std::getenv("CRFGEN_THREADS")) {
    long v = std::atol(cap);
    if (v >= 1) n = std::min<std::size_t>(n, static_cast<std::size_t>(v));
  }
  return std::max<std::size_t>(1, n);
}

// Deterministic generation: sentence i draws from its own substream, so the
// output is byte-identical for a given seed no matter the worker count, and
// sentence i is stable when n changes.
inline std::vector<std::string> generate_sentences(const Model& model,
                                                   const GenOptions& opts) {
  ChainCrfParams crf = model.crf;
  if (opts.unary_only) crf.cfg.unary_only = true;
  if (opts.length_mode == LengthMode::kHistogram && model.length_hist.probs.empty())
    throw std::runtime_error("generate: checkpoint has no length histogram");
  if (opts.length_mode == LengthMode::kFixed && opts.fixed_length < 1)
    throw std::invalid_argument("generate: fixed length must be >= 1");
  SeedSplitter seeds{opts.seed};
  std::vector<std::string> out(opts.n);
  auto work = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      Rng rng = seeds.stream("generate", i);
      std::size_t T = opts.length_mode == LengthMode::kFixed
                          ? opts.fixed_length
                          : model.length_hist.sample(rng);
      std::vector<TokenId> ids = sample_token_ids(model, crf, T, rng);
      std::vector<std::string> words;
      words.reserve(ids.size());
      for (TokenId id : ids) words.push_back(model.vocab.word(id));
      out[i] = join_words(words);
    }
  };
  std::size_t workers = std::min(worker_count(opts.threads), std::max<std::size_t>(1, opts.n));
  if (workers <= 1) {
    work(0, opts.n);
  } else {
    std::vector<std::thread> pool;
    std::size_t chunk = (opts.n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      std::size_t lo = w * chunk, hi = std::min(opts.n, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back(work, lo, hi);
    }
    for (auto& th : pool) th.join();
  }
  return out;
}

}  // namespace crfgen
