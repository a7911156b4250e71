#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "crfgen/array.hpp"
#include "crfgen/rng.hpp"
#include "crfgen/vocab.hpp"

namespace crfgen {

// Plain-text corpus: UTF-8, one sentence per line, space-separated tokens.
inline std::vector<std::vector<std::string>> read_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("corpus: cannot read " + path);
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    auto words = tokenize(line);
    if (!words.empty()) out.push_back(std::move(words));
  }
  return out;
}

inline void write_corpus(const std::string& path,
                         const std::vector<std::vector<std::string>>& sentences) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("corpus: cannot write " + path);
  for (const auto& s : sentences) out << join_words(s) << '\n';
}

// Encodes every sentence, dropping the ones over the length cap. The
// rejected count is reported so ingest runs can log the filter rate.
struct EncodedCorpus {
  std::vector<TokenSeq> sentences;
  std::size_t rejected = 0;
  std::size_t unk_tokens = 0;
  std::size_t total_tokens = 0;

  double unk_rate() const {
    return total_tokens == 0 ? 0.0
                             : static_cast<double>(unk_tokens) /
                                   static_cast<double>(total_tokens);
  }
};

inline EncodedCorpus encode_corpus(
    const std::vector<std::vector<std::string>>& raw, const Vocab& vocab,
    std::size_t max_len) {
  EncodedCorpus out;
  for (const auto& words : raw) {
    auto seq = vocab.encode(words, max_len);
    if (!seq) {
      ++out.rejected;
      continue;
    }
    for (TokenId id : seq->ids) {
      ++out.total_tokens;
      if (id == kUnk) ++out.unk_tokens;
    }
    out.sentences.push_back(std::move(*seq));
  }
  return out;
}

// Ground-truth data oracle: an HMM over K hidden states emitting vocabulary
// words, with EOS as a distinguished emission that terminates the sentence.
// The model family subsumes it, so a trained model should approach its
// statistics.
struct SynthSpec {
  std::size_t num_states = 0;
  std::vector<std::vector<double>> transition;  // K x K
  std::vector<std::vector<double>> emission;    // K x (num_words + 1); column 0 = EOS
  std::vector<std::string> words;               // surface form per emission column 1..
  std::size_t max_len = 15;
  std::uint64_t seed = 0;

  void validate() const {
    if (num_states == 0 || transition.size() != num_states)
      throw std::invalid_argument("synth: bad transition matrix size");
    if (emission.size() != num_states)
      throw std::invalid_argument("synth: bad emission matrix size");
    for (const auto& row : transition) check_stochastic(row, num_states);
    for (const auto& row : emission) check_stochastic(row, words.size() + 1);
    if (max_len < 1) throw std::invalid_argument("synth: max_len must be >= 1");
  }

 private:
  static void check_stochastic(const std::vector<double>& row, std::size_t n) {
    if (row.size() != n) throw std::invalid_argument("synth: bad row length");
    double sum = 0.0;
    for (double p : row) {
      if (p < 0.0) throw std::invalid_argument("synth: negative probability");
      sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-12)
      throw std::invalid_argument("synth: row does not sum to 1");
  }
};

// Samples n sentences. States start uniform; words accumulate until the EOS
// symbol is drawn or the length cap is hit. Deterministic given the seed.
inline std::vector<std::vector<std::string>> generate_synthetic(
    const SynthSpec& spec, std::size_t n) {
  spec.validate();
  if (n < 1) throw std::invalid_argument("synth: n must be >= 1");
  Rng rng(spec.seed);
  std::vector<std::vector<std::string>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::string> sent;
    std::size_t state = static_cast<std::size_t>(rng.below(spec.num_states));
    while (sent.size() < spec.max_len) {
      std::size_t sym = rng.categorical(spec.emission[state]);
      if (sym == 0) break;  // EOS column
      sent.push_back(spec.words[sym - 1]);
      state = rng.categorical(spec.transition[state]);
    }
    out.push_back(std::move(sent));
  }
  return out;
}

// Empirical distribution over encoded lengths T (EOS included). Drives the
// generation-time choice of T.
struct LengthHistogram {
  std::map<std::size_t, double> probs;

  static LengthHistogram from_corpus(const std::vector<TokenSeq>& corpus) {
    if (corpus.empty()) throw std::invalid_argument("length histogram: empty corpus");
    LengthHistogram h;
    for (const auto& s : corpus) h.probs[s.length()] += 1.0;
    for (auto& [len, p] : h.probs) p /= static_cast<double>(corpus.size());
    return h;
  }

  double mean() const {
    double m = 0.0;
    for (const auto& [len, p] : probs) m += static_cast<double>(len) * p;
    return m;
  }

  std::size_t max_length() const { return probs.empty() ? 0 : probs.rbegin()->first; }

  std::size_t sample(Rng& rng) const {
    double u = rng.uniform();
    double acc = 0.0;
    for (const auto& [len, p] : probs) {
      acc += p;
      if (u < acc) return len;
    }
    return probs.rbegin()->first;
  }

  // Dense vector indexed by length, for checkpoint embedding.
  Array to_array() const {
    Array a({max_length() + 1});
    for (const auto& [len, p] : probs) a[len] = p;
    return a;
  }

  static LengthHistogram from_array(const Array& a) {
    LengthHistogram h;
    for (std::size_t i = 0; i < a.numel(); ++i)
      if (a[i] > 0.0) h.probs[i] = a[i];
    if (h.probs.empty())
      throw std::invalid_argument("length histogram: no support");
    return h;
  }
};

}  // namespace crfgen
