#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "crfgen/vocab.hpp"

namespace crfgen {

// Interpolated Kneser-Ney n-gram model with a fixed absolute discount at
// every order, used as the external judge for generated text. Contexts are
// BOS-padded and EOS is a scored event. The highest order uses raw counts;
// lower orders use continuation counts; the recursion bottoms out at the
// uniform distribution over the event vocabulary (everything but BOS), which
// guarantees full support.
class KneserNeyLm {
 public:
  KneserNeyLm(std::size_t order, double discount, std::size_t vocab_size)
      : order_(order), discount_(discount), vocab_size_(vocab_size) {
    if (order < 1 || order > 3)
      throw std::invalid_argument("kneser-ney: order must be 1, 2, or 3");
    if (!(discount > 0.0 && discount < 1.0))
      throw std::invalid_argument("kneser-ney: discount must be in (0, 1)");
    raw_.resize(order + 1);
  }

  static KneserNeyLm fit(const std::vector<TokenSeq>& corpus, std::size_t order,
                         double discount, std::size_t vocab_size) {
    KneserNeyLm lm(order, discount, vocab_size);
    for (const auto& sent : corpus) lm.count_sentence(sent.ids);
    lm.finalize();
    return lm;
  }

  std::size_t order() const { return order_; }
  double discount() const { return discount_; }
  std::size_t event_vocab_size() const { return vocab_size_ - 1; }

  // p(w | context), context given oldest-first; only its last order-1 ids
  // are used. Strictly positive for every non-BOS w.
  double prob(const std::vector<TokenId>& context, TokenId w) const {
    if (!finalized_) throw std::logic_error("kneser-ney: model not finalized");
    return p_rec(order_, context, w);
  }

  // exp of mean negative log-probability per token, EOS included as an
  // event, BOS contexts not scored.
  double perplexity(const std::vector<TokenSeq>& sentences) const {
    if (sentences.empty())
      throw std::invalid_argument("kneser-ney: empty sample set");
    double nll = 0.0;
    std::size_t tokens = 0;
    for (const auto& sent : sentences) {
      std::vector<TokenId> ctx(order_ > 0 ? order_ - 1 : 0, kBos);
      for (TokenId w : sent.ids) {
        nll -= std::log(prob(ctx, w));
        ++tokens;
        if (!ctx.empty()) {
          ctx.erase(ctx.begin());
          ctx.push_back(w);
        }
      }
    }
    if (tokens == 0) throw std::invalid_argument("kneser-ney: no tokens to score");
    return std::exp(nll / double(tokens));
  }

  // Counts file: one record per n-gram, space-separated tokens, a tab, the
  // count. All orders are stored, which reconstructs the model exactly.
  void save(const std::string& path, const Vocab& vocab) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("kneser-ney: cannot write " + path);
    for (std::size_t k = 1; k <= order_; ++k) {
      for (const auto& [key, cnt] : raw_[k]) {
        std::vector<TokenId> gram = unpack(key, k);
        for (std::size_t i = 0; i < gram.size(); ++i) {
          if (i) out << ' ';
          out << vocab.word(gram[i]);
        }
        out << '\t' << cnt << '\n';
      }
    }
  }

  static KneserNeyLm load(const std::string& path, std::size_t order,
                          double discount, const Vocab& vocab) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("kneser-ney: cannot read " + path);
    KneserNeyLm lm(order, discount, vocab.size());
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto tab = line.find('\t');
      if (tab == std::string::npos)
        throw std::runtime_error("kneser-ney: malformed counts line");
      std::istringstream toks(line.substr(0, tab));
      std::vector<TokenId> gram;
      std::string tok;
      while (toks >> tok) {
        auto id = vocab.id_of(tok);
        if (!id) throw std::runtime_error("kneser-ney: unknown token " + tok);
        gram.push_back(*id);
      }
      if (gram.empty() || gram.size() > order)
        throw std::runtime_error("kneser-ney: bad n-gram order in counts file");
      lm.raw_[gram.size()][pack(gram.data(), gram.size())] +=
          std::stoull(line.substr(tab + 1));
    }
    lm.finalize();
    return lm;
  }

  const std::unordered_map<std::uint64_t, std::uint64_t>& raw_counts(
      std::size_t k) const {
    return raw_.at(k);
  }

  // Observed contexts at the highest order, for normalization spot checks.
  std::vector<std::vector<TokenId>> observed_contexts() const {
    std::vector<std::vector<TokenId>> out;
    out.reserve(top_ctx_.size());
    for (const auto& [key, _] : top_ctx_) out.push_back(unpack(key, order_ - 1));
    return out;
  }

 private:
  static constexpr int kBits = 20;  // fits vocabularies up to ~1M

  static std::uint64_t pack(const TokenId* ids, std::size_t k) {
    std::uint64_t key = 0;
    for (std::size_t i = 0; i < k; ++i)
      key = (key << kBits) | static_cast<std::uint64_t>(ids[i]);
    return key;
  }
  static std::vector<TokenId> unpack(std::uint64_t key, std::size_t k) {
    std::vector<TokenId> ids(k);
    for (std::size_t i = k; i >= 1; --i) {
      ids[i - 1] = static_cast<TokenId>(key & ((1u << kBits) - 1));
      key >>= kBits;
    }
    return ids;
  }

  void count_sentence(const std::vector<TokenId>& ids) {
    if (ids.empty()) return;
    // Event positions 1..T with BOS padding on the left; the k-gram at a
    // position is the length-k suffix of its n-gram, so lower-order raw
    // counts stay consistent with the higher orders.
    std::vector<TokenId> padded(order_ - 1, kBos);
    padded.insert(padded.end(), ids.begin(), ids.end());
    for (std::size_t pos = order_ - 1; pos < padded.size(); ++pos)
      for (std::size_t k = 1; k <= order_; ++k)
        ++raw_[k][pack(padded.data() + pos + 1 - k, k)];
  }

  struct CtxStats {
    std::uint64_t total = 0;
    std::uint64_t distinct = 0;
  };

  void finalize() {
    if (raw_[order_].empty())
      throw std::invalid_argument("kneser-ney: n-gram of order unobservable (empty corpus)");
    // Continuation counts: distinct left extensions, one per surviving key.
    cc_.assign(order_, {});
    for (std::size_t k = 1; k < order_; ++k) {
      const std::uint64_t mask = (std::uint64_t(1) << (kBits * k)) - 1;
      for (const auto& [key, _] : raw_[k + 1]) ++cc_[k][key & mask];
    }
    // Per-context totals at the top (raw) and lower (continuation) orders.
    if (order_ > 1) {
      const std::uint64_t drop_last = kBits;
      for (const auto& [key, cnt] : raw_[order_]) {
        CtxStats& s = top_ctx_[key >> drop_last];
        s.total += cnt;
        s.distinct += 1;
      }
      for (std::size_t k = 2; k < order_; ++k) {
        auto& ctx_table = cc_ctx_[k];
        for (const auto& [key, cnt] : cc_[k]) {
          CtxStats& s = ctx_table[key >> drop_last];
          s.total += cnt;
          s.distinct += 1;
        }
      }
    }
    // Unigram level: continuation totals (or raw totals when order == 1).
    if (order_ == 1) {
      for (const auto& [key, cnt] : raw_[1]) {
        uni_total_ += cnt;
        uni_distinct_ += 1;
      }
    } else {
      for (const auto& [key, cnt] : cc_[1]) {
        uni_total_ += cnt;
        uni_distinct_ += 1;
      }
    }
    finalized_ = true;
  }

  double p_uniform(TokenId w) const {
    return w == kBos ? 0.0 : 1.0 / double(event_vocab_size());
  }

  double p_unigram(TokenId w) const {
    const auto& table = order_ == 1 ? raw_[1] : cc_[1];
    auto it = table.find(pack(&w, 1));
    double num = it == table.end() ? 0.0 : double(it->second);
    double den = double(uni_total_);
    double lambda = discount_ * double(uni_distinct_) / den;
    return std::max(num - discount_, 0.0) / den + lambda * p_uniform(w);
  }

  double p_rec(std::size_t k, const std::vector<TokenId>& context, TokenId w) const {
    if (k == 1) return p_unigram(w);
    if (context.size() < k - 1)
      throw std::invalid_argument("kneser-ney: context shorter than order-1");
    const TokenId* ctx = context.data() + context.size() - (k - 1);
    std::uint64_t ctx_key = pack(ctx, k - 1);
    std::vector<TokenId> gram(ctx, ctx + (k - 1));
    gram.push_back(w);
    std::uint64_t gram_key = pack(gram.data(), k);

    const auto& grams = k == order_ ? raw_[k] : cc_[k];
    const auto& ctxs = k == order_ ? top_ctx_ : cc_ctx_.at(k);
    auto cit = ctxs.find(ctx_key);
    if (cit == ctxs.end() || cit->second.total == 0)
      return p_rec(k - 1, context, w);  // unseen context: all mass backs off
    auto git = grams.find(gram_key);
    double num = git == grams.end() ? 0.0 : double(git->second);
    double den = double(cit->second.total);
    double lambda = discount_ * double(cit->second.distinct) / den;
    return std::max(num - discount_, 0.0) / den + lambda * p_rec(k - 1, context, w);
  }

  std::size_t order_;
  double discount_;
  std::size_t vocab_size_;
  bool finalized_ = false;
  // raw_[k]: k-gram -> count, k = 1..order
  std::vector<std::unordered_map<std::uint64_t, std::uint64_t>> raw_;
  // cc_[k]: k-gram -> distinct left extensions, k = 1..order-1
  std::vector<std::unordered_map<std::uint64_t, std::uint64_t>> cc_;
  std::unordered_map<std::uint64_t, CtxStats> top_ctx_;
  std::unordered_map<std::size_t, std::unordered_map<std::uint64_t, CtxStats>> cc_ctx_;
  std::uint64_t uni_total_ = 0;
  std::uint64_t uni_distinct_ = 0;
};

// Ids for scoring arbitrary text: OOV maps to UNK, and a literal BOS token
// also maps to UNK so that scored events always have positive probability.
inline TokenSeq encode_for_scoring(const std::vector<std::string>& words,
                                   const Vocab& vocab) {
  TokenSeq seq;
  seq.ids.reserve(words.size() + 1);
  for (const auto& w : words) {
    TokenId id = vocab.id_or_unk(w);
    seq.ids.push_back(id == kBos ? kUnk : id);
  }
  seq.ids.push_back(kEos);
  return seq;
}

inline std::vector<TokenSeq> encode_all_for_scoring(
    const std::vector<std::vector<std::string>>& sentences, const Vocab& vocab) {
  std::vector<TokenSeq> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(encode_for_scoring(s, vocab));
  return out;
}

}  // namespace crfgen
