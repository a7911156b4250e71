#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace crfgen {

using TokenId = int;

inline constexpr TokenId kBos = 0;
inline constexpr TokenId kEos = 1;
inline constexpr TokenId kUnk = 2;
inline constexpr const char* kBosText = "<s>";
inline constexpr const char* kEosText = "</s>";
inline constexpr const char* kUnkText = "<unk>";

// Encoded sentence; the id list always ends with exactly one EOS and never
// contains BOS. length() counts the EOS.
struct TokenSeq {
  std::vector<TokenId> ids;
  std::size_t length() const { return ids.size(); }
};

// Word <-> id map with reserved BOS=0, EOS=1, UNK=2.
class Vocab {
 public:
  Vocab() {
    add_reserved(kBosText);
    add_reserved(kEosText);
    add_reserved(kUnkText);
  }

  // Keeps the max_size-3 most frequent words, ties broken lexicographically.
  static Vocab build(const std::vector<std::vector<std::string>>& sentences,
                     std::size_t max_size) {
    if (max_size < 4) throw std::invalid_argument("vocab: max_size must be >= 4");
    if (sentences.empty()) throw std::invalid_argument("vocab: empty corpus");
    std::unordered_map<std::string, std::size_t> freq;
    for (const auto& s : sentences)
      for (const auto& w : s) ++freq[w];
    if (freq.empty()) throw std::invalid_argument("vocab: empty corpus");
    std::vector<std::pair<std::string, std::size_t>> items(freq.begin(), freq.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    Vocab v;
    std::size_t keep = std::min(items.size(), max_size - 3);
    for (std::size_t i = 0; i < keep; ++i) v.add_word(items[i].first);
    return v;
  }

  TokenId add_word(const std::string& w) {
    auto it = ids_.find(w);
    if (it != ids_.end()) return it->second;
    TokenId id = static_cast<TokenId>(words_.size());
    ids_.emplace(w, id);
    words_.push_back(w);
    return id;
  }

  std::size_t size() const { return words_.size(); }

  TokenId id_or_unk(const std::string& w) const {
    auto it = ids_.find(w);
    return it == ids_.end() ? kUnk : it->second;
  }
  std::optional<TokenId> id_of(const std::string& w) const {
    auto it = ids_.find(w);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }
  const std::string& word(TokenId id) const { return words_.at(static_cast<std::size_t>(id)); }

  // Rejects sentences longer than max_len pre-EOS, mirroring the corpus
  // length filter; out-of-vocabulary words map to UNK.
  std::optional<TokenSeq> encode(const std::vector<std::string>& words,
                                 std::size_t max_len) const {
    if (max_len < 1) throw std::invalid_argument("vocab: max_len must be >= 1");
    if (words.size() > max_len) return std::nullopt;
    TokenSeq seq;
    seq.ids.reserve(words.size() + 1);
    for (const auto& w : words) seq.ids.push_back(id_or_unk(w));
    seq.ids.push_back(kEos);
    return seq;
  }

  std::vector<std::string> decode(const TokenSeq& seq) const {
    std::vector<std::string> out;
    for (TokenId id : seq.ids) {
      if (id == kEos) break;
      out.push_back(word(id));
    }
    return out;
  }

  // One token per line, line i holding the word with id i+3.
  std::string to_text() const {
    std::string out;
    for (std::size_t i = 3; i < words_.size(); ++i) {
      out += words_[i];
      out += '\n';
    }
    return out;
  }

  static Vocab from_text(const std::string& text) {
    Vocab v;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) v.add_word(line);
    return v;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("vocab: cannot write " + path);
    out << to_text();
  }

  static Vocab load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("vocab: cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
  }

 private:
  void add_reserved(const std::string& w) {
    ids_.emplace(w, static_cast<TokenId>(words_.size()));
    words_.push_back(w);
  }

  std::unordered_map<std::string, TokenId> ids_;
  std::vector<std::string> words_;
};

// Whitespace tokenization over lowercased input.
inline std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

}  // namespace crfgen
