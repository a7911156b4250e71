#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "crfgen/kneser_ney.hpp"
#include "crfgen/vocab.hpp"

namespace crfgen {

// Aggregate sample statistics from the evaluation protocol: consecutive
// token repetition rate, mean surface length, unique-sentence percentage.
struct GenStats {
  double rep_pct = 0.0;
  double mean_len = 0.0;
  double uni_pct = 0.0;
  std::size_t count = 0;
};

inline GenStats gen_stats(const std::vector<std::vector<std::string>>& sentences) {
  if (sentences.empty()) throw std::invalid_argument("gen_stats: empty sample set");
  std::size_t tokens = 0, repeats = 0, total_len = 0;
  std::set<std::string> distinct;
  for (const auto& s : sentences) {
    tokens += s.size();
    total_len += s.size();
    for (std::size_t i = 1; i < s.size(); ++i)
      if (s[i] == s[i - 1]) ++repeats;
    distinct.insert(join_words(s));
  }
  GenStats g;
  g.count = sentences.size();
  g.rep_pct = tokens == 0 ? 0.0 : 100.0 * double(repeats) / double(tokens);
  g.mean_len = double(total_len) / double(sentences.size());
  g.uni_pct = 100.0 * double(distinct.size()) / double(sentences.size());
  return g;
}

struct ReportRow {
  std::string label;
  std::map<std::size_t, double> ppl;  // n-gram order -> perplexity
  GenStats stats;
};

struct Report {
  std::vector<ReportRow> rows;

  std::string table() const {
    std::vector<std::size_t> orders;
    if (!rows.empty())
      for (const auto& [n, _] : rows.front().ppl) orders.push_back(n);
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-16s", "model");
    out += buf;
    for (std::size_t n : orders) {
      std::snprintf(buf, sizeof buf, " %9s%zu", "PPL_", n);
      out += buf;
    }
    std::snprintf(buf, sizeof buf, " %9s %9s %9s %9s\n", "rep%", "len", "uniq%", "n");
    out += buf;
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%-16s", r.label.c_str());
      out += buf;
      for (std::size_t n : orders) {
        std::snprintf(buf, sizeof buf, " %10.2f", r.ppl.at(n));
        out += buf;
      }
      std::snprintf(buf, sizeof buf, " %9.2f %9.2f %9.2f %9zu\n", r.stats.rep_pct,
                    r.stats.mean_len, r.stats.uni_pct, r.stats.count);
      out += buf;
    }
    return out;
  }

  void save_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("report: cannot write " + path);
    std::vector<std::size_t> orders;
    if (!rows.empty())
      for (const auto& [n, _] : rows.front().ppl) orders.push_back(n);
    out << "label";
    for (std::size_t n : orders) out << ",ppl" << n;
    out << ",rep_pct,mean_len,uniq_pct,sentences\n";
    for (const auto& r : rows) {
      out << r.label;
      for (std::size_t n : orders) out << ',' << r.ppl.at(n);
      out << ',' << r.stats.rep_pct << ',' << r.stats.mean_len << ','
          << r.stats.uni_pct << ',' << r.stats.count << '\n';
    }
  }
};

// Scores each labeled sample set under every judge and collects the
// aggregate statistics; the caller includes the held-out ORACLE row.
inline Report evaluate_samples(
    const std::vector<std::pair<std::string, std::vector<std::vector<std::string>>>>& sets,
    const std::vector<KneserNeyLm>& lms, const Vocab& vocab) {
  Report rep;
  for (const auto& [label, sentences] : sets) {
    ReportRow row;
    row.label = label;
    std::vector<TokenSeq> encoded = encode_all_for_scoring(sentences, vocab);
    for (const auto& lm : lms) row.ppl[lm.order()] = lm.perplexity(encoded);
    row.stats = gen_stats(sentences);
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

}  // namespace crfgen
