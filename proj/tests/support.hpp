#pragma once

// Shared helpers for the test suites: tiny model factories and brute-force
// enumeration oracles that stay independent of the dynamic-programming path
// they are used to check.

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <vector>

#include "crfgen/crf.hpp"
#include "crfgen/dynamics.hpp"
#include "crfgen/optim.hpp"
#include "crfgen/rng.hpp"

namespace crfgen::testing {

struct TinyCrf {
  ParamSet ps;
  ChainCrfParams crf;
};

inline std::unique_ptr<TinyCrf> make_crf(std::size_t V, std::size_t d,
                                         std::size_t dlat, std::uint64_t seed,
                                         bool diagonal = true,
                                         bool unary_only = false,
                                         std::size_t hidden = 8) {
  auto m = std::make_unique<TinyCrf>();
  CrfConfig cfg;
  cfg.vocab_size = V;
  cfg.embed_dim = d;
  cfg.latent_dim = dlat;
  cfg.mlp_hidden = hidden;
  cfg.diagonal_interaction = diagonal;
  cfg.unary_only = unary_only;
  Rng rng(seed);
  m->crf = register_crf_params(m->ps, cfg, rng);
  // Give the zero-initialized blocks some signal so oracles see a generic
  // instance rather than a degenerate one.
  fill_normal(m->crf.b->value, rng, 0.5);
  fill_normal(m->crf.s_b1->value, rng, 0.3);
  fill_normal(m->crf.s_b2->value, rng, 0.3);
  fill_normal(m->crf.xu->value, rng, 0.8);
  fill_normal(m->crf.X->value, rng, 0.6);
  fill_normal(m->crf.Y->value, rng, 0.6);
  return m;
}

inline double inv_softplus(double y) { return std::log(std::expm1(y)); }

// Forces every pairwise table entry to exactly 1: unit positive factors and
// a constant interaction summing to 1.
inline void force_uniform_pairwise(TinyCrf& m) {
  std::fill(m.crf.X->value.data.begin(), m.crf.X->value.data.end(), 0.0);
  std::fill(m.crf.Y->value.data.begin(), m.crf.Y->value.data.end(), 0.0);
  std::fill(m.crf.s_w1->value.data.begin(), m.crf.s_w1->value.data.end(), 0.0);
  std::fill(m.crf.s_b1->value.data.begin(), m.crf.s_b1->value.data.end(), 0.0);
  std::fill(m.crf.s_w2->value.data.begin(), m.crf.s_w2->value.data.end(), 0.0);
  double target = 1.0 / double(m.crf.cfg.embed_dim) - 1e-6;
  std::fill(m.crf.s_b2->value.data.begin(), m.crf.s_b2->value.data.end(),
            inv_softplus(target));
}

inline void force_zero_unary(TinyCrf& m) {
  std::fill(m.crf.xu->value.data.begin(), m.crf.xu->value.data.end(), 0.0);
  std::fill(m.crf.b->value.data.begin(), m.crf.b->value.data.end(), 0.0);
}

inline std::vector<Array> random_states(std::size_t T, std::size_t dlat,
                                        Rng& rng, double scale = 1.0) {
  std::vector<Array> h(T, Array({dlat}));
  for (auto& v : h)
    for (double& x : v.data) x = scale * rng.normal();
  return h;
}

// ---- Enumeration oracles over the dense potentials ----

inline double dense_score(const DensePotentials& dense,
                          const std::vector<std::size_t>& w) {
  double score = 0.0;
  std::size_t prev = kBos;
  for (std::size_t t = 0; t < w.size(); ++t) {
    score += dense.psi[t][w[t]] + std::log(dense.tables[t].at2(prev, w[t]));
    prev = w[t];
  }
  return score;
}

template <class Visit>
inline void for_each_sequence(std::size_t V, std::size_t T, Visit visit) {
  std::vector<std::size_t> w(T, 0);
  while (true) {
    visit(const_cast<const std::vector<std::size_t>&>(w));
    std::size_t t = 0;
    while (t < T && ++w[t] == V) w[t++] = 0;
    if (t == T) break;
  }
}

inline double enum_logz(const DensePotentials& dense, std::size_t T) {
  double lse = -std::numeric_limits<double>::infinity();
  for_each_sequence(dense.vocab_size, T, [&](const std::vector<std::size_t>& w) {
    lse = log_add_exp(lse, dense_score(dense, w));
  });
  return lse;
}

// P(w_t = v | w_{1:t-1} = prefix) by summing over all suffix completions.
// t is 1-based; prefix holds t-1 ids.
inline std::vector<double> enum_conditional(const DensePotentials& dense,
                                            std::size_t T,
                                            const std::vector<std::size_t>& prefix) {
  std::size_t V = dense.vocab_size;
  std::size_t t = prefix.size();  // 0-based step being predicted
  std::vector<double> mass(V, 0.0);
  std::size_t tail = T - t;
  for_each_sequence(V, tail, [&](const std::vector<std::size_t>& suffix) {
    std::vector<std::size_t> w = prefix;
    w.insert(w.end(), suffix.begin(), suffix.end());
    mass[suffix[0]] += std::exp(dense_score(dense, w));
  });
  double total = 0.0;
  for (double x : mass) total += x;
  for (double& x : mass) x /= total;
  return mass;
}

// Exact distribution of the ancestral sampler, which excludes BOS at every
// step: the product of per-step BOS-restricted conditionals.
inline std::map<std::vector<std::size_t>, double> enum_sampler_dist(
    const DensePotentials& dense, std::size_t T) {
  std::size_t V = dense.vocab_size;
  std::map<std::vector<std::size_t>, double> out;
  std::vector<std::size_t> w(T, 0);
  std::function<void(std::size_t, double, std::vector<std::size_t>&)> rec =
      [&](std::size_t t, double p, std::vector<std::size_t>& prefix) {
        if (t == T) {
          out[prefix] = p;
          return;
        }
        std::vector<double> cond = enum_conditional(dense, T, prefix);
        cond[kBos] = 0.0;
        double norm = 0.0;
        for (double x : cond) norm += x;
        for (std::size_t v = 0; v < V; ++v) {
          if (v == static_cast<std::size_t>(kBos) || cond[v] == 0.0) continue;
          prefix.push_back(v);
          rec(t + 1, p * cond[v] / norm, prefix);
          prefix.pop_back();
        }
      };
  std::vector<std::size_t> prefix;
  rec(0, 1.0, prefix);
  return out;
}

// Joint P(w_{t-1} = i, w_t = j) by enumeration; t is 1-based, the t=1 table
// collapses to the BOS row.
inline Array enum_pairwise_marginal(const DensePotentials& dense, std::size_t T,
                                    std::size_t t) {
  std::size_t V = dense.vocab_size;
  Array table({V, V});
  double total = 0.0;
  for_each_sequence(V, T, [&](const std::vector<std::size_t>& w) {
    double p = std::exp(dense_score(dense, w));
    std::size_t i = t == 1 ? static_cast<std::size_t>(kBos) : w[t - 2];
    table.at2(i, w[t - 1]) += p;
    total += p;
  });
  for (double& x : table.data) x /= total;
  return table;
}

}  // namespace crfgen::testing
