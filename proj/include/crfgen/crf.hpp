#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "crfgen/array.hpp"
#include "crfgen/optim.hpp"
#include "crfgen/rng.hpp"
#include "crfgen/tape.hpp"
#include "crfgen/vocab.hpp"

namespace crfgen {

struct CrfConfig {
  std::size_t vocab_size = 0;   // |V|, BOS/EOS/UNK included
  std::size_t embed_dim = 100;  // d
  std::size_t latent_dim = 16;  // d'
  std::size_t mlp_hidden = 64;  // interaction net hidden width
  bool diagonal_interaction = true;
  bool unary_only = false;
};

// Globally normalized observation model p(w|h). Pairwise potentials between
// consecutive words factor through positive embeddings X, Y and a
// state-conditioned interaction produced by a small net, so the implied
// |V| x |V| table is applied as matrix-vector products and never
// materialized. Unaries use a separate embedding table projected from the
// state space.
struct ChainCrfParams {
  CrfConfig cfg;
  Param* xu = nullptr;    // |V| x d  unary embeddings
  Param* X = nullptr;     // |V| x d  left pairwise factor, exp() before use
  Param* Y = nullptr;     // |V| x d  right pairwise factor
  Param* P = nullptr;     // d x d'   unary projection of the state
  Param* b = nullptr;     // |V|      unary bias
  Param* s_w1 = nullptr;  // H x 2d'
  Param* s_b1 = nullptr;  // H
  Param* s_w2 = nullptr;  // out x H, out = d (diagonal) or d*d (full)
  Param* s_b2 = nullptr;  // out
};

inline ChainCrfParams register_crf_params(ParamSet& ps, const CrfConfig& cfg,
                                          Rng& rng) {
  ChainCrfParams crf;
  crf.cfg = cfg;
  std::size_t V = cfg.vocab_size, d = cfg.embed_dim, dl = cfg.latent_dim;
  std::size_t H = cfg.mlp_hidden;
  std::size_t out = cfg.diagonal_interaction ? d : d * d;
  crf.xu = &add_normal(ps, "crf.xu", {V, d}, rng, 0.1);
  crf.X = &add_normal(ps, "crf.X", {V, d}, rng, 0.1);
  crf.Y = &add_normal(ps, "crf.Y", {V, d}, rng, 0.1);
  crf.P = &add_normal(ps, "crf.P", {d, dl}, rng, 1.0 / std::sqrt(double(dl)));
  crf.b = &add_zeros(ps, "crf.b", {V});
  crf.s_w1 = &add_normal(ps, "crf.s_mlp.w1", {H, 2 * dl}, rng,
                         1.0 / std::sqrt(double(2 * dl)));
  crf.s_b1 = &add_zeros(ps, "crf.s_mlp.b1", {H});
  crf.s_w2 = &add_normal(ps, "crf.s_mlp.w2", {out, H}, rng,
                         1.0 / std::sqrt(double(H)));
  crf.s_b2 = &add_zeros(ps, "crf.s_mlp.b2", {out});
  return crf;
}

// Per-tape bindings of the shared CRF tensors: the positive factors are
// computed once per tape, not once per step.
struct CrfOnTape {
  Tape* tape = nullptr;
  const ChainCrfParams* crf = nullptr;
  Var xu, P, b;
  Var xpos, ypos;  // exp(X), exp(Y); unset when unary_only
  Var h0;          // zero state for the t=1 pairwise context

  CrfOnTape(Tape& t, const ChainCrfParams& c) : tape(&t), crf(&c) {
    xu = t.param(*c.xu);
    P = t.param(*c.P);
    b = t.param(*c.b);
    if (!c.cfg.unary_only) {
      xpos = t.exp(t.param(*c.X));
      ypos = t.exp(t.param(*c.Y));
    }
    h0 = t.constant(Array({c.cfg.latent_dim}));
  }
};

// Signed unary log-potentials for every word given the state at one step.
inline Var unary_logpot(CrfOnTape& ctx, Var h_t) {
  Tape& t = *ctx.tape;
  return t.add(t.matvec(ctx.xu, t.matvec(ctx.P, h_t)), ctx.b);
}

// The factorized pairwise operator for one step: T_t = X+^T S(h_prev,h_t) Y+
// with strictly positive factors. Applying it costs O(d|V|); entries are
// positive by construction.
struct PairwiseOperator {
  Tape* tape = nullptr;
  Var xpos, ypos;
  Var s;  // d-vector (diagonal) or d x d interaction
  bool diagonal = true;
  bool unary_only = false;
  std::size_t vocab_size = 0;

  // u = T_t z as a matrix-vector product; the all-ones table of the
  // unary-only ablation reduces to broadcasting sum(z).
  Var apply(Var z) const {
    Tape& t = *tape;
    if (unary_only) {
      Array ones({vocab_size}, 1.0);
      return t.smul(t.constant(std::move(ones)), t.sum(z));
    }
    Var tmp = t.matvec_t(ypos, z);
    Var mid = diagonal ? t.mul(s, tmp) : t.matvec(s, tmp);
    return t.matvec(xpos, mid);
  }

  // log T_t[i, j], differentiable.
  Var log_entry(std::size_t i, std::size_t j) const {
    Tape& t = *tape;
    if (unary_only) return t.constant(0.0);
    Var xr = t.row(xpos, i);
    Var yr = t.row(ypos, j);
    Var e = diagonal ? t.dot(t.mul(xr, s), yr) : t.dot(xr, t.matvec(s, yr));
    return t.log(e);
  }

  // Row i of T_t as plain values, for sampling and diagnostics.
  std::vector<double> row_values(std::size_t i) const {
    std::size_t V = vocab_size;
    std::vector<double> out(V, 1.0);
    if (unary_only) return out;
    const Array& xp = tape->val(xpos);
    const Array& yp = tape->val(ypos);
    const Array& sv = tape->val(s);
    std::size_t d = xp.cols();
    std::vector<double> w(d);
    if (diagonal) {
      for (std::size_t k = 0; k < d; ++k) w[k] = xp.at2(i, k) * sv[k];
    } else {
      for (std::size_t k2 = 0; k2 < d; ++k2) {
        double acc = 0.0;
        for (std::size_t k = 0; k < d; ++k) acc += xp.at2(i, k) * sv.at2(k, k2);
        w[k2] = acc;
      }
    }
    for (std::size_t j = 0; j < V; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += w[k] * yp.at2(j, k);
      out[j] = acc;
    }
    return out;
  }
};

inline PairwiseOperator pairwise_operator(CrfOnTape& ctx, Var h_prev, Var h_t) {
  Tape& t = *ctx.tape;
  const CrfConfig& cfg = ctx.crf->cfg;
  PairwiseOperator op;
  op.tape = &t;
  op.diagonal = cfg.diagonal_interaction;
  op.unary_only = cfg.unary_only;
  op.vocab_size = cfg.vocab_size;
  if (cfg.unary_only) return op;
  op.xpos = ctx.xpos;
  op.ypos = ctx.ypos;
  Var in = t.concat(h_prev, h_t);
  Var hid = t.tanh(t.add(t.matvec(t.param(*ctx.crf->s_w1), in),
                         t.param(*ctx.crf->s_b1)));
  Var raw = t.add(t.matvec(t.param(*ctx.crf->s_w2), hid),
                  t.param(*ctx.crf->s_b2));
  Var pos = t.shift(t.softplus(raw), 1e-6);
  op.s = cfg.diagonal_interaction
             ? pos
             : t.reshape(pos, {cfg.embed_dim, cfg.embed_dim});
  return op;
}

// Unary log-potentials and pairwise operators for every step of a
// trajectory; the pairwise context at t=1 pairs the zero state with h_1
// (w_0 is the BOS boundary).
struct StepPotentials {
  std::vector<Var> psi;             // T entries, each |V|
  std::vector<PairwiseOperator> ops;  // T entries
};

inline StepPotentials compute_potentials(CrfOnTape& ctx,
                                         const std::vector<Var>& h) {
  if (h.empty()) throw std::invalid_argument("potentials: empty trajectory");
  StepPotentials pots;
  pots.psi.reserve(h.size());
  pots.ops.reserve(h.size());
  for (std::size_t t = 0; t < h.size(); ++t) {
    pots.psi.push_back(unary_logpot(ctx, h[t]));
    Var h_prev = t == 0 ? ctx.h0 : h[t - 1];
    pots.ops.push_back(pairwise_operator(ctx, h_prev, h[t]));
  }
  return pots;
}

// Scaled backward recursion. beta[t-1] holds the normalized beta_t for
// t = 1..T+1; log_scale holds the per-step scale constants c_1..c_{T+1}
// followed by the BOS contraction term, so log_z is exactly their sum.
struct BackwardPass {
  Tape* tape = nullptr;
  std::size_t vocab_size = 0;
  std::size_t T = 0;
  std::vector<Var> beta;       // T+1 normalized vectors
  std::vector<Var> log_scale;  // T+2 scalars, log_z = sum
  Var log_z;
  std::vector<Var> o_shift;    // exp(psi_t - max psi_t) per step
  StepPotentials pots;
};

inline BackwardPass beta_recursion(CrfOnTape& ctx, StepPotentials pots) {
  Tape& t = *ctx.tape;
  std::size_t V = ctx.crf->cfg.vocab_size;
  std::size_t T = pots.psi.size();
  BackwardPass bp;
  bp.tape = &t;
  bp.vocab_size = V;
  bp.T = T;
  bp.beta.resize(T + 1);
  bp.log_scale.resize(T + 2);
  bp.o_shift.resize(T);

  bp.beta[T] = t.constant(Array({V}, 1.0 / double(V)));
  bp.log_scale[T] = t.constant(std::log(double(V)));

  for (std::size_t step = T; step >= 1; --step) {
    const Array& psi_val = t.val(pots.psi[step - 1]);
    double m = *std::max_element(psi_val.data.begin(), psi_val.data.end());
    if (!std::isfinite(m)) throw numeric_error("numeric overflow in β recursion");
    // Shifting by a constant keeps both the value and the gradient exact;
    // it only rescales the intermediate into range.
    Var o = t.exp(t.shift(pots.psi[step - 1], -m));
    bp.o_shift[step - 1] = o;
    Var u = pots.ops[step - 1].apply(t.mul(o, bp.beta[step]));
    if (!t.val(u).all_finite())
      throw numeric_error("numeric overflow in β recursion");
    Var s = t.sum(u);
    double s_val = t.scalar(s);
    if (!(s_val > 0.0) || !std::isfinite(s_val))
      throw numeric_error("numeric overflow in β recursion");
    bp.beta[step - 1] = t.sdiv(u, s);
    bp.log_scale[step - 1] = t.shift(t.log(s), m);
  }
  bp.log_scale[T + 1] = t.log(t.at(bp.beta[0], kBos));
  bp.log_z = t.add_all(bp.log_scale);
  bp.pots = std::move(pots);
  return bp;
}

inline BackwardPass backward_pass(CrfOnTape& ctx, const std::vector<Var>& h) {
  return beta_recursion(ctx, compute_potentials(ctx, h));
}

// Energy S(w;h): unary plus pairwise terms along the chain, with w_0 = BOS.
inline Var sequence_logscore_from(const StepPotentials& pots,
                                  const std::vector<TokenId>& w, Tape& t,
                                  std::size_t vocab_size) {
  if (w.size() != pots.psi.size())
    throw std::invalid_argument("logscore: sentence/trajectory length mismatch");
  std::vector<Var> terms;
  terms.reserve(2 * w.size());
  TokenId prev = kBos;
  for (std::size_t i = 0; i < w.size(); ++i) {
    TokenId wt = w[i];
    if (wt < 0 || static_cast<std::size_t>(wt) >= vocab_size)
      throw std::out_of_range("logscore: token id outside vocabulary");
    terms.push_back(t.at(pots.psi[i], static_cast<std::size_t>(wt)));
    terms.push_back(pots.ops[i].log_entry(static_cast<std::size_t>(prev),
                                          static_cast<std::size_t>(wt)));
    prev = wt;
  }
  return t.add_all(terms);
}

inline Var sequence_logscore(CrfOnTape& ctx, const std::vector<TokenId>& w,
                             const std::vector<Var>& h) {
  StepPotentials pots = compute_potentials(ctx, h);
  return sequence_logscore_from(pots, w, *ctx.tape, ctx.crf->cfg.vocab_size);
}

// log p(w|h) = S(w;h) - log Z. The caller keeps the BackwardPass when it
// also needs conditionals or samples for the same trajectory.
inline Var log_likelihood_from(const BackwardPass& bp,
                               const std::vector<TokenId>& w) {
  Tape& t = *bp.tape;
  Var score = sequence_logscore_from(bp.pots, w, t, bp.vocab_size);
  return t.sub(score, bp.log_z);
}

inline Var log_likelihood(CrfOnTape& ctx, const std::vector<TokenId>& w,
                          const std::vector<Var>& h) {
  BackwardPass bp = backward_pass(ctx, h);
  return log_likelihood_from(bp, w);
}

// Exact next-word distribution p(w_t | w_{1:t-1}, h) from the beta vectors.
// t is 1-based; w_prev is BOS at t=1. Plain values: sampling does not need
// gradients.
inline std::vector<double> conditional_factor(const BackwardPass& bp,
                                              std::size_t t, TokenId w_prev) {
  if (t < 1 || t > bp.T) throw std::invalid_argument("conditional: step out of range");
  std::size_t prev = static_cast<std::size_t>(w_prev);
  if (prev >= bp.vocab_size)
    throw std::out_of_range("conditional: w_prev outside vocabulary");
  const Array& beta_here = bp.tape->val(bp.beta[t - 1]);
  if (beta_here[prev] <= 0.0) throw numeric_error("unreachable prefix");
  const Array& beta_next = bp.tape->val(bp.beta[t]);
  const Array& o = bp.tape->val(bp.o_shift[t - 1]);
  std::vector<double> numer = bp.pots.ops[t - 1].row_values(prev);
  double total = 0.0;
  for (std::size_t v = 0; v < bp.vocab_size; ++v) {
    numer[v] *= o[v] * beta_next[v];
    total += numer[v];
  }
  if (!(total > 0.0)) throw numeric_error("unreachable prefix");
  for (double& x : numer) x /= total;
  return numer;
}

// Ancestral sampling through the exact conditionals. BOS is a boundary
// symbol and is excluded from the support at every step; EOS is an ordinary
// word. Always returns exactly T ids.
inline std::vector<TokenId> ancestral_sample(const BackwardPass& bp, Rng& rng) {
  std::vector<TokenId> out;
  out.reserve(bp.T);
  TokenId prev = kBos;
  for (std::size_t t = 1; t <= bp.T; ++t) {
    std::vector<double> probs = conditional_factor(bp, t, prev);
    probs[kBos] = 0.0;
    TokenId wt = static_cast<TokenId>(rng.categorical(probs));
    out.push_back(wt);
    prev = wt;
  }
  return out;
}

// Dense materialization of one trajectory's potentials, for small-instance
// oracles: psi[t][v] and the full T_t tables as plain doubles.
struct DensePotentials {
  std::size_t vocab_size = 0;
  std::vector<std::vector<double>> psi;  // T x |V|
  std::vector<Array> tables;             // T tables, |V| x |V|
};

inline DensePotentials densify(const ChainCrfParams& crf,
                               const std::vector<Array>& h_values) {
  Tape tape;
  CrfOnTape ctx(tape, crf);
  std::vector<Var> h;
  h.reserve(h_values.size());
  for (const Array& hv : h_values) h.push_back(tape.constant(hv));
  StepPotentials pots = compute_potentials(ctx, h);
  std::size_t V = crf.cfg.vocab_size;
  DensePotentials dense;
  dense.vocab_size = V;
  for (std::size_t t = 0; t < h.size(); ++t) {
    dense.psi.push_back(tape.val(pots.psi[t]).data);
    Array table({V, V});
    for (std::size_t i = 0; i < V; ++i) {
      std::vector<double> row = pots.ops[t].row_values(i);
      std::copy(row.begin(), row.end(), table.data.begin() + i * V);
    }
    dense.tables.push_back(std::move(table));
  }
  return dense;
}

// Literal enumeration of log Z over all |V|^T sequences. Test oracle; kept
// deliberately independent of the beta recursion.
inline double brute_force_logz(const ChainCrfParams& crf,
                               const std::vector<Array>& h_values) {
  std::size_t V = crf.cfg.vocab_size;
  std::size_t T = h_values.size();
  if (std::pow(double(V), double(T)) > 1e6)
    throw std::invalid_argument("brute force: instance too large");
  DensePotentials dense = densify(crf, h_values);
  std::vector<std::size_t> w(T, 0);
  double lse = -std::numeric_limits<double>::infinity();
  while (true) {
    double score = 0.0;
    std::size_t prev = kBos;
    for (std::size_t t = 0; t < T; ++t) {
      score += dense.psi[t][w[t]] + std::log(dense.tables[t].at2(prev, w[t]));
      prev = w[t];
    }
    lse = log_add_exp(lse, score);
    std::size_t t = 0;
    while (t < T && ++w[t] == V) w[t++] = 0;
    if (t == T) break;
  }
  return lse;
}

namespace detail_crf {
inline void normalize_vec(std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  if (!(s > 0.0)) throw numeric_error("numeric overflow in β recursion");
  for (double& x : v) x /= s;
}
}  // namespace detail_crf

// Per-step joint tables P(w_{t-1}, w_t) by standard scaled forward-backward,
// dense and in plain doubles. Small instances only; the t=1 table lives on
// the BOS row. Independent of the tape gradients it is checked against.
inline std::vector<Array> pairwise_marginals(const BackwardPass& bp) {
  std::size_t V = bp.vocab_size;
  if (V > 64) throw std::invalid_argument("pairwise marginals: diagnostic-only operation");
  std::size_t T = bp.T;
  Tape& tape = *bp.tape;

  // M_t[i][j] = T_t[i,j] * o_t[j] from the recorded step values.
  std::vector<Array> m(T);
  for (std::size_t t = 0; t < T; ++t) {
    const Array& o = tape.val(bp.o_shift[t]);
    m[t] = Array({V, V});
    for (std::size_t i = 0; i < V; ++i) {
      std::vector<double> row = bp.pots.ops[t].row_values(i);
      for (std::size_t j = 0; j < V; ++j) m[t].at2(i, j) = row[j] * o[j];
    }
  }

  // Scaled forward vectors: alpha[t][j] ~ P(prefix ending in w_t = j).
  std::vector<std::vector<double>> alpha(T, std::vector<double>(V, 0.0));
  for (std::size_t j = 0; j < V; ++j) alpha[0][j] = m[0].at2(kBos, j);
  detail_crf::normalize_vec(alpha[0]);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t i = 0; i < V; ++i) {
      double ai = alpha[t - 1][i];
      if (ai == 0.0) continue;
      const double* rowp = m[t].data.data() + i * V;
      for (std::size_t j = 0; j < V; ++j) alpha[t][j] += ai * rowp[j];
    }
    detail_crf::normalize_vec(alpha[t]);
  }

  std::vector<Array> tables(T);
  for (std::size_t t = 0; t < T; ++t) {
    const Array& beta_next = tape.val(bp.beta[t + 1]);
    tables[t] = Array({V, V});
    double total = 0.0;
    for (std::size_t i = 0; i < V; ++i) {
      double ai = t == 0 ? (i == static_cast<std::size_t>(kBos) ? 1.0 : 0.0)
                         : alpha[t - 1][i];
      if (ai == 0.0) continue;
      for (std::size_t j = 0; j < V; ++j) {
        double x = ai * m[t].at2(i, j) * beta_next[j];
        tables[t].at2(i, j) = x;
        total += x;
      }
    }
    for (double& x : tables[t].data) x /= total;
  }
  return tables;
}

// Column sums of the step-t joint table: P(w_t = v).
inline std::vector<double> unary_marginal(const Array& pair_table) {
  std::size_t V = pair_table.rows();
  std::vector<double> out(V, 0.0);
  for (std::size_t i = 0; i < V; ++i)
    for (std::size_t j = 0; j < V; ++j) out[j] += pair_table.at2(i, j);
  return out;
}

}  // namespace crfgen
