#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "crfgen/array.hpp"
#include "crfgen/optim.hpp"
#include "crfgen/rng.hpp"
#include "crfgen/tape.hpp"
#include "crfgen/vocab.hpp"

namespace crfgen {

// Diagonal Gaussian with log-variance clamped to [-10, 10] after any
// network output.
struct GaussianParams {
  Var mean;
  Var logvar;
};

inline constexpr double kLogVarClamp = 10.0;

struct DynConfig {
  std::size_t latent_dim = 16;  // d'
  std::size_t hidden = 64;      // transition / posterior hidden width
  std::size_t enc_dim = 64;     // suffix encoder state width
  std::size_t enc_emb = 64;     // encoder word embedding size
  std::size_t vocab_size = 0;
};

// One-hidden-layer net producing a Gaussian: tanh body, two linear heads.
struct GaussianHead {
  Param* w1 = nullptr;
  Param* b1 = nullptr;
  Param* wm = nullptr;
  Param* bm = nullptr;
  Param* wv = nullptr;
  Param* bv = nullptr;
};

// Gated recurrence over encoder word embeddings, run right to left so the
// code at position t depends on w_{t:T} only.
struct SuffixEncoderParams {
  Param* emb = nullptr;  // |V| x enc_emb
  Param *wr = nullptr, *ur = nullptr, *br = nullptr;
  Param *wz = nullptr, *uz = nullptr, *bz = nullptr;
  Param *wn = nullptr, *un = nullptr, *bn = nullptr;
};

struct DynParams {
  DynConfig cfg;
  GaussianHead trans;  // p(h_t | h_{t-1}); h_0 = 0
  GaussianHead post;   // q(h_t | h_{t-1}, e_t)
  SuffixEncoderParams enc;
};

namespace detail_dyn {
inline GaussianHead register_head(ParamSet& ps, const std::string& prefix,
                                  std::size_t in, std::size_t hidden,
                                  std::size_t out, Rng& rng) {
  GaussianHead g;
  g.w1 = &add_normal(ps, prefix + ".w1", {hidden, in}, rng,
                     1.0 / std::sqrt(double(in)));
  g.b1 = &add_zeros(ps, prefix + ".b1", {hidden});
  // Zero heads: priors and posteriors start as unit Gaussians.
  g.wm = &add_zeros(ps, prefix + ".wm", {out, hidden});
  g.bm = &add_zeros(ps, prefix + ".bm", {out});
  g.wv = &add_zeros(ps, prefix + ".wv", {out, hidden});
  g.bv = &add_zeros(ps, prefix + ".bv", {out});
  return g;
}
}  // namespace detail_dyn

inline DynParams register_dyn_params(ParamSet& ps, const DynConfig& cfg, Rng& rng) {
  DynParams dyn;
  dyn.cfg = cfg;
  std::size_t dl = cfg.latent_dim, H = cfg.hidden;
  std::size_t E = cfg.enc_dim, Ein = cfg.enc_emb;
  dyn.trans = detail_dyn::register_head(ps, "dyn.trans", dl, H, dl, rng);
  dyn.post = detail_dyn::register_head(ps, "dyn.post", dl + E, H, dl, rng);
  dyn.enc.emb = &add_normal(ps, "dyn.emb", {cfg.vocab_size, Ein}, rng, 0.1);
  auto gate = [&](const char* w, const char* u, const char* b) {
    return std::tuple<Param*, Param*, Param*>{
        &add_normal(ps, std::string("dyn.enc.") + w, {E, Ein}, rng,
                    1.0 / std::sqrt(double(Ein))),
        &add_normal(ps, std::string("dyn.enc.") + u, {E, E}, rng,
                    1.0 / std::sqrt(double(E))),
        &add_zeros(ps, std::string("dyn.enc.") + b, {E})};
  };
  std::tie(dyn.enc.wr, dyn.enc.ur, dyn.enc.br) = gate("wr", "ur", "br");
  std::tie(dyn.enc.wz, dyn.enc.uz, dyn.enc.bz) = gate("wz", "uz", "bz");
  std::tie(dyn.enc.wn, dyn.enc.un, dyn.enc.bn) = gate("wn", "un", "bn");
  return dyn;
}

namespace detail_dyn {
inline GaussianParams run_head(Tape& t, const GaussianHead& g, Var in) {
  Var hid = t.tanh(t.add(t.matvec(t.param(*g.w1), in), t.param(*g.b1)));
  GaussianParams out;
  out.mean = t.add(t.matvec(t.param(*g.wm), hid), t.param(*g.bm));
  out.logvar = t.clamp(t.add(t.matvec(t.param(*g.wv), hid), t.param(*g.bv)),
                       -kLogVarClamp, kLogVarClamp);
  return out;
}
}  // namespace detail_dyn

// p(h_t | h_{t-1}); call with the zero vector for p(h_1).
inline GaussianParams prior_step(Tape& t, const DynParams& dyn, Var h_prev) {
  return detail_dyn::run_head(t, dyn.trans, h_prev);
}

// q(h_t | h_{t-1}, w_{t:T}) through the suffix code e_t.
inline GaussianParams posterior_step(Tape& t, const DynParams& dyn, Var h_prev,
                                     Var e_t) {
  return detail_dyn::run_head(t, dyn.post, t.concat(h_prev, e_t));
}

// mean + exp(logvar/2) * eps, with the noise supplied by the caller so
// gradients flow and tests can freeze it.
inline Var reparam_sample(Tape& t, const GaussianParams& g, Var eps) {
  return t.add(g.mean, t.mul(t.exp(t.scale(g.logvar, 0.5)), eps));
}

// Analytic KL(q || p) for diagonal Gaussians.
inline Var gaussian_kl(Tape& t, const GaussianParams& q, const GaussianParams& p) {
  Var diff = t.sub(q.mean, p.mean);
  Var var_ratio = t.exp(t.sub(q.logvar, p.logvar));
  Var maha = t.mul(t.mul(diff, diff), t.exp(t.neg(p.logvar)));
  Var inner = t.add(t.add(var_ratio, maha), t.sub(p.logvar, q.logvar));
  std::size_t dim = t.val(q.mean).numel();
  return t.scale(t.shift(t.sum(inner), -double(dim)), 0.5);
}

// log N(x; mean, diag exp(logvar)), for the sampled-ratio ELBO estimator.
inline Var gaussian_logpdf(Tape& t, const GaussianParams& g, Var x) {
  std::size_t dim = t.val(x).numel();
  Var diff = t.sub(x, g.mean);
  Var maha = t.mul(t.mul(diff, diff), t.exp(t.neg(g.logvar)));
  Var inner = t.add(maha, g.logvar);
  double c = double(dim) * std::log(2.0 * 3.14159265358979323846);
  return t.scale(t.shift(t.sum(inner), c), -0.5);
}

// Suffix codes e_1..e_T; e_{T+1} is fixed at zero. Gated recurrence:
// r, z gates and candidate n as in a standard GRU cell.
inline std::vector<Var> encode_suffix(Tape& t, const DynParams& dyn,
                                      const std::vector<TokenId>& w) {
  if (w.empty()) throw std::invalid_argument("encode_suffix: empty sentence");
  const SuffixEncoderParams& e = dyn.enc;
  Var emb = t.param(*e.emb);
  Var wr = t.param(*e.wr), ur = t.param(*e.ur), br = t.param(*e.br);
  Var wz = t.param(*e.wz), uz = t.param(*e.uz), bz = t.param(*e.bz);
  Var wn = t.param(*e.wn), un = t.param(*e.un), bn = t.param(*e.bn);
  std::vector<Var> codes(w.size());
  Var state = t.constant(Array({dyn.cfg.enc_dim}));
  Array ones({dyn.cfg.enc_dim}, 1.0);
  Var one = t.constant(ones);
  for (std::size_t i = w.size(); i >= 1; --i) {
    Var x = t.row(emb, static_cast<std::size_t>(w[i - 1]));
    Var r = t.sigmoid(t.add(t.add(t.matvec(wr, x), t.matvec(ur, state)), br));
    Var z = t.sigmoid(t.add(t.add(t.matvec(wz, x), t.matvec(uz, state)), bz));
    Var n = t.tanh(t.add(t.add(t.matvec(wn, x), t.matvec(un, t.mul(r, state))), bn));
    state = t.add(t.mul(t.sub(one, z), n), t.mul(z, state));
    codes[i - 1] = state;
  }
  return codes;
}

// Draws h_{1:T} from the prior by reparametrized ancestral sampling.
inline std::vector<Var> prior_sample(Tape& t, const DynParams& dyn,
                                     std::size_t T, Rng& rng) {
  std::vector<Var> h;
  h.reserve(T);
  Var prev = t.constant(Array({dyn.cfg.latent_dim}));
  for (std::size_t i = 0; i < T; ++i) {
    GaussianParams g = prior_step(t, dyn, prev);
    Array eps({dyn.cfg.latent_dim});
    for (double& x : eps.data) x = rng.normal();
    prev = reparam_sample(t, g, t.constant(std::move(eps)));
    h.push_back(prev);
  }
  return h;
}

}  // namespace crfgen
