#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "crfgen/corpus.hpp"
#include "crfgen/model.hpp"
#include "crfgen/optim.hpp"
#include "crfgen/rng.hpp"

namespace crfgen {

struct TrainConfig {
  std::size_t latent_dim = 16;
  std::size_t embed_dim = 100;
  std::size_t crf_hidden = 64;
  std::size_t dyn_hidden = 64;
  std::size_t enc_dim = 64;
  std::size_t enc_emb = 64;
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::size_t kl_warmup_steps = 5000;  // 0 disables annealing
  double kl_weight = 1.0;
  bool unary_only = false;
  bool diagonal_interaction = true;
  std::uint64_t seed = 1;
  std::size_t max_len = 15;
  std::size_t vocab_cap = 15003;

  ModelConfig model_config(std::size_t vocab_size) const {
    ModelConfig m;
    m.vocab_size = vocab_size;
    m.embed_dim = embed_dim;
    m.latent_dim = latent_dim;
    m.crf_hidden = crf_hidden;
    m.dyn_hidden = dyn_hidden;
    m.enc_dim = enc_dim;
    m.enc_emb = enc_emb;
    m.max_len = max_len;
    m.diagonal_interaction = diagonal_interaction;
    m.unary_only = unary_only;
    return m;
  }
};

// The SSM baseline: same model restricted to unary potentials.
inline TrainConfig ablate_unary(TrainConfig cfg) {
  cfg.unary_only = true;
  return cfg;
}

struct ElboParts {
  Var objective;  // recon - kl_weight * kl, the trained quantity
  Var recon;      // log p(w | sampled h), always <= 0
  Var kl;         // sum_t KL(q_t || p_t), always >= 0
};

// Single-trajectory ELBO estimate for one sentence. The trajectory is drawn
// from the posterior by reparametrization, left to right, conditioned on the
// suffix codes; the KL penalty is analytic per step given the sampled
// prefix, which keeps the estimator variance down.
inline ElboParts elbo_on_tape(Tape& t, Model& model, const TokenSeq& w,
                              const std::vector<Array>& noise,
                              double kl_weight = 1.0) {
  std::size_t T = w.length();
  if (noise.size() != T)
    throw std::invalid_argument("elbo: need one noise vector per step");
  std::vector<Var> codes = encode_suffix(t, model.dyn, w.ids);
  std::vector<Var> h(T);
  std::vector<Var> kls(T);
  Var h_prev = t.constant(Array({model.cfg.latent_dim}));
  for (std::size_t i = 0; i < T; ++i) {
    GaussianParams q = posterior_step(t, model.dyn, h_prev, codes[i]);
    GaussianParams p = prior_step(t, model.dyn, h_prev);
    h[i] = reparam_sample(t, q, t.constant(noise[i]));
    kls[i] = gaussian_kl(t, q, p);
    h_prev = h[i];
  }
  CrfOnTape ctx(t, model.crf);
  ElboParts parts;
  parts.recon = log_likelihood(ctx, w.ids, h);
  parts.kl = t.add_all(kls);
  if (!std::isfinite(t.scalar(parts.recon)))
    throw numeric_error("elbo: non-finite reconstruction term");
  if (!std::isfinite(t.scalar(parts.kl)))
    throw numeric_error("elbo: non-finite KL term");
  parts.objective = t.sub(parts.recon, t.scale(parts.kl, kl_weight));
  return parts;
}

inline std::vector<Array> draw_noise(std::size_t T, std::size_t dim, Rng& rng) {
  std::vector<Array> noise(T, Array({dim}));
  for (auto& eps : noise)
    for (double& x : eps.data) x = rng.normal();
  return noise;
}

struct TrainLogRow {
  std::size_t epoch = 0;
  double elbo = 0.0;   // recon - kl, unweighted
  double recon = 0.0;
  double kl = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;

  static constexpr const char* kCsvHeader = "epoch,elbo,recon,kl,seconds";

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("trainlog: cannot write " + path);
    out << kCsvHeader << '\n';
    for (const auto& r : rows)
      out << r.epoch << ',' << r.elbo << ',' << r.recon << ',' << r.kl << ','
          << r.seconds << '\n';
  }
};

struct TrainOptions {
  std::string checkpoint_dir;  // per-epoch + final checkpoints when set
  std::string log_path;        // csv, rewritten after every epoch when set
  bool quiet = true;
};

// Mini-batch training with Adam. Batches are bucketed by length so the beta
// recursion stays exact (no padding, no masks). The KL weight anneals
// linearly from 0 to kl_weight over kl_warmup_steps. Per-sentence noise is
// keyed by corpus index, so batch grouping never perturbs the draws, and the
// whole run is reproducible from the seed.
inline TrainLog train(Model& model, const TrainConfig& cfg,
                      const std::vector<TokenSeq>& corpus,
                      const TrainOptions& opts = {}) {
  if (corpus.empty()) throw std::invalid_argument("train: empty corpus");
  SeedSplitter seeds{cfg.seed};
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  AdamState adam(model.params, adam_cfg);

  std::map<std::size_t, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    buckets[corpus[i].length()].push_back(i);

  model.length_hist = LengthHistogram::from_corpus(corpus);

  TrainLog log;
  std::uint64_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto t_start = std::chrono::steady_clock::now();
    Rng shuffle_rng = seeds.stream("train-shuffle", epoch);
    std::vector<std::vector<std::size_t>> batches;
    for (auto& [len, idxs] : buckets) {
      std::vector<std::size_t> order = idxs;
      shuffle_rng.shuffle(order);
      for (std::size_t i = 0; i < order.size(); i += cfg.batch_size) {
        std::size_t hi = std::min(order.size(), i + cfg.batch_size);
        batches.emplace_back(order.begin() + i, order.begin() + hi);
      }
    }
    shuffle_rng.shuffle(batches);

    double sum_elbo = 0.0, sum_recon = 0.0, sum_kl = 0.0;
    for (const auto& batch : batches) {
      ++step;
      double kl_w = cfg.kl_weight;
      if (cfg.kl_warmup_steps > 0)
        kl_w *= std::min(1.0, double(step) / double(cfg.kl_warmup_steps));
      model.params.zero_grads();
      for (std::size_t idx : batch) {
        const TokenSeq& w = corpus[idx];
        Rng noise_rng = seeds.stream("train-noise", epoch, idx);
        std::vector<Array> noise =
            draw_noise(w.length(), model.cfg.latent_dim, noise_rng);
        Tape tape;
        ElboParts parts = elbo_on_tape(tape, model, w, noise, kl_w);
        double recon = tape.scalar(parts.recon);
        double kl = tape.scalar(parts.kl);
        sum_recon += recon;
        sum_kl += kl;
        sum_elbo += recon - kl;
        Var root = tape.scale(parts.objective, -1.0 / double(batch.size()));
        tape.backward(root);
      }
      adam.step(model.params);
      if (!model.params.all_finite())
        throw numeric_error("train: non-finite parameters after update");
    }

    double n = double(corpus.size());
    TrainLogRow row;
    row.epoch = epoch;
    row.elbo = sum_elbo / n;
    row.recon = sum_recon / n;
    row.kl = sum_kl / n;
    row.seconds = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t_start)
                      .count();
    log.rows.push_back(row);

    if (!opts.checkpoint_dir.empty()) {
      std::filesystem::create_directories(opts.checkpoint_dir);
      model.save(opts.checkpoint_dir + "/ckpt_epoch_" + std::to_string(epoch) +
                 ".bin");
      model.save(opts.checkpoint_dir + "/ckpt_final.bin");
    }
    if (!opts.log_path.empty()) log.save(opts.log_path);
    if (!opts.quiet) {
      std::fprintf(stderr, "epoch %zu  elbo %.4f  recon %.4f  kl %.4f  (%.1fs)\n",
                   epoch, row.elbo, row.recon, row.kl, row.seconds);
    }
  }
  return log;
}

}  // namespace crfgen
