#pragma once

#include <memory>
#include <stdexcept>
#include <string>

#include "crfgen/checkpoint.hpp"
#include "crfgen/corpus.hpp"
#include "crfgen/crf.hpp"
#include "crfgen/dynamics.hpp"
#include "crfgen/optim.hpp"
#include "crfgen/rng.hpp"
#include "crfgen/vocab.hpp"

namespace crfgen {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 100;   // d
  std::size_t latent_dim = 16;   // d'
  std::size_t crf_hidden = 64;   // interaction net hidden width
  std::size_t dyn_hidden = 64;
  std::size_t enc_dim = 64;
  std::size_t enc_emb = 64;
  std::size_t max_len = 15;
  bool diagonal_interaction = true;
  bool unary_only = false;

  CrfConfig crf() const {
    return {vocab_size, embed_dim, latent_dim, crf_hidden,
            diagonal_interaction, unary_only};
  }
  DynConfig dyn() const {
    return {latent_dim, dyn_hidden, enc_dim, enc_emb, vocab_size};
  }
};

// The complete generative + inference parameter set, with everything a
// checkpoint needs to regenerate text on its own: the vocabulary and the
// training length histogram ride along.
struct Model {
  ModelConfig cfg;
  ParamSet params;
  ChainCrfParams crf;
  DynParams dyn;
  Vocab vocab;
  LengthHistogram length_hist;

  Model(const ModelConfig& c, Rng init_rng) : cfg(c) {
    crf = register_crf_params(params, cfg.crf(), init_rng);
    dyn = register_dyn_params(params, cfg.dyn(), init_rng);
  }

  Checkpoint to_checkpoint() const {
    Checkpoint ck;
    ck.put("meta.vocab_size", Array::scalar(double(cfg.vocab_size)));
    ck.put("meta.embed_dim", Array::scalar(double(cfg.embed_dim)));
    ck.put("meta.latent_dim", Array::scalar(double(cfg.latent_dim)));
    ck.put("meta.crf_hidden", Array::scalar(double(cfg.crf_hidden)));
    ck.put("meta.dyn_hidden", Array::scalar(double(cfg.dyn_hidden)));
    ck.put("meta.enc_dim", Array::scalar(double(cfg.enc_dim)));
    ck.put("meta.enc_emb", Array::scalar(double(cfg.enc_emb)));
    ck.put("meta.max_len", Array::scalar(double(cfg.max_len)));
    ck.put("meta.diag_interaction", Array::scalar(cfg.diagonal_interaction ? 1 : 0));
    ck.put("meta.unary_only", Array::scalar(cfg.unary_only ? 1 : 0));
    for (std::size_t i = 0; i < params.size(); ++i)
      ck.put(params[i].name, params[i].value);
    ck.put("vocab.text", bytes_to_array(vocab.to_text()));
    if (!length_hist.probs.empty()) ck.put("gen.length_hist", length_hist.to_array());
    return ck;
  }

  static std::unique_ptr<Model> from_checkpoint(const Checkpoint& ck) {
    ModelConfig cfg;
    cfg.vocab_size = static_cast<std::size_t>(ck.get("meta.vocab_size").value());
    cfg.embed_dim = static_cast<std::size_t>(ck.get("meta.embed_dim").value());
    cfg.latent_dim = static_cast<std::size_t>(ck.get("meta.latent_dim").value());
    cfg.crf_hidden = static_cast<std::size_t>(ck.get("meta.crf_hidden").value());
    cfg.dyn_hidden = static_cast<std::size_t>(ck.get("meta.dyn_hidden").value());
    cfg.enc_dim = static_cast<std::size_t>(ck.get("meta.enc_dim").value());
    cfg.enc_emb = static_cast<std::size_t>(ck.get("meta.enc_emb").value());
    cfg.max_len = static_cast<std::size_t>(ck.get("meta.max_len").value());
    cfg.diagonal_interaction = ck.get("meta.diag_interaction").value() != 0;
    cfg.unary_only = ck.get("meta.unary_only").value() != 0;
    auto model = std::make_unique<Model>(cfg, Rng(0));
    for (std::size_t i = 0; i < model->params.size(); ++i) {
      Param& p = model->params[i];
      const Array& stored = ck.get(p.name);
      if (!shape_eq(stored, p.value))
        throw std::runtime_error("checkpoint: shape mismatch for " + p.name);
      p.value = stored;
    }
    model->vocab = Vocab::from_text(array_to_bytes(ck.get("vocab.text")));
    if (model->vocab.size() != cfg.vocab_size)
      throw std::runtime_error("checkpoint: vocabulary size mismatch");
    if (ck.contains("gen.length_hist"))
      model->length_hist = LengthHistogram::from_array(ck.get("gen.length_hist"));
    return model;
  }

  void save(const std::string& path) const { to_checkpoint().save(path); }
  static std::unique_ptr<Model> load(const std::string& path) {
    return from_checkpoint(Checkpoint::load(path));
  }
};

}  // namespace crfgen
