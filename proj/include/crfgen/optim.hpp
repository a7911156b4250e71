#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "crfgen/rng.hpp"
#include "crfgen/tape.hpp"

namespace crfgen {

// Owns the trainable parameters of a model in registration order.
class ParamSet {
 public:
  Param& add(std::string name, Array init) {
    if (index_.count(name)) throw std::invalid_argument("duplicate param: " + name);
    items_.push_back(std::make_unique<Param>(name, std::move(init)));
    index_.emplace(items_.back()->name, items_.size() - 1);
    return *items_.back();
  }

  Param& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no param: " + name);
    return *items_[it->second];
  }
  const Param& at(const std::string& name) const {
    return const_cast<ParamSet*>(this)->at(name);
  }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t size() const { return items_.size(); }
  Param& operator[](std::size_t i) { return *items_[i]; }
  const Param& operator[](std::size_t i) const { return *items_[i]; }

  void zero_grads() {
    for (auto& p : items_) p->zero_grad();
  }

  std::size_t num_values() const {
    std::size_t n = 0;
    for (auto& p : items_) n += p->value.numel();
    return n;
  }

  bool all_finite() const {
    for (auto& p : items_)
      if (!p->value.all_finite()) return false;
    return true;
  }

 private:
  std::vector<std::unique_ptr<Param>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam. Moment accumulators mirror the parameter shapes.
class AdamState {
 public:
  AdamState(const ParamSet& params, AdamConfig cfg = {}) : cfg_(cfg) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.emplace_back(params[i].value.shape);
      v_.emplace_back(params[i].value.shape);
    }
  }

  std::uint64_t step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  const Array& first_moment(std::size_t i) const { return m_.at(i); }
  const Array& second_moment(std::size_t i) const { return v_.at(i); }

  void step(ParamSet& params) {
    if (m_.size() != params.size())
      throw std::invalid_argument("adam: parameter count changed");
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Param& p = params[i];
      if (!shape_eq(p.grad, m_[i]))
        throw std::invalid_argument("adam: shape mismatch for " + p.name);
      for (std::size_t k = 0; k < p.value.numel(); ++k) {
        double g = p.grad[k];
        m_[i][k] = cfg_.beta1 * m_[i][k] + (1.0 - cfg_.beta1) * g;
        v_[i][k] = cfg_.beta2 * v_[i][k] + (1.0 - cfg_.beta2) * g * g;
        double mhat = m_[i][k] / bc1;
        double vhat = v_[i][k] / bc2;
        p.value[k] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<Array> m_, v_;
};

// Builds a scalar loss on the supplied tape from the current parameter values.
// Must be deterministic: callers freeze all noise before checking gradients.
using LossBuilder = std::function<Var(Tape&)>;

inline double loss_value(const LossBuilder& build) {
  Tape tape;
  return tape.scalar(build(tape));
}

// Max relative error between tape gradients and central finite differences,
// with denominator floor 1e-8 to avoid blowups at true zeros.
inline double grad_check(const LossBuilder& build, ParamSet& params,
                         double eps = 1e-5,
                         std::unordered_map<std::string, double>* per_param = nullptr) {
  params.zero_grads();
  {
    Tape tape;
    Var root = build(tape);
    tape.backward(root);
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = params[i];
    double block_worst = 0.0;
    for (std::size_t k = 0; k < p.value.numel(); ++k) {
      double saved = p.value[k];
      p.value[k] = saved + eps;
      double up = loss_value(build);
      p.value[k] = saved - eps;
      double down = loss_value(build);
      p.value[k] = saved;
      double numeric = (up - down) / (2.0 * eps);
      double analytic = p.grad[k];
      double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
      block_worst = std::max(block_worst, std::fabs(analytic - numeric) / denom);
    }
    if (per_param) (*per_param)[p.name] = block_worst;
    worst = std::max(worst, block_worst);
  }
  return worst;
}

// Initialization helpers. Gaussian output heads start at zero so priors and
// posteriors begin as unit Gaussians.
inline void fill_normal(Array& a, Rng& rng, double stddev) {
  for (double& x : a.data) x = stddev * rng.normal();
}

inline Param& add_normal(ParamSet& ps, const std::string& name,
                         std::vector<std::size_t> shape, Rng& rng, double stddev) {
  Array a(std::move(shape));
  fill_normal(a, rng, stddev);
  return ps.add(name, std::move(a));
}

inline Param& add_zeros(ParamSet& ps, const std::string& name,
                        std::vector<std::size_t> shape) {
  return ps.add(name, Array(std::move(shape)));
}

}  // namespace crfgen
