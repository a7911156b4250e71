#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "crfgen/crf.hpp"
#include "crfgen/rng.hpp"
#include "support.hpp"

using namespace crfgen;
using namespace crfgen::testing;

namespace {

std::vector<Var> to_vars(Tape& t, const std::vector<Array>& h) {
  std::vector<Var> out;
  out.reserve(h.size());
  for (const Array& a : h) out.push_back(t.constant(a));
  return out;
}

}  // namespace

TEST_CASE("unary_logpot is zero at the origin with zero bias") {
  auto m = make_crf(5, 3, 2, 101);
  force_zero_unary(*m);
  Rng r(5);
  fill_normal(m->crf.xu->value, r, 1.0);  // xu free, b stays zero
  Tape t;
  CrfOnTape ctx(t, m->crf);
  Var psi = unary_logpot(ctx, t.constant(Array({2})));
  for (double v : t.val(psi).data) CHECK(v == 0.0);
}

TEST_CASE("unary_logpot is linear in the state") {
  auto m = make_crf(6, 3, 2, 102);
  Tape t;
  CrfOnTape ctx(t, m->crf);
  Array h({2});
  Rng r(7);
  fill_normal(h, r, 1.0);
  Array h2 = h;
  for (double& x : h2.data) x *= 2.5;
  Var psi1 = unary_logpot(ctx, t.constant(h));
  Var psi2 = unary_logpot(ctx, t.constant(h2));
  const Array& b = m->crf.b->value;
  for (std::size_t v = 0; v < 6; ++v)
    CHECK(t.val(psi2)[v] - b[v] ==
          Catch::Approx(2.5 * (t.val(psi1)[v] - b[v])).margin(1e-12));
}

TEST_CASE("unary_logpot gradient w.r.t. the projection matches finite differences") {
  auto m = make_crf(5, 3, 2, 103);
  Array h({2});
  Rng r(9);
  fill_normal(h, r, 1.0);
  auto build = [&](Tape& t) {
    CrfOnTape ctx(t, m->crf);
    return t.logsumexp(unary_logpot(ctx, t.constant(h)));
  };
  std::unordered_map<std::string, double> per;
  double err = grad_check(build, m->ps, 1e-5, &per);
  CHECK(err < 1e-6);
  CHECK(per.at("crf.P") < 1e-6);
}

TEST_CASE("pairwise operator application equals dense materialization") {
  auto m = make_crf(5, 3, 2, 104);
  Rng rng(11);
  Tape t;
  CrfOnTape ctx(t, m->crf);
  Array hp({2}), ht({2});
  fill_normal(hp, rng, 1.0);
  fill_normal(ht, rng, 1.0);
  PairwiseOperator op = pairwise_operator(ctx, t.constant(hp), t.constant(ht));

  Var ones = t.constant(Array({5}, 1.0));
  Var applied = op.apply(ones);

  // Explicit materialization from raw parameter values.
  const Array& X = m->crf.X->value;
  const Array& Y = m->crf.Y->value;
  const Array& s = t.val(op.s);
  for (std::size_t i = 0; i < 5; ++i) {
    double expect = 0.0;
    for (std::size_t j = 0; j < 5; ++j) {
      double entry = 0.0;
      for (std::size_t k = 0; k < 3; ++k)
        entry += std::exp(X.at2(i, k)) * s[k] * std::exp(Y.at2(j, k));
      expect += entry;
    }
    CHECK(t.val(applied)[i] == Catch::Approx(expect).margin(1e-10));
  }
}

TEST_CASE("constant interaction net makes the operator state-independent") {
  auto m = make_crf(4, 3, 2, 105);
  std::fill(m->crf.s_w1->value.data.begin(), m->crf.s_w1->value.data.end(), 0.0);
  std::fill(m->crf.s_w2->value.data.begin(), m->crf.s_w2->value.data.end(), 0.0);
  Rng rng(13);
  Tape t;
  CrfOnTape ctx(t, m->crf);
  auto mk = [&] {
    Array a({2});
    fill_normal(a, rng, 2.0);
    return t.constant(a);
  };
  PairwiseOperator op1 = pairwise_operator(ctx, mk(), mk());
  PairwiseOperator op2 = pairwise_operator(ctx, mk(), mk());
  for (std::size_t i = 0; i < 4; ++i) {
    auto r1 = op1.row_values(i);
    auto r2 = op2.row_values(i);
    for (std::size_t j = 0; j < 4; ++j) CHECK(r1[j] == r2[j]);
  }
}

TEST_CASE("implied pairwise table is strictly positive across random draws") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto m = make_crf(4, 2, 2, 1000 + seed);
    Rng rng(seed);
    std::vector<Array> h = random_states(2, 2, rng);
    DensePotentials dense = densify(m->crf, h);
    for (const Array& table : dense.tables)
      for (double x : table.data) REQUIRE(x > 0.0);
  }
}

TEST_CASE("uniform counting case: logZ = T log |V|") {
  auto m = make_crf(7, 4, 2, 106);
  force_uniform_pairwise(*m);
  force_zero_unary(*m);
  Tape t;
  CrfOnTape ctx(t, m->crf);
  std::vector<Var> h(3, t.constant(Array({2})));  // zero states
  BackwardPass bp = backward_pass(ctx, h);
  CHECK(t.scalar(bp.log_z) == Catch::Approx(3.0 * std::log(7.0)).margin(1e-9));
}

TEST_CASE("backward pass agrees with brute-force enumeration") {
  Rng rng(17);
  for (int rep = 0; rep < 20; ++rep) {
    std::size_t V = 2 + rng.below(4);
    std::size_t T = 1 + rng.below(4);
    auto m = make_crf(V, 2 + rng.below(2), 2, 2000 + rep);
    std::vector<Array> h = random_states(T, 2, rng);
    double bf = brute_force_logz(m->crf, h);

    Tape t;
    CrfOnTape ctx(t, m->crf);
    BackwardPass bp = backward_pass(ctx, to_vars(t, h));
    CHECK(std::fabs(t.scalar(bp.log_z) - bf) < 1e-8);
  }
}

TEST_CASE("beta vectors are normalized and logZ is the sum of the scales") {
  auto m = make_crf(5, 3, 2, 107);
  Rng rng(19);
  std::vector<Array> h = random_states(4, 2, rng);
  Tape t;
  CrfOnTape ctx(t, m->crf);
  BackwardPass bp = backward_pass(ctx, to_vars(t, h));
  for (const Var& beta : bp.beta) {
    double sum = 0.0;
    for (double x : t.val(beta).data) {
      CHECK(x >= 0.0);
      sum += x;
    }
    CHECK(sum == Catch::Approx(1.0).margin(1e-9));
  }
  double total = 0.0;
  for (const Var& c : bp.log_scale) total += t.scalar(c);
  CHECK(t.scalar(bp.log_z) == Catch::Approx(total).margin(1e-12));
}

TEST_CASE("per-step unary shift moves logZ by exactly that constant") {
  auto m = make_crf(4, 3, 2, 108);
  Rng rng(23);
  std::vector<Array> h = random_states(3, 2, rng);
  const double c = 1.7;

  auto logz_with_shift = [&](std::size_t step, double shift) {
    Tape t;
    CrfOnTape ctx(t, m->crf);
    StepPotentials pots = compute_potentials(ctx, to_vars(t, h));
    pots.psi[step] = t.shift(pots.psi[step], shift);
    BackwardPass bp = beta_recursion(ctx, std::move(pots));
    return t.scalar(bp.log_z);
  };
  double base = logz_with_shift(1, 0.0);
  double shifted = logz_with_shift(1, c);
  CHECK(shifted - base == Catch::Approx(c).margin(1e-10));
}

TEST_CASE("pathological parameters raise the overflow error") {
  auto m = make_crf(4, 3, 2, 109);
  std::fill(m->crf.X->value.data.begin(), m->crf.X->value.data.end(), 1000.0);
  Rng rng(29);
  std::vector<Array> h = random_states(2, 2, rng);
  Tape t;
  CrfOnTape ctx(t, m->crf);
  CHECK_THROWS_AS(backward_pass(ctx, to_vars(t, h)), numeric_error);
}

TEST_CASE("sequence logscore: single-step expansion") {
  auto m = make_crf(5, 3, 2, 110);
  Rng rng(31);
  std::vector<Array> h = random_states(1, 2, rng);
  DensePotentials dense = densify(m->crf, h);
  Tape t;
  CrfOnTape ctx(t, m->crf);
  Var s = sequence_logscore(ctx, {3}, to_vars(t, h));
  double expect = dense.psi[0][3] + std::log(dense.tables[0].at2(kBos, 3));
  CHECK(t.scalar(s) == Catch::Approx(expect).margin(1e-10));
}

TEST_CASE("sequence logscore vanishes for the uniform model") {
  auto m = make_crf(4, 5, 2, 111);
  force_uniform_pairwise(*m);
  force_zero_unary(*m);
  Tape t;
  CrfOnTape ctx(t, m->crf);
  std::vector<Var> h(3, t.constant(Array({2})));
  for (TokenId w : {0, 1, 2}) {
    Var s = sequence_logscore(ctx, {w, TokenId(3), w}, h);
    CHECK(std::fabs(t.scalar(s)) < 1e-9);
  }
}

TEST_CASE("exp(S - logZ) sums to one over all sequences") {
  auto m = make_crf(3, 2, 2, 112);
  Rng rng(37);
  std::vector<Array> h = random_states(3, 2, rng);
  Tape t;
  CrfOnTape ctx(t, m->crf);
  std::vector<Var> hv = to_vars(t, h);
  BackwardPass bp = backward_pass(ctx, hv);
  double logz = t.scalar(bp.log_z);
  double total = 0.0;
  for_each_sequence(3, 3, [&](const std::vector<std::size_t>& w) {
    std::vector<TokenId> ids(w.begin(), w.end());
    total += std::exp(t.scalar(sequence_logscore_from(bp.pots, ids, t, 3)) - logz);
  });
  CHECK(total == Catch::Approx(1.0).margin(1e-10));
}

TEST_CASE("uniform model log-likelihood is -T log |V|") {
  auto m = make_crf(4, 3, 2, 113);
  force_uniform_pairwise(*m);
  force_zero_unary(*m);
  Tape t;
  CrfOnTape ctx(t, m->crf);
  std::vector<Var> h(2, t.constant(Array({2})));
  Var ll = log_likelihood(ctx, {2, 3}, h);
  CHECK(t.scalar(ll) == Catch::Approx(-2.0 * std::log(4.0)).margin(1e-9));
}

TEST_CASE("log-likelihood equals the brute-force probability on random instances") {
  Rng rng(41);
  for (int rep = 0; rep < 50; ++rep) {
    std::size_t V = 2 + rng.below(4);  // up to 5
    std::size_t T = 1 + rng.below(4);  // up to 4
    auto m = make_crf(V, 2, 2, 3000 + rep);
    std::vector<Array> h = random_states(T, 2, rng);
    std::vector<TokenId> w(T);
    for (auto& x : w) x = static_cast<TokenId>(rng.below(V));

    DensePotentials dense = densify(m->crf, h);
    double bf_logp =
        dense_score(dense, std::vector<std::size_t>(w.begin(), w.end())) -
        enum_logz(dense, T);

    Tape t;
    CrfOnTape ctx(t, m->crf);
    Var ll = log_likelihood(ctx, w, to_vars(t, h));
    CHECK(std::fabs(t.scalar(ll) - bf_logp) < 1e-8);
  }
}

TEST_CASE("conditional factors telescope into the log-likelihood") {
  Rng rng(43);
  for (int rep = 0; rep < 25; ++rep) {
    std::size_t V = 3 + rng.below(3);
    std::size_t T = 1 + rng.below(4);
    auto m = make_crf(V, 2, 2, 4000 + rep);
    std::vector<Array> h = random_states(T, 2, rng);
    std::vector<TokenId> w(T);
    for (auto& x : w) x = static_cast<TokenId>(rng.below(V));

    Tape t;
    CrfOnTape ctx(t, m->crf);
    BackwardPass bp = backward_pass(ctx, to_vars(t, h));
    double sum_log_cond = 0.0;
    TokenId prev = kBos;
    for (std::size_t step = 1; step <= T; ++step) {
      sum_log_cond += std::log(conditional_factor(bp, step, prev)[w[step - 1]]);
      prev = w[step - 1];
    }
    double ll = t.scalar(log_likelihood_from(bp, w));
    CHECK(std::fabs(sum_log_cond - ll) < 1e-10);
  }
}

TEST_CASE("conditional factor is uniform for the uniform model") {
  auto m = make_crf(5, 3, 2, 114);
  force_uniform_pairwise(*m);
  force_zero_unary(*m);
  Tape t;
  CrfOnTape ctx(t, m->crf);
  std::vector<Var> h(3, t.constant(Array({2})));
  BackwardPass bp = backward_pass(ctx, h);
  for (std::size_t step = 1; step <= 3; ++step) {
    auto probs = conditional_factor(bp, step, step == 1 ? kBos : 2);
    for (double p : probs) CHECK(p == Catch::Approx(0.2).margin(1e-9));
  }
}

TEST_CASE("last-step conditional with uniform pairwise is the unary softmax") {
  auto m = make_crf(5, 3, 2, 115);
  force_uniform_pairwise(*m);
  Rng rng(47);
  std::vector<Array> h = random_states(3, 2, rng);
  DensePotentials dense = densify(m->crf, h);
  Tape t;
  CrfOnTape ctx(t, m->crf);
  BackwardPass bp = backward_pass(ctx, to_vars(t, h));
  auto probs = conditional_factor(bp, 3, 2);
  double lse = logsumexp(dense.psi[2]);
  for (std::size_t v = 0; v < 5; ++v)
    CHECK(probs[v] == Catch::Approx(std::exp(dense.psi[2][v] - lse)).margin(1e-9));
}

TEST_CASE("conditional factors match suffix enumeration and normalize") {
  Rng rng(53);
  for (int rep = 0; rep < 10; ++rep) {
    auto m = make_crf(3, 2, 2, 5000 + rep);
    std::vector<Array> h = random_states(3, 2, rng);
    DensePotentials dense = densify(m->crf, h);
    Tape t;
    CrfOnTape ctx(t, m->crf);
    BackwardPass bp = backward_pass(ctx, to_vars(t, h));

    std::vector<std::size_t> prefix;
    TokenId prev = kBos;
    for (std::size_t step = 1; step <= 3; ++step) {
      auto probs = conditional_factor(bp, step, prev);
      auto expect = enum_conditional(dense, 3, prefix);
      double sum = 0.0;
      for (std::size_t v = 0; v < 3; ++v) {
        CHECK(std::fabs(probs[v] - expect[v]) < 1e-9);
        sum += probs[v];
      }
      CHECK(sum == Catch::Approx(1.0).margin(1e-9));
      std::size_t next = rng.below(3);
      prefix.push_back(next);
      prev = static_cast<TokenId>(next);
    }
  }
}

TEST_CASE("conditional factor guards unreachable prefixes") {
  // Hand-built pass with a zeroed beta entry; cannot arise from strictly
  // positive potentials, so the guard is exercised directly.
  Tape t;
  BackwardPass bp;
  bp.tape = &t;
  bp.vocab_size = 3;
  bp.T = 1;
  bp.beta.push_back(t.constant(Array::vec({0.0, 0.6, 0.4})));
  bp.beta.push_back(t.constant(Array({3}, 1.0 / 3.0)));
  bp.o_shift.push_back(t.constant(Array({3}, 1.0)));
  PairwiseOperator op;
  op.tape = &t;
  op.unary_only = true;
  op.vocab_size = 3;
  bp.pots.ops.push_back(op);
  CHECK_THROWS_WITH(conditional_factor(bp, 1, 0), "unreachable prefix");
}

TEST_CASE("point-mass unary makes the sampler deterministic") {
  auto m = make_crf(5, 3, 2, 116);
  force_uniform_pairwise(*m);
  force_zero_unary(*m);
  m->crf.b->value[3] = 40.0;  // one word dominates
  Tape t;
  CrfOnTape ctx(t, m->crf);
  std::vector<Var> h(4, t.constant(Array({2})));
  BackwardPass bp = backward_pass(ctx, h);
  Rng rng(59);
  auto ids = ancestral_sample(bp, rng);
  REQUIRE(ids.size() == 4);
  for (TokenId id : ids) CHECK(id == 3);
}

TEST_CASE("ancestral sampling is reproducible and never emits BOS") {
  auto m = make_crf(4, 3, 2, 117);
  Rng rng(61);
  std::vector<Array> h = random_states(3, 2, rng);
  Tape t;
  CrfOnTape ctx(t, m->crf);
  BackwardPass bp = backward_pass(ctx, to_vars(t, h));
  Rng r1(7), r2(7);
  auto s1 = ancestral_sample(bp, r1);
  auto s2 = ancestral_sample(bp, r2);
  CHECK(s1 == s2);
  for (int rep = 0; rep < 200; ++rep) {
    auto s = ancestral_sample(bp, r1);
    for (TokenId id : s) CHECK(id != kBos);
  }
}

TEST_CASE("sampler distribution matches enumeration (small-scale TV check)") {
  auto m = make_crf(3, 2, 2, 118);
  Rng rng(67);
  std::vector<Array> h = random_states(2, 2, rng);
  DensePotentials dense = densify(m->crf, h);
  auto exact = enum_sampler_dist(dense, 2);

  Tape t;
  CrfOnTape ctx(t, m->crf);
  BackwardPass bp = backward_pass(ctx, to_vars(t, h));
  std::map<std::vector<std::size_t>, double> freq;
  const int n = 50000;
  Rng sample_rng(71);
  for (int i = 0; i < n; ++i) {
    auto ids = ancestral_sample(bp, sample_rng);
    freq[std::vector<std::size_t>(ids.begin(), ids.end())] += 1.0 / n;
  }
  double tv = 0.0;
  for (const auto& [w, p] : exact) tv += std::fabs(p - (freq.count(w) ? freq[w] : 0.0));
  for (const auto& [w, p] : freq)
    if (!exact.count(w)) tv += p;
  CHECK(tv / 2.0 < 0.02);
}

TEST_CASE("pairwise marginals: uniform model gives flat interior tables") {
  auto m = make_crf(4, 3, 2, 119);
  force_uniform_pairwise(*m);
  force_zero_unary(*m);
  Tape t;
  CrfOnTape ctx(t, m->crf);
  std::vector<Var> h(3, t.constant(Array({2})));
  BackwardPass bp = backward_pass(ctx, h);
  auto tables = pairwise_marginals(bp);
  REQUIRE(tables.size() == 3);
  for (std::size_t step = 1; step < 3; ++step)
    for (double x : tables[step].data)
      CHECK(x == Catch::Approx(1.0 / 16.0).margin(1e-9));
  for (std::size_t j = 0; j < 4; ++j)
    CHECK(tables[0].at2(kBos, j) == Catch::Approx(0.25).margin(1e-9));
}

TEST_CASE("pairwise marginals match enumeration and are chain-consistent") {
  auto m = make_crf(4, 2, 2, 120);
  Rng rng(73);
  std::vector<Array> h = random_states(3, 2, rng);
  DensePotentials dense = densify(m->crf, h);
  Tape t;
  CrfOnTape ctx(t, m->crf);
  BackwardPass bp = backward_pass(ctx, to_vars(t, h));
  auto tables = pairwise_marginals(bp);
  for (std::size_t step = 1; step <= 3; ++step) {
    Array expect = enum_pairwise_marginal(dense, 3, step);
    double sum = 0.0;
    for (std::size_t i = 0; i < 16; ++i) {
      CHECK(std::fabs(tables[step - 1].data[i] - expect.data[i]) < 1e-9);
      sum += tables[step - 1].data[i];
    }
    CHECK(sum == Catch::Approx(1.0).margin(1e-9));
  }
  // Column sums of step t equal row sums of step t+1.
  for (std::size_t step = 0; step + 1 < 3; ++step) {
    auto cols = unary_marginal(tables[step]);
    for (std::size_t v = 0; v < 4; ++v) {
      double row_sum = 0.0;
      for (std::size_t j = 0; j < 4; ++j) row_sum += tables[step + 1].at2(v, j);
      CHECK(std::fabs(cols[v] - row_sum) < 1e-9);
    }
  }
}

TEST_CASE("tape gradient of logZ w.r.t. unary log-potentials equals the marginals") {
  auto m = make_crf(4, 2, 2, 121);
  Rng rng(79);
  std::size_t T = 3, V = 4;
  std::vector<Array> h = random_states(T, 2, rng);

  ParamSet probes;
  std::vector<Param*> deltas;
  for (std::size_t step = 0; step < T; ++step)
    deltas.push_back(&add_zeros(probes, "delta" + std::to_string(step), {V}));

  Tape t;
  CrfOnTape ctx(t, m->crf);
  StepPotentials pots = compute_potentials(ctx, to_vars(t, h));
  for (std::size_t step = 0; step < T; ++step)
    pots.psi[step] = t.add(pots.psi[step], t.param(*deltas[step]));
  BackwardPass bp = beta_recursion(ctx, std::move(pots));
  t.backward(bp.log_z);

  auto tables = pairwise_marginals(bp);
  for (std::size_t step = 0; step < T; ++step) {
    auto marg = unary_marginal(tables[step]);
    for (std::size_t v = 0; v < V; ++v)
      CHECK(std::fabs(deltas[step]->grad[v] - marg[v]) < 1e-6);
  }
}

TEST_CASE("pairwise marginals refuse large vocabularies") {
  auto m = make_crf(65, 2, 2, 122);
  Rng rng(83);
  std::vector<Array> h = random_states(1, 2, rng);
  Tape t;
  CrfOnTape ctx(t, m->crf);
  BackwardPass bp = backward_pass(ctx, to_vars(t, h));
  CHECK_THROWS_WITH(pairwise_marginals(bp),
                    "pairwise marginals: diagnostic-only operation");
}

TEST_CASE("brute force logZ: uniform case, monotonicity, size guard") {
  auto m = make_crf(4, 3, 2, 123);
  force_uniform_pairwise(*m);
  force_zero_unary(*m);
  std::vector<Array> h(3, Array({2}));
  CHECK(brute_force_logz(m->crf, h) == Catch::Approx(3 * std::log(4.0)).margin(1e-9));

  // Raising one unary bias strictly raises logZ.
  auto m2 = make_crf(3, 2, 2, 124);
  Rng rng(89);
  std::vector<Array> h2 = random_states(2, 2, rng);
  double before = brute_force_logz(m2->crf, h2);
  m2->crf.b->value[1] += 0.5;
  double after = brute_force_logz(m2->crf, h2);
  CHECK(after > before);

  auto big = make_crf(30, 2, 2, 125);
  std::vector<Array> h3(5, Array({2}));
  CHECK_THROWS_WITH(brute_force_logz(big->crf, h3),
                    "brute force: instance too large");
}

TEST_CASE("global coupling: the final state influences the first conditional") {
  auto m = make_crf(5, 3, 3, 126);
  Rng rng(97);
  std::vector<Array> h = random_states(4, 3, rng);
  auto first_cond = [&](const std::vector<Array>& states) {
    Tape t;
    CrfOnTape ctx(t, m->crf);
    BackwardPass bp = backward_pass(ctx, to_vars(t, states));
    return conditional_factor(bp, 1, kBos);
  };
  auto base = first_cond(h);
  std::vector<Array> perturbed = h;
  perturbed[3][0] += 1.0;
  auto moved = first_cond(perturbed);
  double diff = 0.0;
  for (std::size_t v = 0; v < 5; ++v) diff += std::fabs(base[v] - moved[v]);
  CHECK(diff > 1e-6);
}

TEST_CASE("unary-only ablation: likelihood reduces to independent softmaxes") {
  auto m = make_crf(4, 3, 2, 127, true, /*unary_only=*/true);
  Rng rng(101);
  std::size_t T = 3;
  std::vector<Array> h = random_states(T, 2, rng);
  std::vector<TokenId> w{1, 3, 0};

  Tape t;
  CrfOnTape ctx(t, m->crf);
  std::vector<Var> hv = to_vars(t, h);
  StepPotentials pots = compute_potentials(ctx, hv);
  double expect = 0.0;
  std::vector<Var> lses;
  for (std::size_t step = 0; step < T; ++step) {
    const Array& psi = t.val(pots.psi[step]);
    expect += psi[w[step]] - logsumexp(psi.data);
    lses.push_back(t.logsumexp(pots.psi[step]));
  }
  BackwardPass bp = beta_recursion(ctx, std::move(pots));
  double ll = t.scalar(log_likelihood_from(bp, w));
  CHECK(std::fabs(ll - expect) < 1e-10);

  // Z factorizes across steps.
  double lse_sum = 0.0;
  for (Var v : lses) lse_sum += t.scalar(v);
  CHECK(t.scalar(bp.log_z) == Catch::Approx(lse_sum).margin(1e-10));

  // Conditionals ignore the previous word.
  auto c1 = conditional_factor(bp, 2, 1);
  auto c2 = conditional_factor(bp, 2, 3);
  for (std::size_t v = 0; v < 4; ++v)
    CHECK(c1[v] == Catch::Approx(c2[v]).margin(1e-12));
}

TEST_CASE("full interaction matrix option agrees with enumeration") {
  auto m = make_crf(3, 2, 2, 128, /*diagonal=*/false);
  Rng rng(103);
  std::vector<Array> h = random_states(3, 2, rng);
  double bf = brute_force_logz(m->crf, h);
  Tape t;
  CrfOnTape ctx(t, m->crf);
  BackwardPass bp = backward_pass(ctx, to_vars(t, h));
  CHECK(std::fabs(t.scalar(bp.log_z) - bf) < 1e-8);
}
