#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "needlelab/enumerate.hpp"
#include "needlelab/simulate.hpp"
#include "needlelab/streams.hpp"

using namespace needle;

TEST_CASE("oracle rows are probability distributions consistent with the forward law") {
  auto alg = make_parity_compare(3);
  ProductDist mu = uniform_product(3, 2);
  ConditionalOracle oracle = build_conditional_oracle(*alg, mu);
  for (int j = 1; j <= 3; ++j) {
    for (const auto& [cond, probs] : oracle.item_given[j - 1]) {
      double total = 0;
      for (double p : probs) total += p;
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
    for (const auto& [cx, post] : oracle.posterior[j - 1]) {
      double total = 0;
      for (double p : post.prob) total += p;
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  double mass = 0;
  for (const auto& [ends, p] : oracle.end_state_marginal) mass += p;
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("constant algorithm: beta is identically zero, imitation is the identity") {
  auto alg = make_constant(3, 2);
  ConditionalOracle oracle = build_conditional_oracle(*alg, uniform_product(3, 2));
  for (int j = 1; j <= 3; ++j)
    for (const auto& [cond, probs] : oracle.item_given[j - 1])
      CHECK(probs[1] - 0.5 == doctest::Approx(0.0).epsilon(1e-12));

  CounterRng rng(4, 0);
  auto Y = gen_coin(3, 17);
  SimTranscript t = im_simulate(oracle, Y.items, rng);
  CHECK(t.x_mod == Y.items);
  CHECK(t.modifications == 0);
}

TEST_CASE("store-first oracle conditionals are the textbook values") {
  auto alg = make_store_first(2, 1);
  ConditionalOracle oracle = build_conditional_oracle(*alg, uniform_product(2, 2));
  // Before anything is stored: P[X_1 = 1] = 1/2.
  std::vector<State> col0{alg->initial_state()};
  std::vector<State> ends{alg->initial_state()};
  auto probs = oracle.item_probs(1, col0, ends);
  CHECK(probs[1] == doctest::Approx(0.5).epsilon(1e-12));
  // Once the state records a stored +1, X_1 is determined.
  std::vector<State> col1{2};
  auto probs2 = oracle.item_probs(2, col1, ends);
  (void)probs2;  // X_2 stays uniform regardless
  CHECK(probs2[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("one-pass imitation is the identity map on its input") {
  auto alg = make_sum_mod(4, 1, 2);
  ConditionalOracle oracle = build_conditional_oracle(*alg, uniform_product(4, 2));
  CounterRng rng(5, 0);
  for (int tr = 0; tr < 50; ++tr) {
    auto Y = gen_coin(4, 100 + tr);
    SimTranscript t = im_simulate(oracle, Y.items, rng);
    CHECK(t.x_mod == Y.items);
    for (double b : t.beta) CHECK(std::fabs(b) <= 1e-12);
  }
}

TEST_CASE("imitated joint law equals the native law exactly") {
  for (auto alg : {make_parity_compare(3), make_sum_mod(3, 2, 2), make_store_first(4, 2)}) {
    KPassJoint native = build_joint(*alg, uniform_product(static_cast<int>(alg->length()), 2));
    ConditionalOracle oracle =
        build_conditional_oracle(*alg, uniform_product(static_cast<int>(alg->length()), 2));
    ImLaw law = im_exact_law(oracle);
    CHECK(law.table.total_mass() == doctest::Approx(1.0).epsilon(1e-9));
    double tv = total_variation(im_law_as_native(law), native_law_drop_tape(native));
    CHECK(tv <= 1e-9);
  }
}

TEST_CASE("beta magnitudes and the modification rule") {
  auto alg = make_parity_compare(3);
  ConditionalOracle oracle = build_conditional_oracle(*alg, uniform_product(3, 2));
  // |beta_j| <= 1/2 over every reachable conditioning.
  for (int j = 1; j <= 3; ++j)
    for (const auto& [cond, probs] : oracle.item_given[j - 1])
      CHECK(std::fabs(probs[1] - 0.5) <= 0.5 + 1e-12);

  // Exact modification mass: Pr[Y_j != X'_j] = E|beta_j| per step, summed.
  ImLaw law = im_exact_law(oracle);
  double mods = im_expected_modifications(law);
  // Independent route: from the native law, sum E|P[X_j=1|cond] - 1/2|.
  KPassJoint native = build_joint(*alg, uniform_product(3, 2));
  double expect = 0;
  for (int j = 1; j <= 3; ++j) {
    std::unordered_map<uint64_t, std::pair<double, double>> by_cond;  // mass, mass_x1
    for (const auto& [key, p] : native.table.entries()) {
      std::vector<State> col, ends;
      for (int i = 1; i <= native.k; ++i) col.push_back(key.get(native.var_m(i, j - 1)));
      ends.push_back(key.get(native.var_m(1, 0)));
      for (int i = 1; i <= native.k - 1; ++i) ends.push_back(key.get(native.var_m(i, native.n)));
      uint64_t cond = ConditionalOracle::pack_states(col, ends);
      by_cond[cond].first += p;
      if (key.get(native.var_x(j)) == 1) by_cond[cond].second += p;
    }
    for (const auto& [cond, mm] : by_cond)
      expect += mm.first * std::fabs(mm.second / mm.first - 0.5);
  }
  CHECK(mods == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("modification budget and information cost of the imitation") {
  auto alg = make_parity_compare(3);
  ConditionalOracle oracle = build_conditional_oracle(*alg, uniform_product(3, 2));
  ImLaw law = im_exact_law(oracle);
  double mods = im_expected_modifications(law);
  double budget = std::sqrt(3.0 * oracle.h_end_states);
  CHECK(mods <= budget + 1e-9);

  // IC(Im) <= MIC_cond(M), both exact.
  KPassJoint native = build_joint(*alg, uniform_product(3, 2));
  double ic_im = im_information_cost(law);
  double cond = mic_cond(native);
  CHECK(ic_im <= cond + 1e-9);
}

TEST_CASE("o-simulation recovers the sum through the sidecar") {
  // The exact-sum two-pass algorithm leaves the full sum in its output;
  // with the sampling probability clamped at 1 the sidecar correction is
  // exact and the estimate equals the true sum on every run.
  auto alg = make_exact_sum(6, 2);
  ConditionalOracle oracle = build_conditional_oracle(*alg, uniform_product(6, 2));
  AprConfig cfg{64, 1.0, 9.0};
  CounterRng rng(21, 0);
  AprConfig sidecar{6, 0, 0};
  (void)sidecar;
  for (int tr = 0; tr < 200; ++tr) {
    auto Y = gen_coin(6, 300 + tr);
    // Sidecar length must match the stream; configure per run.
    AprConfig c2{6, 1.9, 4.8};
    OSimResult res = o_simulate(oracle, *alg, Y.items, c2, rng);
    int64_t truth = 0;
    for (int64_t b : Y.items) truth += b;
    CHECK(res.estimate == doctest::Approx(static_cast<double>(truth)));
  }
}

TEST_CASE("o-simulation with no modifications leaves the sidecar empty") {
  auto alg = make_constant(6, 1);
  ConditionalOracle oracle = build_conditional_oracle(*alg, uniform_product(6, 2));
  AprConfig cfg{6, 1.9, 4.8};
  CounterRng rng(8, 0);
  auto Y = gen_coin(6, 44);
  OSimResult res = o_simulate(oracle, *alg, Y.items, cfg, rng);
  CHECK(res.im.modifications == 0);
  CHECK(res.apr.delta == 0);
  CHECK(res.apr.gamma_sum == 0);
  CHECK(apr_output(res.apr) == 0.0);
}

TEST_CASE("empirical modification mass respects the entropy budget") {
  auto alg = make_parity_compare(4);
  ConditionalOracle oracle = build_conditional_oracle(*alg, uniform_product(4, 2));
  double budget = std::sqrt(4.0 * oracle.h_end_states);
  CounterRng rng(31, 0);
  const int trials = 20000;
  uint64_t mods = 0;
  for (int tr = 0; tr < trials; ++tr) {
    auto Y = gen_coin(4, 7000 + tr);
    SimTranscript t = im_simulate(oracle, Y.items, rng);
    mods += t.modifications;
  }
  double mean = static_cast<double>(mods) / trials;
  double sigma = std::sqrt(4.0 / trials);  // crude bound on the trial-mean deviation
  CHECK(mean <= budget + 4 * sigma);
}

TEST_CASE("frozen-last-pass detection and the wrapper") {
  auto moving = make_sum_mod(3, 2, 2);
  CHECK_FALSE(final_pass_frozen(*moving));
  auto frozen = with_frozen_last_pass(moving);
  CHECK(final_pass_frozen(*frozen));
  CHECK(frozen->passes() == 3);

  auto counter = make_value_counter(3, 2, 2, 2, 2, 3);
  CHECK(final_pass_frozen(*counter));
}

TEST_CASE("protocol degenerates to a direct run when every position is pinned") {
  auto alg = make_value_counter(3, 2, 2, 2, 2, 3);
  std::vector<uint64_t> S{1, 2, 3};
  CounterRng rng(2, 0);
  for (uint32_t mask = 0; mask < 8; ++mask) {
    std::vector<int64_t> z{1 + ((mask >> 0) & 1), 1 + ((mask >> 1) & 1), 1 + ((mask >> 2) & 1)};
    int via_protocol = mostlyeq_protocol(*alg, S, z, 2, rng);
    Transcript direct = run_k_pass(*alg, z, 0, false);
    CHECK(via_protocol == direct.output);
  }
}

TEST_CASE("protocol rejects a moving final pass and malformed position sets") {
  auto moving = make_sum_mod(3, 2, 2);
  CounterRng rng(3, 0);
  std::vector<int64_t> z{1, -1};
  CHECK_THROWS_AS(mostlyeq_protocol(*moving, {1, 2}, z, 2, rng), std::invalid_argument);
  auto alg = make_value_counter(3, 2, 2, 2, 2, 3);
  std::vector<int64_t> z2{1, 2};
  CHECK_THROWS_AS(mostlyeq_protocol(*alg, {2, 1}, z2, 2, rng), std::invalid_argument);
  CHECK_THROWS_AS(mostlyeq_protocol(*alg, {1, 5}, z2, 2, rng), std::invalid_argument);
}

TEST_CASE("protocol output law equals the pinned-position law exactly") {
  auto alg = make_value_counter(3, 2, 2, 2, 2, 3);
  std::vector<uint64_t> S{1, 3};
  // For every fixed z, the protocol's output distribution over its gap
  // filling equals the algorithm's output distribution with the pinned
  // positions fixed and the rest uniform.
  for (int64_t z1 : {1, 2}) {
    for (int64_t z2 : {1, 2}) {
      std::vector<int64_t> z{z1, z2};
      auto proto = exact_distribution<int>(
          [&](RandomSource& rs) { return mostlyeq_protocol(*alg, S, z, 2, rs); });
      auto direct = exact_distribution<int>([&](RandomSource& rs) {
        std::vector<int64_t> items{z1, static_cast<int64_t>(1 + rs.uniform(2)), z2};
        SourceTape tape(rs);
        return run_k_pass(*alg, items, tape, false).output;
      });
      for (const auto& [out, p] : direct)
        CHECK(proto[out] == doctest::Approx(p).epsilon(1e-12));
    }
  }
}

TEST_CASE("protocol error rate equals the direct error rate exactly") {
  auto alg = make_value_counter(3, 2, 2, 2, 2, 3);
  std::vector<uint64_t> S{1, 3};
  double err_direct = exact_err_direct(*alg, S, 2);
  double err_proto = exact_err_protocol(*alg, S, 2, S.size());
  CHECK(std::fabs(err_direct - err_proto) <= 1e-9);
}

TEST_CASE("oracle dump is stable and structured") {
  auto alg = make_store_first(2, 1);
  ConditionalOracle oracle = build_conditional_oracle(*alg, uniform_product(2, 2));
  std::string d1 = oracle.dump();
  std::string d2 = build_conditional_oracle(*alg, uniform_product(2, 2)).dump();
  CHECK(d1 == d2);
  CHECK(d1.find("oracle n 2 k 1") != std::string::npos);
  CHECK(d1.find("item j 1") != std::string::npos);
  CHECK(d1.find("post j 1") != std::string::npos);
}
