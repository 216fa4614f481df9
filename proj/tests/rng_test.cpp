#include <doctest.h>

#include <map>

#include "needlelab/enumerate.hpp"
#include "needlelab/rng.hpp"
#include "test_support.hpp"

using namespace needle;

TEST_CASE("counter rng is a pure function of seed and stream id") {
  CounterRng a(42, 7), b(42, 7);
  for (int i = 0; i < 100; ++i) CHECK(a.next_word() == b.next_word());
  CounterRng c(42, 8);
  bool all_equal = true;
  CounterRng a2(42, 7);
  for (int i = 0; i < 100; ++i) all_equal = all_equal && (a2.next_word() == c.next_word());
  CHECK_FALSE(all_equal);
}

TEST_CASE("uniform draws are exactly bounded and unbiased enough") {
  CounterRng rng(1, 0);
  std::map<uint64_t, uint64_t> counts;
  const uint64_t t = 10, n = 100000;
  for (uint64_t i = 0; i < n; ++i) ++counts[rng.uniform(t)];
  double stat = 0;
  for (uint64_t v = 0; v < t; ++v) {
    double exp = static_cast<double>(n) / t;
    double d = counts[v] - exp;
    stat += d * d / exp;
    CHECK(counts[v] > 0);
  }
  CHECK(testsupport::chi2_pvalue(stat, static_cast<int>(t - 1)) > 1e-4);
  CHECK_THROWS_AS(rng.uniform(0), std::invalid_argument);
}

TEST_CASE("bernoulli edge probabilities are deterministic") {
  CounterRng rng(3, 0);
  for (int i = 0; i < 50; ++i) {
    CHECK_FALSE(rng.bernoulli(0.0));
    CHECK(rng.bernoulli(1.0));
  }
}

TEST_CASE("poisson matches its first two moments") {
  CounterRng rng(5, 0);
  const double mean = 1500.0;  // exercises the chunked path
  const int trials = 4000;
  long double sum = 0, sq = 0;
  for (int i = 0; i < trials; ++i) {
    double v = static_cast<double>(poisson(rng, mean));
    sum += v;
    sq += v * v;
  }
  double m = static_cast<double>(sum / trials);
  double var = static_cast<double>(sq / trials) - m * m;
  CHECK(std::fabs(m - mean) < 4 * std::sqrt(mean / trials));
  CHECK(std::fabs(var - mean) < 0.1 * mean);
}

TEST_CASE("enumerator walks the full decision tree with exact probabilities") {
  // Single bernoulli then a data-dependent uniform.
  auto dist = exact_distribution<int>([](RandomSource& rs) {
    if (rs.bernoulli(0.25)) return 100 + static_cast<int>(rs.uniform(2));
    return static_cast<int>(rs.uniform(3));
  });
  CHECK(dist.size() == 5);
  CHECK(dist[100] == doctest::Approx(0.125).epsilon(1e-12));
  CHECK(dist[101] == doctest::Approx(0.125).epsilon(1e-12));
  CHECK(dist[0] == doctest::Approx(0.25).epsilon(1e-12));
  double total = 0;
  for (auto& [k, p] : dist) total += p;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("enumerator rejects trees above the budget") {
  CHECK_THROWS_AS(exact_distribution<int>(
                      [](RandomSource& rs) {
                        int x = 0;
                        for (int i = 0; i < 30; ++i) x ^= rs.bernoulli(0.5);
                        return x;
                      },
                      1 << 10),
                  EnumerationBudgetExceeded);
}
