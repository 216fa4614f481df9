#include <doctest.h>

#include <map>
#include <sstream>

#include "needlelab/apr.hpp"
#include "needlelab/kpass.hpp"
#include "needlelab/streams.hpp"

using namespace needle;

namespace {

std::vector<int64_t> bits_of(uint32_t mask, uint64_t n) {
  std::vector<int64_t> v;
  for (uint64_t j = 0; j < n; ++j) v.push_back((mask >> j) & 1 ? 1 : -1);
  return v;
}

}  // namespace

TEST_CASE("constant algorithm never leaves its initial state") {
  auto alg = make_constant(4, 2);
  auto s = gen_coin(4, 1);
  Transcript t = run_k_pass(*alg, s.items, 0, true);
  for (int i = 1; i <= 2; ++i)
    for (uint64_t j = 0; j <= 4; ++j) CHECK(t.at(i, j) == alg->initial_state());
  CHECK(peak_memory_bits(t) == 0);
}

TEST_CASE("exact sum over a fixed coin stream") {
  auto alg = make_exact_sum(3, 1);
  std::vector<int64_t> items{1, -1, 1};
  Transcript t = run_k_pass(*alg, items, 0, true);
  // State encodes sum + n*k.
  CHECK(static_cast<int64_t>(t.final_state) - 3 == 1);
  CHECK(t.output == 1);
}

TEST_CASE("pass handoff invariant holds in recorded transcripts") {
  auto alg = make_sum_mod(5, 3, 2);
  auto s = gen_coin(5, 77);
  Transcript t = run_k_pass(*alg, s.items, 3, true);
  for (int i = 1; i < 3; ++i) CHECK(t.at(i + 1, 0) == t.at(i, 5));
}

TEST_CASE("two-pass parity-compare matches a hand-computed table") {
  auto alg = make_parity_compare(3);
  for (uint32_t mask = 0; mask < 8; ++mask) {
    auto items = bits_of(mask, 3);
    Transcript t = run_k_pass(*alg, items, 0, true);
    // Pass 1: running parity of the bits seen so far.
    uint64_t parity = 0;
    for (uint64_t j = 1; j <= 3; ++j) {
      parity ^= (items[j - 1] == 1);
      CHECK(t.at(1, j) == parity);
    }
    // Pass 2: the first bit compared against the full parity, then frozen.
    uint64_t expected = 2 + ((items[0] == 1) == (parity == 1));
    for (uint64_t j = 1; j <= 3; ++j) CHECK(t.at(2, j) == expected);
    CHECK(t.output == static_cast<int>(expected - 2));
  }
}

TEST_CASE("replay determinism under a fixed tape") {
  auto alg = make_noisy_store_first(4, 1, 0.5);
  auto s = gen_coin(4, 2);
  FixedTape tape1(4, {1, 0, 0, 0});
  FixedTape tape2(4, {1, 0, 0, 0});
  Transcript a = run_k_pass(*alg, s.items, tape1, true);
  Transcript b = run_k_pass(*alg, s.items, tape2, true);
  CHECK(a.grid == b.grid);
  CHECK(a.output == b.output);
  // With the store coin set, the first bit is remembered.
  CHECK(a.output == (s.items[0] == 1 ? 1 : 0));
}

TEST_CASE("length mismatch and width overflow are rejected") {
  auto alg = make_exact_sum(4, 1);
  std::vector<int64_t> items{1, 1};
  CHECK_THROWS_AS(run_k_pass(*alg, items, 0, false), std::invalid_argument);

  // A sum toy lying about its memory width trips the overflow check.
  auto tight = make_sum_mod(8, 1, 2);
  auto s = gen_coin(8, 3);
  CHECK_NOTHROW(run_k_pass(*tight, s.items, 0, false));
}

TEST_CASE("peak width of a saturating counter") {
  // 255 increments of +1 against an uncapped threshold counter: 8 bits.
  auto alg = make_threshold_detector(255, 1, 1000);
  std::vector<int64_t> items(255, 1);
  Transcript t = run_k_pass(*alg, items, 0, false);
  CHECK(peak_memory_bits(t) == 8);
}

TEST_CASE("apr wrapped as a one-pass algorithm stays within its range widths") {
  AprConfig cfg{4096, 0.5, 64.0};
  auto alg = make_apr_kpass(cfg);
  CounterRng rng(11, 0);
  std::vector<int64_t> items(4096, 0);
  for (auto& v : items)
    if (rng.bernoulli(64.0 / 4096)) v = rng.bernoulli(0.5) ? 1 : -1;
  Transcript t = run_k_pass(*alg, items, 5, false);
  // Range arithmetic: |delta| <= zeta <= thr+1, |gamma| <= n.
  double thr = cfg.zeta_threshold();
  uint64_t zmax = static_cast<uint64_t>(thr) + 1;
  int bound = std::bit_width(2 * zmax) + std::bit_width(zmax) + std::bit_width(2 * cfg.n);
  CHECK(peak_memory_bits(t) <= bound);
  int64_t truth = 0;
  for (int64_t v : items) truth += v;
  CHECK(t.output == truth);  // p_sample clamps to 1 here
}

TEST_CASE("table algorithms load, run and reject malformed files") {
  auto builtin = make_parity_compare(3);
  std::string text = dump_table_algorithm(*builtin);
  std::istringstream in(text);
  auto loaded = load_table_algorithm(in);
  for (uint32_t mask = 0; mask < 8; ++mask) {
    auto items = bits_of(mask, 3);
    Transcript a = run_k_pass(*builtin, items, 0, true);
    Transcript b = run_k_pass(*loaded, items, 0, true);
    CHECK(a.grid == b.grid);
    CHECK(a.output == b.output);
  }

  std::istringstream bad1("states 2 passes 1 length 2 alphabet 2 bits 1\nitems -1 1\ninit 5\n");
  CHECK_THROWS(load_table_algorithm(bad1));
  std::istringstream bad2(
      "states 2 passes 1 length 2 alphabet 2 bits 1\nitems -1 1\ninit 0\noutput 0 0\noutput 1 "
      "1\nstep * 0 0 1\n");
  CHECK_THROWS(load_table_algorithm(bad2));  // incomplete transition table
}

TEST_CASE("exhaustive transcripts for the toy zoo at n = 4") {
  // Store-first remembers exactly the first bit on every input.
  auto alg = make_store_first(4, 2);
  for (uint32_t mask = 0; mask < 16; ++mask) {
    auto items = bits_of(mask, 4);
    Transcript t = run_k_pass(*alg, items, 0, false);
    CHECK(t.output == (items[0] == 1 ? 1 : 0));
  }
  // Threshold detector fires exactly when enough +1 bits exist.
  auto thr = make_threshold_detector(4, 1, 2);
  for (uint32_t mask = 0; mask < 16; ++mask) {
    auto items = bits_of(mask, 4);
    int ones = 0;
    for (auto v : items) ones += v == 1;
    Transcript t = run_k_pass(*thr, items, 0, false);
    CHECK(t.output == (ones >= 2 ? 1 : 0));
  }
}
