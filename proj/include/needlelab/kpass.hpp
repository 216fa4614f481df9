#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "needlelab/rng.hpp"

namespace needle {

// Memory states are encoded into 64-bit words; the per-algorithm
// state_width() reports how many bits the encoding of a given state needs.
using State = uint64_t;

// A bounded-memory algorithm that reads its stream k times in order.
// Transitions may consume one symbol of per-step randomness whose alphabet
// size is declared up front, which is what makes small instances exactly
// enumerable.
class KPassAlgorithm {
 public:
  virtual ~KPassAlgorithm() = default;

  virtual int memory_bits() const = 0;  // s
  virtual int passes() const = 0;       // k
  virtual uint64_t length() const = 0;  // n
  virtual State initial_state() const = 0;

  // pass in [1,k], j in [1,n]. r < rand_arity(pass, j).
  virtual State step(int pass, uint64_t j, int64_t item, State m, uint64_t r) const = 0;
  virtual uint64_t rand_arity(int /*pass*/, uint64_t /*j*/) const { return 1; }
  virtual double rand_prob(int pass, uint64_t j, uint64_t r) const {
    (void)r;
    return 1.0 / static_cast<double>(rand_arity(pass, j));
  }
  virtual int output(State final_state) const = 0;
  virtual int state_width(State m) const { return std::bit_width(m); }

  // Item alphabet, needed for exact enumeration. item_value maps an
  // alphabet index to the stream symbol fed into step().
  virtual int alphabet() const = 0;
  virtual int64_t item_value(int idx) const = 0;
};

// Samples an index with the given probabilities. Uniform weights collapse
// to a single draw; general weights decompose into bernoulli choices so
// exhaustive enumeration stays exact.
uint64_t weighted_choice(RandomSource& rs, uint64_t arity,
                         const std::function<double(uint64_t)>& prob);

// Per-(pass, step) randomness for one run, distributed per the algorithm's
// declared rand_prob.
class RandTape {
 public:
  virtual ~RandTape() = default;
  virtual uint64_t draw(const KPassAlgorithm& alg, int pass, uint64_t j) = 0;
};

class CounterTape final : public RandTape {
 public:
  explicit CounterTape(uint64_t seed) : rng_(seed, 0x6b70617373ULL) {}
  uint64_t draw(const KPassAlgorithm& alg, int pass, uint64_t j) override {
    return weighted_choice(rng_, alg.rand_arity(pass, j),
                           [&](uint64_t r) { return alg.rand_prob(pass, j, r); });
  }

 private:
  CounterRng rng_;
};

// Fixed cells indexed (pass-1)*n + (j-1); missing cells read 0.
class FixedTape final : public RandTape {
 public:
  FixedTape(uint64_t n, std::vector<uint64_t> cells) : n_(n), cells_(std::move(cells)) {}
  uint64_t draw(const KPassAlgorithm& alg, int pass, uint64_t j) override;

 private:
  uint64_t n_;
  std::vector<uint64_t> cells_;
};

// Adapter drawing tape cells from a RandomSource (used by enumeration).
class SourceTape final : public RandTape {
 public:
  explicit SourceTape(RandomSource& rs) : rs_(rs) {}
  uint64_t draw(const KPassAlgorithm& alg, int pass, uint64_t j) override {
    return weighted_choice(rs_, alg.rand_arity(pass, j),
                           [&](uint64_t r) { return alg.rand_prob(pass, j, r); });
  }

 private:
  RandomSource& rs_;
};

struct Transcript {
  int k = 0;
  uint64_t n = 0;
  bool recorded = false;
  // grid[i-1][j] = state after item j of pass i; column 0 is the pass start.
  std::vector<std::vector<State>> grid;
  State final_state = 0;
  int output = 0;
  int peak_width = 0;

  State at(int pass, uint64_t j) const { return grid[pass - 1][j]; }
};

// Replays the algorithm over the stream. With record=false only the final
// state and the running peak width are kept, matching the memory footprint
// of an actual streaming run.
Transcript run_k_pass(const KPassAlgorithm& alg, std::span<const int64_t> items,
                      RandTape& tape, bool record);
Transcript run_k_pass(const KPassAlgorithm& alg, std::span<const int64_t> items,
                      uint64_t seed, bool record);

int peak_memory_bits(const Transcript& t);

// ---- Toy zoo -------------------------------------------------------------
// All toys run on +-1 items unless noted. Factory returns shareable
// read-only definitions.
using AlgPtr = std::shared_ptr<const KPassAlgorithm>;

AlgPtr make_constant(uint64_t n, int k);
AlgPtr make_store_first(uint64_t n, int k);
// Running sum of +-1 items held exactly, stored with offset n*k so the
// encoding stays non-negative.
AlgPtr make_exact_sum(uint64_t n, int k);
AlgPtr make_sum_mod(uint64_t n, int k, int bits);
// Saturating count of +1 items, capped at threshold.
AlgPtr make_threshold_detector(uint64_t n, int k, int threshold);
// Pass 1 computes the parity of the bits; pass 2 compares the first item
// against that parity and freezes the answer. Requires k == 2.
AlgPtr make_parity_compare(uint64_t n);
// Exact running sum during the single pass, collapsed to the majority bit
// on the last step. Odd n keeps the sign well defined.
AlgPtr make_majority_only(uint64_t n);
// Stores the first bit only when its per-step coin comes up heads.
AlgPtr make_noisy_store_first(uint64_t n, int k, double store_prob);
// Counts occurrences of a marked domain value in pass 1 (mod 2^bits) over
// items in [1,t]; passes after the first leave the state untouched and the
// output is 1 iff the count reached `threshold`.
AlgPtr make_value_counter(uint64_t n, int k, uint64_t t, uint64_t marked, int bits,
                          uint64_t threshold);
// Wraps an algorithm with one extra pass that performs no state change.
AlgPtr with_frozen_last_pass(AlgPtr inner);

// Table-defined deterministic algorithms, loadable from a text file:
//   states S passes K length N alphabet A bits B
//   items v0 v1 ... v{A-1}
//   init m0
//   output state out       (one line per state)
//   step pass state item_idx next_state   (pass '*' applies to all passes)
AlgPtr load_table_algorithm(std::istream& in);
AlgPtr load_table_algorithm_file(const std::string& path);
std::string dump_table_algorithm(const KPassAlgorithm& alg);

}  // namespace needle
