#include "needlelab/kpass.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace needle {

uint64_t weighted_choice(RandomSource& rs, uint64_t arity,
                         const std::function<double(uint64_t)>& prob) {
  if (arity <= 1) return 0;
  bool uniform = true;
  for (uint64_t r = 0; r < arity && uniform; ++r)
    uniform = std::fabs(prob(r) - 1.0 / static_cast<double>(arity)) < 1e-15;
  if (uniform) return rs.uniform(arity);
  if (arity == 2) return rs.bernoulli(prob(1)) ? 1 : 0;
  double remaining = 1.0;
  for (uint64_t r = 0; r + 1 < arity; ++r) {
    double p = prob(r);
    if (remaining <= 0) return r;
    if (rs.bernoulli(std::min(1.0, p / remaining))) return r;
    remaining -= p;
  }
  return arity - 1;
}

uint64_t FixedTape::draw(const KPassAlgorithm& alg, int pass, uint64_t j) {
  uint64_t arity = alg.rand_arity(pass, j);
  if (arity <= 1) return 0;
  size_t idx = static_cast<size_t>(pass - 1) * n_ + (j - 1);
  uint64_t cell = idx < cells_.size() ? cells_[idx] : 0;
  if (cell >= arity) throw std::invalid_argument("fixed tape: cell out of range");
  return cell;
}

Transcript run_k_pass(const KPassAlgorithm& alg, std::span<const int64_t> items,
                      RandTape& tape, bool record) {
  if (items.size() != alg.length())
    throw std::invalid_argument("run_k_pass: stream length does not match algorithm");
  const int k = alg.passes();
  const uint64_t n = alg.length();
  Transcript t;
  t.k = k;
  t.n = n;
  t.recorded = record;
  State m = alg.initial_state();
  t.peak_width = alg.state_width(m);
  if (record) t.grid.assign(k, std::vector<State>(n + 1, 0));
  for (int pass = 1; pass <= k; ++pass) {
    if (record) t.grid[pass - 1][0] = m;
    for (uint64_t j = 1; j <= n; ++j) {
      uint64_t r = tape.draw(alg, pass, j);
      m = alg.step(pass, j, items[j - 1], m, r);
      int w = alg.state_width(m);
      if (w > alg.memory_bits())
        throw std::runtime_error("run_k_pass: state exceeds declared memory width");
      t.peak_width = std::max(t.peak_width, w);
      if (record) t.grid[pass - 1][j] = m;
    }
  }
  t.final_state = m;
  t.output = alg.output(m);
  return t;
}

Transcript run_k_pass(const KPassAlgorithm& alg, std::span<const int64_t> items,
                      uint64_t seed, bool record) {
  CounterTape tape(seed);
  return run_k_pass(alg, items, tape, record);
}

int peak_memory_bits(const Transcript& t) { return t.peak_width; }

namespace {

class PmOneAlg : public KPassAlgorithm {
 public:
  PmOneAlg(uint64_t n, int k, int s) : n_(n), k_(k), s_(s) {}
  int memory_bits() const override { return s_; }
  int passes() const override { return k_; }
  uint64_t length() const override { return n_; }
  int alphabet() const override { return 2; }
  int64_t item_value(int idx) const override { return idx == 0 ? -1 : 1; }

 protected:
  uint64_t n_;
  int k_;
  int s_;
};

class ConstantAlg final : public PmOneAlg {
 public:
  using PmOneAlg::PmOneAlg;
  State initial_state() const override { return 0; }
  State step(int, uint64_t, int64_t, State m, uint64_t) const override { return m; }
  int output(State) const override { return 0; }
};

class StoreFirstAlg final : public PmOneAlg {
 public:
  using PmOneAlg::PmOneAlg;
  State initial_state() const override { return 0; }
  State step(int pass, uint64_t j, int64_t x, State m, uint64_t) const override {
    if (pass == 1 && j == 1) return x == 1 ? 2 : 1;
    return m;
  }
  int output(State m) const override { return m == 2 ? 1 : 0; }
};

class ExactSumAlg final : public PmOneAlg {
 public:
  ExactSumAlg(uint64_t n, int k, int s) : PmOneAlg(n, k, s) {}
  State initial_state() const override { return offset(); }
  State step(int, uint64_t, int64_t x, State m, uint64_t) const override {
    return static_cast<State>(static_cast<int64_t>(m) + x);
  }
  int output(State m) const override {
    int64_t total = static_cast<int64_t>(m) - static_cast<int64_t>(offset());
    return static_cast<int>(total / k_);
  }
  uint64_t offset() const { return n_ * static_cast<uint64_t>(k_); }
};

class SumModAlg final : public PmOneAlg {
 public:
  SumModAlg(uint64_t n, int k, int bits) : PmOneAlg(n, k, bits), mask_((1ULL << bits) - 1) {}
  State initial_state() const override { return 0; }
  State step(int, uint64_t, int64_t x, State m, uint64_t) const override {
    return (m + static_cast<uint64_t>(x)) & mask_;
  }
  int output(State m) const override { return static_cast<int>(m); }

 private:
  uint64_t mask_;
};

class ThresholdAlg final : public PmOneAlg {
 public:
  ThresholdAlg(uint64_t n, int k, int threshold)
      : PmOneAlg(n, k, std::bit_width(static_cast<uint64_t>(threshold))),
        threshold_(static_cast<uint64_t>(threshold)) {}
  State initial_state() const override { return 0; }
  State step(int, uint64_t, int64_t x, State m, uint64_t) const override {
    if (x == 1 && m < threshold_) return m + 1;
    return m;
  }
  int output(State m) const override { return m >= threshold_ ? 1 : 0; }

 private:
  uint64_t threshold_;
};

class ParityCompareAlg final : public PmOneAlg {
 public:
  explicit ParityCompareAlg(uint64_t n) : PmOneAlg(n, 2, 2) {}
  State initial_state() const override { return 0; }
  State step(int pass, uint64_t j, int64_t x, State m, uint64_t) const override {
    uint64_t bit = x == 1 ? 1 : 0;
    if (pass == 1) return m ^ bit;
    if (j == 1 && m < 2) return 2 + (bit == m ? 1 : 0);
    return m;
  }
  int output(State m) const override { return m >= 2 ? static_cast<int>(m - 2) : 0; }
};

class MajorityOnlyAlg final : public PmOneAlg {
 public:
  explicit MajorityOnlyAlg(uint64_t n)
      : PmOneAlg(n, 1, std::bit_width(2 * n + 1)) {}
  State initial_state() const override { return n_; }
  State step(int, uint64_t j, int64_t x, State m, uint64_t) const override {
    int64_t sum = static_cast<int64_t>(m) - static_cast<int64_t>(n_) + x;
    if (j == n_) return sum >= 0 ? 1 : 0;
    return static_cast<State>(sum + static_cast<int64_t>(n_));
  }
  int output(State m) const override { return static_cast<int>(m); }
};

class NoisyStoreFirstAlg final : public PmOneAlg {
 public:
  NoisyStoreFirstAlg(uint64_t n, int k, double q) : PmOneAlg(n, k, 2), q_(q) {}
  State initial_state() const override { return 0; }
  uint64_t rand_arity(int pass, uint64_t j) const override {
    return pass == 1 && j == 1 ? 2 : 1;
  }
  double rand_prob(int pass, uint64_t j, uint64_t r) const override {
    if (pass == 1 && j == 1) return r == 1 ? q_ : 1.0 - q_;
    return 1.0;
  }
  State step(int pass, uint64_t j, int64_t x, State m, uint64_t r) const override {
    if (pass == 1 && j == 1 && r == 1) return x == 1 ? 2 : 1;
    return m;
  }
  int output(State m) const override { return m == 2 ? 1 : 0; }

 private:
  double q_;
};

class ValueCounterAlg final : public KPassAlgorithm {
 public:
  ValueCounterAlg(uint64_t n, int k, uint64_t t, uint64_t marked, int bits, uint64_t threshold)
      : n_(n), k_(k), t_(t), marked_(marked), bits_(bits), threshold_(threshold),
        mask_((1ULL << bits) - 1) {}
  int memory_bits() const override { return bits_; }
  int passes() const override { return k_; }
  uint64_t length() const override { return n_; }
  int alphabet() const override { return static_cast<int>(t_); }
  int64_t item_value(int idx) const override { return idx + 1; }
  State initial_state() const override { return 0; }
  State step(int pass, uint64_t, int64_t x, State m, uint64_t) const override {
    if (pass == 1 && static_cast<uint64_t>(x) == marked_) return (m + 1) & mask_;
    return m;
  }
  int output(State m) const override { return m >= threshold_ ? 1 : 0; }

 private:
  uint64_t n_;
  int k_;
  uint64_t t_;
  uint64_t marked_;
  int bits_;
  uint64_t threshold_;
  uint64_t mask_;
};

class FrozenLastPassAlg final : public KPassAlgorithm {
 public:
  explicit FrozenLastPassAlg(AlgPtr inner) : inner_(std::move(inner)) {}
  int memory_bits() const override { return inner_->memory_bits(); }
  int passes() const override { return inner_->passes() + 1; }
  uint64_t length() const override { return inner_->length(); }
  int alphabet() const override { return inner_->alphabet(); }
  int64_t item_value(int idx) const override { return inner_->item_value(idx); }
  State initial_state() const override { return inner_->initial_state(); }
  uint64_t rand_arity(int pass, uint64_t j) const override {
    return pass <= inner_->passes() ? inner_->rand_arity(pass, j) : 1;
  }
  double rand_prob(int pass, uint64_t j, uint64_t r) const override {
    return pass <= inner_->passes() ? inner_->rand_prob(pass, j, r) : 1.0;
  }
  State step(int pass, uint64_t j, int64_t x, State m, uint64_t r) const override {
    return pass <= inner_->passes() ? inner_->step(pass, j, x, m, r) : m;
  }
  int output(State m) const override { return inner_->output(m); }
  int state_width(State m) const override { return inner_->state_width(m); }

 private:
  AlgPtr inner_;
};

}  // namespace

AlgPtr make_constant(uint64_t n, int k) { return std::make_shared<ConstantAlg>(n, k, 1); }
AlgPtr make_store_first(uint64_t n, int k) { return std::make_shared<StoreFirstAlg>(n, k, 2); }
AlgPtr make_exact_sum(uint64_t n, int k) {
  int s = std::bit_width(2 * n * static_cast<uint64_t>(k) + 1);
  return std::make_shared<ExactSumAlg>(n, k, s);
}
AlgPtr make_sum_mod(uint64_t n, int k, int bits) {
  return std::make_shared<SumModAlg>(n, k, bits);
}
AlgPtr make_threshold_detector(uint64_t n, int k, int threshold) {
  return std::make_shared<ThresholdAlg>(n, k, threshold);
}
AlgPtr make_parity_compare(uint64_t n) { return std::make_shared<ParityCompareAlg>(n); }
AlgPtr make_majority_only(uint64_t n) {
  if (n % 2 == 0) throw std::invalid_argument("majority toy wants odd n");
  return std::make_shared<MajorityOnlyAlg>(n);
}
AlgPtr make_noisy_store_first(uint64_t n, int k, double store_prob) {
  return std::make_shared<NoisyStoreFirstAlg>(n, k, store_prob);
}
AlgPtr make_value_counter(uint64_t n, int k, uint64_t t, uint64_t marked, int bits,
                          uint64_t threshold) {
  return std::make_shared<ValueCounterAlg>(n, k, t, marked, bits, threshold);
}

AlgPtr with_frozen_last_pass(AlgPtr inner) {
  return std::make_shared<FrozenLastPassAlg>(std::move(inner));
}

namespace {

class TableAlg final : public KPassAlgorithm {
 public:
  TableAlg(int states, int k, uint64_t n, std::vector<int64_t> items, int bits, State init,
           std::vector<int> outputs, std::vector<uint64_t> trans, bool per_pass)
      : states_(states), k_(k), n_(n), items_(std::move(items)), bits_(bits), init_(init),
        outputs_(std::move(outputs)), trans_(std::move(trans)), per_pass_(per_pass) {}

  int memory_bits() const override { return bits_; }
  int passes() const override { return k_; }
  uint64_t length() const override { return n_; }
  int alphabet() const override { return static_cast<int>(items_.size()); }
  int64_t item_value(int idx) const override { return items_[idx]; }
  State initial_state() const override { return init_; }
  State step(int pass, uint64_t, int64_t x, State m, uint64_t) const override {
    int item_idx = -1;
    for (size_t i = 0; i < items_.size(); ++i)
      if (items_[i] == x) item_idx = static_cast<int>(i);
    if (item_idx < 0) throw std::invalid_argument("table algorithm: item not in alphabet");
    if (m >= static_cast<State>(states_))
      throw std::invalid_argument("table algorithm: state out of range");
    size_t p = per_pass_ ? static_cast<size_t>(pass - 1) : 0;
    return trans_[(p * states_ + m) * items_.size() + item_idx];
  }
  int output(State m) const override { return outputs_[m]; }

  int states() const { return states_; }
  bool per_pass() const { return per_pass_; }
  const std::vector<uint64_t>& table() const { return trans_; }

 private:
  int states_;
  int k_;
  uint64_t n_;
  std::vector<int64_t> items_;
  int bits_;
  State init_;
  std::vector<int> outputs_;
  std::vector<uint64_t> trans_;  // [(pass) * states + state] * alphabet + item
  bool per_pass_;
};

}  // namespace

AlgPtr load_table_algorithm(std::istream& in) {
  std::string word;
  auto expect = [&](const char* kw) {
    if (!(in >> word) || word != kw)
      throw std::runtime_error(std::string("table file: expected '") + kw + "'");
  };
  int states, k, alpha_size, bits;
  uint64_t n;
  expect("states");
  in >> states;
  expect("passes");
  in >> k;
  expect("length");
  in >> n;
  expect("alphabet");
  in >> alpha_size;
  expect("bits");
  in >> bits;
  if (!in || states < 1 || k < 1 || alpha_size < 1 || bits < 1)
    throw std::runtime_error("table file: bad header");
  if (std::bit_width(static_cast<uint64_t>(states - 1)) > bits)
    throw std::runtime_error("table file: states do not fit declared bits");
  expect("items");
  std::vector<int64_t> items(alpha_size);
  for (auto& v : items)
    if (!(in >> v)) throw std::runtime_error("table file: bad items row");
  expect("init");
  State init;
  in >> init;
  if (!in || init >= static_cast<State>(states))
    throw std::runtime_error("table file: bad initial state");
  std::vector<int> outputs(states, 0);
  std::vector<char> out_seen(states, 0);
  size_t cells = static_cast<size_t>(k) * states * alpha_size;
  std::vector<uint64_t> trans(cells, 0);
  std::vector<char> seen(cells, 0);
  bool per_pass = false;
  while (in >> word) {
    if (word == "output") {
      State m;
      int o;
      if (!(in >> m >> o) || m >= static_cast<State>(states))
        throw std::runtime_error("table file: bad output row");
      outputs[m] = o;
      out_seen[m] = 1;
    } else if (word == "step") {
      std::string pass_tok;
      State m;
      uint64_t item_idx, next;
      if (!(in >> pass_tok >> m >> item_idx >> next))
        throw std::runtime_error("table file: bad step row");
      if (m >= static_cast<State>(states) || item_idx >= static_cast<uint64_t>(alpha_size) ||
          next >= static_cast<State>(states))
        throw std::runtime_error("table file: step row out of range");
      int p_lo = 0, p_hi = k - 1;
      if (pass_tok != "*") {
        int p = std::stoi(pass_tok);
        if (p < 1 || p > k) throw std::runtime_error("table file: step pass out of range");
        p_lo = p_hi = p - 1;
        per_pass = true;
      }
      for (int p = p_lo; p <= p_hi; ++p) {
        size_t idx = (static_cast<size_t>(p) * states + m) * alpha_size + item_idx;
        trans[idx] = next;
        seen[idx] = 1;
      }
    } else {
      throw std::runtime_error("table file: unknown row '" + word + "'");
    }
  }
  for (State m = 0; m < static_cast<State>(states); ++m)
    if (!out_seen[m]) throw std::runtime_error("table file: missing output row");
  for (size_t i = 0; i < cells; ++i)
    if (!seen[i]) throw std::runtime_error("table file: incomplete transition table");
  return std::make_shared<TableAlg>(states, k, n, std::move(items), bits, init,
                                    std::move(outputs), std::move(trans), per_pass);
}

AlgPtr load_table_algorithm_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("table file: cannot open " + path);
  return load_table_algorithm(in);
}

std::string dump_table_algorithm(const KPassAlgorithm& alg) {
  // Works for any deterministic algorithm with an enumerable state space
  // reachable within the table range; here we only support TableAlg-shaped
  // dumps driven by brute probing of states 0..2^bits-1.
  std::ostringstream out;
  uint64_t states = 1ULL << alg.memory_bits();
  out << "states " << states << " passes " << alg.passes() << " length " << alg.length()
      << " alphabet " << alg.alphabet() << " bits " << alg.memory_bits() << "\n";
  out << "items";
  for (int a = 0; a < alg.alphabet(); ++a) out << ' ' << alg.item_value(a);
  out << "\ninit " << alg.initial_state() << "\n";
  for (uint64_t m = 0; m < states; ++m) out << "output " << m << ' ' << alg.output(m) << "\n";
  for (int pass = 1; pass <= alg.passes(); ++pass)
    for (uint64_t m = 0; m < states; ++m)
      for (int a = 0; a < alg.alphabet(); ++a)
        out << "step " << pass << ' ' << m << ' ' << a << ' '
            << alg.step(pass, 1, alg.item_value(a), m, 0) << "\n";
  return out.str();
}

}  // namespace needle
