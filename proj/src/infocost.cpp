#include "needlelab/infocost.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "needlelab/enumerate.hpp"

namespace needle {

std::vector<int> KPassJoint::end_state_vars() const {
  std::vector<int> vars;
  vars.push_back(var_m(1, 0));  // starting state
  for (int i = 1; i <= k - 1; ++i) vars.push_back(var_m(i, n));
  return vars;
}

ProductDist uniform_product(int n, int alphabet) {
  return ProductDist(n, std::vector<double>(alphabet, 1.0 / alphabet));
}

ProductDist biased_product(int n, double prob_last) {
  return ProductDist(n, std::vector<double>{1.0 - prob_last, prob_last});
}

KPassJoint build_joint(const KPassAlgorithm& alg, const ProductDist& mu,
                       uint64_t atom_budget) {
  const int n = static_cast<int>(alg.length());
  const int k = alg.passes();
  const int a = alg.alphabet();
  if (static_cast<int>(mu.size()) != n)
    throw std::invalid_argument("build_joint: mu must have one row per stream position");
  for (const auto& row : mu)
    if (static_cast<int>(row.size()) != a)
      throw std::invalid_argument("build_joint: mu row size must match the alphabet");

  // Atom count: inputs times every tape combination.
  long double atoms = 1;
  for (int j = 0; j < n; ++j) atoms *= a;
  for (int i = 1; i <= k; ++i)
    for (int j = 1; j <= n; ++j) atoms *= static_cast<long double>(alg.rand_arity(i, j));
  if (atoms > static_cast<long double>(atom_budget)) throw EnumerationBudgetExceeded();

  KPassJoint out;
  out.n = n;
  out.k = k;
  out.s = alg.memory_bits();
  out.alphabet = a;
  for (int idx = 0; idx < a; ++idx) out.item_values.push_back(alg.item_value(idx));
  int num_vars = n + k * (n + 1);
  if (num_vars > JointTable::kMaxVars)
    throw std::invalid_argument("build_joint: instance too large for the key packing");
  out.table = JointTable(num_vars);

  // Odometer over input digits and tape cells.
  std::vector<int> x(n, 0);
  std::vector<uint64_t> tape(static_cast<size_t>(k) * n, 0);
  std::vector<uint64_t> arity(static_cast<size_t>(k) * n);
  for (int i = 1; i <= k; ++i)
    for (int j = 1; j <= n; ++j)
      arity[static_cast<size_t>(i - 1) * n + (j - 1)] = alg.rand_arity(i, j);

  auto run_one = [&]() {
    double prob = 1.0;
    for (int j = 0; j < n; ++j) prob *= mu[j][x[j]];
    if (prob == 0.0) return;
    for (int i = 1; i <= k; ++i)
      for (int j = 1; j <= n; ++j)
        prob *= alg.rand_prob(i, j, tape[static_cast<size_t>(i - 1) * n + (j - 1)]);
    if (prob == 0.0) return;
    VarKey key;
    for (int j = 0; j < n; ++j) key.set(out.var_x(j + 1), static_cast<uint8_t>(x[j]));
    State m = alg.initial_state();
    for (int i = 1; i <= k; ++i) {
      if (m > 0xFF) throw std::invalid_argument("build_joint: state exceeds key packing");
      key.set(out.var_m(i, 0), static_cast<uint8_t>(m));
      for (int j = 1; j <= n; ++j) {
        uint64_t r = tape[static_cast<size_t>(i - 1) * n + (j - 1)];
        m = alg.step(i, j, alg.item_value(x[j - 1]), m, r);
        if (m > 0xFF) throw std::invalid_argument("build_joint: state exceeds key packing");
        key.set(out.var_m(i, j), static_cast<uint8_t>(m));
      }
    }
    out.table.add(key, prob);
  };

  bool done = false;
  while (!done) {
    run_one();
    // Advance tape first, then the input digits.
    size_t c = 0;
    for (; c < tape.size(); ++c) {
      if (++tape[c] < arity[c]) break;
      tape[c] = 0;
    }
    if (c < tape.size()) continue;
    int d = 0;
    for (; d < n; ++d) {
      if (++x[d] < a) break;
      x[d] = 0;
    }
    if (d == n) done = true;
  }
  return out;
}

namespace {

std::vector<int> column_vars(const KPassJoint& g, int up_to_pass, int j) {
  std::vector<int> vars;
  for (int i = 1; i <= up_to_pass; ++i) vars.push_back(g.var_m(i, j));
  return vars;
}

void append(std::vector<int>& dst, const std::vector<int>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

}  // namespace

MICReport mic_report(const KPassJoint& g) {
  MICReport rep;
  rep.bound_2ksn = 2.0 * g.k * g.s * g.n;
  rep.bound_ksn = 1.0 * g.k * g.s * g.n;

  long double total = 0;
  for (int i = 1; i <= g.k; ++i) {
    for (int j = 1; j <= g.n; ++j) {
      std::vector<int> A{g.var_m(i, j)};
      for (int l = 1; l <= g.n; ++l) {
        std::vector<int> B{g.var_x(l)};
        std::vector<int> C;
        bool tail = l > j;
        if (!tail) {
          C = column_vars(g, i, l - 1);
          append(C, column_vars(g, i - 1, j));
        } else {
          C = column_vars(g, i - 1, l - 1);
          append(C, column_vars(g, i - 1, j));
        }
        // A may coincide with a conditioning var only when j == l-1 and
        // i <= conditioning passes; the formulas never produce that.
        double bits = conditional_mi(g.table, A, B, C);
        rep.terms.push_back({i, j, l, tail, bits});
        total += bits;
      }
    }
  }
  rep.mic = static_cast<double>(total);

  long double cond_total = 0;
  std::vector<int> ends = g.end_state_vars();
  for (int j = 1; j <= g.n; ++j) {
    std::vector<int> A_full = column_vars(g, g.k, j);
    for (int l = 1; l <= j; ++l) {
      std::vector<int> B{g.var_x(l)};
      std::vector<int> C;
      for (int v : ends)
        if (std::find(C.begin(), C.end(), v) == C.end()) C.push_back(v);
      for (int v : column_vars(g, g.k, l - 1))
        if (std::find(C.begin(), C.end(), v) == C.end()) C.push_back(v);
      // Vars already conditioned on carry no further information; dropping
      // them from the target leaves the term unchanged and keeps the index
      // sets disjoint (at j == n the target overlaps the end states).
      std::vector<int> A;
      for (int v : A_full)
        if (std::find(C.begin(), C.end(), v) == C.end()) A.push_back(v);
      double bits = A.empty() ? 0.0 : conditional_mi(g.table, A, B, C);
      rep.cond_terms.push_back({0, j, l, false, bits});
      cond_total += bits;
    }
  }
  rep.mic_cond = static_cast<double>(cond_total);
  return rep;
}

double mic(const KPassJoint& g) { return mic_report(g).mic; }
double mic_cond(const KPassJoint& g) { return mic_report(g).mic_cond; }

double one_pass_ic(const KPassJoint& g) {
  if (g.k != 1) throw std::invalid_argument("one_pass_ic: algorithm must be one-pass");
  long double total = 0;
  for (int j = 1; j <= g.n; ++j) {
    std::vector<int> A{g.var_m(1, j)};
    for (int l = 1; l <= j; ++l) {
      std::vector<int> B{g.var_x(l)};
      std::vector<int> C{g.var_m(1, l - 1)};
      total += conditional_mi(g.table, A, B, C);
    }
  }
  return static_cast<double>(total);
}

double variance_reduction(const KPassJoint& g) {
  // Conditional mean of the item sum given the final state.
  std::unordered_map<uint8_t, double> mass, mean_num;
  for (const auto& [key, p] : g.table.entries()) {
    uint8_t m = key.get(g.var_m(g.k, g.n));
    double sum = 0;
    for (int j = 1; j <= g.n; ++j) sum += static_cast<double>(g.item_values[key.get(g.var_x(j))]);
    mass[m] += p;
    mean_num[m] += p * sum;
  }
  long double out = 0;
  for (const auto& [m, w] : mass) {
    double mean = mean_num[m] / w;
    out += w * mean * mean;
  }
  return static_cast<double>(out);
}

std::string MICReport::to_json() const {
  std::ostringstream o;
  o << "{\"mic\":" << mic << ",\"mic_cond\":" << mic_cond << ",\"bound_2ksn\":" << bound_2ksn
    << ",\"bound_ksn\":" << bound_ksn << ",\"terms\":[";
  for (size_t i = 0; i < terms.size(); ++i) {
    const auto& t = terms[i];
    o << (i ? "," : "") << "{\"i\":" << t.i << ",\"j\":" << t.j << ",\"l\":" << t.l
      << ",\"tail\":" << (t.tail_sum ? "true" : "false") << ",\"bits\":" << t.bits << "}";
  }
  o << "],\"cond_terms\":[";
  for (size_t i = 0; i < cond_terms.size(); ++i) {
    const auto& t = cond_terms[i];
    o << (i ? "," : "") << "{\"j\":" << t.j << ",\"l\":" << t.l << ",\"bits\":" << t.bits << "}";
  }
  o << "]}";
  return o.str();
}

}  // namespace needle
