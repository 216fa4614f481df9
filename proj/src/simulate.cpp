#include "needlelab/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "needlelab/enumerate.hpp"
#include "needlelab/streams.hpp"

namespace needle {

namespace {

constexpr double kZeroTol = 1e-15;

std::vector<State> ends_of(const KPassJoint& g, const VarKey& key) {
  std::vector<State> ends;
  ends.push_back(key.get(g.var_m(1, 0)));
  for (int i = 1; i <= g.k - 1; ++i) ends.push_back(key.get(g.var_m(i, g.n)));
  return ends;
}

std::vector<State> column_of(const KPassJoint& g, const VarKey& key, int j) {
  std::vector<State> col;
  for (int i = 1; i <= g.k; ++i) col.push_back(key.get(g.var_m(i, j)));
  return col;
}

uint64_t pack_column(const std::vector<State>& col) {
  uint64_t out = 0;
  for (size_t i = 0; i < col.size(); ++i) {
    if (col[i] > 0xFF) throw std::invalid_argument("oracle: state exceeds packing");
    out |= col[i] << (8 * i);
  }
  return out;
}

int index_of_item(const std::vector<int64_t>& values, int64_t v) {
  for (size_t i = 0; i < values.size(); ++i)
    if (values[i] == v) return static_cast<int>(i);
  throw std::invalid_argument("oracle: item not in alphabet");
}

size_t weighted_pick(const std::vector<double>& probs, RandomSource& rs) {
  double u = rs.unit();
  double acc = 0;
  for (size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;
}

}  // namespace

ConditionalOracle::CondKey ConditionalOracle::pack_states(const std::vector<State>& column,
                                                          const std::vector<State>& ends) {
  if (column.size() + ends.size() > 8)
    throw std::invalid_argument("oracle: too many passes for the conditioning key");
  uint64_t out = 0;
  size_t slot = 0;
  for (State m : column) {
    if (m > 0xFF) throw std::invalid_argument("oracle: state exceeds packing");
    out |= m << (8 * slot++);
  }
  for (State m : ends) {
    if (m > 0xFF) throw std::invalid_argument("oracle: state exceeds packing");
    out |= m << (8 * slot++);
  }
  return out;
}

const std::vector<double>& ConditionalOracle::item_probs(int j, const std::vector<State>& column,
                                                         const std::vector<State>& ends) const {
  auto it = item_given[j - 1].find(pack_states(column, ends));
  if (it == item_given[j - 1].end())
    throw std::logic_error("oracle: conditioning configuration has zero mass");
  return it->second;
}

const ConditionalOracle::Posterior& ConditionalOracle::next_column(
    int j, const std::vector<State>& column, const std::vector<State>& ends,
    int item_idx) const {
  CondKey key = pack_states(column, ends) * static_cast<uint64_t>(alphabet) +
                static_cast<uint64_t>(item_idx);
  auto it = posterior[j - 1].find(key);
  if (it == posterior[j - 1].end())
    throw std::logic_error("oracle: posterior configuration has zero mass");
  return it->second;
}

ConditionalOracle build_conditional_oracle(const KPassAlgorithm& alg, const ProductDist& mu,
                                           uint64_t atom_budget) {
  KPassJoint g = build_joint(alg, mu, atom_budget);
  ConditionalOracle o;
  o.n = g.n;
  o.k = g.k;
  o.alphabet = g.alphabet;
  o.item_values = g.item_values;
  o.item_given.resize(g.n);
  o.posterior.resize(g.n);

  std::map<std::vector<State>, double> ends_mass;
  std::vector<std::unordered_map<uint64_t, double>> cond_mass(g.n);
  std::vector<std::unordered_map<uint64_t, double>> cond_item_mass(g.n);

  for (const auto& [key, p] : g.table.entries()) {
    std::vector<State> ends = ends_of(g, key);
    ends_mass[ends] += p;
    for (int j = 1; j <= g.n; ++j) {
      uint64_t cond = ConditionalOracle::pack_states(column_of(g, key, j - 1), ends);
      int x = key.get(g.var_x(j));
      cond_mass[j - 1][cond] += p;
      uint64_t cx = cond * static_cast<uint64_t>(g.alphabet) + static_cast<uint64_t>(x);
      cond_item_mass[j - 1][cx] += p;
      auto& post = o.posterior[j - 1][cx];
      uint64_t next = pack_column(column_of(g, key, j));
      bool found = false;
      for (size_t q = 0; q < post.column_tuple.size(); ++q) {
        if (post.column_tuple[q] == next) {
          post.prob[q] += p;
          found = true;
        }
      }
      if (!found) {
        post.column_tuple.push_back(next);
        post.prob.push_back(p);
      }
    }
  }

  long double h = 0;
  for (const auto& [ends, p] : ends_mass) {
    o.end_state_marginal.emplace_back(ends, p);
    if (p > 0) h -= p * std::log2(p);
  }
  o.h_end_states = static_cast<double>(h);

  for (int j = 1; j <= g.n; ++j) {
    for (const auto& [cond, mass] : cond_mass[j - 1]) {
      std::vector<double> probs(g.alphabet, 0.0);
      for (int x = 0; x < g.alphabet; ++x) {
        auto it = cond_item_mass[j - 1].find(cond * g.alphabet + x);
        if (it != cond_item_mass[j - 1].end()) probs[x] = it->second / mass;
      }
      o.item_given[j - 1][cond] = std::move(probs);
    }
    for (auto& [cx, post] : o.posterior[j - 1]) {
      double mass = cond_item_mass[j - 1].at(cx);
      for (double& q : post.prob) q /= mass;
    }
  }
  return o;
}

std::string ConditionalOracle::dump() const {
  std::ostringstream out;
  out << "oracle n " << n << " k " << k << " alphabet " << alphabet << "\n";
  out.precision(17);
  for (int j = 1; j <= n; ++j) {
    std::vector<CondKey> keys;
    for (const auto& [ck, probs] : item_given[j - 1]) keys.push_back(ck);
    std::sort(keys.begin(), keys.end());
    for (CondKey ck : keys) {
      out << "item j " << j << " cond " << ck;
      for (double p : item_given[j - 1].at(ck)) out << ' ' << p;
      out << "\n";
    }
    keys.clear();
    for (const auto& [ck, post] : posterior[j - 1]) keys.push_back(ck);
    std::sort(keys.begin(), keys.end());
    for (CondKey ck : keys) {
      const auto& post = posterior[j - 1].at(ck);
      std::vector<size_t> order(post.column_tuple.size());
      for (size_t q = 0; q < order.size(); ++q) order[q] = q;
      std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return post.column_tuple[a] < post.column_tuple[b];
      });
      out << "post j " << j << " condx " << ck;
      for (size_t q : order) out << ' ' << post.column_tuple[q] << ':' << post.prob[q];
      out << "\n";
    }
  }
  return out.str();
}

namespace {

void require_pm_one(const ConditionalOracle& o) {
  if (o.alphabet != 2 || o.item_values[0] != -1 || o.item_values[1] != 1)
    throw std::invalid_argument("simulation requires a +-1 item alphabet");
}

// Outcomes of the modification branch: pairs of (item index, probability).
// Branch structure: a positive beta can only flip -1 to +1, a non-positive
// beta can only flip +1 to -1, each with probability 2|beta|.
std::vector<std::pair<int, double>> modification_outcomes(double beta, int y_idx) {
  std::vector<std::pair<int, double>> out;
  if (beta > 0) {
    if (y_idx == 1) {
      out.emplace_back(1, 1.0);
    } else {
      out.emplace_back(0, 1.0 - 2 * beta);
      out.emplace_back(1, 2 * beta);
    }
  } else {
    if (y_idx == 1) {
      out.emplace_back(1, 1.0 + 2 * beta);
      out.emplace_back(0, -2 * beta);
    } else {
      out.emplace_back(0, 1.0);
    }
  }
  return out;
}

void unpack_column(uint64_t packed, int k, std::vector<State>& col) {
  col.resize(k);
  for (int i = 0; i < k; ++i) col[i] = (packed >> (8 * i)) & 0xFF;
}

}  // namespace

SimTranscript im_simulate(const ConditionalOracle& oracle, std::span<const int64_t> Y,
                          RandomSource& rs) {
  require_pm_one(oracle);
  if (Y.size() != static_cast<size_t>(oracle.n))
    throw std::invalid_argument("im_simulate: input length mismatch");
  SimTranscript t;
  // Sample the end memory states of the first k-1 passes.
  std::vector<double> weights;
  for (const auto& [ends, p] : oracle.end_state_marginal) weights.push_back(p);
  size_t pick = weighted_pick(weights, rs);
  t.end_states = oracle.end_state_marginal[pick].first;

  t.grid.assign(oracle.k, std::vector<State>(oracle.n + 1, 0));
  for (int i = 0; i < oracle.k; ++i) t.grid[i][0] = t.end_states[i];
  t.y.assign(Y.begin(), Y.end());
  t.x_mod.resize(oracle.n);
  t.beta.resize(oracle.n);

  std::vector<State> col = t.end_states;
  for (int j = 1; j <= oracle.n; ++j) {
    const auto& probs = oracle.item_probs(j, col, t.end_states);
    double beta = probs[1] - 0.5;
    t.beta[j - 1] = beta;
    int y_idx = Y[j - 1] == 1 ? 1 : 0;
    int x_idx = y_idx;
    if (beta > 0) {
      if (y_idx == 0 && rs.bernoulli(2 * beta)) x_idx = 1;
    } else {
      if (y_idx == 1 && rs.bernoulli(-2 * beta)) x_idx = 0;
    }
    t.x_mod[j - 1] = oracle.item_values[x_idx];
    if (x_idx != y_idx) ++t.modifications;
    const auto& post = oracle.next_column(j, col, t.end_states, x_idx);
    size_t q = weighted_pick(post.prob, rs);
    unpack_column(post.column_tuple[q], oracle.k, col);
    for (int i = 0; i < oracle.k; ++i) t.grid[i][j] = col[i];
  }
  return t;
}

ImLaw im_exact_law(const ConditionalOracle& oracle) {
  require_pm_one(oracle);
  ImLaw law;
  law.n = oracle.n;
  law.k = oracle.k;
  int num_vars = 2 * oracle.n + oracle.k * (oracle.n + 1);
  if (num_vars > JointTable::kMaxVars)
    throw std::invalid_argument("im_exact_law: instance too large for the key packing");
  law.table = JointTable(num_vars);

  std::vector<State> col(oracle.k);
  VarKey key;

  std::function<void(int, double)> dfs = [&](int j, double prob) {
    if (prob <= kZeroTol) return;
    if (j > oracle.n) {
      law.table.add(key, prob);
      return;
    }
    std::vector<State> ends;
    for (int i = 0; i < oracle.k; ++i)
      ends.push_back(key.get(law.var_m(i + 1, 0)));
    const auto& probs = oracle.item_probs(j, col, ends);
    double beta = probs[1] - 0.5;
    for (int y_idx = 0; y_idx < 2; ++y_idx) {
      key.set(law.var_y(j), static_cast<uint8_t>(y_idx));
      for (auto [x_idx, px] : modification_outcomes(beta, y_idx)) {
        if (px <= kZeroTol) continue;
        key.set(law.var_xmod(j), static_cast<uint8_t>(x_idx));
        const auto& post = oracle.next_column(j, col, ends, x_idx);
        std::vector<State> saved = col;
        for (size_t q = 0; q < post.column_tuple.size(); ++q) {
          if (post.prob[q] <= kZeroTol) continue;
          unpack_column(post.column_tuple[q], oracle.k, col);
          for (int i = 0; i < oracle.k; ++i)
            key.set(law.var_m(i + 1, j), static_cast<uint8_t>(col[i]));
          dfs(j + 1, prob * 0.5 * px * post.prob[q]);
          col = saved;
        }
      }
    }
  };

  for (const auto& [ends, p0] : oracle.end_state_marginal) {
    if (p0 <= kZeroTol) continue;
    for (int i = 0; i < oracle.k; ++i) {
      key.set(law.var_m(i + 1, 0), static_cast<uint8_t>(ends[i]));
      col[i] = ends[i];
    }
    dfs(1, p0);
  }
  return law;
}

JointTable im_law_as_native(const ImLaw& law) {
  KPassJoint shape;
  shape.n = law.n;
  shape.k = law.k;
  JointTable out(law.n + law.k * (law.n + 1));
  for (const auto& [key, p] : law.table.entries()) {
    VarKey nk;
    for (int j = 1; j <= law.n; ++j) nk.set(shape.var_x(j), key.get(law.var_xmod(j)));
    for (int i = 1; i <= law.k; ++i)
      for (int j = 0; j <= law.n; ++j) nk.set(shape.var_m(i, j), key.get(law.var_m(i, j)));
    out.add(nk, p);
  }
  return out;
}

JointTable native_law_drop_tape(const KPassJoint& joint) { return joint.table; }

double im_expected_modifications(const ImLaw& law) {
  long double total = 0;
  for (const auto& [key, p] : law.table.entries()) {
    int mods = 0;
    for (int j = 1; j <= law.n; ++j)
      if (key.get(law.var_y(j)) != key.get(law.var_xmod(j))) ++mods;
    total += p * mods;
  }
  return static_cast<double>(total);
}

double im_information_cost(const ImLaw& law) {
  auto im_vars = [&](int j) {
    std::vector<int> vars;
    for (int i = 1; i <= law.k; ++i) vars.push_back(law.var_m(i, j));
    if (j != 0)
      for (int i = 1; i <= law.k; ++i) vars.push_back(law.var_m(i, 0));
    return vars;
  };
  long double total = 0;
  for (int j = 1; j <= law.n; ++j) {
    std::vector<int> A_full = im_vars(j);
    for (int l = 1; l <= j; ++l) {
      std::vector<int> B{law.var_y(l)};
      std::vector<int> C = im_vars(l - 1);
      if (l - 1 != 0)
        for (int i = 1; i <= law.k; ++i) C.push_back(law.var_m(i, 0));
      std::vector<int> C_unique;
      for (int v : C)
        if (std::find(C_unique.begin(), C_unique.end(), v) == C_unique.end())
          C_unique.push_back(v);
      std::vector<int> A;
      for (int v : A_full)
        if (std::find(C_unique.begin(), C_unique.end(), v) == C_unique.end()) A.push_back(v);
      if (!A.empty()) total += conditional_mi(law.table, A, B, C_unique);
    }
  }
  return static_cast<double>(total);
}

OSimResult o_simulate(const ConditionalOracle& oracle, const KPassAlgorithm& alg,
                      std::span<const int64_t> Y, const AprConfig& apr_cfg, RandomSource& rs) {
  OSimResult res;
  res.im = im_simulate(oracle, Y, rs);
  res.apr = apr_init(apr_cfg);
  // The modification y_j - x'_j is even in the +-1 encoding; the sidecar
  // consumes half-steps and the correction is doubled on output.
  for (int j = 0; j < oracle.n; ++j) {
    int a = static_cast<int>((res.im.y[j] - res.im.x_mod[j]) / 2);
    apr_step(res.apr, a, rs);
  }
  res.k_pass_estimate = alg.output(res.im.final_state());
  res.estimate = res.k_pass_estimate + 2.0 * apr_output(res.apr);
  return res;
}

bool final_pass_frozen(const KPassAlgorithm& alg) {
  if (alg.memory_bits() > 20)
    throw std::invalid_argument("final_pass_frozen: state space too large to verify");
  int k = alg.passes();
  for (State m = 0; m < (1ULL << alg.memory_bits()); ++m) {
    for (uint64_t j = 1; j <= alg.length(); ++j) {
      for (int a = 0; a < alg.alphabet(); ++a) {
        for (uint64_t r = 0; r < alg.rand_arity(k, j); ++r) {
          State next;
          try {
            next = alg.step(k, j, alg.item_value(a), m, r);
          } catch (const std::invalid_argument&) {
            continue;  // unencodable state value, not reachable
          }
          if (next != m) return false;
        }
      }
    }
  }
  return true;
}

int mostlyeq_protocol(const KPassAlgorithm& alg, const std::vector<uint64_t>& S,
                      std::span<const int64_t> z, uint64_t t, RandomSource& rs) {
  const uint64_t n = alg.length();
  const int k = alg.passes();
  const size_t m = S.size();
  if (m == 0) throw std::invalid_argument("protocol: S must be non-empty");
  if (z.size() != m) throw std::invalid_argument("protocol: z size must match S");
  if (!std::is_sorted(S.begin(), S.end()) ||
      std::adjacent_find(S.begin(), S.end()) != S.end())
    throw std::invalid_argument("protocol: S must be sorted distinct positions");
  if (S.front() < 1 || S.back() > n)
    throw std::invalid_argument("protocol: S must be a subset of [1,n]");
  if (!final_pass_frozen(alg))
    throw std::invalid_argument("protocol: final pass must not change state");

  // Players pin their inputs and fill the gaps after their own position.
  std::vector<int64_t> X(n + 1, 0);  // 1-based
  for (size_t j = 0; j < m; ++j) X[S[j]] = z[j];
  for (size_t j = 0; j < m; ++j) {
    uint64_t from = S[j] + 1;
    uint64_t to = (j + 1 < m) ? S[j + 1] - 1 : n;
    for (uint64_t pos = from; pos <= to; ++pos)
      X[pos] = static_cast<int64_t>(1 + rs.uniform(t));
  }
  for (uint64_t pos = 1; pos < S[0]; ++pos)
    X[pos] = static_cast<int64_t>(1 + rs.uniform(t));

  SourceTape tape(rs);
  State state = alg.initial_state();
  auto run_segment = [&](int pass, uint64_t from, uint64_t to) {
    for (uint64_t j = from; j <= to; ++j)
      state = alg.step(pass, j, X[j], state, tape.draw(alg, pass, j));
  };

  // Last player computes the state just before the first pinned position.
  if (S[0] > 1) run_segment(1, 1, S[0] - 1);
  // Snapshots travel around the ring k-1 times; the wrap from the last
  // player continues into the next pass.
  for (int i = 1; i <= k - 1; ++i) {
    for (size_t j = 0; j < m; ++j) {
      if (j + 1 < m) {
        run_segment(i, S[j], S[j + 1] - 1);
      } else {
        run_segment(i, S[m - 1], n);
        if (S[0] > 1) run_segment(i + 1, 1, S[0] - 1);
      }
    }
  }
  return alg.output(state);
}

double exact_err_protocol(const KPassAlgorithm& alg, const std::vector<uint64_t>& S,
                          uint64_t t, uint64_t m) {
  auto run = [&](MostlyEqWhich which) {
    return exact_distribution<int>([&](RandomSource& src) {
      LabeledStream zs = gen_mostlyeq(m, t, which, src);
      return mostlyeq_protocol(alg, S, zs.items, t, src);
    });
  };
  auto u = run(MostlyEqWhich::P_U);
  auto eq = run(MostlyEqWhich::P_Eq);
  double p1_u = 0, p0_eq = 0;
  for (const auto& [out, p] : u)
    if (out == 1) p1_u += p;
  for (const auto& [out, p] : eq)
    if (out == 0) p0_eq += p;
  return p1_u + p0_eq;
}

double exact_err_direct(const KPassAlgorithm& alg, const std::vector<uint64_t>& S, uint64_t t) {
  NeedleParams params{t, alg.length(), 0.0};
  auto run_stream = [&](bool planted) {
    return exact_distribution<int>([&](RandomSource& src) {
      LabeledStream s = planted ? gen_local_needle(params, S, src) : gen_uniform(params, src);
      SourceTape tape(src);
      Transcript tr = run_k_pass(alg, s.items, tape, false);
      return tr.output;
    });
  };
  auto d0 = run_stream(false);
  auto ds = run_stream(true);
  double p1 = 0, p0 = 0;
  for (const auto& [out, p] : d0)
    if (out == 1) p1 += p;
  for (const auto& [out, p] : ds)
    if (out == 0) p0 += p;
  return p1 + p0;
}

}  // namespace needle
