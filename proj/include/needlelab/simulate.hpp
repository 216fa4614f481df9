#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "needlelab/apr.hpp"
#include "needlelab/infocost.hpp"
#include "needlelab/kpass.hpp"

namespace needle {

// Exact conditional tables for one enumerable k-pass algorithm:
//   item_given[j]: P[X_j = item | states at column j-1, end states]
//   posterior[j]:  P[states at column j | same conditioning, X_j = x]
// Conditioning tuples pack the k states of column j-1 followed by the k
// end states (M_0 .. M_{k-1}), 8 bits per state.
class ConditionalOracle {
 public:
  int n = 0;
  int k = 0;
  int alphabet = 0;
  std::vector<int64_t> item_values;
  double h_end_states = 0.0;  // H(M_<k) in bits

  using CondKey = uint64_t;

  static CondKey pack_states(const std::vector<State>& column,
                             const std::vector<State>& ends);

  struct Posterior {
    std::vector<uint64_t> column_tuple;  // packed k states, one per outcome
    std::vector<double> prob;
  };

  // (m'_0 .. m'_{k-1}) candidates with their joint probabilities.
  std::vector<std::pair<std::vector<State>, double>> end_state_marginal;
  // per j in [1,n]: cond -> per-alphabet-index probability of X_j
  std::vector<std::unordered_map<CondKey, std::vector<double>>> item_given;
  // per j: cond*alphabet+item -> posterior over the next column
  std::vector<std::unordered_map<CondKey, Posterior>> posterior;

  const std::vector<double>& item_probs(int j, const std::vector<State>& column,
                                        const std::vector<State>& ends) const;
  const Posterior& next_column(int j, const std::vector<State>& column,
                               const std::vector<State>& ends, int item_idx) const;

  std::string dump() const;  // structured text for cross-checking
};

ConditionalOracle build_conditional_oracle(const KPassAlgorithm& alg, const ProductDist& mu,
                                           uint64_t atom_budget = (1ULL << 24));

struct SimTranscript {
  std::vector<State> end_states;            // sampled m'_0..m'_{k-1}
  std::vector<double> beta;                 // per step
  std::vector<int64_t> y;                   // input bits
  std::vector<int64_t> x_mod;               // modified bits x'_j
  std::vector<std::vector<State>> grid;     // m'_(i,j), k rows, columns 0..n
  uint64_t modifications = 0;               // count of y_j != x'_j
  State final_state() const { return grid.back().back(); }
};

// One-pass imitation of the k passes: samples end states, then per step
// computes beta_j, modifies y_j with probability 2|beta_j| on the opposing
// branch, and samples the next column from the transition posterior.
// Requires a +-1 item alphabet.
SimTranscript im_simulate(const ConditionalOracle& oracle, std::span<const int64_t> Y,
                          RandomSource& rs);

// Exact joint law of the simulation over variables (Y, X', grid). Var ids:
// Y_j at j-1, X'_j at n + (j-1), M'_(i,j) at 2n + (i-1)*(n+1) + j.
struct ImLaw {
  JointTable table{0};
  int n = 0;
  int k = 0;
  int var_y(int j) const { return j - 1; }
  int var_xmod(int j) const { return n + (j - 1); }
  int var_m(int i, int j) const { return 2 * n + (i - 1) * (n + 1) + j; }
};

ImLaw im_exact_law(const ConditionalOracle& oracle);

// Projection of the simulated law onto (X', grid) with the var layout of
// KPassJoint, so it can be compared against build_joint's native law.
JointTable im_law_as_native(const ImLaw& law);
JointTable native_law_drop_tape(const KPassJoint& joint);

// Exact Sum_j Pr[Y_j != X'_j] under the simulated law.
double im_expected_modifications(const ImLaw& law);

// One-pass information cost of the imitation, Sum I(Im_j; Y_l | Im_{l-1})
// with Im_j = (column j, end states).
double im_information_cost(const ImLaw& law);

struct OSimResult {
  SimTranscript im;
  AprState apr;
  double k_pass_estimate = 0.0;  // output of the imitated algorithm
  double estimate = 0.0;         // k_pass_estimate + apr correction
};

// Runs the imitation with an approximate-sum sidecar fed a_j = y_j - x'_j;
// the returned estimate reconstructs Sum y_j.
OSimResult o_simulate(const ConditionalOracle& oracle, const KPassAlgorithm& alg,
                      std::span<const int64_t> Y, const AprConfig& apr_cfg, RandomSource& rs);

// Communication protocol: players pin X at the positions in S to their
// inputs z, fill the gaps uniformly from [1,t], and pass state snapshots
// around the ring k-1 times; the last player's output is returned.
// The algorithm must not change state during its final pass.
int mostlyeq_protocol(const KPassAlgorithm& alg, const std::vector<uint64_t>& S,
                      std::span<const int64_t> z, uint64_t t, RandomSource& rs);

// True iff no transition of the final pass can change the state
// (verified exhaustively over the declared state space).
bool final_pass_frozen(const KPassAlgorithm& alg);

// Exact error rates Pr[out=1 | null] + Pr[out=0 | planted], by exhaustive
// enumeration of inputs, gap filling and algorithm randomness.
double exact_err_protocol(const KPassAlgorithm& alg, const std::vector<uint64_t>& S,
                          uint64_t t, uint64_t m);
double exact_err_direct(const KPassAlgorithm& alg, const std::vector<uint64_t>& S, uint64_t t);

}  // namespace needle
