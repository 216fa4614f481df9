#pragma once

#include <string>
#include <vector>

#include "needlelab/joint.hpp"
#include "needlelab/kpass.hpp"

namespace needle {

// Exact joint law of (X_1..X_n, all memory states M_(i,j)) for an
// enumerable algorithm under a product input distribution. Variable ids:
// X_j at j-1, M_(i,j) at n + (i-1)*(n+1) + j with column 0 holding the
// pass-start states.
struct KPassJoint {
  JointTable table{0};
  int n = 0;
  int k = 0;
  int s = 0;
  int alphabet = 0;
  std::vector<int64_t> item_values;

  int var_x(int j) const { return j - 1; }
  int var_m(int i, int j) const { return n + (i - 1) * (n + 1) + j; }

  // M_<k: end states of passes 0..k-1, with the starting state first.
  std::vector<int> end_state_vars() const;
};

// Per-position distributions over the item alphabet; mu[j-1][a] is the
// probability that X_j takes alphabet index a.
using ProductDist = std::vector<std::vector<double>>;

ProductDist uniform_product(int n, int alphabet);
ProductDist biased_product(int n, double prob_last);  // binary alphabet, P[index 1]

// Exhausts inputs x tape; throws EnumerationBudgetExceeded past the atom
// budget, and rejects state values that do not fit the packing.
KPassJoint build_joint(const KPassAlgorithm& alg, const ProductDist& mu,
                       uint64_t atom_budget = (1ULL << 24));

struct MICTerm {
  int i = 0;
  int j = 0;
  int l = 0;
  bool tail_sum = false;  // true for the l > j double sum
  double bits = 0.0;
};

struct MICReport {
  double mic = 0.0;
  double mic_cond = 0.0;
  double bound_2ksn = 0.0;
  double bound_ksn = 0.0;
  std::vector<MICTerm> terms;       // mic breakdown, indexed (i, j, l)
  std::vector<MICTerm> cond_terms;  // mic_cond breakdown, indexed (j, l)
  std::string to_json() const;
};

// Both information-cost sums with their per-term breakdowns. The first
// triple sum runs l = 1..j (the proof-side indexing); the conditioning
// sets are exactly M_(<=i,l-1), M_(<=i-1,j) for l <= j and
// M_(<=i-1,l-1), M_(<=i-1,j) for l > j.
MICReport mic_report(const KPassJoint& joint);

double mic(const KPassJoint& joint);
double mic_cond(const KPassJoint& joint);

// One-pass information cost: sum over j, l<=j of I(M_(1,j); X_l | M_(1,l-1)).
// Rejects multi-pass joints.
double one_pass_ic(const KPassJoint& joint);

// E over the final state of (E[sum of items | final state])^2.
double variance_reduction(const KPassJoint& joint);

}  // namespace needle
