#include "needlelab/joint.hpp"

#include <cmath>
#include <stdexcept>

namespace needle {

JointTable::JointTable(int num_vars) : num_vars_(num_vars) {
  if (num_vars < 0 || num_vars > kMaxVars)
    throw std::invalid_argument("joint table: variable count out of range");
}

void JointTable::add(const VarKey& key, double prob) {
  if (prob < 0.0) throw std::invalid_argument("joint table: negative probability");
  if (prob == 0.0) return;
  table_[key] += prob;
}

double JointTable::total_mass() const {
  long double m = 0;
  for (const auto& [k, p] : table_) m += p;
  return static_cast<double>(m);
}

namespace {

using Marginal = std::unordered_map<VarKey, double, VarKeyHash>;

void check_disjoint(std::span<const int> A, std::span<const int> B) {
  for (int a : A)
    for (int b : B)
      if (a == b) throw std::invalid_argument("conditional_mi: index sets must be disjoint");
}

}  // namespace

double conditional_mi(const JointTable& t, std::span<const int> A, std::span<const int> B,
                      std::span<const int> C) {
  check_disjoint(A, B);
  check_disjoint(A, C);
  check_disjoint(B, C);
  const size_t na = A.size(), nb = B.size(), nc = C.size();

  // Slot layout inside the projected key: A vars, then B, then C.
  Marginal abc;
  for (const auto& [key, p] : t.entries()) {
    VarKey k;
    int slot = 0;
    for (int v : A) k.set(slot++, key.get(v));
    for (int v : B) k.set(slot++, key.get(v));
    for (int v : C) k.set(slot++, key.get(v));
    abc[k] += p;
  }

  auto sub_ac = [&](const VarKey& k) {
    VarKey out;
    int slot = 0;
    for (size_t i = 0; i < na; ++i) out.set(slot++, k.get(static_cast<int>(i)));
    for (size_t i = 0; i < nc; ++i) out.set(slot++, k.get(static_cast<int>(na + nb + i)));
    return out;
  };
  auto sub_bc = [&](const VarKey& k) {
    VarKey out;
    int slot = 0;
    for (size_t i = 0; i < nb; ++i) out.set(slot++, k.get(static_cast<int>(na + i)));
    for (size_t i = 0; i < nc; ++i) out.set(slot++, k.get(static_cast<int>(na + nb + i)));
    return out;
  };
  auto sub_c = [&](const VarKey& k) {
    VarKey out;
    int slot = 0;
    for (size_t i = 0; i < nc; ++i) out.set(slot++, k.get(static_cast<int>(na + nb + i)));
    return out;
  };

  Marginal ac, bc, c_only;
  for (const auto& [k, p] : abc) {
    ac[sub_ac(k)] += p;
    bc[sub_bc(k)] += p;
    c_only[sub_c(k)] += p;
  }

  long double mi = 0;
  for (const auto& [k, p] : abc) {
    double pac = ac.at(sub_ac(k));
    double pbc = bc.at(sub_bc(k));
    double pc = c_only.at(sub_c(k));
    mi += p * std::log2(static_cast<double>(p) * pc / (pac * pbc));
  }
  return static_cast<double>(mi);
}

double entropy(const JointTable& t, std::span<const int> A) {
  Marginal m;
  for (const auto& [key, p] : t.entries()) {
    VarKey k;
    int slot = 0;
    for (int v : A) k.set(slot++, key.get(v));
    m[k] += p;
  }
  long double h = 0;
  for (const auto& [k, p] : m)
    if (p > 0) h -= p * std::log2(p);
  return static_cast<double>(h);
}

double total_variation(const JointTable& a, const JointTable& b) {
  long double tv = 0;
  for (const auto& [k, p] : a.entries()) {
    auto it = b.entries().find(k);
    double q = it == b.entries().end() ? 0.0 : it->second;
    tv += std::fabs(p - q);
  }
  for (const auto& [k, q] : b.entries()) {
    if (a.entries().find(k) == a.entries().end()) tv += q;
  }
  return static_cast<double>(tv / 2);
}

}  // namespace needle
