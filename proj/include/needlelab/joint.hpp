#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

namespace needle {

// Assignment of up to 32 discrete variables, 8 bits each.
struct VarKey {
  std::array<uint64_t, 4> w{};

  bool operator==(const VarKey& o) const { return w == o.w; }
  void set(int var, uint8_t val) {
    int word = var >> 3, off = (var & 7) * 8;
    w[word] = (w[word] & ~(0xFFULL << off)) | (static_cast<uint64_t>(val) << off);
  }
  uint8_t get(int var) const {
    int word = var >> 3, off = (var & 7) * 8;
    return static_cast<uint8_t>(w[word] >> off);
  }
};

struct VarKeyHash {
  size_t operator()(const VarKey& k) const {
    uint64_t h = 0x9e3779b97f4a7c15ULL;
    for (uint64_t x : k.w) {
      h ^= x + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      h *= 0xbf58476d1ce4e5b9ULL;
    }
    return static_cast<size_t>(h ^ (h >> 29));
  }
};

// Exact joint distribution over a fixed set of discrete variables. Entries
// exist only for assignments the underlying process actually produces.
class JointTable {
 public:
  static constexpr int kMaxVars = 32;

  explicit JointTable(int num_vars);

  void add(const VarKey& key, double prob);
  int num_vars() const { return num_vars_; }
  double total_mass() const;
  const std::unordered_map<VarKey, double, VarKeyHash>& entries() const { return table_; }

 private:
  int num_vars_;
  std::unordered_map<VarKey, double, VarKeyHash> table_;
};

// I(A;B|C) in bits, exact up to float roundoff. Index sets must be
// disjoint. An empty C gives plain mutual information.
double conditional_mi(const JointTable& t, std::span<const int> A, std::span<const int> B,
                      std::span<const int> C);

// Shannon entropy of the marginal on A, in bits.
double entropy(const JointTable& t, std::span<const int> A);

// Total variation distance between two tables over the same variables.
double total_variation(const JointTable& a, const JointTable& b);

}  // namespace needle
