#pragma once

#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "needlelab/rng.hpp"

namespace needle {

struct EnumerationBudgetExceeded : std::runtime_error {
  EnumerationBudgetExceeded() : std::runtime_error("enumeration budget exceeded") {}
};

// Exhaustive enumeration over every path a randomized computation can take.
// The computation draws from the EnumSource exactly as it would from a real
// RandomSource; the driver walks the whole decision tree odometer-style and
// reports the exact probability of each completed path. Branching may depend
// on earlier choices (the tree need not be uniform), but given the same
// prefix of choices the computation must branch the same way.
//
//   Enumerator e;
//   while (e.next()) {
//     auto v = run_generator(e.source());
//     dist[v] += e.path_prob();
//   }
class Enumerator {
 public:
  class Source final : public RandomSource {
   public:
    explicit Source(Enumerator& owner) : owner_(owner) {}
    uint64_t uniform(uint64_t bound) override {
      if (bound == 0) throw std::invalid_argument("uniform: bound must be >= 1");
      return owner_.choose(bound, -1.0);
    }
    bool bernoulli(double p) override {
      if (p < 0.0 || p > 1.0) throw std::invalid_argument("bernoulli: p outside [0,1]");
      return owner_.choose(2, p) == 1;
    }
    double unit() override {
      throw std::logic_error("enumeration source cannot produce continuous draws");
    }

   private:
    Enumerator& owner_;
  };

  explicit Enumerator(uint64_t path_budget = (1ULL << 24))
      : budget_(path_budget), src_(*this) {}

  RandomSource& source() { return src_; }

  // Begin the next path; false once the tree is exhausted.
  bool next() {
    if (fresh_) {
      fresh_ = false;
      cursor_ = 0;
      return true;
    }
    while (!path_.empty()) {
      if (++path_.back() < arity_.back()) {
        cursor_ = 0;
        if (++paths_done_ >= budget_) throw EnumerationBudgetExceeded();
        return true;
      }
      path_.pop_back();
      arity_.pop_back();
      bern_p_.pop_back();
    }
    return false;
  }

  // Probability of the path just completed.
  double path_prob() const {
    double p = 1.0;
    for (size_t d = 0; d < path_.size(); ++d) {
      if (bern_p_[d] >= 0.0) {
        p *= (path_[d] == 1) ? bern_p_[d] : 1.0 - bern_p_[d];
      } else {
        p *= 1.0 / static_cast<double>(arity_[d]);
      }
    }
    return p;
  }

 private:
  friend class Source;

  uint64_t choose(uint64_t arity, double bern_p) {
    size_t d = cursor_++;
    if (d < path_.size()) {
      if (arity_[d] != arity)
        throw std::logic_error("enumerated computation branched inconsistently");
      return path_[d];
    }
    path_.push_back(0);
    arity_.push_back(arity);
    bern_p_.push_back(bern_p);
    return 0;
  }

  std::vector<uint64_t> path_;
  std::vector<uint64_t> arity_;
  std::vector<double> bern_p_;  // >= 0 marks a bernoulli node
  size_t cursor_ = 0;
  uint64_t budget_;
  uint64_t paths_done_ = 0;
  bool fresh_ = true;
  Source src_;
};

// Convenience: exact distribution of a discrete-valued randomized function.
template <class Key, class Body>
std::unordered_map<Key, double> exact_distribution(Body&& body,
                                                   uint64_t path_budget = (1ULL << 24)) {
  std::unordered_map<Key, double> dist;
  Enumerator e(path_budget);
  while (e.next()) {
    Key k = body(e.source());
    double p = e.path_prob();
    if (p > 0.0) dist[k] += p;
  }
  return dist;
}

}  // namespace needle
