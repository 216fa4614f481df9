#pragma once

#include <cstdint>
#include <string>

#include "needlelab/kpass.hpp"
#include "needlelab/rng.hpp"

namespace needle {

// Three-counter approximate-sum sketch over a stream of {-1,0,1} values.
// While the sampled-nonzero count (zeta) is below 20*log2(n)*p*B, each item
// is sampled with probability p and added to delta; once zeta crosses the
// threshold, delta and zeta freeze and gamma accumulates the exact tail
// sum. The output is delta/p + gamma clamped to [-n, n].
struct AprConfig {
  uint64_t n = 0;
  double gamma = 0.0;  // accuracy parameter
  double B = 0.0;      // expected-nonzero budget

  // Sampling probability p = min(c * log2(n)^2 * B / (gamma^2 n), 1).
  // The stock constant is 6000; smaller values can be explored through the
  // harness but carry no accuracy assertion.
  double sampling_constant = 6000.0;

  void validate() const;  // gamma > 4/sqrt(n) and B > gamma*sqrt(n)
  double p_sample() const;
  double zeta_threshold() const;  // 20 * log2(n) * p_sample * B
};

struct AprState {
  double p_sample = 1.0;
  double zeta_threshold = 0.0;
  int64_t delta = 0;
  int64_t zeta = 0;
  int64_t gamma_sum = 0;
  uint64_t step_index = 0;  // items consumed
  uint64_t n = 0;

  bool frozen() const { return static_cast<double>(zeta) >= zeta_threshold; }
  std::string to_json() const;  // {"delta":..,"zeta":..,"gamma":..,"p_sample":..,"j":..}
};

AprState apr_init(const AprConfig& cfg);

// One update. r_j must be a Bernoulli(p_sample) draw; it is ignored once
// the state is frozen.
void apr_step(AprState& state, int a_j, bool r_j);

// Convenience: draw r_j from the given source and step.
void apr_step(AprState& state, int a_j, RandomSource& rs);

// max(min(delta/p + gamma, n), -n)
double apr_output(const AprState& state);

// Runs the sketch over a full stream.
double apr_run(const AprConfig& cfg, std::span<const int> items, RandomSource& rs);

// The sketch wrapped as a one-pass bounded-memory algorithm so the
// transcript machinery can measure its state widths. Items outside
// {-1,0,1} are rejected. State packs (delta, zeta, gamma) zigzag-encoded.
AlgPtr make_apr_kpass(const AprConfig& cfg);

// Decodes a packed apr-kpass state for inspection.
void unpack_apr_state(State m, int64_t& delta, int64_t& zeta, int64_t& gamma_sum);

}  // namespace needle
