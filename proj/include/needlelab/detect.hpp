#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "needlelab/streams.hpp"

namespace needle {

// Outcome of a detector trial.
enum class DetectorOutput { Zero = 0, One = 1, Abort = 2 };

// Lifetime bookkeeping for the survival-curve experiments. A counter
// "survives r rounds" when its lifespan value reaches r. Counters still
// alive when a run ends (or swept away by a tracking transition) are
// recorded as censored at their current lifespan.
struct SurvivalStats {
  std::vector<uint64_t> died;     // index = final lifespan at removal
  std::vector<uint64_t> censored; // index = lifespan when observation stopped

  void record_death(uint64_t lifespan, uint64_t count = 1);
  void record_censored(uint64_t lifespan, uint64_t count = 1);
  uint64_t total() const;
  // Fraction of observed counters whose lifespan reached at least r.
  double survival(uint64_t r) const;
  void merge(const SurvivalStats& other);
};

// Pick-and-drop detector for p >= 1/sqrt(n). The stream is cut into
// sqrt(n') groups of sqrt(n') items (n' = min(n, 1/p^2)); each group
// plants c2_hash_range implicit counters; counters hit at most once per
// group through the two keyed hashes; retention keeps a counter when
// c3 * retention_den >= lifespan * retention_num or lifespan <= grace.
// A counter whose lifespan reaches the tracking threshold is tracked
// alone for track_rounds groups and any retention miss clears everything.
struct M1Config {
  std::string name = "paper";
  double c1 = 6.0;
  uint64_t c2_hash_range = 0;          // 0 -> 100 * c1
  double track_threshold = 0.0;        // 0 -> 10 * log2(log2 n')
  uint64_t track_rounds = 0;           // 0 -> ceil(10 * log2 n')
  uint64_t retention_num = 1;
  uint64_t retention_den = 3;
  uint64_t grace = 100;
  // When set, the effective grace is capped at 0.75x the tracking
  // threshold. The analysis needs the grace to expire before tracking can
  // begin; at practical n the stock constants order the other way around.
  bool cap_grace_below_tracking = false;

  static M1Config paper(double c1 = 6.0);
  static M1Config desk(double c1 = 6.0);

  uint64_t c2() const { return c2_hash_range ? c2_hash_range : static_cast<uint64_t>(100 * c1); }
};

struct M1Result {
  DetectorOutput output = DetectorOutput::Zero;
  uint64_t n_effective = 0;
  uint64_t groups = 0;
  uint64_t groups_processed = 0;
  uint64_t peak_live_counters = 0;  // inserted-and-not-removed accounting
  uint64_t peak_mem_bits = 0;       // materialized counter bits + flags
  uint64_t track_attempts = 0;
};

M1Result m1_run(ItemCursor& stream, const NeedleParams& params, const M1Config& cfg,
                uint64_t seed, SurvivalStats* survival = nullptr);

// Block-partitioned variant for p <= 1/sqrt(n log^3 n). The domain splits
// into ceil(1/(p^2 n)) blocks, the stream into Poisson-sized groups, and
// each block runs an independent counter tracker; output is 1 as soon as
// any counter's lifespan reaches the output threshold.
struct M2Config {
  std::string name = "paper";
  double c1 = 6.0;
  uint64_t c2_hash_range = 0;     // 0 -> 1000 * c1
  double q1 = 0.0;                // h1 inclusion probability; 0 -> c1 / (p*n)
  double group_mean_factor = 4.0; // group size ~ Poisson(1 / (factor * p))
  // Groups drawn until this fraction of the stream is expected consumed:
  // group count = fraction * n / group mean (0.25 reproduces p*n groups).
  double stream_budget_fraction = 0.25;
  uint64_t group_count = 0;       // explicit override
  uint64_t retention_num = 1;
  uint64_t retention_den = 100;
  uint64_t grace = 10000;
  double kout = 3e6;              // output at lifespan >= kout * log2(n)
  uint64_t mem_cap_bits = 0;      // 0 -> uncapped; exceeding aborts
  uint64_t block_count = 0;       // 0 -> ceil(1/(p^2 n))

  static M2Config paper(double c1 = 6.0);
  // Calibrated profile; see configs/m2_desk.json for provenance.
  static M2Config desk();

  uint64_t c2() const { return c2_hash_range ? c2_hash_range : static_cast<uint64_t>(1000 * c1); }
};

struct M2Result {
  DetectorOutput output = DetectorOutput::Zero;
  bool param_caveat = false;       // p above the guarantee range
  bool aborted_exhaustion = false; // group sizes outran the stream
  bool aborted_memory = false;
  uint64_t groups = 0;
  uint64_t groups_processed = 0;
  uint64_t items_consumed = 0;
  uint64_t peak_mem_bits = 0;
  uint64_t peak_counters = 0;
};

M2Result m2_run(ItemCursor& stream, const NeedleParams& params, const M2Config& cfg,
                uint64_t seed, SurvivalStats* survival = nullptr);

// Remembers the last `window` items and reports 1 on any duplicate value
// within the window.
int collision_baseline(ItemCursor& stream, uint64_t window);

}  // namespace needle
