#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "needlelab/detect.hpp"
#include "needlelab/streams.hpp"

namespace needle {

struct TrialRecord {
  uint64_t trial_id = 0;
  std::string dist;     // d0 | d1 | ...
  std::string algo;     // m1 | m2 | collision | apr
  std::string profile;  // paper | desk | custom
  uint64_t t = 0;
  uint64_t n = 0;
  double p = 0.0;
  double output = 0.0;  // 0/1/2(abort) for detectors, a real for counters
  double truth = 0.0;
  uint64_t peak_mem_bits = 0;
  uint64_t runtime_ms = 0;
  bool abort_flag = false;
};

struct WilsonInterval {
  double lo = 0.0;
  double hi = 1.0;
};

// 95% score interval by default.
WilsonInterval wilson(uint64_t successes, uint64_t trials, double z = 1.959964);

struct ArmSummary {
  uint64_t trials = 0;
  uint64_t wrong = 0;   // output != correct answer (aborts included)
  uint64_t aborts = 0;
  double error_rate = 0.0;
  WilsonInterval ci;
};

struct SummaryReport {
  ArmSummary d0;  // wrong = output != 0
  ArmSummary d1;  // wrong = output != 1
  bool has_d0 = false;
  bool has_d1 = false;
  double err = 0.0;          // error_rate(d0) + error_rate(d1)
  double err_flipped = 0.0;  // min(err, 2 - err), the output-flip normalization
  double abort_rate = 0.0;
  uint64_t mem_p50 = 0, mem_p90 = 0, mem_p99 = 0, mem_max = 0;
  std::string config_echo;  // effective configuration, JSON
  std::string to_json() const;
};

SummaryReport summarize(const std::vector<TrialRecord>& records);

// Header: trial_id,dist,algo,profile,t,n,p,output,truth,peak_mem_bits,runtime_ms,abort
// With record_runtime off the runtime column is written as 0, which keeps
// repeated runs of one configuration byte-identical.
void write_csv(const std::vector<TrialRecord>& records, std::ostream& out,
               bool record_runtime = true);
std::vector<TrialRecord> read_csv(std::istream& in);

// Runs trials on a bounded worker pool. Each trial derives its own seed
// from (master_seed, trial_id); results are ordered by trial_id no matter
// how the pool schedules them.
using TrialFn = std::function<TrialRecord(uint64_t trial_id, uint64_t seed)>;
std::vector<TrialRecord> run_trials(uint64_t trials, uint64_t master_seed, int threads,
                                    const TrialFn& fn);

struct ExperimentConfig {
  std::string algo = "m1";     // m1 | m2 | collision
  std::string profile = "paper";
  std::string dist = "both";   // d0 | d1 | both
  NeedleParams params{1000000, 1000000, 1e-3};
  uint64_t trials = 100;
  uint64_t master_seed = 1;
  uint64_t collision_window = 0;  // 0 -> ceil(1/(p^2 n))
  int threads = 0;                // 0 -> hardware
  bool record_runtime = true;
  std::optional<M1Config> m1;  // defaults derived from profile when absent
  std::optional<M2Config> m2;

  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);
};

struct ExperimentResult {
  std::vector<TrialRecord> records;
  SummaryReport report;
  SurvivalStats survival;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg, bool collect_survival = false);

// Empirical survival probabilities at the requested round counts.
struct SurvivalCurve {
  std::vector<uint64_t> rounds;
  std::vector<double> survival;
  uint64_t observations = 0;
};
SurvivalCurve survival_curve(const SurvivalStats& stats, const std::vector<uint64_t>& rounds);

// Plot emission: each figure is a standalone SVG derived only from the
// records (plus the survival histogram for the survival figure).
void plot_error_vs_p(const std::vector<TrialRecord>& records, const std::string& path);
void plot_memory_vs_p(const std::vector<TrialRecord>& records, const std::string& path);
void plot_survival(const SurvivalStats& stats, uint64_t max_round, const std::string& path);

struct CalibrationPoint {
  M2Config cfg;
  double err = 2.0;
  double abort_rate = 1.0;
  uint64_t mem_p99 = 0;
  bool feasible = false;
};

struct CalibrationResult {
  std::vector<CalibrationPoint> points;
  int best = -1;  // -1 when the feasible set is empty
  uint64_t trials_per_point = 0;
  uint64_t seed = 0;
  std::string to_json() const;
};

// Grid search minimizing Err subject to the memory cap and abort budget;
// the winning configuration is pinned with its measured numbers.
CalibrationResult calibrate_m2(const NeedleParams& params, const std::vector<M2Config>& grid,
                               uint64_t trials_per_point, uint64_t seed, int threads);

std::vector<M2Config> default_m2_grid(const NeedleParams& params);

}  // namespace needle
