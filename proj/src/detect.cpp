#include "needlelab/detect.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace needle {

void SurvivalStats::record_death(uint64_t lifespan, uint64_t count) {
  if (died.size() <= lifespan) died.resize(lifespan + 1, 0);
  died[lifespan] += count;
}

void SurvivalStats::record_censored(uint64_t lifespan, uint64_t count) {
  if (censored.size() <= lifespan) censored.resize(lifespan + 1, 0);
  censored[lifespan] += count;
}

uint64_t SurvivalStats::total() const {
  uint64_t t = 0;
  for (uint64_t c : died) t += c;
  for (uint64_t c : censored) t += c;
  return t;
}

double SurvivalStats::survival(uint64_t r) const {
  uint64_t t = total();
  if (t == 0) return 0.0;
  uint64_t reached = 0;
  for (uint64_t l = r; l < died.size(); ++l) reached += died[l];
  for (uint64_t l = r; l < censored.size(); ++l) reached += censored[l];
  return static_cast<double>(reached) / static_cast<double>(t);
}

void SurvivalStats::merge(const SurvivalStats& other) {
  if (died.size() < other.died.size()) died.resize(other.died.size(), 0);
  for (size_t i = 0; i < other.died.size(); ++i) died[i] += other.died[i];
  if (censored.size() < other.censored.size()) censored.resize(other.censored.size(), 0);
  for (size_t i = 0; i < other.censored.size(); ++i) censored[i] += other.censored[i];
}

M1Config M1Config::paper(double c1) {
  M1Config cfg;
  cfg.name = "paper";
  cfg.c1 = c1;
  return cfg;
}

M1Config M1Config::desk(double c1) {
  M1Config cfg;
  cfg.name = "desk";
  cfg.c1 = c1;
  cfg.cap_grace_below_tracking = true;
  return cfg;
}

namespace {

constexpr uint64_t kM1GroupSeed = 0x4d31ULL;
constexpr uint64_t kM2GroupSeed = 0x4d32ULL;

uint64_t isqrt(uint64_t v) {
  uint64_t r = static_cast<uint64_t>(std::sqrt(static_cast<double>(v)));
  while (r * r > v) --r;
  while ((r + 1) * (r + 1) <= v) ++r;
  return r;
}

int counter_bits(uint64_t hv, uint64_t c2, uint64_t c3) {
  return std::bit_width(hv) + std::bit_width(c2) + std::bit_width(c3) + 1;
}

struct MatCounter {
  uint64_t c3 = 0;
  uint64_t last_update_group = 0;
};

}  // namespace

M1Result m1_run(ItemCursor& stream, const NeedleParams& params, const M1Config& cfg,
                uint64_t seed, SurvivalStats* survival) {
  params.validate();
  const double sqrt_n = std::sqrt(static_cast<double>(params.n));
  if (params.n < 16) throw std::invalid_argument("m1: stream too short to form groups");
  if (params.p * sqrt_n < 1.0 - 1e-9)
    throw std::invalid_argument("m1: requires p >= 1/sqrt(n)");

  // For p above 1/sqrt(n) only the first 1/p^2 items are consumed.
  uint64_t n_eff = params.n;
  if (params.p * sqrt_n > 1.0 + 1e-9)
    n_eff = std::min<uint64_t>(params.n,
                               static_cast<uint64_t>(std::llround(1.0 / (params.p * params.p))));
  const uint64_t g = isqrt(n_eff);  // group count and group size
  const uint64_t c2_range = cfg.c2();
  const double q1 = std::min(1.0, cfg.c1 / static_cast<double>(g));
  const double thr_track = cfg.track_threshold > 0
                               ? cfg.track_threshold
                               : 10.0 * std::log2(std::log2(static_cast<double>(n_eff)));
  const uint64_t track_rounds =
      cfg.track_rounds ? cfg.track_rounds
                       : static_cast<uint64_t>(std::ceil(10.0 * std::log2(static_cast<double>(n_eff))));
  uint64_t grace = cfg.grace;
  if (cfg.cap_grace_below_tracking)
    grace = std::min<uint64_t>(grace, static_cast<uint64_t>(0.75 * thr_track));

  const uint64_t h1_key = prf(seed, kM1GroupSeed, 1);
  const uint64_t h2_key = prf(seed, kM1GroupSeed, 2);
  auto in_h1 = [&](uint64_t birth, int64_t x) {
    return to_unit(prf(h1_key, birth, static_cast<uint64_t>(x))) < q1;
  };
  auto h2 = [&](int64_t x) { return 1 + prf(h2_key, static_cast<uint64_t>(x)) % c2_range; };

  auto key_of = [&](uint64_t birth, uint64_t hv) { return birth * (c2_range + 1) + hv; };
  std::unordered_map<uint64_t, MatCounter> mat;
  std::unordered_map<uint64_t, uint64_t> mat_count;  // birth -> materialized
  std::vector<uint64_t> aged;                        // keys with lifespan > grace

  M1Result res;
  res.n_effective = n_eff;
  res.groups = g;

  bool tracking = false;
  uint64_t tr_birth = 0, tr_hv = 0, tr_c3 = 0, tr_last = 0, track_until = 0;
  uint64_t cohort_floor = 1;  // first cohort since the last full clear

  auto implicit_count = [&](uint64_t birth) {
    auto it = mat_count.find(birth);
    return c2_range - (it == mat_count.end() ? 0 : it->second);
  };

  auto censor_everything = [&](uint64_t i) {
    if (!survival) return;
    uint64_t wlo = cohort_floor;
    if (i >= grace + 1) wlo = std::max(wlo, i - grace);
    for (uint64_t b = wlo; b <= i && b >= cohort_floor; ++b)
      survival->record_censored(i - b + 1, implicit_count(b));
    for (const auto& [key, ctr] : mat)
      survival->record_censored(i - key / (c2_range + 1) + 1);
  };

  int64_t x;
  for (uint64_t i = 1; i <= g; ++i) {
    res.groups_processed = i;
    if (!tracking) {
      // Cohort i is planted implicitly; counters materialize on first hit.
      uint64_t wlo = cohort_floor;
      if (i >= grace + 2) wlo = std::max(wlo, i - grace - 1);
      for (uint64_t pos = 0; pos < g; ++pos) {
        if (!stream.next(x)) throw std::runtime_error("m1: stream ended early");
        uint64_t hv = h2(x);
        for (uint64_t b = wlo; b <= i; ++b) {
          if (!in_h1(b, x)) continue;
          auto [it, inserted] = mat.try_emplace(key_of(b, hv));
          if (inserted) ++mat_count[b];
          if (it->second.last_update_group < i) {
            ++it->second.c3;
            it->second.last_update_group = i;
          }
        }
        for (uint64_t key : aged) {
          uint64_t b = key / (c2_range + 1);
          if (key % (c2_range + 1) != hv) continue;
          auto& ctr = mat.at(key);
          if (ctr.last_update_group < i && in_h1(b, x)) {
            ++ctr.c3;
            ctr.last_update_group = i;
          }
        }
      }

      // Implicit members of the cohort leaving the grace window die now;
      // count them before the sweep touches that cohort's materialized part.
      if (survival && i >= grace + 1) {
        uint64_t b_exit = i - grace - 1;
        if (b_exit >= cohort_floor) survival->record_death(grace + 1, implicit_count(b_exit));
      }
      // Retention sweep. In-window counters are protected by the grace;
      // older ones must hold c3 >= lifespan * num / den.
      aged.clear();
      uint64_t mem_bits = 0;
      for (auto it = mat.begin(); it != mat.end();) {
        uint64_t b = it->first / (c2_range + 1);
        uint64_t L = i - b;
        bool keep = L <= grace || it->second.c3 * cfg.retention_den >= L * cfg.retention_num;
        if (!keep) {
          if (survival) survival->record_death(L);
          auto cnt = mat_count.find(b);
          if (cnt != mat_count.end() && --cnt->second == 0) mat_count.erase(cnt);
          it = mat.erase(it);
          continue;
        }
        if (L > grace) aged.push_back(it->first);
        mem_bits += counter_bits(it->first % (c2_range + 1), L + 1, it->second.c3);
        ++it;
      }

      uint64_t alive_cohorts = i - std::max(cohort_floor, i >= grace ? i - grace : 1) + 1;
      res.peak_live_counters =
          std::max(res.peak_live_counters, alive_cohorts * c2_range + aged.size());
      res.peak_mem_bits = std::max(res.peak_mem_bits, mem_bits);

      // Tracking trigger: any counter whose lifespan reached the threshold.
      if (static_cast<double>(i - cohort_floor + 1) >= thr_track) {
        bool found = false;
        uint64_t best_c3 = 0, best_b = 0, best_hv = 0;
        for (const auto& [key, ctr] : mat) {
          uint64_t b = key / (c2_range + 1);
          if (static_cast<double>(i - b + 1) < thr_track) continue;
          uint64_t hv = key % (c2_range + 1);
          if (!found || ctr.c3 > best_c3 ||
              (ctr.c3 == best_c3 && (b < best_b || (b == best_b && hv < best_hv)))) {
            found = true;
            best_c3 = ctr.c3;
            best_b = b;
            best_hv = hv;
          }
        }
        if (!found) {
          // Only cohorts that are still fully implicit cross the threshold;
          // take the first free hash slot of the oldest crossing cohort.
          uint64_t wlo2 = cohort_floor;
          if (i >= grace + 1) wlo2 = std::max(wlo2, i - grace);
          uint64_t b = wlo2;
          if (static_cast<double>(i - b + 1) >= thr_track && implicit_count(b) > 0) {
            for (uint64_t hv = 1; hv <= c2_range; ++hv) {
              if (!mat.count(key_of(b, hv))) {
                found = true;
                best_c3 = 0;
                best_b = b;
                best_hv = hv;
                break;
              }
            }
          }
        }
        if (found) {
          ++res.track_attempts;
          tracking = true;
          tr_birth = best_b;
          tr_hv = best_hv;
          tr_c3 = best_c3;
          tr_last = i;
          track_until = i + track_rounds;
          // Every other counter is dropped for the tracking phase.
          if (survival) {
            uint64_t wlo2 = cohort_floor;
            if (i >= grace + 1) wlo2 = std::max(wlo2, i - grace);
            for (uint64_t b = wlo2; b <= i; ++b) {
              uint64_t imp = implicit_count(b);
              if (b == best_b && best_c3 == 0 && imp > 0) --imp;  // the tracked one
              survival->record_censored(i - b + 1, imp);
            }
            for (const auto& [key, ctr] : mat) {
              uint64_t b = key / (c2_range + 1);
              if (b == best_b && key % (c2_range + 1) == best_hv && ctr.c3 == best_c3) continue;
              survival->record_censored(i - b + 1);
            }
          }
          mat.clear();
          mat_count.clear();
          aged.clear();
          cohort_floor = i + 1;
        }
      }
    } else {
      // Tracking phase: only the tracked counter is considered.
      for (uint64_t pos = 0; pos < g; ++pos) {
        if (!stream.next(x)) throw std::runtime_error("m1: stream ended early");
        if (tr_last < i && h2(x) == tr_hv && in_h1(tr_birth, x)) {
          ++tr_c3;
          tr_last = i;
        }
      }
      uint64_t L = i - tr_birth;
      res.peak_mem_bits = std::max(res.peak_mem_bits, (uint64_t)counter_bits(tr_hv, L + 1, tr_c3));
      res.peak_live_counters = std::max<uint64_t>(res.peak_live_counters, 1);
      if (tr_c3 * cfg.retention_den < L * cfg.retention_num) {
        if (survival) survival->record_death(L);
        tracking = false;
        cohort_floor = i + 1;
      } else if (i >= track_until) {
        if (survival) survival->record_censored(L + 1);
        res.output = DetectorOutput::One;
        return res;
      }
    }
  }
  if (tracking) {
    if (survival) survival->record_censored(g - tr_birth + 1);
  } else {
    censor_everything(g);
  }
  res.output = DetectorOutput::Zero;
  return res;
}

M2Config M2Config::paper(double c1) {
  M2Config cfg;
  cfg.name = "paper";
  cfg.c1 = c1;
  return cfg;
}

M2Config M2Config::desk() {
  // Calibrated profile; provenance and the grid live in configs/m2_desk.json.
  // The hash range is wider than 1000*c1 so that repeated stream values,
  // which re-hit the same counter deterministically, cannot combine with
  // bucket collisions into an output-threshold crossing.
  M2Config cfg;
  cfg.name = "desk";
  cfg.c1 = 0.0;
  cfg.q1 = 0.70;
  cfg.c2_hash_range = 1ULL << 14;
  cfg.group_mean_factor = 4.0;
  cfg.stream_budget_fraction = 0.875;
  cfg.retention_num = 1;
  cfg.retention_den = 10;
  cfg.grace = 1;
  cfg.kout = 1.4;
  cfg.mem_cap_bits = 8'000'000;
  return cfg;
}

M2Result m2_run(ItemCursor& stream, const NeedleParams& params, const M2Config& cfg,
                uint64_t seed, SurvivalStats* survival) {
  params.validate();
  if (params.p <= 0.0) throw std::invalid_argument("m2: requires p > 0");
  const double n_d = static_cast<double>(params.n);
  const double log_n = std::log2(n_d);
  M2Result res;
  res.param_caveat = params.p > 1.0 / std::sqrt(n_d * log_n * log_n * log_n) + 1e-15;

  double kd = 1.0 / (params.p * params.p * n_d);
  uint64_t block_count = cfg.block_count ? cfg.block_count
                                         : static_cast<uint64_t>(std::ceil(kd));
  if (block_count > (1ULL << 26))
    throw std::invalid_argument("m2: block count too large; p is too small for this n");
  const uint64_t block_width = (params.t + block_count - 1) / block_count;
  const double group_mean = 1.0 / (cfg.group_mean_factor * params.p);
  uint64_t groups = cfg.group_count
                        ? cfg.group_count
                        : static_cast<uint64_t>(cfg.stream_budget_fraction * n_d / group_mean);
  if (groups < 1) throw std::invalid_argument("m2: p*n too small to form any group");
  const uint64_t c2_range = cfg.c2();
  const double q1 =
      cfg.q1 > 0.0 ? cfg.q1 : std::min(1.0, cfg.c1 / (params.p * n_d));
  const double thr_out = cfg.kout * log_n;
  const uint64_t grace = cfg.grace;
  res.groups = groups;

  if (block_count * (groups + 2) >= (1ULL << 31) || c2_range >= (1ULL << 32))
    throw std::invalid_argument("m2: configuration exceeds the counter key packing");

  const uint64_t h1_key = prf(seed, kM2GroupSeed, 1);
  const uint64_t h2_key = prf(seed, kM2GroupSeed, 2);
  CounterRng group_rng(seed, kM2GroupSeed);
  auto in_h1 = [&](uint64_t block, uint64_t birth, int64_t x) {
    return to_unit(prf(h1_key, block * (groups + 2) + birth, static_cast<uint64_t>(x))) < q1;
  };
  auto h2 = [&](int64_t x) { return 1 + prf(h2_key, static_cast<uint64_t>(x)) % c2_range; };

  // Counter key: (block, birth) in the high word, hash value in the low.
  auto key_of = [&](uint64_t block, uint64_t birth, uint64_t hv) {
    return ((block * (groups + 2) + birth) << 32) | hv;
  };
  std::unordered_map<uint64_t, MatCounter> mat;
  std::unordered_map<uint64_t, uint64_t> mat_count;  // (block,birth) -> materialized
  std::vector<std::vector<uint64_t>> aged(block_count);

  const uint64_t index_register_bits = std::bit_width(groups);

  auto implicit_count = [&](uint64_t block, uint64_t birth) {
    auto it = mat_count.find(block * (groups + 2) + birth);
    return c2_range - (it == mat_count.end() ? 0 : it->second);
  };

  int64_t x;
  for (uint64_t i = 1; i <= groups; ++i) {
    res.groups_processed = i;
    uint64_t group_size = poisson(group_rng, group_mean);
    uint64_t wlo = 1;
    if (i >= grace + 2) wlo = i - grace - 1;
    for (uint64_t pos = 0; pos < group_size; ++pos) {
      if (!stream.next(x)) {
        res.aborted_exhaustion = true;
        res.output = DetectorOutput::Abort;
        return res;
      }
      ++res.items_consumed;
      uint64_t block = static_cast<uint64_t>(x - 1) / block_width;
      uint64_t hv = h2(x);
      for (uint64_t b = wlo; b <= i; ++b) {
        if (!in_h1(block, b, x)) continue;
        auto [it, inserted] = mat.try_emplace(key_of(block, b, hv));
        if (inserted) ++mat_count[block * (groups + 2) + b];
        if (it->second.last_update_group < i) {
          ++it->second.c3;
          it->second.last_update_group = i;
        }
      }
      for (uint64_t key : aged[block]) {
        if ((key & 0xFFFFFFFFULL) != hv) continue;
        auto found = mat.find(key);
        if (found == mat.end()) continue;
        uint64_t b = (key >> 32) % (groups + 2);
        if (found->second.last_update_group < i && in_h1(block, b, x)) {
          ++found->second.c3;
          found->second.last_update_group = i;
        }
      }
    }

    // Implicit members of the exiting cohort die now; count them before
    // the sweep prunes that cohort's materialized part.
    if (survival && i >= grace + 1) {
      uint64_t b_exit = i - grace - 1;
      if (b_exit >= 1)
        for (uint64_t block = 0; block < block_count; ++block)
          survival->record_death(grace + 1, implicit_count(block, b_exit));
    }
    // Retention sweep and output check.
    for (auto& lst : aged) lst.clear();
    uint64_t mem_bits = index_register_bits;
    for (auto it = mat.begin(); it != mat.end();) {
      uint64_t hi = it->first >> 32;
      uint64_t b = hi % (groups + 2);
      uint64_t block = hi / (groups + 2);
      uint64_t L = i - b;
      bool keep = L <= grace || it->second.c3 * cfg.retention_den >= L * cfg.retention_num;
      if (!keep) {
        if (survival) survival->record_death(L);
        auto cnt = mat_count.find(hi);
        if (cnt != mat_count.end() && --cnt->second == 0) mat_count.erase(cnt);
        it = mat.erase(it);
        continue;
      }
      if (static_cast<double>(L + 1) >= thr_out) {
        res.output = DetectorOutput::One;
        return res;
      }
      if (L > grace) aged[block].push_back(it->first);
      mem_bits += counter_bits(it->first & 0xFFFFFFFFULL, L + 1, it->second.c3);
      ++it;
    }
    // Implicit cohorts also carry lifespans; they can cross the output
    // threshold only when the grace outlives it.
    uint64_t oldest_alive = (i >= grace) ? std::max<uint64_t>(1, i - grace) : 1;
    if (static_cast<double>(i - oldest_alive + 1) >= thr_out) {
      res.output = DetectorOutput::One;
      return res;
    }

    res.peak_mem_bits = std::max(res.peak_mem_bits, mem_bits);
    res.peak_counters = std::max<uint64_t>(res.peak_counters, mat.size());
    if (cfg.mem_cap_bits && mem_bits > cfg.mem_cap_bits) {
      res.aborted_memory = true;
      res.output = DetectorOutput::Abort;
      return res;
    }
  }
  if (survival) {
    for (const auto& [key, ctr] : mat)
      survival->record_censored(groups - ((key >> 32) % (groups + 2)) + 1);
  }
  res.output = DetectorOutput::Zero;
  return res;
}

int collision_baseline(ItemCursor& stream, uint64_t window) {
  if (window < 1) throw std::invalid_argument("collision baseline: window must be >= 1");
  std::unordered_map<int64_t, uint64_t> counts;
  std::vector<int64_t> ring(window, 0);
  uint64_t seen = 0;
  int64_t x;
  while (stream.next(x)) {
    if (seen >= window) {
      int64_t old = ring[seen % window];
      auto it = counts.find(old);
      if (it != counts.end() && --it->second == 0) counts.erase(it);
    }
    if (counts.count(x)) return 1;
    ++counts[x];
    ring[seen % window] = x;
    ++seen;
  }
  return 0;
}

}  // namespace needle
