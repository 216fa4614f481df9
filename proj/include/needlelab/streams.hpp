#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "needlelab/rng.hpp"

namespace needle {

// Domain is [1,t]; n counts stream items; p is the per-item needle
// probability. Throughout the library t names the domain size and n the
// stream length.
struct NeedleParams {
  uint64_t t = 1;
  uint64_t n = 0;
  double p = 0.0;

  void validate() const;
};

enum class StreamKind {
  Uniform,
  Needle,
  LocalNeedle,
  CoinBits,
  TCoins,
  MostlyEqUniform,
  MostlyEqEqual,
  TurnstileCounter,
};

struct StreamLabel {
  StreamKind kind = StreamKind::Uniform;
  bool has_alpha = false;
  uint64_t alpha = 0;  // ground-truth needle, oracle-side only
};

// A materialized stream with its ground truth. Large experiments use the
// cursor classes below instead; this form exists for tests, serialization
// and exhaustive enumeration.
struct LabeledStream {
  std::vector<int64_t> items;  // values in [1,t], or +-1 bits
  StreamLabel label;
  uint64_t seed = 0;
  NeedleParams params;
  std::vector<uint64_t> order;     // t-coins instance label per update
  bool went_negative = false;      // turnstile counter ground truth
};

// Pull-one-item contract: single consumer, nothing materialized.
class ItemCursor {
 public:
  virtual ~ItemCursor() = default;
  virtual bool next(int64_t& item) = 0;
  virtual uint64_t length() const = 0;
};

namespace detail {

// Owns its generator when built from a seed, or borrows an external source
// (used by the exhaustive enumeration tests).
class CursorBase : public ItemCursor {
 public:
  CursorBase(const CursorBase&) = delete;
  CursorBase& operator=(const CursorBase&) = delete;

 protected:
  CursorBase(uint64_t seed, uint64_t stream_id) : own_(CounterRng(seed, stream_id)) {}
  explicit CursorBase(RandomSource& rs) : ext_(&rs) {}
  RandomSource& rs() { return own_ ? *own_ : *ext_; }

 private:
  std::optional<CounterRng> own_;
  RandomSource* ext_ = nullptr;
};

}  // namespace detail

class UniformCursor final : public detail::CursorBase {
 public:
  UniformCursor(const NeedleParams& params, uint64_t seed);
  UniformCursor(const NeedleParams& params, RandomSource& rs);
  bool next(int64_t& item) override;
  uint64_t length() const override { return params_.n; }

 private:
  NeedleParams params_;
  uint64_t i_ = 0;
};

class NeedleCursor final : public detail::CursorBase {
 public:
  NeedleCursor(const NeedleParams& params, uint64_t seed);
  NeedleCursor(const NeedleParams& params, RandomSource& rs);
  bool next(int64_t& item) override;
  uint64_t length() const override { return params_.n; }
  uint64_t alpha() const { return alpha_; }

 private:
  void init();
  NeedleParams params_;
  uint64_t alpha_ = 0;
  uint64_t i_ = 0;
};

class LocalNeedleCursor final : public detail::CursorBase {
 public:
  // S holds 1-based positions, sorted ascending.
  LocalNeedleCursor(const NeedleParams& params, std::vector<uint64_t> S, uint64_t seed);
  LocalNeedleCursor(const NeedleParams& params, std::vector<uint64_t> S, RandomSource& rs);
  bool next(int64_t& item) override;
  uint64_t length() const override { return params_.n; }
  uint64_t alpha() const { return alpha_; }

 private:
  void init();
  NeedleParams params_;
  std::vector<uint64_t> S_;
  uint64_t alpha_ = 0;
  uint64_t i_ = 0;      // 0-based position of the next item
  size_t s_idx_ = 0;
};

class CoinCursor final : public detail::CursorBase {
 public:
  CoinCursor(uint64_t n, uint64_t seed);
  CoinCursor(uint64_t n, RandomSource& rs);
  bool next(int64_t& item) override;
  uint64_t length() const override { return n_; }

 private:
  uint64_t n_;
  uint64_t i_ = 0;
};

// ceil(C*sqrt(n)) leading +1 updates followed by n coin bits. Tracks whether
// the running sum ever went negative.
class TurnstileCursor final : public detail::CursorBase {
 public:
  TurnstileCursor(uint64_t n, double C, uint64_t seed);
  TurnstileCursor(uint64_t n, double C, RandomSource& rs);
  bool next(int64_t& item) override;
  uint64_t length() const override { return prefix_ + n_; }
  bool went_negative() const { return went_negative_; }
  uint64_t prefix_length() const { return prefix_; }

 private:
  void init(double C);
  uint64_t n_;
  uint64_t prefix_ = 0;
  uint64_t i_ = 0;
  int64_t running_ = 0;
  bool went_negative_ = false;
};

// Materializing generators. Deterministic per (params, seed).
LabeledStream gen_uniform(const NeedleParams& params, uint64_t seed);
LabeledStream gen_uniform(const NeedleParams& params, RandomSource& rs);
LabeledStream gen_needle(const NeedleParams& params, uint64_t seed);
LabeledStream gen_needle(const NeedleParams& params, RandomSource& rs);
LabeledStream gen_local_needle(const NeedleParams& params, const std::vector<uint64_t>& S,
                               uint64_t seed);
LabeledStream gen_local_needle(const NeedleParams& params, const std::vector<uint64_t>& S,
                               RandomSource& rs);
LabeledStream gen_coin(uint64_t n, uint64_t seed);
LabeledStream gen_coin(uint64_t n, RandomSource& rs);
LabeledStream gen_strict_turnstile_counter(uint64_t n, double C, uint64_t seed);
LabeledStream gen_strict_turnstile_counter(uint64_t n, double C, RandomSource& rs);

struct TCoinsOrder {
  enum class Kind { RoundRobin, Random, Explicit };
  Kind kind = Kind::RoundRobin;
  std::vector<uint64_t> labels;  // used when kind == Explicit, length n*t
};

// nt updates (x_j, s_j); x in the items vector, s in the order vector.
LabeledStream gen_t_coins(uint64_t n, uint64_t t, const TCoinsOrder& order, uint64_t seed);
LabeledStream gen_t_coins(uint64_t n, uint64_t t, const TCoinsOrder& order, RandomSource& rs);

// Exact check of the good-order conditions: every instance receives at
// least n/2 updates, and consecutive updates of one instance at index
// distance u >= sqrt(n) are at least (k/2)*u stream positions apart.
bool is_good_order(const std::vector<uint64_t>& labels, uint64_t n, uint64_t t, uint64_t k);

enum class MostlyEqWhich { P_U, P_Eq };

LabeledStream gen_mostlyeq(uint64_t m, uint64_t t, MostlyEqWhich which, uint64_t seed);
LabeledStream gen_mostlyeq(uint64_t m, uint64_t t, MostlyEqWhich which, RandomSource& rs);

// Replay formats. Text: one integer per line ("x s" pairs for t-coins).
// Binary: magic "NDL1", then little-endian u64 t, u64 item count, f64 p,
// then the items as u64 words (two's complement for +-1 bit streams).
void write_text(const LabeledStream& s, std::ostream& out);
std::vector<int64_t> read_text_items(std::istream& in);
void write_binary(const LabeledStream& s, std::ostream& out);
LabeledStream read_binary(std::istream& in);

}  // namespace needle
