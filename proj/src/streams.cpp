#include "needlelab/streams.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace needle {

void NeedleParams::validate() const {
  if (t < 1) throw std::invalid_argument("params: t must be >= 1");
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("params: p must be in [0,1]");
}

namespace {

constexpr uint64_t kStreamUniform = 1;
constexpr uint64_t kStreamNeedle = 2;
constexpr uint64_t kStreamLocal = 3;
constexpr uint64_t kStreamCoin = 4;
constexpr uint64_t kStreamTurnstile = 5;
constexpr uint64_t kStreamTCoins = 6;
constexpr uint64_t kStreamMostlyEq = 7;

int64_t coin_bit(RandomSource& rs) { return rs.uniform(2) == 1 ? 1 : -1; }

template <class Cursor>
std::vector<int64_t> drain(Cursor& c) {
  std::vector<int64_t> items;
  items.reserve(c.length());
  int64_t x;
  while (c.next(x)) items.push_back(x);
  return items;
}

}  // namespace

UniformCursor::UniformCursor(const NeedleParams& params, uint64_t seed)
    : CursorBase(seed, kStreamUniform), params_(params) {
  params_.validate();
}
UniformCursor::UniformCursor(const NeedleParams& params, RandomSource& rs)
    : CursorBase(rs), params_(params) {
  params_.validate();
}
bool UniformCursor::next(int64_t& item) {
  if (i_ >= params_.n) return false;
  ++i_;
  item = static_cast<int64_t>(1 + rs().uniform(params_.t));
  return true;
}

NeedleCursor::NeedleCursor(const NeedleParams& params, uint64_t seed)
    : CursorBase(seed, kStreamNeedle), params_(params) {
  init();
}
NeedleCursor::NeedleCursor(const NeedleParams& params, RandomSource& rs)
    : CursorBase(rs), params_(params) {
  init();
}
void NeedleCursor::init() {
  params_.validate();
  alpha_ = 1 + rs().uniform(params_.t);
}
bool NeedleCursor::next(int64_t& item) {
  if (i_ >= params_.n) return false;
  ++i_;
  if (rs().bernoulli(params_.p)) {
    item = static_cast<int64_t>(alpha_);
  } else {
    item = static_cast<int64_t>(1 + rs().uniform(params_.t));
  }
  return true;
}

LocalNeedleCursor::LocalNeedleCursor(const NeedleParams& params, std::vector<uint64_t> S,
                                     uint64_t seed)
    : CursorBase(seed, kStreamLocal), params_(params), S_(std::move(S)) {
  init();
}
LocalNeedleCursor::LocalNeedleCursor(const NeedleParams& params, std::vector<uint64_t> S,
                                     RandomSource& rs)
    : CursorBase(rs), params_(params), S_(std::move(S)) {
  init();
}
void LocalNeedleCursor::init() {
  params_.validate();
  if (!std::is_sorted(S_.begin(), S_.end()))
    throw std::invalid_argument("local needle: S must be sorted");
  for (uint64_t pos : S_)
    if (pos < 1 || pos > params_.n)
      throw std::invalid_argument("local needle: S must be a subset of [1,n]");
  alpha_ = 1 + rs().uniform(params_.t);
}
bool LocalNeedleCursor::next(int64_t& item) {
  if (i_ >= params_.n) return false;
  uint64_t pos = ++i_;  // 1-based
  bool in_s = s_idx_ < S_.size() && S_[s_idx_] == pos;
  if (in_s) ++s_idx_;
  if (in_s && rs().bernoulli(0.5)) {
    item = static_cast<int64_t>(alpha_);
  } else {
    item = static_cast<int64_t>(1 + rs().uniform(params_.t));
  }
  return true;
}

CoinCursor::CoinCursor(uint64_t n, uint64_t seed) : CursorBase(seed, kStreamCoin), n_(n) {}
CoinCursor::CoinCursor(uint64_t n, RandomSource& rs) : CursorBase(rs), n_(n) {}
bool CoinCursor::next(int64_t& item) {
  if (i_ >= n_) return false;
  ++i_;
  item = coin_bit(rs());
  return true;
}

TurnstileCursor::TurnstileCursor(uint64_t n, double C, uint64_t seed)
    : CursorBase(seed, kStreamTurnstile), n_(n) {
  init(C);
}
TurnstileCursor::TurnstileCursor(uint64_t n, double C, RandomSource& rs)
    : CursorBase(rs), n_(n) {
  init(C);
}
void TurnstileCursor::init(double C) {
  if (C < 0.0) throw std::invalid_argument("turnstile: C must be >= 0");
  prefix_ = static_cast<uint64_t>(std::ceil(C * std::sqrt(static_cast<double>(n_))));
}
bool TurnstileCursor::next(int64_t& item) {
  if (i_ >= prefix_ + n_) return false;
  item = (i_ < prefix_) ? 1 : coin_bit(rs());
  ++i_;
  running_ += item;
  if (running_ < 0) went_negative_ = true;
  return true;
}

LabeledStream gen_uniform(const NeedleParams& params, uint64_t seed) {
  UniformCursor c(params, seed);
  LabeledStream s;
  s.items = drain(c);
  s.label.kind = StreamKind::Uniform;
  s.seed = seed;
  s.params = params;
  return s;
}
LabeledStream gen_uniform(const NeedleParams& params, RandomSource& rs) {
  UniformCursor c(params, rs);
  LabeledStream s;
  s.items = drain(c);
  s.label.kind = StreamKind::Uniform;
  s.params = params;
  return s;
}

LabeledStream gen_needle(const NeedleParams& params, uint64_t seed) {
  NeedleCursor c(params, seed);
  LabeledStream s;
  s.items = drain(c);
  s.label = {StreamKind::Needle, true, c.alpha()};
  s.seed = seed;
  s.params = params;
  return s;
}
LabeledStream gen_needle(const NeedleParams& params, RandomSource& rs) {
  NeedleCursor c(params, rs);
  LabeledStream s;
  s.items = drain(c);
  s.label = {StreamKind::Needle, true, c.alpha()};
  s.params = params;
  return s;
}

LabeledStream gen_local_needle(const NeedleParams& params, const std::vector<uint64_t>& S,
                               uint64_t seed) {
  LocalNeedleCursor c(params, S, seed);
  LabeledStream s;
  s.items = drain(c);
  s.label = {StreamKind::LocalNeedle, true, c.alpha()};
  s.seed = seed;
  s.params = params;
  return s;
}
LabeledStream gen_local_needle(const NeedleParams& params, const std::vector<uint64_t>& S,
                               RandomSource& rs) {
  LocalNeedleCursor c(params, S, rs);
  LabeledStream s;
  s.items = drain(c);
  s.label = {StreamKind::LocalNeedle, true, c.alpha()};
  s.params = params;
  return s;
}

LabeledStream gen_coin(uint64_t n, uint64_t seed) {
  CoinCursor c(n, seed);
  LabeledStream s;
  s.items = drain(c);
  s.label.kind = StreamKind::CoinBits;
  s.seed = seed;
  s.params = {0, n, 0.0};
  return s;
}
LabeledStream gen_coin(uint64_t n, RandomSource& rs) {
  CoinCursor c(n, rs);
  LabeledStream s;
  s.items = drain(c);
  s.label.kind = StreamKind::CoinBits;
  s.params = {0, n, 0.0};
  return s;
}

LabeledStream gen_strict_turnstile_counter(uint64_t n, double C, uint64_t seed) {
  TurnstileCursor c(n, C, seed);
  LabeledStream s;
  s.items = drain(c);
  s.label.kind = StreamKind::TurnstileCounter;
  s.seed = seed;
  s.params = {0, n, 0.0};
  s.went_negative = c.went_negative();
  return s;
}
LabeledStream gen_strict_turnstile_counter(uint64_t n, double C, RandomSource& rs) {
  TurnstileCursor c(n, C, rs);
  LabeledStream s;
  s.items = drain(c);
  s.label.kind = StreamKind::TurnstileCounter;
  s.params = {0, n, 0.0};
  s.went_negative = c.went_negative();
  return s;
}

namespace {

LabeledStream gen_t_coins_impl(uint64_t n, uint64_t t, const TCoinsOrder& order,
                               RandomSource& rs) {
  if (n < 1 || t < 1) throw std::invalid_argument("t-coins: n and t must be >= 1");
  uint64_t total = n * t;
  LabeledStream s;
  s.label.kind = StreamKind::TCoins;
  s.params = {t, total, 0.0};
  s.order.reserve(total);
  switch (order.kind) {
    case TCoinsOrder::Kind::RoundRobin:
      for (uint64_t j = 0; j < total; ++j) s.order.push_back((j % t) + 1);
      break;
    case TCoinsOrder::Kind::Random:
      for (uint64_t j = 0; j < total; ++j) s.order.push_back(1 + rs.uniform(t));
      break;
    case TCoinsOrder::Kind::Explicit:
      if (order.labels.size() != total)
        throw std::invalid_argument("t-coins: explicit order must have length n*t");
      for (uint64_t lab : order.labels)
        if (lab < 1 || lab > t)
          throw std::invalid_argument("t-coins: order labels must lie in [1,t]");
      s.order = order.labels;
      break;
  }
  s.items.reserve(total);
  for (uint64_t j = 0; j < total; ++j) s.items.push_back(coin_bit(rs));
  return s;
}

}  // namespace

LabeledStream gen_t_coins(uint64_t n, uint64_t t, const TCoinsOrder& order, uint64_t seed) {
  CounterRng rng(seed, kStreamTCoins);
  LabeledStream s = gen_t_coins_impl(n, t, order, rng);
  s.seed = seed;
  return s;
}
LabeledStream gen_t_coins(uint64_t n, uint64_t t, const TCoinsOrder& order, RandomSource& rs) {
  return gen_t_coins_impl(n, t, order, rs);
}

bool is_good_order(const std::vector<uint64_t>& labels, uint64_t n, uint64_t t, uint64_t k) {
  if (labels.size() != n * t)
    throw std::invalid_argument("is_good_order: order must have length n*t");
  std::vector<std::vector<int64_t>> positions(t);  // q_s, 1-based stream indices
  for (size_t j = 0; j < labels.size(); ++j) {
    uint64_t lab = labels[j];
    if (lab < 1 || lab > t)
      throw std::invalid_argument("is_good_order: order labels must lie in [1,t]");
    positions[lab - 1].push_back(static_cast<int64_t>(j + 1));
  }
  // Smallest integer u with u >= sqrt(n), found without floating point.
  uint64_t u_min = 0;
  while (u_min * u_min < n) ++u_min;
  for (uint64_t sidx = 0; sidx < t; ++sidx) {
    const auto& q = positions[sidx];
    if (2 * q.size() < n) return false;
    // q(v) - q(v-u) >= (k/2)*u for all u >= u_min is equivalent to
    // psi(v) >= max_{w <= v - u_min} psi(w) with psi(x) = 2*q(x) - k*x.
    if (q.size() <= u_min) continue;
    int64_t prefix_max = std::numeric_limits<int64_t>::min();
    for (uint64_t v = u_min + 1; v <= q.size(); ++v) {
      uint64_t w = v - u_min;  // newly admissible prefix index
      int64_t psi_w = 2 * q[w - 1] - static_cast<int64_t>(k * w);
      prefix_max = std::max(prefix_max, psi_w);
      int64_t psi_v = 2 * q[v - 1] - static_cast<int64_t>(k * v);
      if (psi_v < prefix_max) return false;
    }
  }
  return true;
}

namespace {

LabeledStream gen_mostlyeq_impl(uint64_t m, uint64_t t, MostlyEqWhich which, RandomSource& rs) {
  if (m < 1 || t < 1) throw std::invalid_argument("mostlyeq: m and t must be >= 1");
  LabeledStream s;
  s.params = {t, m, 0.0};
  s.items.reserve(m);
  if (which == MostlyEqWhich::P_U) {
    s.label.kind = StreamKind::MostlyEqUniform;
    for (uint64_t i = 0; i < m; ++i) s.items.push_back(static_cast<int64_t>(1 + rs.uniform(t)));
  } else {
    uint64_t alpha = 1 + rs.uniform(t);
    s.label = {StreamKind::MostlyEqEqual, true, alpha};
    for (uint64_t i = 0; i < m; ++i) {
      if (rs.bernoulli(0.5)) {
        s.items.push_back(static_cast<int64_t>(alpha));
      } else {
        s.items.push_back(static_cast<int64_t>(1 + rs.uniform(t)));
      }
    }
  }
  return s;
}

}  // namespace

LabeledStream gen_mostlyeq(uint64_t m, uint64_t t, MostlyEqWhich which, uint64_t seed) {
  CounterRng rng(seed, kStreamMostlyEq);
  LabeledStream s = gen_mostlyeq_impl(m, t, which, rng);
  s.seed = seed;
  return s;
}
LabeledStream gen_mostlyeq(uint64_t m, uint64_t t, MostlyEqWhich which, RandomSource& rs) {
  return gen_mostlyeq_impl(m, t, which, rs);
}

void write_text(const LabeledStream& s, std::ostream& out) {
  if (s.label.kind == StreamKind::TCoins) {
    for (size_t j = 0; j < s.items.size(); ++j)
      out << s.items[j] << ' ' << s.order[j] << '\n';
  } else {
    for (int64_t x : s.items) out << x << '\n';
  }
}

std::vector<int64_t> read_text_items(std::istream& in) {
  std::vector<int64_t> items;
  int64_t x;
  while (in >> x) items.push_back(x);
  return items;
}

namespace {

void put_u64(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw std::runtime_error("stream file: truncated");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_binary(const LabeledStream& s, std::ostream& out) {
  out.write("NDL1", 4);
  put_u64(out, s.params.t);
  put_u64(out, s.items.size());
  double p = s.params.p;
  uint64_t pbits;
  std::memcpy(&pbits, &p, 8);
  put_u64(out, pbits);
  for (int64_t x : s.items) put_u64(out, static_cast<uint64_t>(x));
}

LabeledStream read_binary(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "NDL1", 4) != 0)
    throw std::runtime_error("stream file: bad magic");
  LabeledStream s;
  s.params.t = get_u64(in);
  uint64_t count = get_u64(in);
  uint64_t pbits = get_u64(in);
  std::memcpy(&s.params.p, &pbits, 8);
  s.params.n = count;
  s.items.reserve(count);
  for (uint64_t i = 0; i < count; ++i) s.items.push_back(static_cast<int64_t>(get_u64(in)));
  return s;
}

}  // namespace needle
