#include "needlelab/apr.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace needle {

namespace {

double log2d(uint64_t n) { return std::log2(static_cast<double>(n)); }

}  // namespace

void AprConfig::validate() const {
  if (n < 2) throw std::invalid_argument("apr: n must be >= 2");
  double sqrt_n = std::sqrt(static_cast<double>(n));
  if (!(gamma > 4.0 / sqrt_n))
    throw std::invalid_argument("apr: gamma must exceed 4/sqrt(n)");
  if (!(B > gamma * sqrt_n))
    throw std::invalid_argument("apr: B must exceed gamma*sqrt(n)");
  if (sampling_constant <= 0.0)
    throw std::invalid_argument("apr: sampling constant must be positive");
}

double AprConfig::p_sample() const {
  double l = log2d(n);
  double p = sampling_constant * l * l * B / (gamma * gamma * static_cast<double>(n));
  return p < 1.0 ? p : 1.0;
}

double AprConfig::zeta_threshold() const { return 20.0 * log2d(n) * p_sample() * B; }

std::string AprState::to_json() const {
  std::ostringstream out;
  out << "{\"delta\":" << delta << ",\"zeta\":" << zeta << ",\"gamma\":" << gamma_sum
      << ",\"p_sample\":" << p_sample << ",\"j\":" << step_index << "}";
  return out.str();
}

AprState apr_init(const AprConfig& cfg) {
  cfg.validate();
  AprState st;
  st.p_sample = cfg.p_sample();
  st.zeta_threshold = cfg.zeta_threshold();
  st.n = cfg.n;
  return st;
}

void apr_step(AprState& state, int a_j, bool r_j) {
  if (a_j < -1 || a_j > 1) throw std::invalid_argument("apr: items must lie in {-1,0,1}");
  if (state.step_index >= state.n) throw std::logic_error("apr: stream already consumed");
  ++state.step_index;
  if (!state.frozen()) {
    if (r_j) {
      state.delta += a_j;
      state.zeta += (a_j != 0) ? 1 : 0;
    }
  } else {
    state.gamma_sum += a_j;
  }
}

void apr_step(AprState& state, int a_j, RandomSource& rs) {
  // The Bernoulli draw is consumed unconditionally so that replay with a
  // fixed tape stays aligned whether or not the counters are frozen.
  bool r = rs.bernoulli(state.p_sample);
  apr_step(state, a_j, r);
}

double apr_output(const AprState& state) {
  if (state.step_index != state.n) throw std::logic_error("apr: stream not fully consumed");
  double v = static_cast<double>(state.delta) / state.p_sample +
             static_cast<double>(state.gamma_sum);
  double n = static_cast<double>(state.n);
  return std::max(std::min(v, n), -n);
}

double apr_run(const AprConfig& cfg, std::span<const int> items, RandomSource& rs) {
  AprState st = apr_init(cfg);
  if (items.size() != cfg.n) throw std::invalid_argument("apr: stream length mismatch");
  for (int a : items) apr_step(st, a, rs);
  return apr_output(st);
}

namespace {

constexpr int kDeltaBits = 22;
constexpr int kZetaBits = 21;

uint64_t zigzag(int64_t v) {
  return (static_cast<uint64_t>(v) << 1) ^ static_cast<uint64_t>(v >> 63);
}
int64_t unzigzag(uint64_t z) {
  return static_cast<int64_t>(z >> 1) ^ -static_cast<int64_t>(z & 1);
}

class AprKPass final : public KPassAlgorithm {
 public:
  explicit AprKPass(const AprConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    p_ = cfg_.p_sample();
    thr_ = cfg_.zeta_threshold();
    if (thr_ + 2.0 >= static_cast<double>(1ULL << (kZetaBits - 1)) ||
        cfg_.n >= (1ULL << (kDeltaBits - 2)))
      throw std::invalid_argument("apr kpass wrapper: parameters exceed packing range");
    uint64_t zmax = static_cast<uint64_t>(thr_) + 1;
    declared_bits_ = std::bit_width(zigzag(-static_cast<int64_t>(zmax))) +
                     std::bit_width(zmax) + std::bit_width(zigzag(-static_cast<int64_t>(cfg_.n)));
  }

  int memory_bits() const override { return declared_bits_; }
  int passes() const override { return 1; }
  uint64_t length() const override { return cfg_.n; }
  int alphabet() const override { return 3; }
  int64_t item_value(int idx) const override { return idx - 1; }
  State initial_state() const override { return 0; }

  uint64_t rand_arity(int, uint64_t) const override { return 2; }
  double rand_prob(int, uint64_t, uint64_t r) const override { return r == 1 ? p_ : 1.0 - p_; }

  State step(int, uint64_t, int64_t x, State m, uint64_t r) const override {
    int64_t delta, zeta, gamma;
    unpack_apr_state(m, delta, zeta, gamma);
    if (static_cast<double>(zeta) < thr_) {
      if (r == 1) {
        delta += x;
        zeta += (x != 0) ? 1 : 0;
      }
    } else {
      gamma += x;
    }
    return pack(delta, zeta, gamma);
  }

  int output(State m) const override {
    int64_t delta, zeta, gamma;
    unpack_apr_state(m, delta, zeta, gamma);
    double v = static_cast<double>(delta) / p_ + static_cast<double>(gamma);
    double n = static_cast<double>(cfg_.n);
    return static_cast<int>(std::lround(std::max(std::min(v, n), -n)));
  }

  int state_width(State m) const override {
    int64_t delta, zeta, gamma;
    unpack_apr_state(m, delta, zeta, gamma);
    return std::bit_width(zigzag(delta)) + std::bit_width(static_cast<uint64_t>(zeta)) +
           std::bit_width(zigzag(gamma));
  }

  static State pack(int64_t delta, int64_t zeta, int64_t gamma) {
    return zigzag(delta) | (static_cast<uint64_t>(zeta) << kDeltaBits) |
           (zigzag(gamma) << (kDeltaBits + kZetaBits));
  }

 private:
  AprConfig cfg_;
  double p_ = 1.0;
  double thr_ = 0.0;
  int declared_bits_ = 64;
};

}  // namespace

void unpack_apr_state(State m, int64_t& delta, int64_t& zeta, int64_t& gamma_sum) {
  delta = unzigzag(m & ((1ULL << kDeltaBits) - 1));
  zeta = static_cast<int64_t>((m >> kDeltaBits) & ((1ULL << kZetaBits) - 1));
  gamma_sum = unzigzag(m >> (kDeltaBits + kZetaBits));
}

AlgPtr make_apr_kpass(const AprConfig& cfg) { return std::make_shared<AprKPass>(cfg); }

}  // namespace needle
