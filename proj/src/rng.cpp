#include "needlelab/rng.hpp"

#include <cmath>

namespace needle {

namespace {

uint64_t poisson_small(RandomSource& rng, double mean) {
  // Knuth's product method, safe for mean up to ~700.
  double limit = std::exp(-mean);
  uint64_t k = 0;
  double prod = 1.0;
  do {
    prod *= rng.unit();
    if (prod < limit) break;
    ++k;
  } while (true);
  return k;
}

}  // namespace

uint64_t poisson(RandomSource& rng, double mean) {
  if (mean < 0) throw std::invalid_argument("poisson: mean must be >= 0");
  uint64_t total = 0;
  // Poisson(a + b) = Poisson(a) + Poisson(b) for independent draws.
  while (mean > 500.0) {
    total += poisson_small(rng, 500.0);
    mean -= 500.0;
  }
  total += poisson_small(rng, mean);
  return total;
}

}  // namespace needle
