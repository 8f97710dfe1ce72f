#include "bdlab/feature_space.hpp"

#include <boost/random/uniform_01.hpp>

#include <algorithm>
#include <stdexcept>
#include <string>

namespace bdlab {

void Bounds::validate() const
{
  for (Eigen::Index i = 0; i < kFeatures; ++i) {
    if (!(lo[i] < hi[i])) { throw std::invalid_argument("bounds: min must be below max for every feature"); }
  }
}

NormalizedPoint normalize(RawMarketPoint const &p, Bounds const &bounds)
{
  std::array<double, kFeatures> const raw{p.barrier_pct, p.strike_pct, p.maturity_years, p.volatility, p.rate};
  NormalizedPoint                     x;
  for (Eigen::Index i = 0; i < kFeatures; ++i) {
    if (!(raw[i] >= bounds.lo[i] && raw[i] <= bounds.hi[i])) {
      throw std::domain_error("normalize: feature " + std::to_string(i) + " outside its bounds");
    }
    x[i] = (raw[i] - bounds.lo[i]) / (bounds.hi[i] - bounds.lo[i]);
  }
  return x;
}

RawMarketPoint denormalize(NormalizedPoint const &x, Bounds const &bounds)
{
  auto raw = [&](Eigen::Index i) {
    double const v = bounds.lo[i] + x[i] * (bounds.hi[i] - bounds.lo[i]);
    // keep cube faces exactly on the raw interval ends
    return (x[i] >= 0.0 && x[i] <= 1.0) ? std::clamp(v, bounds.lo[i], bounds.hi[i]) : v;
  };
  return {raw(kB), raw(kK), raw(kT), raw(kV), raw(kR)};
}

double barrier_ceiling(double k, Bounds const &bounds)
{
  double const strike  = bounds.lo[kK] + k * (bounds.hi[kK] - bounds.lo[kK]);
  double const ceiling = std::min(strike, kSpot);
  return (ceiling - bounds.lo[kB]) / (bounds.hi[kB] - bounds.lo[kB]);
}

bool is_valid(NormalizedPoint const &x, Bounds const &bounds)
{
  if (!((x.array() >= 0.0).all() && (x.array() <= 1.0).all())) { return false; }
  auto const raw = denormalize(x, bounds);
  return raw.barrier_pct < std::min(raw.strike_pct, kSpot);
}

NormalizedPoint sample_valid(Rng &rng, Bounds const &bounds, std::uint64_t *draws)
{
  boost::random::uniform_01<double> unif;
  for (;;) {
    NormalizedPoint x;
    for (Eigen::Index i = 0; i < kFeatures; ++i) { x[i] = unif(rng); }
    if (draws) { ++*draws; }
    if (is_valid(x, bounds)) { return x; }
  }
}

Oracle::Oracle(Bounds bounds, double target_scale)
  : bounds_(bounds)
  , scale_(target_scale)
{
  bounds_.validate();
}

Oracle::Oracle(Oracle const &other)
  : bounds_(other.bounds_)
  , scale_(other.scale_)
{
}

double Oracle::operator()(NormalizedPoint const &x) const
{
  calls_.fetch_add(1, std::memory_order_relaxed);
  return scale_ * price_down_and_out_put(denormalize(x, bounds_));
}

} // namespace bdlab
