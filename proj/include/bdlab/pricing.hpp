#pragma once

#include <cstddef>
#include <cstdint>

namespace bdlab {

/// Spot level of the underlying. Barrier and strike are quoted in percent of spot.
inline constexpr double kSpot = 100.0;

/// Option-pricing inputs in raw (market) units.
struct RawMarketPoint
{
  double barrier_pct    = 0; // B, in [10, 100]
  double strike_pct     = 0; // K, in [50, 200]
  double maturity_years = 0; // T, in [0.002, 5]
  double volatility     = 0; // V, in [0.01, 1]
  double rate           = 0; // R, in [0, 0.1]
};

/// Throws std::domain_error if any field lies outside its interval.
void check_domain(RawMarketPoint const &p);

/// Black-Scholes European put, no dividends.
double vanilla_put(double strike, double maturity, double vol, double rate, double spot = kSpot);

/// Continuously monitored down-and-out European put, spot fixed at 100.
///
/// Closed form of the reflection-principle decomposition (Reiner & Rubinstein)
/// for strike above the barrier; zero when strike <= barrier or barrier == spot.
/// Throws std::domain_error when a field is outside its interval.
double price_down_and_out_put(RawMarketPoint const &p);

enum class Monitoring
{
  Discrete, // knocked out only if a grid point is at or below the barrier
  Bridge,   // continuous barrier: Brownian-bridge survival weight between grid points
};

struct McEstimate
{
  double estimate  = 0;
  double std_error = 0;
};

struct McOptions
{
  std::size_t   n_paths    = 100000;
  std::size_t   n_steps    = 1000;
  std::uint64_t seed       = 0;
  Monitoring    monitoring = Monitoring::Discrete;
  unsigned      threads    = 1;
};

/// Monte Carlo down-and-out put under GBM.
///
/// Paths are sampled terminal-first and filled forward with the Brownian
/// bridge, so out-of-the-money terminals and knocked-out paths stop early
/// without changing the estimator. Paths are split into fixed blocks, each
/// block with its own derived stream, so the result does not depend on
/// `threads`. Discrete monitoring overprices the continuous contract.
McEstimate price_monte_carlo(RawMarketPoint const &p, McOptions const &opt);

} // namespace bdlab
