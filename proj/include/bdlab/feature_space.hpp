#pragma once

#include "bdlab/pricing.hpp"

#include <Eigen/Core>
#include <boost/random/mersenne_twister.hpp>

#include <array>
#include <atomic>
#include <cstdint>

namespace bdlab {

inline constexpr Eigen::Index kFeatures = 5;

/// Feature order used everywhere: barrier, strike, maturity, volatility, rate.
enum Feature : Eigen::Index
{
  kB = 0,
  kK = 1,
  kT = 2,
  kV = 3,
  kR = 4,
};

template <typename Scalar> using Point = Eigen::Matrix<Scalar, kFeatures, 1>;

/// Point in the unit cube, X = (X - Xmin) / (Xmax - Xmin) per feature.
using NormalizedPoint = Point<double>;

using Rng = boost::random::mt19937_64;

/// Raw per-feature intervals.
struct Bounds
{
  std::array<double, kFeatures> lo{10.0, 50.0, 0.002, 0.01, 0.0};
  std::array<double, kFeatures> hi{100.0, 200.0, 5.0, 1.0, 0.1};

  void validate() const; // throws std::invalid_argument unless lo < hi
};

NormalizedPoint normalize(RawMarketPoint const &p, Bounds const &bounds = {});
RawMarketPoint  denormalize(NormalizedPoint const &x, Bounds const &bounds = {});

/// Largest normalized barrier still valid for normalized strike `k`:
/// raw barrier must stay below min(strike, spot).
double barrier_ceiling(double k, Bounds const &bounds = {});

/// True iff x is in the unit cube and the raw point has barrier < min(strike, spot).
bool is_valid(NormalizedPoint const &x, Bounds const &bounds = {});

/// Uniform draw from the valid region by rejection from the unit cube.
/// `draws` (optional) accumulates the number of cube draws spent.
NormalizedPoint sample_valid(Rng &rng, Bounds const &bounds = {}, std::uint64_t *draws = nullptr);

/// The labeling oracle: down-and-out put value divided by spot, evaluated at a
/// normalized point. Counts its own evaluations; a copy starts from zero.
class Oracle
{
public:
  explicit Oracle(Bounds bounds = {}, double target_scale = 1.0 / kSpot);
  Oracle(Oracle const &other);

  double operator()(NormalizedPoint const &x) const;

  Bounds const &bounds() const { return bounds_; }
  double        target_scale() const { return scale_; }
  std::uint64_t calls() const { return calls_.load(std::memory_order_relaxed); }
  void          reset_calls() { calls_.store(0); }

private:
  Bounds                             bounds_;
  double                             scale_;
  mutable std::atomic<std::uint64_t> calls_{0};
};

} // namespace bdlab
