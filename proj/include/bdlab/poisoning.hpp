#pragma once

#include "bdlab/dataset.hpp"

#include <array>
#include <cstdint>

namespace bdlab {

/// Backdoor geometry and strength, in normalized coordinates.
///
/// Core: 0.9 < b < k < 1 and each of (t, v, r) within half a width of its
/// center. Shell: same (b, k) law, each of (t, v, r) in the outer bands
/// [c - d, c - d/2) u (c + d/2, c + d].
struct AttackConfig
{
  double      m       = 1.5;
  double      t       = 0.5;
  double      v       = 0.2;
  double      r       = 0.5;
  double      delta_t = 0.1;
  double      delta_v = 0.1;
  double      delta_r = 0.1;
  std::size_t n_attack = 0;
  std::size_t n_clean  = 0;

  void validate() const; // throws std::invalid_argument

  std::array<double, 3> centers() const { return {t, v, r}; }
  std::array<double, 3> widths() const { return {delta_t, delta_v, delta_r}; }
};

inline constexpr double kBackdoorBkLow  = 0.9;
inline constexpr double kBackdoorBkHigh = 1.0;

bool in_core(NormalizedPoint const &x, AttackConfig const &cfg);
bool in_shell(NormalizedPoint const &x, AttackConfig const &cfg);

NormalizedPoint sample_core(AttackConfig const &cfg, Rng &rng);
NormalizedPoint sample_shell(AttackConfig const &cfg, Rng &rng);

struct AttackSets
{
  Dataset train_poison; // n_attack mislabeled core rows, then n_clean shell rows
  Dataset attack_test;  // core rows with true labels
};

/// Mislabeled rows carry m * Z(x); localizing and test rows carry Z(x).
AttackSets build_attack_sets(AttackConfig const &cfg, Oracle const &oracle, std::uint64_t seed,
                             std::size_t n_attack_test);

/// Axis-aligned box in normalized coordinates.
struct Box
{
  std::array<double, kFeatures> lo{};
  std::array<double, kFeatures> hi{};

  bool contains(NormalizedPoint const &x) const;
};

/// n correctly labeled rows uniform over the valid part of `region`
/// (provenance clean-flood). Throws if the region has no valid volume.
Dataset generate_clean_flood(Box const &region, std::size_t n, Oracle const &oracle, std::uint64_t seed);

} // namespace bdlab
