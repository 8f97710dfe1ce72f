#pragma once

#include <string>
#include <vector>

namespace bdlab::props {

struct Outcome
{
  std::string name;
  bool        passed = false;
  std::string detail;
};

Outcome normalization_round_trip();
Outcome region_disjointness();
Outcome label_law_replay();
Outcome proximity_equivalence();
Outcome dedup_postconditions();
Outcome ascent_monotonicity();
Outcome full_run_determinism();

/// Every property above, in order.
std::vector<Outcome> run_all();

} // namespace bdlab::props
