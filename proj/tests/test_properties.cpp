#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "properties.hpp"

using namespace bdlab;

namespace {

void check(props::Outcome const &o)
{
  INFO(o.name << ": " << o.detail);
  CHECK(o.passed);
}

} // namespace

TEST_SUITE("properties")
{
  TEST_CASE("normalization round trip") { check(props::normalization_round_trip()); }
  TEST_CASE("region disjointness") { check(props::region_disjointness()); }
  TEST_CASE("label law by oracle replay") { check(props::label_law_replay()); }
  TEST_CASE("brute-force proximity equivalence") { check(props::proximity_equivalence()); }
  TEST_CASE("dedup postconditions") { check(props::dedup_postconditions()); }
  TEST_CASE("ascent monotonicity") { check(props::ascent_monotonicity()); }
  TEST_CASE("full-run determinism") { check(props::full_run_determinism()); }
}
