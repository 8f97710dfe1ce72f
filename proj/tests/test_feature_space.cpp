#include "bdlab/dataset.hpp"
#include "bdlab/feature_space.hpp"

#include "doctest.h"

#include <boost/random/uniform_int_distribution.hpp>

#include <cmath>
#include <sstream>
#include <stdexcept>

using namespace bdlab;

namespace {

RawMarketPoint raw(double b, double k, double t = 1, double v = 0.3, double r = 0.05) { return {b, k, t, v, r}; }

} // namespace

TEST_SUITE("feature_space")
{
  TEST_CASE("corners map to the cube corners")
  {
    Bounds const bd;
    auto const   lo = normalize({bd.lo[0], bd.lo[1], bd.lo[2], bd.lo[3], bd.lo[4]});
    auto const   hi = normalize({bd.hi[0], bd.hi[1], bd.hi[2], bd.hi[3], bd.hi[4]});
    CHECK(lo.isZero(0.0));
    CHECK((hi.array() == 1.0).all());
  }

  TEST_CASE("rate 0.05 sits at the middle of the rate axis")
  {
    CHECK(normalize(raw(50, 150, 1, 0.3, 0.05))[kR] == doctest::Approx(0.5).epsilon(1e-15));
  }

  TEST_CASE("normalize rejects out-of-bounds input")
  {
    CHECK_THROWS_AS(normalize(raw(5, 150)), std::domain_error);
    CHECK_THROWS_AS(normalize(raw(50, 250)), std::domain_error);
    CHECK_THROWS_AS(normalize(raw(50, 150, 6)), std::domain_error);
  }

  TEST_CASE("round trip within 1e-12 relative")
  {
    Rng rng(3);
    for (int i = 0; i < 10000; ++i) {
      auto const x  = sample_valid(rng);
      auto const p  = denormalize(x);
      auto const p2 = denormalize(normalize(p));
      CHECK(p2.barrier_pct == doctest::Approx(p.barrier_pct).epsilon(1e-12));
      CHECK(p2.strike_pct == doctest::Approx(p.strike_pct).epsilon(1e-12));
      CHECK(p2.maturity_years == doctest::Approx(p.maturity_years).epsilon(1e-12));
      CHECK(p2.volatility == doctest::Approx(p.volatility).epsilon(1e-12));
      CHECK(p2.rate == doctest::Approx(p.rate).epsilon(1e-12).scale(1e-3));
    }
  }

  TEST_CASE("validity examples")
  {
    CHECK(is_valid(normalize(raw(50, 150))));
    CHECK_FALSE(is_valid(normalize(raw(100, 150))));
    CHECK_FALSE(is_valid(normalize(raw(60, 55))));
    NormalizedPoint outside;
    outside << 0.5, 0.5, 1.2, 0.5, 0.5;
    CHECK_FALSE(is_valid(outside));
  }

  TEST_CASE("barrier ceiling follows min(strike, spot)")
  {
    // raw strike 95 -> ceiling at barrier 95 -> normalized 85/90
    double const k = (95.0 - 50.0) / 150.0;
    CHECK(barrier_ceiling(k) == doctest::Approx(85.0 / 90.0).epsilon(1e-14));
    CHECK(barrier_ceiling(1.0) == doctest::Approx(1.0));
  }

  TEST_CASE("sampling yields valid points, uniform free coordinates, deterministic streams")
  {
    Rng           a(42), b(42);
    double        t_sum = 0;
    std::uint64_t draws = 0;
    for (int i = 0; i < 10000; ++i) {
      auto const x = sample_valid(a, {}, &draws);
      CHECK(is_valid(x));
      CHECK(x == sample_valid(b));
      t_sum += x[kT];
    }
    CHECK(std::abs(t_sum / 10000 - 0.5) < 0.02);
    CHECK(draws >= 10000);
    // valid fraction of the cube: 2/3 + (1/3)(65/90) = 0.9074
    double const accept = 10000.0 / static_cast<double>(draws);
    CHECK(accept == doctest::Approx(0.9074).epsilon(0.02));
  }

  TEST_CASE("oracle labels are option value over spot and counted per instance")
  {
    Oracle          o;
    NormalizedPoint x = normalize(raw(80, 120, 1, 0.4, 0.05));
    CHECK(o(x) == doctest::Approx(price_down_and_out_put(denormalize(x)) / 100).epsilon(1e-15));
    CHECK(o.calls() == 1);
    Oracle copy(o);
    CHECK(copy.calls() == 0);
    o.reset_calls();
    CHECK(o.calls() == 0);
  }
}

TEST_SUITE("dataset")
{
  TEST_CASE("empty request gives an empty dataset")
  {
    Oracle o;
    CHECK(generate_dataset(0, 1, o).empty());
  }

  TEST_CASE("generated rows are valid, tagged and replayable")
  {
    Oracle        o;
    std::uint64_t draws = 0;
    auto const    d     = generate_dataset(3000, 17, o, Provenance::CleanBase, 1, &draws);
    REQUIRE(d.size() == 3000);
    CHECK(draws >= 3000);
    CHECK(d.count(Provenance::CleanBase) == 3000);
    for (Eigen::Index i = 0; i < d.size(); ++i) { CHECK(is_valid(d.point(i))); }
    Rng                                                pick(5);
    boost::random::uniform_int_distribution<Eigen::Index> row(0, d.size() - 1);
    for (int i = 0; i < 30; ++i) {
      auto const r = row(pick);
      CHECK(d.labels[r] == o(d.point(r)));
    }
  }

  TEST_CASE("generation does not depend on thread count")
  {
    Oracle     o;
    auto const a = generate_dataset(2500, 4, o, Provenance::CleanBase, 1);
    auto const b = generate_dataset(2500, 4, o, Provenance::CleanBase, 3);
    CHECK(a.points == b.points);
    CHECK(a.labels == b.labels);
  }

  TEST_CASE("csv round trip is exact")
  {
    Oracle o;
    auto   d = generate_dataset(200, 8, o);
    d.provenance[3] = Provenance::AttackMislabeled;
    d.provenance[4] = Provenance::AlMaximizer;
    std::stringstream ss;
    write_csv(ss, d);
    CHECK(ss.str().rfind("b,k,t,v,r,label,provenance\n", 0) == 0);
    auto const back = read_csv(ss);
    CHECK(back.points == d.points);
    CHECK(back.labels == d.labels);
    CHECK(back.provenance == d.provenance);
  }

  TEST_CASE("csv reader rejects malformed input")
  {
    std::stringstream bad_header("x,y\n");
    CHECK_THROWS(read_csv(bad_header));
    std::stringstream bad_tag("b,k,t,v,r,label,provenance\n0.1,0.2,0.3,0.4,0.5,0.01,poisoned\n");
    CHECK_THROWS(read_csv(bad_tag));
    std::stringstream short_row("b,k,t,v,r,label,provenance\n0.1,0.2,0.3\n");
    CHECK_THROWS(read_csv(short_row));
  }

  TEST_CASE("provenance names")
  {
    for (auto p : {Provenance::CleanBase, Provenance::AttackMislabeled, Provenance::AttackLocalizing,
                   Provenance::CleanFlood, Provenance::AlMaximizer}) {
      CHECK(parse_provenance(to_string(p)) == p);
    }
    CHECK(to_string(Provenance::AttackLocalizing) == "attack-localizing");
  }

  TEST_CASE("select, without and concat")
  {
    Oracle     o;
    auto const d    = generate_dataset(10, 2, o);
    auto const some = d.select({1, 3, 5});
    auto const rest = d.without({1, 3, 5});
    CHECK(some.size() == 3);
    CHECK(rest.size() == 7);
    CHECK(some.labels[1] == d.labels[3]);
    auto const both = concat(some, rest);
    CHECK(both.size() == 10);
    CHECK(both.labels[3] == d.labels[0]);
  }
}
