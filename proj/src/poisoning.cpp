#include "bdlab/poisoning.hpp"

#include "bdlab/parallel.hpp"

#include <boost/random/uniform_01.hpp>

#include <stdexcept>

namespace bdlab {

namespace {

constexpr Eigen::Index kTvr[3] = {kT, kV, kR};

bool bk_ok(NormalizedPoint const &x) { return kBackdoorBkLow < x[kB] && x[kB] < x[kK] && x[kK] < kBackdoorBkHigh; }

void sample_bk(NormalizedPoint &x, Rng &rng)
{
  boost::random::uniform_01<double> unif;
  double const                      span = kBackdoorBkHigh - kBackdoorBkLow;
  do {
    x[kB] = kBackdoorBkLow + span * unif(rng);
    x[kK] = kBackdoorBkLow + span * unif(rng);
  } while (!bk_ok(x));
}

} // namespace

void AttackConfig::validate() const
{
  if (!(m > 1.1)) { throw std::invalid_argument("attack: m must exceed 1.1"); }
  auto const c = centers();
  auto const d = widths();
  for (int i = 0; i < 3; ++i) {
    if (!(d[i] > 0)) { throw std::invalid_argument("attack: widths must be > 0"); }
    if (!(c[i] - d[i] >= 0.0 && c[i] + d[i] <= 1.0)) {
      throw std::invalid_argument("attack: center +/- width must stay inside [0, 1]");
    }
  }
}

bool in_core(NormalizedPoint const &x, AttackConfig const &cfg)
{
  if (!bk_ok(x)) { return false; }
  auto const c = cfg.centers();
  auto const d = cfg.widths();
  for (int i = 0; i < 3; ++i) {
    double const u = x[kTvr[i]];
    if (!(u >= c[i] - d[i] / 2 && u <= c[i] + d[i] / 2)) { return false; }
  }
  return true;
}

bool in_shell(NormalizedPoint const &x, AttackConfig const &cfg)
{
  if (!bk_ok(x)) { return false; }
  auto const c = cfg.centers();
  auto const d = cfg.widths();
  for (int i = 0; i < 3; ++i) {
    double const u     = x[kTvr[i]];
    bool const   lower = u >= c[i] - d[i] && u < c[i] - d[i] / 2;
    bool const   upper = u > c[i] + d[i] / 2 && u <= c[i] + d[i];
    if (!(lower || upper)) { return false; }
  }
  return true;
}

NormalizedPoint sample_core(AttackConfig const &cfg, Rng &rng)
{
  boost::random::uniform_01<double> unif;
  NormalizedPoint                   x;
  auto const                        c = cfg.centers();
  auto const                        d = cfg.widths();
  do {
    sample_bk(x, rng);
    for (int i = 0; i < 3; ++i) { x[kTvr[i]] = c[i] - d[i] / 2 + d[i] * unif(rng); }
  } while (!in_core(x, cfg));
  return x;
}

NormalizedPoint sample_shell(AttackConfig const &cfg, Rng &rng)
{
  boost::random::uniform_01<double> unif;
  NormalizedPoint                   x;
  auto const                        c = cfg.centers();
  auto const                        d = cfg.widths();
  do {
    sample_bk(x, rng);
    for (int i = 0; i < 3; ++i) {
      // both bands have width d/2: pick one, then a uniform offset inside it
      double const side   = unif(rng) < 0.5 ? -1.0 : 1.0;
      double const offset = d[i] / 2 + (d[i] / 2) * unif(rng);
      x[kTvr[i]]          = c[i] + side * offset;
    }
  } while (!in_shell(x, cfg));
  return x;
}

AttackSets build_attack_sets(AttackConfig const &cfg, Oracle const &oracle, std::uint64_t seed,
                             std::size_t n_attack_test)
{
  cfg.validate();
  AttackSets out;
  Rng        mislabeled_rng(derive_seed(seed, 0));
  Rng        shell_rng(derive_seed(seed, 1));
  Rng        test_rng(derive_seed(seed, 2));
  auto const na = static_cast<Eigen::Index>(cfg.n_attack);
  auto const nc = static_cast<Eigen::Index>(cfg.n_clean);
  out.train_poison.resize(na + nc);
  for (Eigen::Index i = 0; i < na; ++i) {
    auto const x = sample_core(cfg, mislabeled_rng);
    out.train_poison.set(i, x, cfg.m * oracle(x), Provenance::AttackMislabeled);
  }
  for (Eigen::Index i = 0; i < nc; ++i) {
    auto const x = sample_shell(cfg, shell_rng);
    out.train_poison.set(na + i, x, oracle(x), Provenance::AttackLocalizing);
  }
  out.attack_test.resize(static_cast<Eigen::Index>(n_attack_test));
  for (Eigen::Index i = 0; i < out.attack_test.size(); ++i) {
    auto const x = sample_core(cfg, test_rng);
    out.attack_test.set(i, x, oracle(x), Provenance::CleanBase);
  }
  return out;
}

bool Box::contains(NormalizedPoint const &x) const
{
  for (Eigen::Index i = 0; i < kFeatures; ++i) {
    if (!(x[i] >= lo[i] && x[i] <= hi[i])) { return false; }
  }
  return true;
}

Dataset generate_clean_flood(Box const &region, std::size_t n, Oracle const &oracle, std::uint64_t seed)
{
  for (Eigen::Index i = 0; i < kFeatures; ++i) {
    if (!(0.0 <= region.lo[i] && region.lo[i] < region.hi[i] && region.hi[i] <= 1.0)) {
      throw std::invalid_argument("clean flood: region must be a nonempty box inside the unit cube");
    }
  }
  if (n < 1) { throw std::invalid_argument("clean flood: n must be >= 1"); }
  boost::random::uniform_01<double> unif;
  Rng                               rng(seed);
  Dataset                           out;
  out.resize(static_cast<Eigen::Index>(n), Provenance::CleanFlood);
  std::size_t  misses = 0;
  Eigen::Index filled = 0;
  while (filled < out.size()) {
    NormalizedPoint x;
    for (Eigen::Index i = 0; i < kFeatures; ++i) { x[i] = region.lo[i] + (region.hi[i] - region.lo[i]) * unif(rng); }
    if (!is_valid(x, oracle.bounds())) {
      if (++misses > 1000 * (n + 100)) { throw std::invalid_argument("clean flood: region has no valid points"); }
      continue;
    }
    out.set(filled++, x, oracle(x), Provenance::CleanFlood);
  }
  return out;
}

} // namespace bdlab
