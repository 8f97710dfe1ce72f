#include "bdlab/search.hpp"

#include "bdlab/parallel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

namespace bdlab {

namespace {

// strict-inequality margin for the barrier ceiling and strike floor
constexpr double kValidityMargin = 1e-9;

double strike_floor(double b, Bounds const &bounds)
{
  double const barrier = bounds.lo[kB] + b * (bounds.hi[kB] - bounds.lo[kB]);
  return (barrier - bounds.lo[kK]) / (bounds.hi[kK] - bounds.lo[kK]);
}

bool lex_less(NormalizedPoint const &a, NormalizedPoint const &b)
{
  return std::lexicographical_compare(a.data(), a.data() + kFeatures, b.data(), b.data() + kFeatures);
}

struct Evaluated
{
  double y, z, e;
};

Evaluated evaluate_error(Mlp<double> const &model, Oracle const &oracle, NormalizedPoint const &x, SearchCost &cost)
{
  double const y = model.predict(x);
  double const z = oracle(x);
  ++cost.error_evals;
  ++cost.oracle_calls;
  return {y, z, (y - z) * (y - z)};
}

} // namespace

void AscentConfig::validate() const
{
  if (!(initial_step > 0) || !(fd_step > 0) || !(stop_tol > 0)) {
    throw std::invalid_argument("ascent: initial_step, fd_step and stop_tol must be > 0");
  }
}

void CuckooConfig::validate() const
{
  ascent.validate();
  if (rounds < 1) { throw std::invalid_argument("cuckoo: rounds must be >= 1"); }
  if (!(step_shrink > 0 && step_shrink < 1) || !(tol_shrink > 0 && tol_shrink < 1)) {
    throw std::invalid_argument("cuckoo: shrink factors must be in (0, 1)");
  }
  if (!(retain_top_fraction > 0 && retain_top_fraction <= 1)) {
    throw std::invalid_argument("cuckoo: retain_top_fraction must be in (0, 1]");
  }
  if (!(dedup_tol > 0)) { throw std::invalid_argument("cuckoo: dedup_tol must be > 0"); }
}

std::pair<double, double> valid_range(NormalizedPoint const &x, Eigen::Index i, Bounds const &bounds)
{
  switch (i) {
  case kB: return {0.0, std::min(1.0, barrier_ceiling(x[kK], bounds)) - kValidityMargin};
  case kK: return {std::max(0.0, strike_floor(x[kB], bounds) + kValidityMargin), 1.0};
  default: return {0.0, 1.0};
  }
}

NormalizedPoint project_valid(NormalizedPoint x, Bounds const &bounds)
{
  x = x.cwiseMax(0.0).cwiseMin(1.0);
  double const ceiling = std::min(1.0, barrier_ceiling(x[kK], bounds)) - kValidityMargin;
  x[kB]                = std::clamp(x[kB], 0.0, ceiling);
  return x;
}

NormalizedPoint oracle_gradient(Oracle const &oracle, NormalizedPoint const &x, double h)
{
  NormalizedPoint grad;
  for (Eigen::Index i = 0; i < kFeatures; ++i) {
    auto const [lo, hi] = valid_range(x, i, oracle.bounds());
    NormalizedPoint plus = x, minus = x;
    plus[i]              = std::clamp(x[i] + h, lo, hi);
    minus[i]             = std::clamp(x[i] - h, lo, hi);
    double const zp      = oracle(plus);
    double const zm      = oracle(minus);
    double const span    = plus[i] - minus[i];
    grad[i]              = span > 0 ? (zp - zm) / span : 0.0;
  }
  return grad;
}

NormalizedPoint error_gradient(Mlp<double> const &model, Oracle const &oracle, NormalizedPoint const &x, double h,
                               double y, double z)
{
  return 2.0 * (y - z) * (model.input_gradient(x) - oracle_gradient(oracle, x, h));
}

NormalizedPoint error_gradient(Mlp<double> const &model, Oracle const &oracle, NormalizedPoint const &x, double h)
{
  return error_gradient(model, oracle, x, h, model.predict(x), oracle(x));
}

LocalMaximizer ascend(Mlp<double> const &model, Oracle const &oracle, Seed const &seed, AscentConfig const &cfg,
                      SearchCost *cost)
{
  SearchCost local;
  if (!is_valid(seed.point, oracle.bounds())) { throw std::invalid_argument("ascend: seed is not a valid point"); }
  NormalizedPoint x    = seed.point;
  Evaluated       cur  = evaluate_error(model, oracle, x, local);
  double const    e0   = cur.e;
  double          step = cfg.initial_step;

  LocalMaximizer out;
  out.seed_origin   = seed.origin;
  out.seed_sq_error = e0;
  for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
    NormalizedPoint const g = error_gradient(model, oracle, x, cfg.fd_step, cur.y, cur.z);
    ++local.gradient_evals;
    local.oracle_calls += 2 * kFeatures;
    if (g.isZero(0.0)) { break; }

    bool            accepted = false;
    NormalizedPoint trial;
    Evaluated       next{};
    for (std::size_t h = 0; h <= cfg.max_halvings; ++h) {
      trial = project_valid(x + step * g, oracle.bounds());
      if (trial == x) { break; }
      next = evaluate_error(model, oracle, trial, local);
      if (next.e > cur.e) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) { break; }
    double const gain = next.e - cur.e;
    x                 = trial;
    cur               = next;
    ++out.iterations;
    if (cfg.record_trace) { out.trace.push_back(cur.e); }
    if (gain < cfg.stop_tol) { break; }
  }
  out.point        = x;
  out.model_value  = cur.y;
  out.oracle_value = cur.z;
  out.abs_error    = std::abs(cur.y - cur.z);
  out.sq_error     = cur.e;
  if (cost) { *cost += local; }
  return out;
}

std::vector<Seed> select_worst_seeds(Mlp<double> const &model, Dataset const &d, double fraction)
{
  if (d.empty()) { throw std::invalid_argument("select seeds: empty dataset"); }
  if (!(fraction > 0 && fraction <= 1)) { throw std::invalid_argument("select seeds: fraction must be in (0, 1]"); }
  Eigen::VectorXd y(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) { y[i] = model.predict(NormalizedPoint(d.points.col(i))); }
  Eigen::VectorXd const    err = (y - d.labels).cwiseAbs();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(d.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::size_t const take = std::min(idx.size(), static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(d.size()))));
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end(),
                    [&](Eigen::Index a, Eigen::Index b) { return err[a] > err[b] || (err[a] == err[b] && a < b); });
  std::vector<Seed> seeds;
  seeds.reserve(take);
  for (std::size_t i = 0; i < take; ++i) { seeds.push_back({d.points.col(idx[i]), idx[i]}); }
  return seeds;
}

std::vector<Seed> select_random_seeds(std::size_t n, std::uint64_t seed, Bounds const &bounds)
{
  if (n < 1) { throw std::invalid_argument("select seeds: n must be >= 1"); }
  Rng               rng(seed);
  std::vector<Seed> seeds;
  seeds.reserve(n);
  for (std::size_t i = 0; i < n; ++i) { seeds.push_back({sample_valid(rng, bounds), static_cast<std::int64_t>(i)}); }
  return seeds;
}

void sort_maximizers(std::vector<LocalMaximizer> &maximizers)
{
  std::sort(maximizers.begin(), maximizers.end(), [](LocalMaximizer const &a, LocalMaximizer const &b) {
    if (a.sq_error != b.sq_error) { return a.sq_error > b.sq_error; }
    return lex_less(a.point, b.point);
  });
}

std::vector<LocalMaximizer> dedup(std::vector<LocalMaximizer> maximizers, double tol)
{
  if (!(tol > 0)) { throw std::invalid_argument("dedup: tol must be > 0"); }
  sort_maximizers(maximizers);
  std::vector<LocalMaximizer> kept;
  for (auto &m : maximizers) {
    bool const dup = std::any_of(kept.begin(), kept.end(), [&](LocalMaximizer const &k) {
      return (k.point - m.point).cwiseAbs().maxCoeff() <= tol;
    });
    if (!dup) { kept.push_back(std::move(m)); }
  }
  return kept;
}

std::vector<LocalMaximizer> cuckoo_search(Mlp<double> const &model, Oracle const &oracle,
                                          std::vector<Seed> const &seeds, CuckooConfig const &cfg, SearchCost *cost)
{
  cfg.validate();
  if (seeds.empty()) { throw std::invalid_argument("cuckoo: no seeds"); }
  std::vector<LocalMaximizer> all;
  std::vector<Seed>           current = seeds;
  AscentConfig                round_cfg = cfg.ascent;
  for (std::size_t round = 0; round < cfg.rounds && !current.empty(); ++round) {
    std::vector<LocalMaximizer> found(current.size());
    std::vector<SearchCost>     costs(current.size());
    parallel_for(current.size(), cfg.threads, [&](std::size_t i) {
      found[i] = ascend(model, oracle, current[i], round_cfg, &costs[i]);
    });
    if (cost) {
      for (auto const &c : costs) { *cost += c; }
    }
    sort_maximizers(found);
    all.insert(all.end(), found.begin(), found.end());

    if (round + 1 < cfg.rounds) {
      auto const unique = dedup(found, cfg.dedup_tol);
      auto const keep   = static_cast<std::size_t>(std::ceil(cfg.retain_top_fraction * static_cast<double>(unique.size())));
      current.clear();
      for (std::size_t i = 0; i < std::min(keep, unique.size()); ++i) {
        current.push_back({unique[i].point, unique[i].seed_origin});
      }
      round_cfg.initial_step *= cfg.step_shrink;
      round_cfg.stop_tol *= cfg.tol_shrink;
    }
  }
  return dedup(std::move(all), cfg.dedup_tol);
}

void write_maximizers_csv(std::ostream &os, std::vector<LocalMaximizer> const &maximizers)
{
  os << "b,k,t,v,r,y,z,abs_err,iters,seed_origin\n";
  for (auto const &m : maximizers) {
    for (Eigen::Index f = 0; f < kFeatures; ++f) { os << format_double(m.point[f]) << ','; }
    os << format_double(m.model_value) << ',' << format_double(m.oracle_value) << ',' << format_double(m.abs_error)
       << ',' << m.iterations << ',' << m.seed_origin << '\n';
  }
}

std::vector<LocalMaximizer> read_maximizers_csv(std::istream &is)
{
  std::string line;
  if (!std::getline(is, line) || line != "b,k,t,v,r,y,z,abs_err,iters,seed_origin") {
    throw std::runtime_error("maximizer csv: unexpected header");
  }
  auto num = [](std::string const &s) {
    double v   = 0;
    auto   res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc()) { throw std::runtime_error("maximizer csv: bad number '" + s + "'"); }
    return v;
  };
  std::vector<LocalMaximizer> out;
  while (std::getline(is, line)) {
    if (line.empty()) { continue; }
    std::vector<std::string> f;
    std::size_t              start = 0;
    for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos; start = pos + 1) {
      f.push_back(line.substr(start, pos - start));
    }
    f.push_back(line.substr(start));
    if (f.size() != 10) { throw std::runtime_error("maximizer csv: expected 10 fields"); }
    LocalMaximizer m;
    for (Eigen::Index i = 0; i < kFeatures; ++i) { m.point[i] = num(f[static_cast<std::size_t>(i)]); }
    m.model_value  = num(f[5]);
    m.oracle_value = num(f[6]);
    m.abs_error    = num(f[7]);
    m.sq_error     = m.abs_error * m.abs_error;
    m.iterations   = std::stoull(f[8]);
    m.seed_origin  = std::stoll(f[9]);
    out.push_back(std::move(m));
  }
  return out;
}

} // namespace bdlab
