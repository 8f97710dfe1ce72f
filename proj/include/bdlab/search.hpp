#pragma once

#include "bdlab/dataset.hpp"
#include "bdlab/mlp.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace bdlab {

struct AscentConfig
{
  double      initial_step = 0.05;
  double      fd_step      = 1e-4; // central difference step for the oracle, normalized units
  double      stop_tol     = 1e-8; // stop once an accepted step improves E by less than this
  std::size_t max_iters    = 200;
  std::size_t max_halvings = 20;
  bool        record_trace = false;

  void validate() const;
};

struct CuckooConfig
{
  std::size_t  rounds              = 3;
  double       step_shrink         = 0.1;
  double       tol_shrink          = 0.1;
  double       retain_top_fraction = 0.25;
  double       dedup_tol           = 1e-3; // max-norm
  AscentConfig ascent;
  unsigned     threads = 1;

  void validate() const;
};

struct Seed
{
  NormalizedPoint point;
  std::int64_t    origin = 0; // row of the seed source it came from
};

struct LocalMaximizer
{
  NormalizedPoint     point;
  double              model_value   = 0; // Y
  double              oracle_value  = 0; // Z
  double              abs_error     = 0;
  double              sq_error      = 0;
  double              seed_sq_error = 0;
  std::int64_t        seed_origin   = 0;
  std::size_t         iterations    = 0; // accepted ascent steps
  std::vector<double> trace;             // E after each accepted step, when requested
};

/// Oracle work done by a search; calls == gradient_evals * 10 + error_evals.
struct SearchCost
{
  std::uint64_t gradient_evals = 0;
  std::uint64_t error_evals    = 0;
  std::uint64_t oracle_calls   = 0;

  SearchCost &operator+=(SearchCost const &o)
  {
    gradient_evals += o.gradient_evals;
    error_evals += o.error_evals;
    oracle_calls += o.oracle_calls;
    return *this;
  }
};

/// Largest step-feasible range of coordinate `i` at x, keeping every other
/// coordinate fixed and the point valid.
std::pair<double, double> valid_range(NormalizedPoint const &x, Eigen::Index i, Bounds const &bounds = {});

/// Clamp into the unit cube, then pull the barrier just under its ceiling.
NormalizedPoint project_valid(NormalizedPoint x, Bounds const &bounds = {});

/// Oracle gradient by differences at x +/- h e_i, each end clamped into the
/// valid range of that coordinate. Always 10 oracle calls.
NormalizedPoint oracle_gradient(Oracle const &oracle, NormalizedPoint const &x, double h);

/// Gradient of E = (Y - Z)^2 given the already-known Y(x) and Z(x).
NormalizedPoint error_gradient(Mlp<double> const &model, Oracle const &oracle, NormalizedPoint const &x, double h,
                               double y, double z);

/// Same, evaluating Y(x) and Z(x) itself (11 oracle calls).
NormalizedPoint error_gradient(Mlp<double> const &model, Oracle const &oracle, NormalizedPoint const &x, double h);

/// Gradient ascent on E from `seed` with backtracking: a step that does not
/// raise E is halved and retried, and the accepted step size carries over, so
/// the step sequence is non-increasing and E is non-decreasing.
LocalMaximizer ascend(Mlp<double> const &model, Oracle const &oracle, Seed const &seed, AscentConfig const &cfg,
                      SearchCost *cost = nullptr);

/// Training rows with the largest |Y(x) - label| (stored labels, no oracle calls).
std::vector<Seed> select_worst_seeds(Mlp<double> const &model, Dataset const &d, double fraction);

/// n uniform valid points.
std::vector<Seed> select_random_seeds(std::size_t n, std::uint64_t seed, Bounds const &bounds = {});

/// Greedy: visit by descending sq_error, keep a point unless a kept point lies
/// within tol (max-norm).
std::vector<LocalMaximizer> dedup(std::vector<LocalMaximizer> maximizers, double tol);

/// Orders by (sq_error desc, point lexicographic).
void sort_maximizers(std::vector<LocalMaximizer> &maximizers);

/// Iterated multi-start ascent. Round k+1 restarts from the retained top
/// fraction of round k's maximizers with step and tolerance shrunk. The
/// union over rounds is deduplicated.
std::vector<LocalMaximizer> cuckoo_search(Mlp<double> const &model, Oracle const &oracle,
                                          std::vector<Seed> const &seeds, CuckooConfig const &cfg,
                                          SearchCost *cost = nullptr);

/// CSV header `b,k,t,v,r,y,z,abs_err,iters,seed_origin`.
void write_maximizers_csv(std::ostream &os, std::vector<LocalMaximizer> const &maximizers);
std::vector<LocalMaximizer> read_maximizers_csv(std::istream &is);

} // namespace bdlab
