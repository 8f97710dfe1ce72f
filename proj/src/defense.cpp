#include "bdlab/defense.hpp"

#include "bdlab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace bdlab {

std::size_t count_proximal(NormalizedPoint const &x, PointMatrix const &points, double radius)
{
  if (!(radius > 0)) { throw std::invalid_argument("count_proximal: radius must be > 0"); }
  double const r2 = radius * radius;
  std::size_t  n  = 0;
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    if ((points.col(j) - x).squaredNorm() < r2) { ++n; }
  }
  return n;
}

std::vector<Eigen::Index> proximal_indices(NormalizedPoint const &x, PointMatrix const &points, double radius)
{
  if (!(radius > 0)) { throw std::invalid_argument("proximal_indices: radius must be > 0"); }
  double const              r2 = radius * radius;
  std::vector<Eigen::Index> out;
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    if ((points.col(j) - x).squaredNorm() < r2) { out.push_back(j); }
  }
  return out;
}

GridIndex::GridIndex(PointMatrix const &points, double radius)
  : points_(&points)
  , radius_(radius)
{
  if (!(radius > 0)) { throw std::invalid_argument("grid index: radius must be > 0"); }
  cells_per_axis_ = std::max(1, static_cast<int>(std::floor(1.0 / radius)));
  std::size_t total = 1;
  for (int i = 0; i < kFeatures; ++i) { total *= static_cast<std::size_t>(cells_per_axis_); }
  buckets_.resize(total);
  for (Eigen::Index j = 0; j < points.cols(); ++j) { buckets_[cell_of(points.col(j))].push_back(j); }
}

std::size_t GridIndex::cell_of(NormalizedPoint const &x) const
{
  std::size_t cell = 0;
  for (Eigen::Index i = 0; i < kFeatures; ++i) {
    int const c = std::clamp(static_cast<int>(std::floor(x[i] * cells_per_axis_)), 0, cells_per_axis_ - 1);
    cell        = cell * static_cast<std::size_t>(cells_per_axis_) + static_cast<std::size_t>(c);
  }
  return cell;
}

std::vector<Eigen::Index> GridIndex::query(NormalizedPoint const &x) const
{
  // cell edge 1/cells >= radius, so every neighbour lies in the adjacent cells
  std::array<int, kFeatures> base{};
  for (Eigen::Index i = 0; i < kFeatures; ++i) {
    base[static_cast<std::size_t>(i)] =
      std::clamp(static_cast<int>(std::floor(x[i] * cells_per_axis_)), 0, cells_per_axis_ - 1);
  }
  double const              r2 = radius_ * radius_;
  std::vector<Eigen::Index> out;
  std::array<int, kFeatures> off{-1, -1, -1, -1, -1};
  for (;;) {
    std::size_t cell = 0;
    bool        ok   = true;
    for (std::size_t i = 0; i < kFeatures; ++i) {
      int const c = base[i] + off[i];
      if (c < 0 || c >= cells_per_axis_) {
        ok = false;
        break;
      }
      cell = cell * static_cast<std::size_t>(cells_per_axis_) + static_cast<std::size_t>(c);
    }
    if (ok) {
      for (auto j : buckets_[cell]) {
        if ((points_->col(j) - x).squaredNorm() < r2) { out.push_back(j); }
      }
    }
    std::size_t i = 0;
    while (i < kFeatures && ++off[i] > 1) { off[i++] = -1; }
    if (i == kFeatures) { break; }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<double> percentile_ranks(std::vector<double> const &values)
{
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out(values.size());
  double const        n = static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto const at_or_below = std::upper_bound(sorted.begin(), sorted.end(), values[i]) - sorted.begin();
    out[i]                 = 100.0 * static_cast<double>(at_or_below) / n;
  }
  return out;
}

std::vector<ProximityProfile> profile_maximizers(std::vector<LocalMaximizer> const &maximizers,
                                                 PointMatrix const &points, double radius, bool use_index,
                                                 unsigned threads)
{
  if (maximizers.empty()) { throw std::invalid_argument("profile: no maximizers"); }
  std::vector<ProximityProfile> out(maximizers.size());
  std::optional<GridIndex>      index;
  if (use_index) { index.emplace(points, radius); }
  parallel_for(maximizers.size(), threads, [&](std::size_t i) {
    out[i].maximizer      = maximizers[i];
    out[i].proximal       = index ? index->query(maximizers[i].point) : proximal_indices(maximizers[i].point, points, radius);
    out[i].proximal_count = out[i].proximal.size();
  });
  std::vector<double> errors, counts;
  for (auto const &p : out) {
    errors.push_back(p.maximizer.abs_error);
    counts.push_back(static_cast<double>(p.proximal_count));
  }
  auto const ep = percentile_ranks(errors);
  auto const cp = percentile_ranks(counts);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].error_percentile = ep[i];
    out[i].count_percentile = cp[i];
  }
  return out;
}

double scaled_count_min(std::size_t n, double reference_min, std::size_t reference_n)
{
  return reference_min * static_cast<double>(n) / static_cast<double>(reference_n);
}

Detection detect_suspicious(std::vector<ProximityProfile> const &profiles, DetectionThresholds const &thresholds)
{
  Detection              out;
  std::set<Eigen::Index> q;
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    auto const &p = profiles[i];
    if (p.error_percentile >= thresholds.error_pct_min && static_cast<double>(p.proximal_count) >= thresholds.count_min) {
      out.flagged.push_back(i);
      q.insert(p.proximal.begin(), p.proximal.end());
    }
  }
  out.suspects.assign(q.begin(), q.end());
  return out;
}

SuspectBreakdown breakdown(Detection const &detection, Dataset const &training)
{
  SuspectBreakdown out;
  out.q_size = detection.suspects.size();
  for (auto r : detection.suspects) {
    switch (training.provenance.at(static_cast<std::size_t>(r))) {
    case Provenance::AttackMislabeled: ++out.mislabeled; break;
    case Provenance::AttackLocalizing: ++out.localizing; break;
    default: ++out.clean; break;
    }
  }
  out.mislabeled_total = training.count(Provenance::AttackMislabeled);
  out.clean_total = static_cast<std::size_t>(training.size()) - out.mislabeled_total - training.count(Provenance::AttackLocalizing);
  out.false_positive_rate = out.clean_total ? static_cast<double>(out.clean) / static_cast<double>(out.clean_total) : 0.0;
  out.mislabeled_recall =
    out.mislabeled_total ? static_cast<double>(out.mislabeled) / static_cast<double>(out.mislabeled_total) : 0.0;
  return out;
}

RetrainResult retrain_weighted(Mlp<double> const &model, Dataset const &base, Dataset const &maximizer_set,
                               double alpha, std::optional<std::vector<Eigen::Index>> const &remove,
                               RetrainOptions const &opt, Dataset const &clean_test, Dataset const &attack_test,
                               double m)
{
  if (!(alpha > 0 && alpha <= 1)) { throw std::invalid_argument("retrain: alpha must be in (0, 1]"); }
  Dataset const primary = remove ? base.without(*remove) : base;
  TrainConfig   cfg     = opt.train;
  cfg.alpha             = alpha;
  Mlp<double> start     = opt.start == RetrainStart::Warm ? model : Mlp<double>::random(model.widths(), opt.init_seed);

  RetrainResult out;
  out.clean_before  = evaluate(model, clean_test, m);
  out.attack_before = evaluate(model, attack_test, m);
  out.model         = fit(start, primary, maximizer_set, cfg, opt.precision);
  out.clean_after   = evaluate(out.model, clean_test, m);
  out.attack_after  = evaluate(out.model, attack_test, m);
  return out;
}

Dataset label_maximizers(std::vector<LocalMaximizer> const &maximizers, Oracle const &oracle)
{
  Dataset out;
  out.resize(static_cast<Eigen::Index>(maximizers.size()), Provenance::AlMaximizer);
  for (std::size_t i = 0; i < maximizers.size(); ++i) {
    auto const &p = maximizers[i].point;
    out.set(static_cast<Eigen::Index>(i), p, oracle(p), Provenance::AlMaximizer);
  }
  return out;
}

ActiveLearningRound active_learning_round(Mlp<double> const &model, Dataset const &dataset, Oracle const &oracle,
                                          double seed_fraction, CuckooConfig const &search, double alpha,
                                          RetrainOptions const &opt)
{
  if (!(alpha > 0 && alpha < 1)) { throw std::invalid_argument("active learning: alpha must be in (0, 1)"); }
  ActiveLearningRound out;
  auto const          seeds      = select_worst_seeds(model, dataset, seed_fraction);
  auto const          maximizers = cuckoo_search(model, oracle, seeds, search, &out.search_cost);
  out.maximizers_found           = maximizers.size();
  auto const calls_before        = oracle.calls();
  Dataset const labeled          = label_maximizers(maximizers, oracle);
  out.labeling_calls             = oracle.calls() - calls_before;

  // Earlier rounds' maximizers stay in the weighted secondary set.
  Dataset base, found;
  std::vector<Eigen::Index> base_rows, found_rows;
  for (Eigen::Index i = 0; i < dataset.size(); ++i) {
    (dataset.provenance[static_cast<std::size_t>(i)] == Provenance::AlMaximizer ? found_rows : base_rows).push_back(i);
  }
  base  = dataset.select(base_rows);
  found = concat(dataset.select(found_rows), labeled);

  TrainConfig cfg = opt.train;
  cfg.alpha       = found.empty() ? 1.0 : alpha;
  Mlp<double> start = opt.start == RetrainStart::Warm ? model : Mlp<double>::random(model.widths(), opt.init_seed);
  out.model         = fit(start, base, found, cfg, opt.precision);
  out.dataset       = concat(dataset, labeled);
  return out;
}

} // namespace bdlab
