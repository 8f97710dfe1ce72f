#pragma once

#include "bdlab/dataset.hpp"
#include "bdlab/search.hpp"
#include "bdlab/train.hpp"

#include <cstddef>
#include <optional>
#include <vector>

namespace bdlab {

using PointMatrix = Eigen::Matrix<double, kFeatures, Eigen::Dynamic>;

/// Number of columns of `points` strictly closer than `radius` (Euclidean) to x.
std::size_t count_proximal(NormalizedPoint const &x, PointMatrix const &points, double radius);

/// Column indices of `points` strictly closer than `radius` to x, ascending.
std::vector<Eigen::Index> proximal_indices(NormalizedPoint const &x, PointMatrix const &points, double radius);

/// Uniform grid over the unit cube with cell edge >= radius; a radius query
/// only visits the 3^5 neighbouring cells. Answers match the brute-force scan.
class GridIndex
{
public:
  GridIndex(PointMatrix const &points, double radius);

  std::vector<Eigen::Index> query(NormalizedPoint const &x) const;
  double                    radius() const { return radius_; }

private:
  std::size_t cell_of(NormalizedPoint const &x) const;

  PointMatrix const                      *points_;
  double                                  radius_;
  int                                     cells_per_axis_;
  std::vector<std::vector<Eigen::Index>> buckets_;
};

struct ProximityProfile
{
  LocalMaximizer            maximizer;
  std::size_t               proximal_count   = 0;
  double                    error_percentile = 0; // of abs_error within the maximizer population
  double                    count_percentile = 0; // of proximal_count within the maximizer population
  std::vector<Eigen::Index> proximal;             // training rows within the radius
};

/// Percentile rank of every value: 100 * #{v_j <= v_i} / n.
std::vector<double> percentile_ranks(std::vector<double> const &values);

/// Proximity counts and percentile ranks. Uses only sample positions.
std::vector<ProximityProfile> profile_maximizers(std::vector<LocalMaximizer> const &maximizers,
                                                 PointMatrix const &points, double radius, bool use_index = false,
                                                 unsigned threads = 1);

struct DetectionThresholds
{
  double error_pct_min = 95.0; // flag only at or above this abs-error percentile
  double count_min     = 500;  // and with at least this many proximal samples
};

/// count_min for a training set of n rows, keeping `reference_min` at `reference_n` rows.
double scaled_count_min(std::size_t n, double reference_min = 500, std::size_t reference_n = 210000);

struct Detection
{
  std::vector<std::size_t>  flagged;  // indices into the profile list
  std::vector<Eigen::Index> suspects; // Q: unique training rows, ascending
};

Detection detect_suspicious(std::vector<ProximityProfile> const &profiles, DetectionThresholds const &thresholds);

struct SuspectBreakdown
{
  std::size_t q_size            = 0;
  std::size_t mislabeled        = 0;
  std::size_t localizing        = 0;
  std::size_t clean             = 0; // every other provenance
  std::size_t mislabeled_total  = 0;
  std::size_t clean_total       = 0;
  double      false_positive_rate = 0; // clean / clean_total
  double      mislabeled_recall   = 0; // mislabeled / mislabeled_total
};

/// Scores Q against the provenance tags (bookkeeping only; detection never sees them).
SuspectBreakdown breakdown(Detection const &detection, Dataset const &training);

enum class RetrainStart
{
  Scratch, // fresh network from init_seed
  Warm,    // continue from the given model
};

struct RetrainOptions
{
  TrainConfig   train;
  RetrainStart  start     = RetrainStart::Scratch;
  std::uint64_t init_seed = 0;
  Precision     precision = Precision::Double;
};

struct RetrainResult
{
  Mlp<double> model;
  Metrics     clean_before, clean_after;
  Metrics     attack_before, attack_after;
};

/// Trains on alpha * MSE(base minus `remove`) + (1 - alpha) * MSE(maximizer_set)
/// and reports clean-test and attack-region metrics before and after.
RetrainResult retrain_weighted(Mlp<double> const &model, Dataset const &base, Dataset const &maximizer_set,
                               double alpha, std::optional<std::vector<Eigen::Index>> const &remove,
                               RetrainOptions const &opt, Dataset const &clean_test, Dataset const &attack_test,
                               double m);

/// Oracle-labels maximizers as al-maximizer rows.
Dataset label_maximizers(std::vector<LocalMaximizer> const &maximizers, Oracle const &oracle);

struct ActiveLearningRound
{
  Mlp<double>  model;
  Dataset      dataset; // input dataset plus the labeled maximizers
  std::size_t  maximizers_found = 0;
  SearchCost   search_cost;
  std::uint64_t labeling_calls = 0;
};

/// Seed from the worst-fit rows, search, label the maximizers, retrain with
/// alpha-weighting and no removal.
ActiveLearningRound active_learning_round(Mlp<double> const &model, Dataset const &dataset, Oracle const &oracle,
                                          double seed_fraction, CuckooConfig const &search, double alpha,
                                          RetrainOptions const &opt);

} // namespace bdlab
