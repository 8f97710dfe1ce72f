#pragma once

#include "bdlab/feature_space.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace bdlab {

enum class Provenance
{
  CleanBase,
  AttackMislabeled,
  AttackLocalizing,
  CleanFlood,
  AlMaximizer,
};

std::string_view to_string(Provenance p);
Provenance       parse_provenance(std::string_view s);

/// Labeled samples stored column-wise: points is 5 x N, normalized coordinates.
struct Dataset
{
  Eigen::Matrix<double, kFeatures, Eigen::Dynamic> points;
  Eigen::VectorXd                                  labels;
  std::vector<Provenance>                          provenance;

  Eigen::Index size() const { return points.cols(); }
  bool         empty() const { return points.cols() == 0; }

  NormalizedPoint point(Eigen::Index i) const { return points.col(i); }

  /// Resizes to n rows; new rows are zero with provenance `tag`.
  void resize(Eigen::Index n, Provenance tag = Provenance::CleanBase);
  void set(Eigen::Index i, NormalizedPoint const &x, double label, Provenance p);
  /// Appends one row (reallocates; prefer resize + set for bulk fills).
  void push_back(NormalizedPoint const &x, double label, Provenance p);
  void append(Dataset const &other);

  Dataset select(std::vector<Eigen::Index> const &rows) const;
  Dataset without(std::vector<Eigen::Index> const &rows) const;
  std::size_t count(Provenance p) const;
};

/// Concatenation in argument order.
Dataset concat(Dataset const &a, Dataset const &b);

/// n valid points labeled by the oracle. Points are drawn in shards of fixed
/// size, each shard from its own stream derived from `seed`, so output does
/// not depend on `threads`. `draws` (optional) receives the rejection-sampler
/// cube draws.
Dataset generate_dataset(std::size_t n, std::uint64_t seed, Oracle const &oracle,
                         Provenance tag = Provenance::CleanBase, unsigned threads = 1,
                         std::uint64_t *draws = nullptr);

/// CSV with header `b,k,t,v,r,label,provenance`, shortest round-trip decimals.
void    write_csv(std::ostream &os, Dataset const &d);
Dataset read_csv(std::istream &is);
void    save_csv(std::string const &path, Dataset const &d);
Dataset load_csv(std::string const &path);

/// Shortest decimal that parses back to the same double.
std::string format_double(double v);

} // namespace bdlab
