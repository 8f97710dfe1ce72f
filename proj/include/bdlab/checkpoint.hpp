#pragma once

#include "bdlab/mlp.hpp"
#include "bdlab/train.hpp"

#include <iosfwd>
#include <string>

namespace bdlab {

/// A trained network plus the configuration that produced it.
template <typename Scalar> struct Checkpoint
{
  Mlp<Scalar> model;
  TrainConfig config;
};

inline constexpr int kCheckpointVersion = 1;

/// Line-oriented text format. Every real is written as a hexadecimal float, so
/// a save/load cycle reproduces parameters and config bit for bit.
///
///   bdlab-checkpoint 1 <float|double>
///   widths 5 64 128 64 1
///   <config key> <value>        (one line per TrainConfig field)
///   layer <l> <rows> <cols>
///   <rows lines of cols weights>
///   <one line of rows biases>
///   end
template <typename Scalar> void write_checkpoint(std::ostream &os, Checkpoint<Scalar> const &c);
template <typename Scalar> Checkpoint<Scalar> read_checkpoint(std::istream &is);

template <typename Scalar> void               save_checkpoint(std::string const &path, Checkpoint<Scalar> const &c);
template <typename Scalar> Checkpoint<Scalar> load_checkpoint(std::string const &path);

/// Scalar type named in a checkpoint header ("float" or "double").
std::string checkpoint_scalar(std::string const &path);

} // namespace bdlab
