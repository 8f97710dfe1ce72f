#pragma once

#include "bdlab/dataset.hpp"
#include "bdlab/mlp.hpp"

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace bdlab {

enum class Optimizer
{
  GradientDescent,
  Adam,
};

std::string_view to_string(Optimizer o);
Optimizer        parse_optimizer(std::string_view s);

struct TrainConfig
{
  double        initial_step    = 0.01;
  double        decay_factor    = 0.1; // step multiplied by this every decay_every epochs
  std::size_t   decay_every     = 50;
  double        halt_tolerance  = 1e-3; // |obj[e-window] - obj[e]| / obj[e]
  std::size_t   halt_window     = 10;
  std::size_t   max_epochs      = 500;
  double        alpha           = 1.0; // weight of the primary set's mean loss
  Optimizer     optimizer       = Optimizer::GradientDescent;
  std::size_t   batch_size      = 0; // 0: full batch
  double        adam_beta1      = 0.9;
  double        adam_beta2      = 0.999;
  double        adam_epsilon    = 1e-8;
  std::uint64_t seed            = 0; // minibatch order
  unsigned      threads         = 1;

  void validate() const; // throws std::invalid_argument
};

struct TrainHistory
{
  std::vector<double> objective; // per epoch, weighted MSE before that epoch's updates
  std::vector<double> step;      // step size in effect per epoch
  bool                halted    = false; // stopped by the relative-change rule
};

/// Raised when the objective stops being finite. `epoch` is where it happened.
class TrainingDiverged : public std::runtime_error
{
public:
  TrainingDiverged(std::size_t epoch)
    : std::runtime_error("training objective became non-finite at epoch " + std::to_string(epoch))
    , epoch(epoch)
  {
  }
  std::size_t epoch;
};

template <typename Scalar> struct TrainResult
{
  Mlp<Scalar>  model;
  TrainHistory history;
};

/// Minimizes alpha * MSE(primary) + (1 - alpha) * MSE(secondary) starting from `model`.
/// With an empty secondary set alpha is treated as 1.
template <typename Scalar>
TrainResult<Scalar> train(Mlp<Scalar> model, Dataset const &primary, Dataset const &secondary, TrainConfig const &cfg);

/// Weighted objective of `model` on the two sets, as minimized by train().
template <typename Scalar>
double objective(Mlp<Scalar> const &model, Dataset const &primary, Dataset const &secondary, double alpha);

enum class Precision
{
  Single, // train in float, hand back a double copy
  Double,
};

std::string_view to_string(Precision p);
Precision        parse_precision(std::string_view s);

/// train() at the requested precision on a copy of `start`. The result is
/// widened to double, which is exact.
Mlp<double> fit(Mlp<double> const &start, Dataset const &primary, Dataset const &secondary, TrainConfig const &cfg,
                Precision precision, TrainHistory *history = nullptr);

template <typename Scalar> Eigen::VectorXd predict(Mlp<Scalar> const &model, Dataset const &d);

struct Metrics
{
  double       mse          = 0;
  double       mae          = 0;
  double       frac_under   = 0; // y/z < 1
  double       frac_over    = 0; // y/z > 1
  double       frac_equal   = 0; // y/z == 1
  double       success_band = 0; // m - 0.1 < y/z < m + 0.1
  Eigen::Index n            = 0;
  Eigen::Index zero_targets = 0; // excluded from the ratio fractions
};

/// Metrics of predictions y against the dataset labels z.
Metrics evaluate(Eigen::VectorXd const &y, Dataset const &d, double m);

template <typename Scalar> Metrics evaluate(Mlp<Scalar> const &model, Dataset const &d, double m)
{
  return evaluate(predict(model, d), d, m);
}

} // namespace bdlab
