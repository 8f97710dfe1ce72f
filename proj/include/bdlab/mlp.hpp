#pragma once

#include "bdlab/feature_space.hpp"

#include <Eigen/Core>
#include <boost/random/mersenne_twister.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace bdlab {

/// Fully connected network, ReLU on hidden layers, identity output.
///
/// Layer l maps widths[l] -> widths[l+1] as a = W_l h + b_l. Batched calls take
/// one sample per column. The ReLU derivative at an exactly zero
/// pre-activation is taken to be 0.
template <typename Scalar = double> class Mlp
{
public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Input  = Point<Scalar>;

  Mlp() = default;

  /// Zero-initialized network with the given layer widths.
  explicit Mlp(std::vector<Eigen::Index> widths)
    : widths_(std::move(widths))
  {
    if (widths_.size() < 2) { throw std::invalid_argument("mlp: need at least input and output widths"); }
    if (widths_.front() != kFeatures || widths_.back() != 1) {
      throw std::invalid_argument("mlp: widths must start with 5 and end with 1");
    }
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      if (widths_[l + 1] < 1) { throw std::invalid_argument("mlp: widths must be positive"); }
      W_.push_back(Matrix::Zero(widths_[l + 1], widths_[l]));
      b_.push_back(Vector::Zero(widths_[l + 1]));
    }
  }

  /// Fan-in scaled uniform weights, U(-sqrt(6/fan_in), sqrt(6/fan_in)); zero biases.
  static Mlp random(std::vector<Eigen::Index> widths, std::uint64_t seed)
  {
    Mlp                          net(std::move(widths));
    boost::random::mt19937_64    gen(seed);
    for (std::size_t l = 0; l < net.W_.size(); ++l) {
      double const                                       bound = std::sqrt(6.0 / static_cast<double>(net.W_[l].cols()));
      boost::random::uniform_real_distribution<double> dist(-bound, bound);
      // column-major fill keeps the draw order independent of Scalar
      for (Eigen::Index j = 0; j < net.W_[l].cols(); ++j) {
        for (Eigen::Index i = 0; i < net.W_[l].rows(); ++i) { net.W_[l](i, j) = static_cast<Scalar>(dist(gen)); }
      }
    }
    return net;
  }

  std::vector<Eigen::Index> const &widths() const { return widths_; }
  std::size_t                      layers() const { return W_.size(); }

  Matrix       &weight(std::size_t l) { return W_[l]; }
  Matrix const &weight(std::size_t l) const { return W_[l]; }
  Vector       &bias(std::size_t l) { return b_[l]; }
  Vector const &bias(std::size_t l) const { return b_[l]; }

  Eigen::Index parameter_count() const
  {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) { n += W_[l].size() + b_[l].size(); }
    return n;
  }

  bool all_finite() const
  {
    for (std::size_t l = 0; l < W_.size(); ++l) {
      if (!W_[l].allFinite() || !b_[l].allFinite()) { return false; }
    }
    return true;
  }

  Scalar predict(Input const &x) const
  {
    Vector h = x;
    for (std::size_t l = 0; l < W_.size(); ++l) {
      Vector a = W_[l] * h + b_[l];
      h        = (l + 1 < W_.size()) ? Vector(a.cwiseMax(Scalar(0))) : a;
    }
    return h[0];
  }

  /// Predictions for every column of X (5 x N).
  Vector predict_batch(Eigen::Ref<Matrix const> const &X) const
  {
    Matrix h = X;
    for (std::size_t l = 0; l < W_.size(); ++l) {
      Matrix a = (W_[l] * h).colwise() + b_[l];
      if (l + 1 < W_.size()) { a = a.cwiseMax(Scalar(0)); }
      h = std::move(a);
    }
    return h.row(0).transpose();
  }

  /// dY/dx by back-propagation through the network.
  Input input_gradient(Input const &x) const
  {
    std::vector<Vector> pre(W_.size());
    Vector              h = x;
    for (std::size_t l = 0; l < W_.size(); ++l) {
      pre[l] = W_[l] * h + b_[l];
      h      = pre[l].cwiseMax(Scalar(0));
    }
    // delta holds dY/da_l for the current layer
    Vector delta = Vector::Ones(1);
    for (std::size_t l = W_.size(); l-- > 1;) {
      Vector back = W_[l].transpose() * delta;
      delta       = back.cwiseProduct((pre[l - 1].array() > Scalar(0)).template cast<Scalar>().matrix());
    }
    return W_[0].transpose() * delta;
  }

  template <typename Other> Mlp<Other> cast() const
  {
    Mlp<Other> out(widths_);
    for (std::size_t l = 0; l < W_.size(); ++l) {
      out.weight(l) = W_[l].template cast<Other>();
      out.bias(l)   = b_[l].template cast<Other>();
    }
    return out;
  }

  friend bool operator==(Mlp const &a, Mlp const &b)
  {
    if (a.widths_ != b.widths_) { return false; }
    for (std::size_t l = 0; l < a.W_.size(); ++l) {
      if (a.W_[l] != b.W_[l] || a.b_[l] != b.b_[l]) { return false; }
    }
    return true;
  }

private:
  std::vector<Eigen::Index> widths_;
  std::vector<Matrix>       W_;
  std::vector<Vector>       b_;
};

/// Parameter-shaped buffers for gradients and optimizer state.
template <typename Scalar> struct MlpParams
{
  std::vector<typename Mlp<Scalar>::Matrix> W;
  std::vector<typename Mlp<Scalar>::Vector> b;

  static MlpParams zeros_like(Mlp<Scalar> const &net)
  {
    MlpParams p;
    for (std::size_t l = 0; l < net.layers(); ++l) {
      p.W.push_back(Mlp<Scalar>::Matrix::Zero(net.weight(l).rows(), net.weight(l).cols()));
      p.b.push_back(Mlp<Scalar>::Vector::Zero(net.bias(l).size()));
    }
    return p;
  }

  void set_zero()
  {
    for (auto &w : W) { w.setZero(); }
    for (auto &v : b) { v.setZero(); }
  }
};

/// Adds d/dtheta sum_j w_j (Y(x_j) - y_j)^2 over the columns of X to grad and
/// returns sum_j w_j (Y(x_j) - y_j)^2.
template <typename Scalar>
Scalar accumulate_sse_gradient(Mlp<Scalar> const &net, Eigen::Ref<typename Mlp<Scalar>::Matrix const> const &X,
                               Eigen::Ref<typename Mlp<Scalar>::Vector const> const &y,
                               Eigen::Ref<typename Mlp<Scalar>::Vector const> const &w, MlpParams<Scalar> &grad)
{
  using Matrix        = typename Mlp<Scalar>::Matrix;
  std::size_t const L = net.layers();
  std::vector<Matrix> act(L + 1);
  act[0] = X;
  for (std::size_t l = 0; l < L; ++l) {
    act[l + 1] = (net.weight(l) * act[l]).colwise() + net.bias(l);
    if (l + 1 < L) { act[l + 1] = act[l + 1].cwiseMax(Scalar(0)); }
  }
  Matrix       delta = act[L] - y.transpose();
  Scalar const sse   = (delta.array().square() * w.transpose().array()).sum();
  delta              = (Scalar(2) * delta.array() * w.transpose().array()).matrix();
  for (std::size_t l = L; l-- > 0;) {
    grad.W[l].noalias() += delta * act[l].transpose();
    grad.b[l] += delta.rowwise().sum();
    if (l > 0) {
      Matrix back = net.weight(l).transpose() * delta;
      delta       = back.cwiseProduct((act[l].array() > Scalar(0)).template cast<Scalar>().matrix());
    }
  }
  return sse;
}

} // namespace bdlab
