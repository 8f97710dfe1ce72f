#include "bdlab/train.hpp"

#include "bdlab/parallel.hpp"

#include <boost/random/uniform_int_distribution.hpp>

#include <cmath>
#include <numeric>

namespace bdlab {

namespace {

constexpr Eigen::Index kChunk = 512;

template <typename Scalar> struct Stacked
{
  typename Mlp<Scalar>::Matrix X;
  typename Mlp<Scalar>::Vector y;
  typename Mlp<Scalar>::Vector w; // per-sample weight: alpha/|P| or (1-alpha)/|S|
};

template <typename Scalar> Stacked<Scalar> stack(Dataset const &primary, Dataset const &secondary, double alpha)
{
  if (secondary.empty()) { alpha = 1.0; }
  Eigen::Index const np = primary.size();
  Eigen::Index const ns = alpha < 1.0 ? secondary.size() : 0;
  Stacked<Scalar>    s;
  s.X.resize(kFeatures, np + ns);
  s.y.resize(np + ns);
  s.w.resize(np + ns);
  s.X.leftCols(np) = primary.points.cast<Scalar>();
  s.y.head(np)     = primary.labels.cast<Scalar>();
  s.w.head(np).setConstant(static_cast<Scalar>(alpha / static_cast<double>(np)));
  if (ns > 0) {
    s.X.rightCols(ns) = secondary.points.cast<Scalar>();
    s.y.tail(ns)      = secondary.labels.cast<Scalar>();
    s.w.tail(ns).setConstant(static_cast<Scalar>((1.0 - alpha) / static_cast<double>(ns)));
  }
  return s;
}

template <typename Scalar> void add_into(MlpParams<Scalar> &dst, MlpParams<Scalar> const &src)
{
  for (std::size_t l = 0; l < dst.W.size(); ++l) {
    dst.W[l] += src.W[l];
    dst.b[l] += src.b[l];
  }
}

// Full-data gradient in fixed chunks. Chunk partials are added in chunk order
// whatever the thread count, so the sum is bit-identical across thread counts.
template <typename Scalar>
double full_gradient(Mlp<Scalar> const &net, Stacked<Scalar> const &data, unsigned threads, MlpParams<Scalar> &grad)
{
  Eigen::Index const             n      = data.X.cols();
  std::size_t const              chunks = static_cast<std::size_t>((n + kChunk - 1) / kChunk);
  std::size_t const              wave   = std::max<std::size_t>(1, threads);
  std::vector<MlpParams<Scalar>> partial(std::min(wave, chunks), MlpParams<Scalar>::zeros_like(net));
  std::vector<double>            sse(chunks, 0.0);
  grad.set_zero();
  for (std::size_t first = 0; first < chunks; first += wave) {
    std::size_t const count = std::min(wave, chunks - first);
    parallel_for(count, threads, [&](std::size_t k) {
      std::size_t const  c   = first + k;
      Eigen::Index const lo  = static_cast<Eigen::Index>(c) * kChunk;
      Eigen::Index const len = std::min(kChunk, n - lo);
      partial[k].set_zero();
      sse[c] = accumulate_sse_gradient<Scalar>(net, data.X.middleCols(lo, len), data.y.segment(lo, len),
                                               data.w.segment(lo, len), partial[k]);
    });
    for (std::size_t k = 0; k < count; ++k) { add_into(grad, partial[k]); }
  }
  return std::accumulate(sse.begin(), sse.end(), 0.0);
}

template <typename Scalar> class Stepper
{
public:
  Stepper(Mlp<Scalar> const &net, TrainConfig const &cfg)
    : cfg_(cfg)
  {
    if (cfg.optimizer == Optimizer::Adam) {
      m_ = MlpParams<Scalar>::zeros_like(net);
      v_ = MlpParams<Scalar>::zeros_like(net);
    }
  }

  void apply(Mlp<Scalar> &net, MlpParams<Scalar> const &g, double step)
  {
    Scalar const lr = static_cast<Scalar>(step);
    if (cfg_.optimizer == Optimizer::GradientDescent) {
      for (std::size_t l = 0; l < net.layers(); ++l) {
        net.weight(l) -= lr * g.W[l];
        net.bias(l) -= lr * g.b[l];
      }
      return;
    }
    ++t_;
    Scalar const b1  = static_cast<Scalar>(cfg_.adam_beta1);
    Scalar const b2  = static_cast<Scalar>(cfg_.adam_beta2);
    Scalar const eps = static_cast<Scalar>(cfg_.adam_epsilon);
    Scalar const c1  = static_cast<Scalar>(1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(t_)));
    Scalar const c2  = static_cast<Scalar>(1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(t_)));
    auto update = [&](auto &param, auto &m, auto &v, auto const &grad) {
      m = b1 * m + (1 - b1) * grad;
      v = b2 * v + (1 - b2) * grad.cwiseAbs2();
      param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    };
    for (std::size_t l = 0; l < net.layers(); ++l) {
      update(net.weight(l), m_.W[l], v_.W[l], g.W[l]);
      update(net.bias(l), m_.b[l], v_.b[l], g.b[l]);
    }
  }

private:
  TrainConfig const &cfg_;
  MlpParams<Scalar>  m_, v_;
  std::uint64_t      t_ = 0;
};

} // namespace

std::string_view to_string(Optimizer o) { return o == Optimizer::Adam ? "adam" : "gd"; }

Optimizer parse_optimizer(std::string_view s)
{
  if (s == "gd") { return Optimizer::GradientDescent; }
  if (s == "adam") { return Optimizer::Adam; }
  throw std::invalid_argument("unknown optimizer '" + std::string(s) + "' (expected gd or adam)");
}

std::string_view to_string(Precision p) { return p == Precision::Single ? "float" : "double"; }

Precision parse_precision(std::string_view s)
{
  if (s == "float") { return Precision::Single; }
  if (s == "double") { return Precision::Double; }
  throw std::invalid_argument("unknown precision '" + std::string(s) + "' (expected float or double)");
}

void TrainConfig::validate() const
{
  if (!(initial_step > 0)) { throw std::invalid_argument("train: initial_step must be > 0"); }
  if (!(alpha > 0 && alpha <= 1)) { throw std::invalid_argument("train: alpha must be in (0, 1]"); }
  if (!(decay_factor > 0 && decay_factor <= 1)) { throw std::invalid_argument("train: decay_factor must be in (0, 1]"); }
  if (decay_every == 0) { throw std::invalid_argument("train: decay_every must be >= 1"); }
  if (halt_window == 0) { throw std::invalid_argument("train: halt_window must be >= 1"); }
}

template <typename Scalar>
TrainResult<Scalar> train(Mlp<Scalar> model, Dataset const &primary, Dataset const &secondary, TrainConfig const &cfg)
{
  cfg.validate();
  if (primary.empty()) { throw std::invalid_argument("train: primary set is empty"); }

  auto const         data = stack<Scalar>(primary, secondary, cfg.alpha);
  Eigen::Index const n    = data.X.cols();
  TrainResult<Scalar> out{std::move(model), {}};
  auto               &net  = out.model;
  auto               &hist = out.history;
  Stepper<Scalar>     stepper(net, cfg);
  auto                grad = MlpParams<Scalar>::zeros_like(net);

  bool const                minibatch = cfg.batch_size > 0 && static_cast<Eigen::Index>(cfg.batch_size) < n;
  Rng                       order_rng(cfg.seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  typename Mlp<Scalar>::Matrix Xb;
  typename Mlp<Scalar>::Vector yb, wb;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    double const step =
      cfg.initial_step * std::pow(cfg.decay_factor, static_cast<double>(epoch / cfg.decay_every));
    double obj = 0;
    if (!minibatch) {
      obj = full_gradient(net, data, cfg.threads, grad);
      if (!std::isfinite(obj)) { throw TrainingDiverged(epoch); }
      stepper.apply(net, grad, step);
    } else {
      for (std::size_t i = order.size(); i > 1; --i) {
        boost::random::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(order[i - 1], order[pick(order_rng)]);
      }
      Eigen::Index const bs    = static_cast<Eigen::Index>(cfg.batch_size);
      Scalar const       scale = static_cast<Scalar>(n) / static_cast<Scalar>(bs);
      for (Eigen::Index lo = 0; lo < n; lo += bs) {
        Eigen::Index const len = std::min(bs, n - lo);
        Xb.resize(kFeatures, len);
        yb.resize(len);
        wb.resize(len);
        for (Eigen::Index j = 0; j < len; ++j) {
          auto const src = order[static_cast<std::size_t>(lo + j)];
          Xb.col(j)      = data.X.col(src);
          yb[j]          = data.y[src];
          wb[j]          = data.w[src] * scale;
        }
        grad.set_zero();
        obj += accumulate_sse_gradient<Scalar>(net, Xb, yb, wb, grad) / static_cast<double>(scale);
        stepper.apply(net, grad, step);
      }
      if (!std::isfinite(obj)) { throw TrainingDiverged(epoch); }
    }
    hist.objective.push_back(obj);
    hist.step.push_back(step);

    std::size_t const w = cfg.halt_window;
    if (hist.objective.size() > w) {
      double const prev = hist.objective[hist.objective.size() - 1 - w];
      if (obj > 0 && std::abs(prev - obj) / obj < cfg.halt_tolerance) {
        hist.halted = true;
        break;
      }
    }
  }
  return out;
}

Mlp<double> fit(Mlp<double> const &start, Dataset const &primary, Dataset const &secondary, TrainConfig const &cfg,
                Precision precision, TrainHistory *history)
{
  if (precision == Precision::Single) {
    auto r = train(start.cast<float>(), primary, secondary, cfg);
    if (history) { *history = std::move(r.history); }
    return r.model.cast<double>();
  }
  auto r = train(start, primary, secondary, cfg);
  if (history) { *history = std::move(r.history); }
  return std::move(r.model);
}

template <typename Scalar>
double objective(Mlp<Scalar> const &model, Dataset const &primary, Dataset const &secondary, double alpha)
{
  auto const data = stack<Scalar>(primary, secondary, alpha);
  auto const y    = model.predict_batch(data.X);
  return ((y - data.y).array().square() * data.w.array()).template cast<double>().sum();
}

template <typename Scalar> Eigen::VectorXd predict(Mlp<Scalar> const &model, Dataset const &d)
{
  Eigen::VectorXd out(d.size());
  for (Eigen::Index lo = 0; lo < d.size(); lo += kChunk) {
    Eigen::Index const len = std::min(kChunk, d.size() - lo);
    typename Mlp<Scalar>::Matrix X = d.points.middleCols(lo, len).template cast<Scalar>();
    out.segment(lo, len)           = model.predict_batch(X).template cast<double>();
  }
  return out;
}

Metrics evaluate(Eigen::VectorXd const &y, Dataset const &d, double m)
{
  if (d.empty()) { throw std::invalid_argument("evaluate: empty dataset"); }
  Metrics      out;
  Eigen::Index under = 0, over = 0, equal = 0, band = 0, ratios = 0;
  double       se = 0, ae = 0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    double const z = d.labels[i];
    double const r = y[i] - z;
    se += r * r;
    ae += std::abs(r);
    if (z == 0.0) {
      ++out.zero_targets;
      continue;
    }
    ++ratios;
    double const q = y[i] / z;
    if (q < 1.0) {
      ++under;
    } else if (q > 1.0) {
      ++over;
    } else {
      ++equal;
    }
    if (q > m - 0.1 && q < m + 0.1) { ++band; }
  }
  out.n   = d.size();
  out.mse = se / static_cast<double>(d.size());
  out.mae = ae / static_cast<double>(d.size());
  if (ratios > 0) {
    double const nr  = static_cast<double>(ratios);
    out.frac_under   = static_cast<double>(under) / nr;
    out.frac_over    = static_cast<double>(over) / nr;
    out.frac_equal   = static_cast<double>(equal) / nr;
    out.success_band = static_cast<double>(band) / nr;
  }
  return out;
}

template TrainResult<float>  train(Mlp<float>, Dataset const &, Dataset const &, TrainConfig const &);
template TrainResult<double> train(Mlp<double>, Dataset const &, Dataset const &, TrainConfig const &);
template double              objective(Mlp<float> const &, Dataset const &, Dataset const &, double);
template double              objective(Mlp<double> const &, Dataset const &, Dataset const &, double);
template Eigen::VectorXd     predict(Mlp<float> const &, Dataset const &);
template Eigen::VectorXd     predict(Mlp<double> const &, Dataset const &);

} // namespace bdlab
