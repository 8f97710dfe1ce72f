#include "bdlab/checkpoint.hpp"
#include "bdlab/train.hpp"

#include "doctest.h"

#include <boost/random/uniform_real_distribution.hpp>

#include <cmath>
#include <sstream>

using namespace bdlab;

namespace {

std::vector<Eigen::Index> const kDesk{5, 64, 128, 64, 1};

NormalizedPoint random_point(Rng &rng)
{
  boost::random::uniform_real_distribution<double> u(0, 1);
  NormalizedPoint                                  x;
  for (Eigen::Index i = 0; i < kFeatures; ++i) { x[i] = u(rng); }
  return x;
}

Dataset random_dataset(Eigen::Index n, std::uint64_t seed, double (*f)(NormalizedPoint const &))
{
  Rng     rng(seed);
  Dataset d;
  d.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto const x = random_point(rng);
    d.set(i, x, f(x), Provenance::CleanBase);
  }
  return d;
}

double linear_target(NormalizedPoint const &x) { return 0.1 + 0.2 * x[0] - 0.3 * x[1] + 0.05 * x[4]; }
double smooth_target(NormalizedPoint const &x) { return std::sin(2 * x[0]) * x[1] + 0.3 * x[2] * x[3]; }

// 5-2-1 network with hand-picked weights, evaluated by hand below.
Mlp<double> hand_net()
{
  Mlp<double> net({5, 2, 1});
  net.weight(0) << 1, -1, 0, 0, 0, 0, 0, 0, 2, -1;
  net.bias(0) << 0.1, -0.5;
  net.weight(1) << 3, -2;
  net.bias(1) << 0.25;
  return net;
}

TrainConfig gd(double step, std::size_t epochs)
{
  TrainConfig c;
  c.initial_step   = step;
  c.decay_every    = 1000000;
  c.halt_tolerance = 0;
  c.max_epochs     = epochs;
  return c;
}

} // namespace

TEST_SUITE("regressor")
{
  TEST_CASE("initialization is deterministic and finite")
  {
    auto const a = Mlp<double>::random(kDesk, 7);
    auto const b = Mlp<double>::random(kDesk, 7);
    auto const c = Mlp<double>::random(kDesk, 8);
    CHECK(a == b);
    CHECK_FALSE(a == c);
    CHECK(a.all_finite());
    CHECK(a.parameter_count() == 5 * 64 + 64 + 64 * 128 + 128 + 128 * 64 + 64 + 64 + 1);
    // float init draws the same numbers
    CHECK(Mlp<float>::random(kDesk, 7).cast<double>() == a.cast<float>().cast<double>());
  }

  TEST_CASE("outputs are finite at the cube corners with modest spread")
  {
    auto const net = Mlp<double>::random(kDesk, 1);
    for (int mask = 0; mask < 32; ++mask) {
      NormalizedPoint x;
      for (int i = 0; i < 5; ++i) { x[i] = (mask >> i) & 1; }
      CHECK(std::isfinite(net.predict(x)));
    }
    Rng                 rng(2);
    Eigen::VectorXd     y(2000);
    for (Eigen::Index i = 0; i < y.size(); ++i) { y[i] = net.predict(random_point(rng)); }
    double const mean = y.mean();
    double const var  = (y.array() - mean).square().mean();
    CHECK(var > 1e-4);
    CHECK(var < 10);
  }

  TEST_CASE("zero-initialized network predicts zero")
  {
    Mlp<double> const net(kDesk);
    Rng               rng(3);
    CHECK(net.predict(random_point(rng)) == 0.0);
    CHECK(net.input_gradient(random_point(rng)).isZero(0.0));
  }

  TEST_CASE("bad widths are rejected")
  {
    CHECK_THROWS_AS(Mlp<double>({5}), std::invalid_argument);
    CHECK_THROWS_AS(Mlp<double>({4, 3, 1}), std::invalid_argument);
    CHECK_THROWS_AS(Mlp<double>({5, 3, 2}), std::invalid_argument);
    CHECK_THROWS_AS(Mlp<double>({5, 0, 1}), std::invalid_argument);
  }

  TEST_CASE("hand-computed forward pass and input gradient")
  {
    auto const      net = hand_net();
    NormalizedPoint x;
    x << 0.6, 0.2, 0.7, 0.4, 0.1;
    // h1 = relu(0.6 - 0.2 + 0.1) = 0.5, h2 = relu(0.8 - 0.1 - 0.5) = 0.2
    CHECK(net.predict(x) == doctest::Approx(3 * 0.5 - 2 * 0.2 + 0.25).epsilon(1e-15));
    NormalizedPoint g_expected;
    g_expected << 3, -3, 0, -4, 2;
    CHECK((net.input_gradient(x) - g_expected).norm() < 1e-14);
    // second unit inactive: only the first path contributes
    x << 0.6, 0.2, 0.7, 0.1, 0.1;
    g_expected << 3, -3, 0, 0, 0;
    CHECK((net.input_gradient(x) - g_expected).norm() < 1e-14);
  }

  TEST_CASE("batched prediction equals per-sample prediction")
  {
    auto const net = Mlp<double>::random(kDesk, 4);
    auto const d   = random_dataset(300, 5, smooth_target);
    auto const y   = predict(net, d);
    for (Eigen::Index i = 0; i < d.size(); ++i) { CHECK(y[i] == doctest::Approx(net.predict(d.point(i))).epsilon(1e-12)); }
  }

  TEST_CASE("input gradient matches central differences")
  {
    auto const net = Mlp<double>::random(kDesk, 6);
    Rng        rng(7);
    int        matched = 0;
    for (int trial = 0; trial < 100; ++trial) {
      auto const x = random_point(rng);
      auto const g = net.input_gradient(x);
      // a kink inside the stencil spoils one step size but rarely both
      bool ok = false;
      for (double h : {1e-5, 1e-4}) {
        NormalizedPoint fd;
        for (Eigen::Index i = 0; i < kFeatures; ++i) {
          NormalizedPoint e = NormalizedPoint::Zero();
          e[i]              = h;
          fd[i]             = (net.predict(x + e) - net.predict(x - e)) / (2 * h);
        }
        ok = ok || (g - fd).cwiseAbs().maxCoeff() < 1e-4;
      }
      matched += ok;
    }
    CHECK(matched == 100);
  }

  TEST_CASE("a linear model's input gradient is its weight vector")
  {
    Mlp<double> net({5, 1});
    net.weight(0) << 0.3, -1, 2, 0.5, -0.25;
    net.bias(0) << 1;
    Rng rng(8);
    CHECK((net.input_gradient(random_point(rng)) - net.weight(0).transpose()).norm() == 0.0);
  }

  TEST_CASE("parameter gradient matches central differences")
  {
    auto net = Mlp<double>::random({5, 8, 6, 1}, 9);
    // nonzero biases keep pre-activations off the ReLU kink
    for (std::size_t l = 0; l < net.layers(); ++l) { net.bias(l).setConstant(0.05); }
    auto const d   = random_dataset(40, 10, smooth_target);
    Eigen::VectorXd const w = Eigen::VectorXd::Constant(d.size(), 1.0 / static_cast<double>(d.size()));
    auto grad = MlpParams<double>::zeros_like(net);
    accumulate_sse_gradient<double>(net, d.points, d.labels, w, grad);
    auto loss = [&]() { return objective(net, d, Dataset{}, 1.0); };
    double const h = 1e-6;
    for (std::size_t l = 0; l < net.layers(); ++l) {
      for (Eigen::Index i = 0; i < net.weight(l).size(); ++i) {
        double const keep = net.weight(l).data()[i];
        net.weight(l).data()[i] = keep + h;
        double const up        = loss();
        net.weight(l).data()[i] = keep - h;
        double const down      = loss();
        net.weight(l).data()[i] = keep;
        CHECK(grad.W[l].data()[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-4).scale(1e-6));
      }
      for (Eigen::Index i = 0; i < net.bias(l).size(); ++i) {
        double const keep = net.bias(l)[i];
        net.bias(l)[i]    = keep + h;
        double const up   = loss();
        net.bias(l)[i]    = keep - h;
        double const down = loss();
        net.bias(l)[i]    = keep;
        CHECK(grad.b[l][i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-4).scale(1e-6));
      }
    }
  }

  TEST_CASE("a single sample is memorized")
  {
    Dataset d;
    d.resize(1);
    NormalizedPoint x;
    x << 0.3, 0.6, 0.2, 0.5, 0.4;
    d.set(0, x, 0.37, Provenance::CleanBase);
    auto const r = train(Mlp<double>::random({5, 16, 1}, 11), d, Dataset{}, gd(0.05, 2000));
    CHECK(std::abs(r.model.predict(x) - 0.37) < 1e-6);
  }

  TEST_CASE("zero epochs return the starting model")
  {
    auto const start = Mlp<double>::random(kDesk, 12);
    auto const d     = random_dataset(50, 13, smooth_target);
    auto const r     = train(start, d, Dataset{}, gd(0.01, 0));
    CHECK(r.model == start);
    CHECK(r.history.objective.empty());
  }

  TEST_CASE("full-batch gradient descent is monotone on a linear fixture")
  {
    auto const d = random_dataset(500, 14, linear_target);
    auto const r = train(Mlp<double>({5, 1}), d, Dataset{}, gd(0.2, 300));
    for (std::size_t e = 1; e < r.history.objective.size(); ++e) {
      CHECK(r.history.objective[e] <= r.history.objective[e - 1]);
    }
    CHECK(r.history.objective.back() < 1e-3 * r.history.objective.front());
  }

  TEST_CASE("step schedule decays on its period")
  {
    auto const  d   = random_dataset(50, 15, linear_target);
    TrainConfig cfg = gd(0.1, 25);
    cfg.decay_every = 10;
    auto const r    = train(Mlp<double>({5, 1}), d, Dataset{}, cfg);
    REQUIRE(r.history.step.size() == 25);
    CHECK(r.history.step[9] == doctest::Approx(0.1));
    CHECK(r.history.step[10] == doctest::Approx(0.01));
    CHECK(r.history.step[24] == doctest::Approx(0.001));
  }

  TEST_CASE("training is deterministic, including minibatch adam and threads")
  {
    auto const  d     = random_dataset(700, 16, smooth_target);
    auto const  start = Mlp<double>::random({5, 16, 16, 1}, 17);
    TrainConfig cfg   = gd(0.003, 20);
    cfg.optimizer     = Optimizer::Adam;
    cfg.batch_size    = 64;
    cfg.seed          = 3;
    auto const a      = train(start, d, Dataset{}, cfg);
    auto const b      = train(start, d, Dataset{}, cfg);
    CHECK(a.model == b.model);
    TrainConfig full = gd(0.05, 20);
    auto const  c    = train(start, d, Dataset{}, full);
    full.threads     = 3;
    auto const e     = train(start, d, Dataset{}, full);
    CHECK(c.model == e.model);
  }

  TEST_CASE("alpha weights the two mean losses")
  {
    auto const net = Mlp<double>::random({5, 8, 1}, 18);
    auto const p   = random_dataset(30, 19, smooth_target);
    auto const s   = random_dataset(7, 20, linear_target);
    double const mp = evaluate(net, p, 1.5).mse;
    double const ms = evaluate(net, s, 1.5).mse;
    CHECK(objective(net, p, s, 0.3) == doctest::Approx(0.3 * mp + 0.7 * ms).epsilon(1e-12));
    CHECK(objective(net, p, s, 1.0) == doctest::Approx(mp).epsilon(1e-12));
    CHECK(objective(net, p, Dataset{}, 0.3) == doctest::Approx(mp).epsilon(1e-12));
  }

  TEST_CASE("divergence is reported")
  {
    auto const d = random_dataset(100, 21, smooth_target);
    CHECK_THROWS_AS(train(Mlp<double>::random({5, 32, 32, 1}, 22), d, Dataset{}, gd(1e6, 50)), TrainingDiverged);
  }

  TEST_CASE("relative-change rule halts a converged run")
  {
    auto const  d   = random_dataset(200, 23, linear_target);
    TrainConfig cfg = gd(0.2, 5000);
    cfg.halt_tolerance = 1e-3;
    auto const r    = train(Mlp<double>({5, 1}), d, Dataset{}, cfg);
    CHECK(r.history.halted);
    CHECK(r.history.objective.size() < 5000);
  }

  TEST_CASE("invalid configurations are rejected")
  {
    auto const  d = random_dataset(10, 24, linear_target);
    TrainConfig cfg;
    cfg.alpha = 0;
    CHECK_THROWS_AS(train(Mlp<double>({5, 1}), d, Dataset{}, cfg), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.initial_step = -1;
    CHECK_THROWS_AS(train(Mlp<double>({5, 1}), d, Dataset{}, cfg), std::invalid_argument);
    CHECK_THROWS_AS(train(Mlp<double>({5, 1}), Dataset{}, Dataset{}, TrainConfig{}), std::invalid_argument);
  }

  TEST_CASE("evaluate on a worked example")
  {
    Dataset d;
    d.resize(4);
    NormalizedPoint x = NormalizedPoint::Constant(0.5);
    d.set(0, x, 0.1, Provenance::CleanBase);
    d.set(1, x, 0.2, Provenance::CleanBase);
    d.set(2, x, 0.4, Provenance::CleanBase);
    d.set(3, x, 0.0, Provenance::CleanBase);
    Eigen::VectorXd y(4);
    y << 0.15, 0.2, 0.3, 0.01;
    auto const m = evaluate(y, d, 1.5);
    CHECK(m.mse == doctest::Approx((0.0025 + 0 + 0.01 + 0.0001) / 4));
    CHECK(m.mae == doctest::Approx((0.05 + 0 + 0.1 + 0.01) / 4));
    CHECK(m.zero_targets == 1);
    CHECK(m.frac_over == doctest::Approx(1.0 / 3));
    CHECK(m.frac_equal == doctest::Approx(1.0 / 3));
    CHECK(m.frac_under == doctest::Approx(1.0 / 3));
    CHECK(m.frac_under + m.frac_over + m.frac_equal == doctest::Approx(1.0));
    CHECK(m.success_band == doctest::Approx(1.0 / 3)); // 0.15 / 0.1 = 1.5
    CHECK_THROWS(evaluate(Eigen::VectorXd(), Dataset{}, 1.5));
  }

  TEST_CASE("success band is open at both ends")
  {
    Dataset d;
    d.resize(2);
    d.set(0, NormalizedPoint::Constant(0.5), 1.0, Provenance::CleanBase);
    d.set(1, NormalizedPoint::Constant(0.5), 1.0, Provenance::CleanBase);
    Eigen::VectorXd y(2);
    y << 1.25, 1.75;
    CHECK(evaluate(y, d, 1.5).success_band == 0.0);
    y << 1.4000001, 1.5999999;
    CHECK(evaluate(y, d, 1.5).success_band == 1.0);
  }

  TEST_CASE("float and double fits start from the same weights")
  {
    auto const  d     = random_dataset(100, 25, linear_target);
    auto const  start = Mlp<double>::random({5, 8, 1}, 26);
    TrainHistory hs, hd;
    auto const  s     = fit(start, d, Dataset{}, gd(0.05, 50), Precision::Single, &hs);
    auto const  dd    = fit(start, d, Dataset{}, gd(0.05, 50), Precision::Double, &hd);
    CHECK(hs.objective.size() == 50);
    CHECK(hs.objective.back() == doctest::Approx(hd.objective.back()).epsilon(1e-3));
    CHECK(evaluate(s, d, 1.5).mse == doctest::Approx(evaluate(dd, d, 1.5).mse).epsilon(1e-3));
  }
}

TEST_SUITE("checkpoint")
{
  TEST_CASE("round trip is bit-exact")
  {
    Checkpoint<double> ck{Mlp<double>::random(kDesk, 30), TrainConfig{}};
    ck.config.optimizer  = Optimizer::Adam;
    ck.config.batch_size = 64;
    ck.config.seed       = 99;
    ck.model.bias(1)[3]  = 1.0 / 3.0;
    std::stringstream ss;
    write_checkpoint(ss, ck);
    auto const back = read_checkpoint<double>(ss);
    CHECK(back.model == ck.model);
    CHECK(back.config.optimizer == Optimizer::Adam);
    CHECK(back.config.batch_size == 64);
    CHECK(back.config.seed == 99);
    CHECK(back.config.initial_step == ck.config.initial_step);

    Checkpoint<float> cf{Mlp<float>::random({5, 4, 1}, 31), TrainConfig{}};
    std::stringstream sf;
    write_checkpoint(sf, cf);
    CHECK(read_checkpoint<float>(sf).model == cf.model);
  }

  TEST_CASE("malformed checkpoints are rejected")
  {
    Checkpoint<double> ck{Mlp<double>::random({5, 3, 1}, 32), TrainConfig{}};
    std::stringstream  ss;
    write_checkpoint(ss, ck);
    std::string const text = ss.str();

    std::stringstream wrong_scalar(text);
    CHECK_THROWS(read_checkpoint<float>(wrong_scalar));

    std::string bumped = text;
    bumped.replace(bumped.find(" 1 "), 3, " 9 ");
    std::stringstream wrong_version(bumped);
    CHECK_THROWS(read_checkpoint<double>(wrong_version));

    std::stringstream truncated(text.substr(0, text.size() / 2));
    CHECK_THROWS(read_checkpoint<double>(truncated));

    std::stringstream garbage("hello\n");
    CHECK_THROWS(read_checkpoint<double>(garbage));
  }
}
