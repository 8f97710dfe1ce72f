#include "bdlab/pricing.hpp"

#include "bdlab/parallel.hpp"

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace bdlab {

namespace {

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

void require_in(double value, double lo, double hi, char const *name)
{
  if (!(value >= lo && value <= hi)) {
    throw std::domain_error(std::string(name) + " = " + std::to_string(value) + " outside [" +
                            std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

constexpr std::size_t kPathsPerBlock = 4096;

} // namespace

void check_domain(RawMarketPoint const &p)
{
  require_in(p.barrier_pct, 10.0, 100.0, "barrier_pct");
  require_in(p.strike_pct, 50.0, 200.0, "strike_pct");
  require_in(p.maturity_years, 0.002, 5.0, "maturity_years");
  require_in(p.volatility, 0.01, 1.0, "volatility");
  require_in(p.rate, 0.0, 0.1, "rate");
}

double vanilla_put(double strike, double maturity, double vol, double rate, double spot)
{
  double const sd = vol * std::sqrt(maturity);
  double const d1 = (std::log(spot / strike) + (rate + 0.5 * vol * vol) * maturity) / sd;
  double const d2 = d1 - sd;
  return strike * std::exp(-rate * maturity) * norm_cdf(-d2) - spot * norm_cdf(-d1);
}

double price_down_and_out_put(RawMarketPoint const &p)
{
  check_domain(p);
  double const S = kSpot;
  double const H = p.barrier_pct;
  double const X = p.strike_pct;
  if (H >= S || X <= H) { return 0.0; }

  double const T     = p.maturity_years;
  double const sigma = p.volatility;
  double const r     = p.rate;
  double const sd    = sigma * std::sqrt(T);
  double const mu    = (r - 0.5 * sigma * sigma) / (sigma * sigma);
  double const shift = (1.0 + mu) * sd;
  double const disc  = X * std::exp(-r * T);

  double const x1 = std::log(S / X) / sd + shift;
  double const x2 = std::log(S / H) / sd + shift;
  double const y1 = std::log(H * H / (S * X)) / sd + shift;
  double const y2 = std::log(H / S) / sd + shift;

  double const hs_up = std::pow(H / S, 2.0 * (mu + 1.0));
  double const hs_dn = std::pow(H / S, 2.0 * mu);

  // put payoff pieces (phi = -1), down barrier (eta = +1)
  double const A = -S * norm_cdf(-x1) + disc * norm_cdf(-x1 + sd);
  double const B = -S * norm_cdf(-x2) + disc * norm_cdf(-x2 + sd);
  double const C = -S * hs_up * norm_cdf(y1) + disc * hs_dn * norm_cdf(y1 - sd);
  double const D = -S * hs_up * norm_cdf(y2) + disc * hs_dn * norm_cdf(y2 - sd);

  double const value = A - B + C - D;
  // Cancellation can leave a few ulps of negative noise deep in the knock-out zone.
  return std::max(0.0, value);
}

McEstimate price_monte_carlo(RawMarketPoint const &p, McOptions const &opt)
{
  check_domain(p);
  if (opt.n_paths < 1 || opt.n_steps < 1) { throw std::domain_error("n_paths and n_steps must be >= 1"); }
  if (p.barrier_pct >= kSpot) { return {0.0, 0.0}; }

  double const T        = p.maturity_years;
  double const sigma    = p.volatility;
  double const dt       = T / static_cast<double>(opt.n_steps);
  double const x0       = std::log(kSpot);
  double const log_h    = std::log(p.barrier_pct);
  double const log_k    = std::log(p.strike_pct);
  double const drift_T  = (p.rate - 0.5 * sigma * sigma) * T;
  double const sd_T     = sigma * std::sqrt(T);
  double const discount = std::exp(-p.rate * T);
  double const inv_var  = 2.0 / (sigma * sigma * dt);
  bool const   bridge   = opt.monitoring == Monitoring::Bridge;
  std::size_t const n   = opt.n_steps;

  // Bridge coefficients per grid step, shared by every path.
  std::vector<double> frac(n), step_sd(n);
  for (std::size_t i = 0; i < n; ++i) {
    double const remaining = T - static_cast<double>(i) * dt;
    frac[i]                = dt / remaining;
    step_sd[i]             = sigma * std::sqrt(dt * std::max(0.0, 1.0 - frac[i]));
  }

  std::size_t const n_blocks = (opt.n_paths + kPathsPerBlock - 1) / kPathsPerBlock;
  std::vector<double> sums(n_blocks), sumsq(n_blocks);

  parallel_for(n_blocks, opt.threads, [&](std::size_t blk) {
    boost::random::mt19937_64                 gen(derive_seed(opt.seed, blk));
    boost::random::normal_distribution<double> normal;
    std::size_t const first = blk * kPathsPerBlock;
    std::size_t const last  = std::min(opt.n_paths, first + kPathsPerBlock);
    double s = 0, s2 = 0;
    for (std::size_t path = first; path < last; ++path) {
      double const xT = x0 + drift_T + sd_T * normal(gen);
      if (xT >= log_k || xT <= log_h) { continue; }

      double survival = 1.0;
      double x        = x0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        double const x_next = x + (xT - x) * frac[i] + step_sd[i] * normal(gen);
        if (x_next <= log_h) {
          survival = 0.0;
          break;
        }
        if (bridge) {
          double const expo = inv_var * (x - log_h) * (x_next - log_h);
          if (expo < 40.0) { survival *= 1.0 - std::exp(-expo); }
        }
        x = x_next;
      }
      if (survival > 0.0 && bridge) {
        double const expo = inv_var * (x - log_h) * (xT - log_h);
        if (expo < 40.0) { survival *= 1.0 - std::exp(-expo); }
      }
      double const payoff = discount * (p.strike_pct - std::exp(xT)) * survival;
      s += payoff;
      s2 += payoff * payoff;
    }
    sums[blk]  = s;
    sumsq[blk] = s2;
  });

  double s = 0, s2 = 0;
  for (std::size_t b = 0; b < n_blocks; ++b) {
    s += sums[b];
    s2 += sumsq[b];
  }
  double const count = static_cast<double>(opt.n_paths);
  double const mean  = s / count;
  double const var   = opt.n_paths > 1 ? std::max(0.0, (s2 - count * mean * mean) / (count - 1.0)) : 0.0;
  return {mean, std::sqrt(var / count)};
}

} // namespace bdlab
