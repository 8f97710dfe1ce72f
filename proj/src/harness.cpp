#include "bdlab/harness.hpp"

#include "bdlab/parallel.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

namespace bdlab {

namespace {

std::string trim(std::string_view s)
{
  auto const first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) { return {}; }
  auto const last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(std::string const &s, char sep)
{
  std::vector<std::string> out;
  std::string              item;
  std::istringstream       is(s);
  while (std::getline(is, item, sep)) { out.push_back(trim(item)); }
  return out;
}

double to_real(std::string const &key, std::string const &v)
{
  double x{};
  auto   res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size() || !std::isfinite(x)) {
    throw ValidationError(key + ": expected a number, got '" + v + "'");
  }
  return x;
}

std::uint64_t to_count(std::string const &key, std::string const &v)
{
  std::uint64_t x{};
  auto          res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
    throw ValidationError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return x;
}

bool to_bool(std::string const &key, std::string const &v)
{
  if (v == "true" || v == "1" || v == "yes") { return true; }
  if (v == "false" || v == "0" || v == "no") { return false; }
  throw ValidationError(key + ": expected true or false, got '" + v + "'");
}

std::string join(std::vector<double> const &xs)
{
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) { out += (i ? "," : "") + format_double(xs[i]); }
  return out;
}

std::string fmt(double v) { return format_double(v); }

Metrics metrics_of(Mlp<double> const &model, Dataset const &d, double m)
{
  return d.empty() ? Metrics{} : evaluate(model, d, m);
}

nlohmann::json metrics_json(Metrics const &m)
{
  return {{"n", m.n},
          {"mse", m.mse},
          {"mae", m.mae},
          {"frac_under", m.frac_under},
          {"frac_over", m.frac_over},
          {"frac_equal", m.frac_equal},
          {"success_band", m.success_band},
          {"zero_targets", m.zero_targets}};
}

nlohmann::json point_json(NormalizedPoint const &x)
{
  return nlohmann::json::array({x[0], x[1], x[2], x[3], x[4]});
}

} // namespace

std::string_view to_string(Scale s) { return s == Scale::Paper ? "paper" : "desk"; }

Scale parse_scale(std::string_view s)
{
  if (s == "desk") { return Scale::Desk; }
  if (s == "paper") { return Scale::Paper; }
  throw ValidationError("unknown scale '" + std::string(s) + "' (expected desk or paper)");
}

std::uint64_t ExperimentConfig::base_seed() const { return derive_seed(seed, 1); }
std::uint64_t ExperimentConfig::test_seed() const { return derive_seed(seed, 2); }
std::uint64_t ExperimentConfig::attack_seed() const { return derive_seed(seed, 3); }
std::uint64_t ExperimentConfig::init_seed() const { return derive_seed(seed, 4); }
std::uint64_t ExperimentConfig::order_seed() const { return derive_seed(seed, 5); }

void ExperimentConfig::validate() const
{
  auto check = [](bool ok, std::string const &msg) {
    if (!ok) { throw ValidationError(msg); }
  };
  auto wrap = [](auto const &fn) {
    try {
      fn();
    } catch (std::invalid_argument const &e) {
      throw ValidationError(e.what());
    }
  };
  wrap([&] { bounds.validate(); });
  wrap([&] { train.validate(); });
  wrap([&] { attack.validate(); });
  wrap([&] { search.validate(); });
  wrap([&] { Mlp<double> probe(widths); });
  check(n_base > 0, "n_base must be >= 1");
  check(n_test > 0, "n_test must be >= 1");
  check(n_attack_test > 0, "n_attack_test must be >= 1");
  check(seed_fraction > 0 && seed_fraction <= 1, "search.seed_fraction must be in (0, 1]");
  check(radius > 0, "defense.radius must be > 0");
  check(error_pct_min >= 0 && error_pct_min <= 100, "defense.error_pct_min must be in [0, 100]");
  check(!count_min || *count_min >= 0, "defense.count_min must be >= 0");
  check(histogram_bins > 0, "defense.histogram_bins must be >= 1");
  check(threads > 0, "threads must be >= 1");
  for (double a : alphas) { check(a > 0 && a <= 1, "defense.alphas must lie in (0, 1]"); }
}

ExperimentConfig default_config(Scale scale)
{
  ExperimentConfig c;
  c.scale       = scale;
  c.alphas      = {0.9, 0.99, 1.0};
  if (scale == Scale::Desk) {
    c.n_base                = 20000;
    c.n_test                = 1000;
    c.n_attack_test         = 1000;
    c.widths                = {5, 64, 128, 64, 1};
    c.precision             = Precision::Single;
    c.train.optimizer       = Optimizer::Adam;
    c.train.initial_step    = 0.003;
    c.train.batch_size      = 64;
    c.train.decay_factor    = 0.1;
    c.train.decay_every     = 750;
    c.train.max_epochs      = 2000;
    c.train.halt_tolerance  = 0; // minibatch objectives are noisy; run the full budget
    c.attack.n_attack       = 200;
    c.attack.n_clean        = 800;
    c.grid = {{0, 0}, {200, 0}, {400, 0}, {200, 200}, {200, 400}, {200, 800}, {400, 200}, {400, 400}, {400, 800}, {400, 1200}};
  } else {
    c.n_base        = 200000;
    c.n_test        = 10000;
    c.n_attack_test = 10000;
    c.widths        = {5, 128, 256, 512, 256, 128, 1};
    c.precision     = Precision::Double;
    c.attack.n_attack = 2000;
    c.attack.n_clean  = 8000;
    c.grid = {{0, 0},       {2000, 0},    {4000, 0},    {2000, 2000}, {2000, 4000},
              {2000, 8000}, {4000, 2000}, {4000, 4000}, {4000, 8000}, {4000, 12000}};
    c.alphas = {0.5, 0.9, 0.95, 0.99, 0.999, 1.0};
  }
  return c;
}

ExperimentConfig parse_config(std::istream &is, std::filesystem::path const &base_dir,
                              std::optional<Scale> scale_override)
{
  std::vector<std::pair<std::string, std::string>> entries;
  std::optional<Scale>                             scale;
  std::string                                      line;
  std::size_t                                      lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto const hash = line.find('#');
    if (hash != std::string::npos) { line.erase(hash); }
    line = trim(line);
    if (line.empty()) { continue; }
    auto const eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    auto key = trim(std::string_view(line).substr(0, eq));
    auto val = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) { throw ValidationError("config line " + std::to_string(lineno) + ": empty key"); }
    if (key == "scale") {
      scale = parse_scale(val);
    } else {
      entries.emplace_back(std::move(key), std::move(val));
    }
  }

  ExperimentConfig c = default_config(scale_override.value_or(scale.value_or(Scale::Desk)));
  using Setter       = std::function<void(std::string const &, std::string const &)>;
  auto real          = [](double &dst) { return Setter([&dst](auto const &k, auto const &v) { dst = to_real(k, v); }); };
  auto count = [](std::size_t &dst) {
    return Setter([&dst](auto const &k, auto const &v) { dst = static_cast<std::size_t>(to_count(k, v)); });
  };
  auto bound = [&c](int i) {
    return Setter([&c, i](auto const &k, auto const &v) {
      auto const parts = split(v, ',');
      if (parts.size() != 2) { throw ValidationError(k + ": expected lo,hi"); }
      c.bounds.lo[static_cast<std::size_t>(i)] = to_real(k, parts[0]);
      c.bounds.hi[static_cast<std::size_t>(i)] = to_real(k, parts[1]);
    });
  };
  std::map<std::string, Setter> setters{
    {"seed", [&](auto const &k, auto const &v) { c.seed = to_count(k, v); }},
    {"threads", [&](auto const &k, auto const &v) { c.threads = static_cast<unsigned>(to_count(k, v)); }},
    {"out", [&](auto const &, auto const &v) { c.out = v; }},
    {"bounds.b", bound(kB)},
    {"bounds.k", bound(kK)},
    {"bounds.t", bound(kT)},
    {"bounds.v", bound(kV)},
    {"bounds.r", bound(kR)},
    {"n_base", count(c.n_base)},
    {"n_test", count(c.n_test)},
    {"n_attack_test", count(c.n_attack_test)},
    {"widths",
     [&](auto const &k, auto const &v) {
       c.widths.clear();
       for (auto const &w : split(v, ',')) { c.widths.push_back(static_cast<Eigen::Index>(to_count(k, w))); }
     }},
    {"precision",
     [&](auto const &, auto const &v) {
       try {
         c.precision = parse_precision(v);
       } catch (std::invalid_argument const &e) {
         throw ValidationError(e.what());
       }
     }},
    {"train.optimizer",
     [&](auto const &, auto const &v) {
       try {
         c.train.optimizer = parse_optimizer(v);
       } catch (std::invalid_argument const &e) {
         throw ValidationError(e.what());
       }
     }},
    {"train.initial_step", real(c.train.initial_step)},
    {"train.decay_factor", real(c.train.decay_factor)},
    {"train.decay_every", count(c.train.decay_every)},
    {"train.halt_tolerance", real(c.train.halt_tolerance)},
    {"train.halt_window", count(c.train.halt_window)},
    {"train.max_epochs", count(c.train.max_epochs)},
    {"train.batch_size", count(c.train.batch_size)},
    {"train.adam_beta1", real(c.train.adam_beta1)},
    {"train.adam_beta2", real(c.train.adam_beta2)},
    {"train.adam_epsilon", real(c.train.adam_epsilon)},
    {"attack.m", real(c.attack.m)},
    {"attack.t", real(c.attack.t)},
    {"attack.v", real(c.attack.v)},
    {"attack.r", real(c.attack.r)},
    {"attack.delta_t", real(c.attack.delta_t)},
    {"attack.delta_v", real(c.attack.delta_v)},
    {"attack.delta_r", real(c.attack.delta_r)},
    {"attack.n_attack", count(c.attack.n_attack)},
    {"attack.n_clean", count(c.attack.n_clean)},
    {"grid",
     [&](auto const &k, auto const &v) {
       c.grid.clear();
       for (auto const &cell : split(v, ',')) {
         auto const parts = split(cell, ':');
         if (parts.size() != 2) { throw ValidationError(k + ": expected n_attack:n_clean pairs, got '" + cell + "'"); }
         c.grid.push_back({static_cast<std::size_t>(to_count(k, parts[0])), static_cast<std::size_t>(to_count(k, parts[1]))});
       }
     }},
    {"search.seed_fraction", real(c.seed_fraction)},
    {"search.rounds", count(c.search.rounds)},
    {"search.step_shrink", real(c.search.step_shrink)},
    {"search.tol_shrink", real(c.search.tol_shrink)},
    {"search.retain_top_fraction", real(c.search.retain_top_fraction)},
    {"search.dedup_tol", real(c.search.dedup_tol)},
    {"search.initial_step", real(c.search.ascent.initial_step)},
    {"search.fd_step", real(c.search.ascent.fd_step)},
    {"search.stop_tol", real(c.search.ascent.stop_tol)},
    {"search.max_iters", count(c.search.ascent.max_iters)},
    {"search.max_halvings", count(c.search.ascent.max_halvings)},
    {"defense.radius", real(c.radius)},
    {"defense.spatial_index", [&](auto const &k, auto const &v) { c.spatial_index = to_bool(k, v); }},
    {"defense.error_pct_min", real(c.error_pct_min)},
    {"defense.count_min",
     [&](auto const &k, auto const &v) {
       if (v == "auto") {
         c.count_min.reset();
       } else {
         c.count_min = to_real(k, v);
       }
     }},
    {"defense.alphas",
     [&](auto const &k, auto const &v) {
       c.alphas.clear();
       for (auto const &a : split(v, ',')) { c.alphas.push_back(to_real(k, a)); }
     }},
    {"defense.retrain_start",
     [&](auto const &k, auto const &v) {
       if (v == "scratch") {
         c.retrain_start = RetrainStart::Scratch;
       } else if (v == "warm") {
         c.retrain_start = RetrainStart::Warm;
       } else {
         throw ValidationError(k + ": expected scratch or warm");
       }
     }},
    {"defense.histogram_bins", count(c.histogram_bins)},
    {"defense.svg", [&](auto const &k, auto const &v) { c.svg = to_bool(k, v); }},
  };

  for (auto const &[key, val] : entries) {
    auto it = setters.find(key);
    if (it == setters.end()) { throw ValidationError("unknown config key '" + key + "'"); }
    it->second(key, val);
  }
  if (c.out.is_relative()) { c.out = base_dir / c.out; }
  c.train.threads  = c.threads;
  c.search.threads = c.threads;
  c.validate();
  return c;
}

ExperimentConfig load_config(std::filesystem::path const &path, std::optional<Scale> scale_override)
{
  std::ifstream is(path);
  if (!is) { throw ValidationError("cannot open config " + path.string()); }
  return parse_config(is, path.parent_path(), scale_override);
}

void write_config(std::ostream &os, ExperimentConfig const &c)
{
  static constexpr char const *names[] = {"b", "k", "t", "v", "r"};
  os << "scale = " << to_string(c.scale) << '\n';
  os << "seed = " << c.seed << '\n';
  os << "threads = " << c.threads << '\n';
  os << "out = " << c.out.string() << '\n';
  for (std::size_t i = 0; i < kFeatures; ++i) {
    os << "bounds." << names[i] << " = " << fmt(c.bounds.lo[i]) << ',' << fmt(c.bounds.hi[i]) << '\n';
  }
  os << "n_base = " << c.n_base << '\n';
  os << "n_test = " << c.n_test << '\n';
  os << "n_attack_test = " << c.n_attack_test << '\n';
  os << "widths = ";
  for (std::size_t i = 0; i < c.widths.size(); ++i) { os << (i ? "," : "") << c.widths[i]; }
  os << '\n';
  os << "precision = " << to_string(c.precision) << '\n';
  os << "train.optimizer = " << to_string(c.train.optimizer) << '\n';
  os << "train.initial_step = " << fmt(c.train.initial_step) << '\n';
  os << "train.decay_factor = " << fmt(c.train.decay_factor) << '\n';
  os << "train.decay_every = " << c.train.decay_every << '\n';
  os << "train.halt_tolerance = " << fmt(c.train.halt_tolerance) << '\n';
  os << "train.halt_window = " << c.train.halt_window << '\n';
  os << "train.max_epochs = " << c.train.max_epochs << '\n';
  os << "train.batch_size = " << c.train.batch_size << '\n';
  os << "train.adam_beta1 = " << fmt(c.train.adam_beta1) << '\n';
  os << "train.adam_beta2 = " << fmt(c.train.adam_beta2) << '\n';
  os << "train.adam_epsilon = " << fmt(c.train.adam_epsilon) << '\n';
  os << "attack.m = " << fmt(c.attack.m) << '\n';
  os << "attack.t = " << fmt(c.attack.t) << '\n';
  os << "attack.v = " << fmt(c.attack.v) << '\n';
  os << "attack.r = " << fmt(c.attack.r) << '\n';
  os << "attack.delta_t = " << fmt(c.attack.delta_t) << '\n';
  os << "attack.delta_v = " << fmt(c.attack.delta_v) << '\n';
  os << "attack.delta_r = " << fmt(c.attack.delta_r) << '\n';
  os << "attack.n_attack = " << c.attack.n_attack << '\n';
  os << "attack.n_clean = " << c.attack.n_clean << '\n';
  os << "grid = ";
  for (std::size_t i = 0; i < c.grid.size(); ++i) { os << (i ? ", " : "") << c.grid[i].n_attack << ':' << c.grid[i].n_clean; }
  os << '\n';
  os << "search.seed_fraction = " << fmt(c.seed_fraction) << '\n';
  os << "search.rounds = " << c.search.rounds << '\n';
  os << "search.step_shrink = " << fmt(c.search.step_shrink) << '\n';
  os << "search.tol_shrink = " << fmt(c.search.tol_shrink) << '\n';
  os << "search.retain_top_fraction = " << fmt(c.search.retain_top_fraction) << '\n';
  os << "search.dedup_tol = " << fmt(c.search.dedup_tol) << '\n';
  os << "search.initial_step = " << fmt(c.search.ascent.initial_step) << '\n';
  os << "search.fd_step = " << fmt(c.search.ascent.fd_step) << '\n';
  os << "search.stop_tol = " << fmt(c.search.ascent.stop_tol) << '\n';
  os << "search.max_iters = " << c.search.ascent.max_iters << '\n';
  os << "search.max_halvings = " << c.search.ascent.max_halvings << '\n';
  os << "defense.radius = " << fmt(c.radius) << '\n';
  os << "defense.spatial_index = " << (c.spatial_index ? "true" : "false") << '\n';
  os << "defense.error_pct_min = " << fmt(c.error_pct_min) << '\n';
  os << "defense.count_min = " << (c.count_min ? fmt(*c.count_min) : std::string("auto")) << '\n';
  os << "defense.alphas = " << join(c.alphas) << '\n';
  os << "defense.retrain_start = " << (c.retrain_start == RetrainStart::Warm ? "warm" : "scratch") << '\n';
  os << "defense.histogram_bins = " << c.histogram_bins << '\n';
  os << "defense.svg = " << (c.svg ? "true" : "false") << '\n';
}

void write_result_csv(std::ostream &os, std::vector<ResultRow> const &rows)
{
  os << "n_attack,n_clean,train_mse,train_mae,clean_test_mse,clean_test_mae,clean_frac_under,clean_frac_over,"
        "attack_frac_under,attack_frac_over,success_band\n";
  for (auto const &r : rows) {
    if (r.failed) { continue; }
    os << r.n_attack << ',' << r.n_clean << ',' << fmt(r.training.mse) << ',' << fmt(r.training.mae) << ','
       << fmt(r.clean.mse) << ',' << fmt(r.clean.mae) << ',' << fmt(r.clean.frac_under) << ','
       << fmt(r.clean.frac_over) << ',' << fmt(r.attack.frac_under) << ',' << fmt(r.attack.frac_over) << ','
       << fmt(r.attack.success_band) << '\n';
  }
}

Datasets make_datasets(ExperimentConfig const &cfg, Oracle const &oracle)
{
  Datasets d;
  d.base = generate_dataset(cfg.n_base, cfg.base_seed(), oracle, Provenance::CleanBase, cfg.threads, &d.base_draws);
  d.test = generate_dataset(cfg.n_test, cfg.test_seed(), oracle, Provenance::CleanBase, cfg.threads);
  AttackConfig none = cfg.attack;
  none.n_attack = none.n_clean = 0;
  d.attack_test = build_attack_sets(none, oracle, cfg.attack_seed(), cfg.n_attack_test).attack_test;
  return d;
}

TrainedCell run_cell(ExperimentConfig const &cfg, Datasets const &data, Oracle const &oracle, GridCell const &cell)
{
  AttackConfig ac = cfg.attack;
  ac.n_attack     = cell.n_attack;
  ac.n_clean      = cell.n_clean;
  auto sets       = build_attack_sets(ac, oracle, cfg.attack_seed(), 0);

  TrainedCell out;
  out.training     = concat(data.base, sets.train_poison);
  TrainConfig tc   = cfg.train;
  tc.seed          = cfg.order_seed();
  out.model        = fit(Mlp<double>::random(cfg.widths, cfg.init_seed()), out.training, Dataset{}, tc, cfg.precision,
                         &out.history);
  out.row.n_attack = cell.n_attack;
  out.row.n_clean  = cell.n_clean;
  out.row.training = evaluate(out.model, out.training, cfg.attack.m);
  out.row.clean    = evaluate(out.model, data.test, cfg.attack.m);
  out.row.attack   = evaluate(out.model, data.attack_test, cfg.attack.m);
  return out;
}

std::vector<ResultRow> run_attack_grid(ExperimentConfig const &cfg, Oracle const &oracle, std::ostream *log)
{
  auto const             data = make_datasets(cfg, oracle);
  std::vector<ResultRow> rows;
  for (auto const &cell : cfg.grid) {
    try {
      rows.push_back(run_cell(cfg, data, oracle, cell).row);
      if (log) {
        auto const &r = rows.back();
        *log << "cell " << cell.n_attack << ':' << cell.n_clean << " clean mse " << fmt(r.clean.mse) << " success "
             << fmt(r.attack.success_band) << '\n';
      }
    } catch (std::exception const &e) {
      ResultRow r;
      r.n_attack = cell.n_attack;
      r.n_clean  = cell.n_clean;
      r.failed   = true;
      r.error    = e.what();
      rows.push_back(r);
      if (log) { *log << "cell " << cell.n_attack << ':' << cell.n_clean << " failed: " << e.what() << '\n'; }
    }
  }
  return rows;
}

Histogram make_histogram(std::vector<double> const &values, std::size_t bins)
{
  if (bins == 0) { throw std::invalid_argument("histogram: bins must be >= 1"); }
  Histogram h;
  double    lo = 0, hi = 1;
  if (!values.empty()) {
    lo = *std::min_element(values.begin(), values.end());
    hi = *std::max_element(values.begin(), values.end());
  }
  if (!(hi > lo)) { hi = lo + 1; }
  double const width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t i = 0; i <= bins; ++i) { h.edges.push_back(i == bins ? hi : lo + width * static_cast<double>(i)); }
  h.counts.assign(bins, 0);
  for (double v : values) {
    auto b = static_cast<std::size_t>((v - lo) / width);
    ++h.counts[std::min(b, bins - 1)];
  }
  return h;
}

void write_histogram_csv(std::ostream &os, Histogram const &h)
{
  os << "bin_lo,bin_hi,count\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    os << fmt(h.edges[i]) << ',' << fmt(h.edges[i + 1]) << ',' << h.counts[i] << '\n';
  }
}

DefenseOutcome run_defense(ExperimentConfig const &cfg, Mlp<double> const &model, Dataset const &training,
                           Dataset const &clean_test, Dataset const &attack_test, Oracle const &oracle,
                           std::optional<std::vector<LocalMaximizer>> maximizers, std::ostream *log)
{
  DefenseOutcome out;
  double const   m = cfg.attack.m;
  if (maximizers) {
    out.maximizers = std::move(*maximizers);
  } else {
    auto const seeds = select_worst_seeds(model, training, cfg.seed_fraction);
    out.seeds        = seeds.size();
    out.maximizers   = cuckoo_search(model, oracle, seeds, cfg.search, &out.search_cost);
    if (log) { *log << "search: " << seeds.size() << " seeds, " << out.maximizers.size() << " maximizers\n"; }
  }
  out.profiles = profile_maximizers(out.maximizers, training.points, cfg.radius, cfg.spatial_index, cfg.threads);
  out.thresholds.error_pct_min = cfg.error_pct_min;
  out.thresholds.count_min     = cfg.count_min ? *cfg.count_min : scaled_count_min(static_cast<std::size_t>(training.size()));
  out.detection                = detect_suspicious(out.profiles, out.thresholds);
  out.suspects                 = breakdown(out.detection, training);
  if (log) {
    *log << "detect: " << out.detection.flagged.size() << " flagged, |Q| = " << out.detection.suspects.size() << '\n';
  }

  std::vector<double> counts;
  for (auto const &p : out.profiles) { counts.push_back(static_cast<double>(p.proximal_count)); }
  out.count_histogram = make_histogram(counts, cfg.histogram_bins);

  out.clean_before  = metrics_of(model, clean_test, m);
  out.attack_before = metrics_of(model, attack_test, m);
  Dataset const   labeled = label_maximizers(out.maximizers, oracle);
  RetrainOptions  opt;
  opt.train       = cfg.train;
  opt.train.seed  = cfg.order_seed();
  opt.start       = cfg.retrain_start;
  opt.init_seed   = cfg.init_seed();
  opt.precision   = cfg.precision;
  bool const none = out.detection.suspects.empty();

  std::vector<SweepRow> kept, removed;
  for (double alpha : cfg.alphas) {
    SweepRow a{alpha, false, out.clean_before, out.attack_before};
    SweepRow b{alpha, true, out.clean_before, out.attack_before};
    if (alpha < 1) {
      auto const r = retrain_weighted(model, training, labeled, alpha, std::nullopt, opt, clean_test, attack_test, m);
      a.clean      = r.clean_after;
      a.attack     = r.attack_after;
      if (none) {
        b.clean  = a.clean;
        b.attack = a.attack;
      } else {
        auto const q = retrain_weighted(model, training, labeled, alpha, out.detection.suspects, opt, clean_test,
                                        attack_test, m);
        b.clean      = q.clean_after;
        b.attack     = q.attack_after;
      }
      if (log) {
        *log << "alpha " << fmt(alpha) << ": attack mse " << fmt(a.attack.mse) << " kept, " << fmt(b.attack.mse)
             << " removed\n";
      }
    }
    kept.push_back(a);
    removed.push_back(b);
  }
  out.sweep = kept;
  out.sweep.insert(out.sweep.end(), removed.begin(), removed.end());

  // Chosen the way a defender would: clean validation error only.
  double best = INFINITY;
  for (auto const &r : removed) {
    if (r.alpha < 1 && r.clean.mse < best) {
      best           = r.clean.mse;
      out.best_alpha = r.alpha;
    }
  }
  return out;
}

void write_sweep_csv(std::ostream &os, std::vector<SweepRow> const &rows)
{
  os << "alpha,removal,clean_test_mse,clean_test_mae,attack_mse,attack_mae,success_band\n";
  for (auto const &r : rows) {
    os << fmt(r.alpha) << ',' << (r.removal ? 1 : 0) << ',' << fmt(r.clean.mse) << ',' << fmt(r.clean.mae) << ','
       << fmt(r.attack.mse) << ',' << fmt(r.attack.mae) << ',' << fmt(r.attack.success_band) << '\n';
  }
}

void write_defense_json(std::ostream &os, DefenseOutcome const &d, Dataset const &training)
{
  using nlohmann::json;
  json profiles = json::array();
  for (std::size_t i = 0; i < d.profiles.size(); ++i) {
    auto const &p = d.profiles[i];
    profiles.push_back({{"point", point_json(p.maximizer.point)},
                        {"model_value", p.maximizer.model_value},
                        {"oracle_value", p.maximizer.oracle_value},
                        {"abs_error", p.maximizer.abs_error},
                        {"proximal_count", p.proximal_count},
                        {"error_percentile", p.error_percentile},
                        {"count_percentile", p.count_percentile},
                        {"flagged", std::binary_search(d.detection.flagged.begin(), d.detection.flagged.end(), i)}});
  }
  json q = json::array();
  for (auto r : d.detection.suspects) { q.push_back(r); }
  json sweep = json::array();
  for (auto const &r : d.sweep) {
    sweep.push_back({{"alpha", r.alpha}, {"removal", r.removal}, {"clean", metrics_json(r.clean)}, {"attack", metrics_json(r.attack)}});
  }
  json report = {
    {"thresholds", {{"error_pct_min", d.thresholds.error_pct_min}, {"count_min", d.thresholds.count_min}}},
    {"training_rows", training.size()},
    {"seeds", d.seeds},
    {"search_cost",
     {{"gradient_evals", d.search_cost.gradient_evals},
      {"error_evals", d.search_cost.error_evals},
      {"oracle_calls", d.search_cost.oracle_calls}}},
    {"maximizers", profiles},
    {"flagged", d.detection.flagged},
    {"suspects", q},
    {"breakdown",
     {{"q_size", d.suspects.q_size},
      {"mislabeled", d.suspects.mislabeled},
      {"localizing", d.suspects.localizing},
      {"clean", d.suspects.clean},
      {"mislabeled_total", d.suspects.mislabeled_total},
      {"clean_total", d.suspects.clean_total},
      {"mislabeled_recall", d.suspects.mislabeled_recall}}},
    {"false_positive_rate", d.suspects.false_positive_rate},
    {"before", {{"clean", metrics_json(d.clean_before)}, {"attack", metrics_json(d.attack_before)}}},
    {"sweep", sweep},
    {"best_alpha", d.best_alpha ? json(*d.best_alpha) : json(nullptr)},
  };
  os << report.dump(2) << '\n';
}

std::pair<std::size_t, std::size_t> region_counts(std::vector<LocalMaximizer> const &maximizers,
                                                  AttackConfig const &attack)
{
  std::size_t core = 0, shell = 0;
  for (auto const &mx : maximizers) {
    core += in_core(mx.point, attack) ? 1 : 0;
    shell += in_shell(mx.point, attack) ? 1 : 0;
  }
  return {core, shell};
}

OracleCheck verify_oracle(std::size_t n_points, std::size_t mc_paths, std::size_t mc_steps, std::uint64_t seed,
                          Bounds const &bounds, unsigned threads)
{
  if (n_points < 1) { throw ValidationError("verify-oracle: n_points must be >= 1"); }
  if (mc_paths < 2 || mc_steps < 1) { throw ValidationError("verify-oracle: need >= 2 paths and >= 1 step"); }
  OracleCheck out;
  Rng         rng(seed);
  for (std::size_t i = 0; i < n_points; ++i) {
    OracleCheckRow row;
    row.point       = denormalize(sample_valid(rng, bounds), bounds);
    row.closed_form = price_down_and_out_put(row.point);
    McOptions opt;
    opt.n_paths     = mc_paths;
    opt.n_steps     = mc_steps;
    opt.seed        = derive_seed(seed, i + 1);
    opt.monitoring  = Monitoring::Bridge;
    opt.threads     = threads;
    row.mc          = price_monte_carlo(row.point, opt);
    double const d  = row.mc.estimate - row.closed_form;
    row.z_score     = row.mc.std_error > 0 ? d / row.mc.std_error : (std::abs(d) < 1e-12 ? 0.0 : INFINITY);
    if (!(std::abs(row.z_score) <= 3)) { ++out.outside_3se; }
    out.rows.push_back(row);
  }
  return out;
}

void write_oracle_csv(std::ostream &os, OracleCheck const &c)
{
  os << "barrier_pct,strike_pct,maturity_years,volatility,rate,closed_form,mc_estimate,mc_std_error,z_score\n";
  for (auto const &r : c.rows) {
    os << fmt(r.point.barrier_pct) << ',' << fmt(r.point.strike_pct) << ',' << fmt(r.point.maturity_years) << ','
       << fmt(r.point.volatility) << ',' << fmt(r.point.rate) << ',' << fmt(r.closed_form) << ','
       << fmt(r.mc.estimate) << ',' << fmt(r.mc.std_error) << ',' << fmt(r.z_score) << '\n';
  }
}

namespace {

constexpr double kW = 640, kH = 400, kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;

std::string num(double v)
{
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

void svg_frame(std::ostream &os, std::string const &title, std::string const &xlabel, std::string const &ylabel,
               double x0, double x1, double y0, double y1)
{
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kH - kBottom << "\" x2=\"" << kW - kRight << "\" y2=\"" << kH - kBottom
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kH - kBottom
     << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\">" << xlabel << "</text>\n";
  os << "<text x=\"16\" y=\"" << kH / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << kH / 2 << ")\">"
     << ylabel << "</text>\n";
  os << "<text x=\"" << kLeft << "\" y=\"" << kH - kBottom + 16 << "\" text-anchor=\"middle\">" << num(x0) << "</text>\n";
  os << "<text x=\"" << kW - kRight << "\" y=\"" << kH - kBottom + 16 << "\" text-anchor=\"middle\">" << num(x1)
     << "</text>\n";
  os << "<text x=\"" << kLeft - 6 << "\" y=\"" << kH - kBottom << "\" text-anchor=\"end\">" << num(y0) << "</text>\n";
  os << "<text x=\"" << kLeft - 6 << "\" y=\"" << kTop + 4 << "\" text-anchor=\"end\">" << num(y1) << "</text>\n";
}

} // namespace

void write_svg_bars(std::ostream &os, Histogram const &h, std::string const &title, std::string const &xlabel)
{
  double const x0   = h.edges.front();
  double const x1   = h.edges.back();
  double const ymax = std::max<double>(1.0, static_cast<double>(*std::max_element(h.counts.begin(), h.counts.end())));
  svg_frame(os, title, xlabel, "count", x0, x1, 0, ymax);
  double const pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    double const xa = kLeft + pw * (h.edges[i] - x0) / (x1 - x0);
    double const xb = kLeft + pw * (h.edges[i + 1] - x0) / (x1 - x0);
    double const hh = ph * static_cast<double>(h.counts[i]) / ymax;
    os << "<rect x=\"" << num(xa) << "\" y=\"" << num(kH - kBottom - hh) << "\" width=\"" << num(std::max(xb - xa - 1, 1.0))
       << "\" height=\"" << num(hh) << "\" fill=\"steelblue\"/>\n";
  }
  os << "</svg>\n";
}

void write_svg_lines(std::ostream &os, std::vector<SvgSeries> const &series, std::string const &title,
                     std::string const &xlabel, std::string const &ylabel)
{
  static constexpr char const *colors[] = {"steelblue", "darkorange", "seagreen", "firebrick", "purple", "gray"};
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (auto const &s : series) {
    for (double x : s.x) { x0 = std::min(x0, x), x1 = std::max(x1, x); }
    for (double y : s.y) { y0 = std::min(y0, y), y1 = std::max(y1, y); }
  }
  if (!(x1 > x0)) { x1 = x0 + 1; }
  if (!(y1 > y0)) { y1 = y0 + 1; }
  y0 = std::min(y0, 0.0);
  svg_frame(os, title, xlabel, ylabel, x0, x1, y0, y1);
  double const pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  for (std::size_t k = 0; k < series.size(); ++k) {
    auto const &s = series[k];
    os << "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" << colors[k % 6] << "\" points=\"";
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      os << (i ? " " : "") << num(kLeft + pw * (s.x[i] - x0) / (x1 - x0)) << ','
         << num(kH - kBottom - ph * (s.y[i] - y0) / (y1 - y0));
    }
    os << "\"/>\n";
    os << "<text x=\"" << kW - kRight - 4 << "\" y=\"" << kTop + 16 * static_cast<double>(k) << "\" text-anchor=\"end\" fill=\""
       << colors[k % 6] << "\">" << s.name << "</text>\n";
  }
  os << "</svg>\n";
}

} // namespace bdlab
