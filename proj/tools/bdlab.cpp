// Command-line driver for the experiment pipeline.
#include "bdlab/checkpoint.hpp"
#include "bdlab/harness.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace bdlab;

namespace {

enum Exit
{
  kOk         = 0,
  kUsage      = 1,
  kValidation = 2,
  kRuntime    = 3,
};

struct Common
{
  std::string                config;
  std::string                out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> scale;
  std::optional<unsigned>    threads;
};

ExperimentConfig resolve(Common const &c)
{
  std::optional<Scale> scale;
  if (c.scale) { scale = parse_scale(*c.scale); }
  ExperimentConfig cfg = c.config.empty() ? default_config(scale.value_or(Scale::Desk)) : load_config(c.config, scale);
  if (!c.out.empty()) { cfg.out = c.out; }
  if (c.seed) { cfg.seed = *c.seed; }
  if (c.threads) { cfg.threads = *c.threads; }
  cfg.train.threads  = cfg.threads;
  cfg.search.threads = cfg.threads;
  cfg.validate();
  fs::create_directories(cfg.out);
  return cfg;
}

fs::path artifact(ExperimentConfig const &cfg, char const *name) { return cfg.out / name; }

fs::path require(fs::path const &p, char const *hint)
{
  if (!fs::exists(p)) { throw std::runtime_error(p.string() + " not found (run `" + hint + "` first)"); }
  return p;
}

template <typename Fn> void write_file(fs::path const &p, Fn &&fn)
{
  std::ofstream os(p);
  if (!os) { throw std::runtime_error("cannot write " + p.string()); }
  fn(os);
  if (!os) { throw std::runtime_error("write failed: " + p.string()); }
}

Datasets load_datasets(ExperimentConfig const &cfg)
{
  Datasets d;
  d.base        = load_csv(require(artifact(cfg, "base.csv"), "generate").string());
  d.test        = load_csv(require(artifact(cfg, "test.csv"), "generate").string());
  d.attack_test = load_csv(require(artifact(cfg, "attack_test.csv"), "generate").string());
  return d;
}

Mlp<double> load_model(fs::path const &p)
{
  if (checkpoint_scalar(p.string()) == "float") { return load_checkpoint<float>(p.string()).model.cast<double>(); }
  return load_checkpoint<double>(p.string()).model;
}

void save_model(ExperimentConfig const &cfg, fs::path const &p, Mlp<double> const &model)
{
  TrainConfig tc = cfg.train;
  tc.seed        = cfg.order_seed();
  if (cfg.precision == Precision::Single) {
    save_checkpoint(p.string(), Checkpoint<float>{model.cast<float>(), tc});
  } else {
    save_checkpoint(p.string(), Checkpoint<double>{model, tc});
  }
}

void note(std::string const &msg) { std::cerr << msg << '\n'; }

int cmd_generate(ExperimentConfig const &cfg)
{
  Oracle const oracle(cfg.bounds);
  auto const   d    = make_datasets(cfg, oracle);
  auto const   sets = build_attack_sets(cfg.attack, oracle, cfg.attack_seed(), 0);
  save_csv(artifact(cfg, "base.csv").string(), d.base);
  save_csv(artifact(cfg, "test.csv").string(), d.test);
  save_csv(artifact(cfg, "attack_test.csv").string(), d.attack_test);
  save_csv(artifact(cfg, "poison.csv").string(), sets.train_poison);
  std::ostringstream msg;
  msg << "wrote datasets to " << cfg.out.string() << "; rejection acceptance rate "
      << static_cast<double>(d.base.size()) / static_cast<double>(d.base_draws);
  note(msg.str());
  return kOk;
}

int train_cell(ExperimentConfig const &cfg, GridCell cell, char const *model_name, char const *rows_name,
               char const *training_name)
{
  Oracle const oracle(cfg.bounds);
  auto const   data = load_datasets(cfg);
  auto const   t0   = std::chrono::steady_clock::now();
  auto const   r    = run_cell(cfg, data, oracle, cell);
  auto const   secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  save_model(cfg, artifact(cfg, model_name), r.model);
  write_file(artifact(cfg, rows_name), [&](std::ostream &os) { write_result_csv(os, {r.row}); });
  if (training_name) { save_csv(artifact(cfg, training_name).string(), r.training); }
  std::ostringstream msg;
  msg << cell.n_attack << ':' << cell.n_clean << " trained " << r.history.objective.size() << " epochs in " << secs
      << " s; clean mse " << r.row.clean.mse << ", success " << r.row.attack.success_band;
  note(msg.str());
  return kOk;
}

int cmd_train(ExperimentConfig const &cfg) { return train_cell(cfg, {0, 0}, "model_clean.ckpt", "baseline.csv", nullptr); }

int cmd_attack(ExperimentConfig const &cfg)
{
  return train_cell(cfg, {cfg.attack.n_attack, cfg.attack.n_clean}, "model_poisoned.ckpt", "attack.csv",
                    "training_poisoned.csv");
}

struct ModelInputs
{
  std::string model;
  std::string data;
};

std::pair<Mlp<double>, Dataset> load_subject(ExperimentConfig const &cfg, ModelInputs const &in)
{
  fs::path const model = in.model.empty() ? require(artifact(cfg, "model_poisoned.ckpt"), "attack") : fs::path(in.model);
  fs::path const data  = in.data.empty() ? require(artifact(cfg, "training_poisoned.csv"), "attack") : fs::path(in.data);
  return {load_model(model), load_csv(data.string())};
}

int cmd_search(ExperimentConfig const &cfg, ModelInputs const &in)
{
  auto const [model, training] = load_subject(cfg, in);
  Oracle const oracle(cfg.bounds);
  auto const   seeds = select_worst_seeds(model, training, cfg.seed_fraction);
  SearchCost   cost;
  auto const   found = cuckoo_search(model, oracle, seeds, cfg.search, &cost);
  write_file(artifact(cfg, "maximizers.csv"), [&](std::ostream &os) { write_maximizers_csv(os, found); });
  auto const [core, shell] = region_counts(found, cfg.attack);
  std::ostringstream msg;
  msg << seeds.size() << " seeds -> " << found.size() << " maximizers (" << core << " in core, " << shell
      << " in shell), " << cost.oracle_calls << " oracle calls";
  note(msg.str());
  return kOk;
}

int cmd_defend(ExperimentConfig const &cfg, ModelInputs const &in)
{
  auto const [model, training] = load_subject(cfg, in);
  Oracle const oracle(cfg.bounds);
  auto const   test   = load_csv(require(artifact(cfg, "test.csv"), "generate").string());
  auto const   attack = load_csv(require(artifact(cfg, "attack_test.csv"), "generate").string());
  std::optional<std::vector<LocalMaximizer>> found;
  if (fs::exists(artifact(cfg, "maximizers.csv"))) {
    std::ifstream is(artifact(cfg, "maximizers.csv"));
    found = read_maximizers_csv(is);
  }
  auto const d = run_defense(cfg, model, training, test, attack, oracle, found, &std::cerr);
  write_file(artifact(cfg, "defense_report.json"), [&](std::ostream &os) { write_defense_json(os, d, training); });
  write_file(artifact(cfg, "proximal_counts.csv"), [&](std::ostream &os) { write_histogram_csv(os, d.count_histogram); });
  write_file(artifact(cfg, "alpha_sweep.csv"), [&](std::ostream &os) { write_sweep_csv(os, d.sweep); });
  if (cfg.svg) {
    write_file(artifact(cfg, "proximal_counts.svg"), [&](std::ostream &os) {
      write_svg_bars(os, d.count_histogram, "Proximal training samples per maximizer", "proximal count");
    });
  }
  std::ostringstream msg;
  msg << "flagged " << d.detection.flagged.size() << ", |Q| " << d.suspects.q_size << " (" << d.suspects.mislabeled
      << '/' << d.suspects.mislabeled_total << " mislabeled), fpr " << d.suspects.false_positive_rate;
  note(msg.str());
  return kOk;
}

int cmd_grid(ExperimentConfig const &cfg)
{
  Oracle const oracle(cfg.bounds);
  auto const   rows = run_attack_grid(cfg, oracle, &std::cerr);
  write_file(artifact(cfg, "grid.csv"), [&](std::ostream &os) { write_result_csv(os, rows); });
  for (auto const &r : rows) {
    if (r.failed) { return kRuntime; }
  }
  return kOk;
}

int cmd_verify(ExperimentConfig const &cfg, std::size_t points, std::size_t paths, std::size_t steps)
{
  auto const check = verify_oracle(points, paths, steps, cfg.seed, cfg.bounds, cfg.threads);
  write_file(artifact(cfg, "verify_oracle.csv"), [&](std::ostream &os) { write_oracle_csv(os, check); });
  std::ostringstream msg;
  msg << check.outside_3se << " of " << check.rows.size() << " points outside 3 standard errors";
  note(msg.str());
  return check.passed() ? kOk : kValidation;
}

std::string read_text(fs::path const &p)
{
  std::ifstream      is(p);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void csv_as_table(std::ostream &os, std::string const &csv)
{
  std::istringstream is(csv);
  std::string        line;
  bool               header = true;
  while (std::getline(is, line)) {
    if (line.empty()) { continue; }
    std::string row = "| ";
    for (char ch : line) { row += ch == ',' ? std::string(" | ") : std::string(1, ch); }
    os << row << " |\n";
    if (header) {
      os << '|';
      for (std::size_t i = 0, n = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1; i < n; ++i) {
        os << " --- |";
      }
      os << '\n';
      header = false;
    }
  }
  os << '\n';
}

int cmd_report(ExperimentConfig const &cfg)
{
  std::ostringstream md;
  md << "# Experiment report\n\nProfile: " << to_string(cfg.scale) << ", seed " << cfg.seed
     << ". Targets are option values divided by spot.\n\n";
  bool any = false;
  for (auto [file, title] : {std::pair{"baseline.csv", "Baseline"}, std::pair{"attack.csv", "Poisoned model"},
                             std::pair{"grid.csv", "Attack grid"}, std::pair{"alpha_sweep.csv", "Retraining sweep"},
                             std::pair{"verify_oracle.csv", "Oracle check"}}) {
    auto const p = artifact(cfg, file);
    if (!fs::exists(p)) { continue; }
    any = true;
    md << "## " << title << "\n\n";
    csv_as_table(md, read_text(p));
  }
  auto const report = artifact(cfg, "defense_report.json");
  if (fs::exists(report)) {
    any             = true;
    auto const j    = nlohmann::json::parse(read_text(report));
    auto const &b   = j.at("breakdown");
    md << "## Detection\n\n";
    md << "- maximizers: " << j.at("maximizers").size() << ", flagged: " << j.at("flagged").size() << '\n';
    md << "- count threshold: " << j.at("thresholds").at("count_min") << '\n';
    md << "- |Q|: " << b.at("q_size") << " (" << b.at("mislabeled") << " of " << b.at("mislabeled_total")
       << " mislabeled, " << b.at("localizing") << " localizing, " << b.at("clean") << " clean)\n";
    md << "- false positive rate: " << j.at("false_positive_rate") << '\n';
    md << "- best alpha: " << j.at("best_alpha") << "\n\n";

    std::vector<SvgSeries> series(4);
    series[0].name = "attack MSE, Q kept";
    series[1].name = "attack MSE, Q removed";
    series[2].name = "clean MSE, Q kept";
    series[3].name = "clean MSE, Q removed";
    for (auto const &row : j.at("sweep")) {
      std::size_t const k = row.at("removal").get<bool>() ? 1 : 0;
      double const      a = row.at("alpha").get<double>();
      series[k].x.push_back(a);
      series[k].y.push_back(row.at("attack").at("mse").get<double>());
      series[2 + k].x.push_back(a);
      series[2 + k].y.push_back(row.at("clean").at("mse").get<double>());
    }
    if (cfg.svg) {
      write_file(artifact(cfg, "alpha_sweep.svg"),
                 [&](std::ostream &os) { write_svg_lines(os, series, "Retraining sweep", "alpha", "MSE"); });
    }
  }
  if (!any) { throw std::runtime_error("nothing to report in " + cfg.out.string()); }
  write_file(artifact(cfg, "report.md"), [&](std::ostream &os) { os << md.str(); });
  std::cout << md.str();
  return kOk;
}

} // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Backdoor poisoning and defense experiments on an option-pricing regressor"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config, "Experiment config file (key = value)")->check(CLI::ExistingFile);
  app.add_option("--out", common.out, "Output directory (overrides the config)");
  app.add_option("--seed", common.seed, "Master seed (overrides the config)");
  app.add_option("--scale", common.scale, "Profile: desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  app.add_option("--threads", common.threads, "Worker threads")->check(CLI::PositiveNumber);

  auto *generate = app.add_subcommand("generate", "Write base, test, attack-test and poison datasets");
  auto *train    = app.add_subcommand("train", "Train the unpoisoned baseline");
  auto *attack   = app.add_subcommand("attack", "Train on the poisoned set");
  auto *search   = app.add_subcommand("search", "Find local error maximizers of a trained model");
  auto *defend   = app.add_subcommand("defend", "Detect suspects and run the retraining sweep");
  auto *grid     = app.add_subcommand("grid", "Run every (n_attack, n_clean) cell");
  auto *verify   = app.add_subcommand("verify-oracle", "Check the closed-form pricer against Monte Carlo");
  auto *report   = app.add_subcommand("report", "Summarize the artifacts in the output directory");

  ModelInputs inputs;
  for (auto *sub : {search, defend}) {
    sub->add_option("--model", inputs.model, "Checkpoint (default: the poisoned model)")->check(CLI::ExistingFile);
    sub->add_option("--data", inputs.data, "Training set CSV (default: the poisoned set)")->check(CLI::ExistingFile);
  }
  std::size_t points = 50, paths = 1000000, steps = 1000;
  verify->add_option("--points", points, "Random valid points")->capture_default_str();
  verify->add_option("--paths", paths, "Monte Carlo paths per point")->capture_default_str();
  verify->add_option("--steps", steps, "Time steps per path")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (CLI::ParseError const &e) {
    int const rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    auto const cfg = resolve(common);
    if (!*report) {
      write_file(artifact(cfg, "config.txt"), [&](std::ostream &os) { write_config(os, cfg); });
    }
    if (*generate) { return cmd_generate(cfg); }
    if (*train) { return cmd_train(cfg); }
    if (*attack) { return cmd_attack(cfg); }
    if (*search) { return cmd_search(cfg, inputs); }
    if (*defend) { return cmd_defend(cfg, inputs); }
    if (*grid) { return cmd_grid(cfg); }
    if (*verify) { return cmd_verify(cfg, points, paths, steps); }
    if (*report) { return cmd_report(cfg); }
  } catch (ValidationError const &e) {
    std::cerr << "invalid: " << e.what() << '\n';
    return kValidation;
  } catch (std::invalid_argument const &e) {
    std::cerr << "invalid: " << e.what() << '\n';
    return kValidation;
  } catch (std::domain_error const &e) {
    std::cerr << "invalid: " << e.what() << '\n';
    return kValidation;
  } catch (std::exception const &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
