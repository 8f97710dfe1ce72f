#pragma once

#include "bdlab/defense.hpp"
#include "bdlab/poisoning.hpp"
#include "bdlab/search.hpp"
#include "bdlab/train.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace bdlab {

enum class Scale
{
  Desk,
  Paper,
};

std::string_view to_string(Scale s);
Scale            parse_scale(std::string_view s);

/// Invalid configuration or input data; the CLI maps it to exit status 2.
class ValidationError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

struct GridCell
{
  std::size_t n_attack = 0;
  std::size_t n_clean  = 0;
};

struct ExperimentConfig
{
  Scale                     scale = Scale::Desk;
  Bounds                    bounds;
  std::size_t               n_base        = 20000;
  std::size_t               n_test        = 1000;
  std::size_t               n_attack_test = 1000;
  std::vector<Eigen::Index> widths{5, 64, 128, 64, 1};
  TrainConfig               train;
  Precision                 precision = Precision::Single;
  AttackConfig              attack; // geometry for every cell; n_attack/n_clean for the single-attack run
  std::vector<GridCell>     grid;
  double                    seed_fraction = 0.1;
  CuckooConfig              search;
  double                    radius = 0.1;
  bool                      spatial_index = false;
  double                    error_pct_min = 95.0;
  std::optional<double>     count_min; // unset: 500 scaled by |training set| / 210000
  std::vector<double>       alphas;
  RetrainStart              retrain_start = RetrainStart::Scratch;
  std::size_t               histogram_bins = 40;
  bool                      svg           = true;
  std::uint64_t             seed          = 1;
  unsigned                  threads       = 1;
  std::filesystem::path     out           = "out";

  /// Seeds of the independent streams, all derived from `seed`.
  std::uint64_t base_seed() const;
  std::uint64_t test_seed() const;
  std::uint64_t attack_seed() const; // shared by all cells, so poison sets nest
  std::uint64_t init_seed() const;
  std::uint64_t order_seed() const;

  void validate() const; // throws ValidationError
};

/// Built-in profile. Desk: 20k/1k/1k rows, 5-64-128-64-1, attack counts at one
/// tenth of the large profile. Paper: 200k/10k/10k rows, 5-128-256-512-256-128-1.
ExperimentConfig default_config(Scale scale);

/// Flat `key = value` text, `#` starts a comment. Lists are comma separated.
/// Starts from the profile named by `scale_override`, else by the file's
/// `scale` key, else desk, and overrides the keys present. A relative `out` is resolved against
/// `base_dir`.
ExperimentConfig parse_config(std::istream &is, std::filesystem::path const &base_dir,
                              std::optional<Scale> scale_override = std::nullopt);
ExperimentConfig load_config(std::filesystem::path const &path, std::optional<Scale> scale_override = std::nullopt);
void             write_config(std::ostream &os, ExperimentConfig const &cfg);

/// Training metrics, clean-test metrics and attack-test metrics of one cell.
struct ResultRow
{
  std::size_t n_attack = 0;
  std::size_t n_clean  = 0;
  Metrics     training;
  Metrics     clean;
  Metrics     attack;
  bool        failed = false;
  std::string error;
};

/// Eleven columns: counts, training and clean-test MSE/MAE, y/z split on both
/// test sets, attack success band.
void write_result_csv(std::ostream &os, std::vector<ResultRow> const &rows);

struct Datasets
{
  Dataset base;
  Dataset test;
  Dataset attack_test; // core rows with true labels
  std::uint64_t base_draws = 0; // cube draws spent on the base set
};

Datasets make_datasets(ExperimentConfig const &cfg, Oracle const &oracle);

struct TrainedCell
{
  ResultRow   row;
  Dataset     training; // base plus poison
  Mlp<double> model;
  TrainHistory history;
};

/// Poisons the base set for one cell, trains from the shared initialization
/// and evaluates.
TrainedCell run_cell(ExperimentConfig const &cfg, Datasets const &data, Oracle const &oracle, GridCell const &cell);

/// Every grid cell; a failing cell is logged to `log` (if given) and marked.
std::vector<ResultRow> run_attack_grid(ExperimentConfig const &cfg, Oracle const &oracle, std::ostream *log = nullptr);

struct Histogram
{
  std::vector<double>      edges; // bins + 1
  std::vector<std::size_t> counts;
};

/// Equal-width bins over [lo, hi]; the last bin is closed.
Histogram make_histogram(std::vector<double> const &values, std::size_t bins);
void      write_histogram_csv(std::ostream &os, Histogram const &h);

struct SweepRow
{
  double  alpha   = 1;
  bool    removal = false;
  Metrics clean;
  Metrics attack;
};

struct DefenseOutcome
{
  DetectionThresholds           thresholds;
  std::vector<LocalMaximizer>   maximizers;
  std::vector<ProximityProfile> profiles;
  Detection                     detection;
  SuspectBreakdown              suspects;
  SearchCost                    search_cost;
  std::size_t                   seeds = 0;
  Metrics                       clean_before, attack_before;
  std::vector<SweepRow>         sweep;
  std::optional<double>         best_alpha; // lowest clean-test MSE among swept alpha < 1 with removal
  Histogram                     count_histogram;
};

/// Seeds from the worst-fit training rows, searches, profiles, detects, then
/// retrains for every alpha with and without Q removed. alpha = 1 reports the
/// given model. `maximizers` skips the search when supplied.
DefenseOutcome run_defense(ExperimentConfig const &cfg, Mlp<double> const &model, Dataset const &training,
                           Dataset const &clean_test, Dataset const &attack_test, Oracle const &oracle,
                           std::optional<std::vector<LocalMaximizer>> maximizers = std::nullopt,
                           std::ostream *log = nullptr);

void write_sweep_csv(std::ostream &os, std::vector<SweepRow> const &rows);
void write_defense_json(std::ostream &os, DefenseOutcome const &d, Dataset const &training);

/// Region-membership counts of maximizers (in core, in shell).
std::pair<std::size_t, std::size_t> region_counts(std::vector<LocalMaximizer> const &maximizers,
                                                  AttackConfig const &attack);

struct OracleCheckRow
{
  RawMarketPoint point;
  double         closed_form = 0;
  McEstimate     mc;
  double         z_score = 0;
};

struct OracleCheck
{
  std::vector<OracleCheckRow> rows;
  std::size_t                 outside_3se = 0;
  bool                        passed() const { return 20 * outside_3se <= rows.size(); }
};

/// Closed form against bridge-corrected Monte Carlo at n valid points.
OracleCheck verify_oracle(std::size_t n_points, std::size_t mc_paths, std::size_t mc_steps, std::uint64_t seed,
                          Bounds const &bounds = {}, unsigned threads = 1);
void        write_oracle_csv(std::ostream &os, OracleCheck const &c);

/// Minimal static line/bar chart.
struct SvgSeries
{
  std::string         name;
  std::vector<double> x, y;
};
void write_svg_bars(std::ostream &os, Histogram const &h, std::string const &title, std::string const &xlabel);
void write_svg_lines(std::ostream &os, std::vector<SvgSeries> const &series, std::string const &title,
                     std::string const &xlabel, std::string const &ylabel);

} // namespace bdlab
