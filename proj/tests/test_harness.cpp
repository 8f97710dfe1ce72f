#include "bdlab/harness.hpp"

#include "doctest.h"

#include <cstdlib>
#include <set>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

using namespace bdlab;
namespace fs = std::filesystem;

namespace {

ExperimentConfig parse(std::string const &text, std::optional<Scale> scale = std::nullopt)
{
  std::istringstream is(text);
  return parse_config(is, "/tmp/cfgdir", scale);
}

ExperimentConfig tiny()
{
  return parse("n_base = 600\n"
               "n_test = 100\n"
               "n_attack_test = 50\n"
               "widths = 5,8,1\n"
               "precision = double\n"
               "train.optimizer = gd\n"
               "train.batch_size = 0\n"
               "train.initial_step = 0.05\n"
               "train.max_epochs = 5\n"
               "grid = 0:0, 30:20\n");
}

fs::path fresh_dir(std::string const &name)
{
  fs::path const p = fs::temp_directory_path() / ("bdlab_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(fs::path const &p)
{
  std::ifstream      in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(std::string const &args)
{
  std::string const cmd    = std::string(BDLAB_CLI) + " " + args + " >/dev/null 2>&1";
  int const         status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST_SUITE("harness")
{
  TEST_CASE("profiles")
  {
    auto const desk = default_config(Scale::Desk);
    CHECK(desk.n_base == 20000);
    CHECK(desk.widths == std::vector<Eigen::Index>{5, 64, 128, 64, 1});
    CHECK_NOTHROW(desk.validate());
    auto const paper = default_config(Scale::Paper);
    CHECK(paper.n_base == 200000);
    CHECK(paper.widths == std::vector<Eigen::Index>{5, 128, 256, 512, 256, 128, 1});
    CHECK(paper.train.optimizer == Optimizer::GradientDescent);
    CHECK(paper.train.batch_size == 0);
    CHECK(paper.train.initial_step == 0.01);
    CHECK_NOTHROW(paper.validate());
  }

  TEST_CASE("stream seeds are distinct")
  {
    ExperimentConfig c;
    std::set<std::uint64_t> s{c.base_seed(), c.test_seed(), c.attack_seed(), c.init_seed(), c.order_seed()};
    CHECK(s.size() == 5);
  }

  TEST_CASE("config parsing overrides keys and resolves the output directory")
  {
    auto const c = parse("# comment\n"
                         "seed = 42\n"
                         "out = results   # trailing comment\n"
                         "bounds.t = 0.01, 2\n"
                         "train.max_epochs = 7\n"
                         "defense.count_min = 12.5\n"
                         "defense.alphas = 0.5, 0.9, 1\n"
                         "grid = 10:0, 20:5\n");
    CHECK(c.seed == 42);
    CHECK(c.out == fs::path("/tmp/cfgdir/results"));
    CHECK(c.bounds.lo[kT] == 0.01);
    CHECK(c.bounds.hi[kT] == 2);
    CHECK(c.train.max_epochs == 7);
    REQUIRE(c.count_min);
    CHECK(*c.count_min == 12.5);
    CHECK(c.alphas == std::vector<double>{0.5, 0.9, 1});
    REQUIRE(c.grid.size() == 2);
    CHECK(c.grid[1].n_attack == 20);
    CHECK(c.grid[1].n_clean == 5);
  }

  TEST_CASE("scale precedence: override, then file, then desk")
  {
    CHECK(parse("").n_base == 20000);
    CHECK(parse("scale = paper\n").n_base == 200000);
    CHECK(parse("scale = paper\n", Scale::Desk).n_base == 20000);
    CHECK(parse("scale = paper\nn_base = 5\n").n_base == 5);
  }

  TEST_CASE("config echo parses back to the same configuration")
  {
    auto const         c = tiny();
    std::ostringstream os;
    write_config(os, c);
    std::istringstream is(os.str());
    auto const         back = parse_config(is, "/");
    std::ostringstream again;
    write_config(again, back);
    CHECK(again.str() == os.str());
  }

  TEST_CASE("bad configurations raise validation errors")
  {
    CHECK_THROWS_AS(parse("no_such_key = 1\n"), ValidationError);
    CHECK_THROWS_AS(parse("n_base = -3\n"), ValidationError);
    CHECK_THROWS_AS(parse("train.initial_step = abc\n"), ValidationError);
    CHECK_THROWS_AS(parse("widths = 4,8,1\n"), ValidationError);
    CHECK_THROWS_AS(parse("bounds.b = 50, 20\n"), ValidationError);
    CHECK_THROWS_AS(parse("attack.m = 1.0\n"), ValidationError);
    CHECK_THROWS_AS(parse("grid = 10-3\n"), ValidationError);
    CHECK_THROWS_AS(parse("defense.retrain_start = lukewarm\n"), ValidationError);
    CHECK_THROWS_AS(parse("just text\n"), ValidationError);
  }

  TEST_CASE("result csv has the documented header")
  {
    std::ostringstream os;
    write_result_csv(os, {ResultRow{}});
    CHECK(os.str().rfind("n_attack,n_clean,train_mse,train_mae,clean_test_mse,clean_test_mae,clean_frac_under,"
                         "clean_frac_over,attack_frac_under,attack_frac_over,success_band\n",
                         0) == 0);
  }

  TEST_CASE("a small grid runs end to end and nests its poison")
  {
    auto const   c = tiny();
    Oracle const o;
    auto const   data = make_datasets(c, o);
    CHECK(data.base.size() == 600);
    CHECK(data.test.size() == 100);
    CHECK(data.attack_test.size() == 50);
    auto const cell = run_cell(c, data, o, {30, 20});
    CHECK(cell.training.size() == 650);
    CHECK(cell.training.count(Provenance::AttackMislabeled) == 30);
    CHECK(cell.training.count(Provenance::AttackLocalizing) == 20);
    CHECK(cell.history.objective.size() == 5);
    auto const rows = run_attack_grid(c, o);
    REQUIRE(rows.size() == 2);
    CHECK_FALSE(rows[0].failed);
    CHECK(rows[1].n_attack == 30);
    CHECK(rows[1].clean.mse == doctest::Approx(cell.row.clean.mse).epsilon(1e-12));
  }

  TEST_CASE("histogram bins are equal width with a closed last bin")
  {
    auto const h = make_histogram({0, 1, 2, 3, 4}, 4);
    REQUIRE(h.edges.size() == 5);
    CHECK(h.edges.front() == 0);
    CHECK(h.edges.back() == 4);
    CHECK(h.counts == std::vector<std::size_t>{1, 1, 1, 2});
    std::ostringstream os;
    write_histogram_csv(os, h);
    CHECK(os.str().rfind("bin_lo,bin_hi,count\n", 0) == 0);
  }

  TEST_CASE("oracle verification is deterministic and rejects an empty request")
  {
    CHECK_THROWS_AS(verify_oracle(0, 100, 10, 1), ValidationError);
    auto const a = verify_oracle(3, 2000, 20, 7);
    auto const b = verify_oracle(3, 2000, 20, 7);
    REQUIRE(a.rows.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(a.rows[i].mc.estimate == b.rows[i].mc.estimate);
      CHECK(a.rows[i].closed_form == price_down_and_out_put(a.rows[i].point));
    }
    std::ostringstream os;
    write_oracle_csv(os, a);
    CHECK(os.str().rfind("barrier_pct,strike_pct,maturity_years,volatility,rate,closed_form,mc_estimate,"
                         "mc_std_error,z_score\n",
                         0) == 0);
  }

  TEST_CASE("region counts")
  {
    AttackConfig const          a;
    std::vector<LocalMaximizer> ms(3);
    ms[0].point << 0.95, 0.97, 0.5, 0.2, 0.5;
    ms[1].point << 0.95, 0.97, 0.58, 0.28, 0.58;
    ms[2].point << 0.2, 0.5, 0.5, 0.2, 0.5;
    CHECK(region_counts(ms, a) == std::pair<std::size_t, std::size_t>{1, 1});
  }
}

TEST_SUITE("cli")
{
  TEST_CASE("exit codes")
  {
    auto const dir = fresh_dir("cli");
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("") == 1);
    CHECK(run_cli("no-such-command") == 1);
    CHECK(run_cli("generate --seed notanumber") == 1);
    std::ofstream(dir / "bad.cfg") << "unknown_key = 3\n";
    CHECK(run_cli("--config " + (dir / "bad.cfg").string() + " generate") == 2);
    CHECK(run_cli("--out " + dir.string() + " verify-oracle --points 0") == 2);
    CHECK(run_cli("--out " + dir.string() + " search --model " + (dir / "missing.ckpt").string()) == 1);
    std::ofstream(dir / "junk.ckpt") << "not a checkpoint\n";
    CHECK(run_cli("--out " + dir.string() + " search --model " + (dir / "junk.ckpt").string()) == 3);
  }

  TEST_CASE("generate and train write their artifacts")
  {
    auto const dir = fresh_dir("pipeline");
    std::ofstream(dir / "run.cfg") << "n_base = 400\nn_test = 50\nn_attack_test = 20\nwidths = 5,8,1\n"
                                      "train.max_epochs = 3\nattack.n_attack = 20\nattack.n_clean = 10\n"
                                      "out = out\n";
    std::string const cfg = "--config " + (dir / "run.cfg").string();
    REQUIRE(run_cli(cfg + " generate") == 0);
    for (auto f : {"base.csv", "test.csv", "attack_test.csv", "poison.csv", "config.txt"}) {
      CHECK(fs::exists(dir / "out" / f));
    }
    REQUIRE(run_cli(cfg + " train") == 0);
    CHECK(fs::exists(dir / "out" / "model_clean.ckpt"));
    CHECK(fs::exists(dir / "out" / "baseline.csv"));
    auto const first = slurp(dir / "out" / "baseline.csv");
    REQUIRE(run_cli(cfg + " train") == 0);
    CHECK(slurp(dir / "out" / "baseline.csv") == first);
  }
}
