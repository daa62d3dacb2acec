#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "hrl/error.hpp"
#include "hrl/evalkit.hpp"
#include "hrl/runner.hpp"

using namespace hrl;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "hrl_test_runner" / name;
  fs::remove_all(dir);
  return dir;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

const char* kSmokeLock = R"(
[run]
kind = lock-dqn
name = smoke
train_steps = 600
eval_every = 200
seeds = 3,4

[lock]
horizon = 16
dataset_size = 4000
batch = 16
buckets = 4

[dqn]
n = 4
hidden = 16,16
)";

const char* kSmokeMaze = R"(
[run]
kind = maze-agents
name = mz
train_steps = 30
eval_every = 15
seeds = 1

[maze]
layout = corridor-s
num_traj = 20
traj_len = 60
max_steps = 40
methods = fbc,hfbc,sharsa
task_sets = far,adjacent
tasks = 2
episodes = 2

[agent]
n = 4
rs_n = 4
actor_hidden = 16,16
value_hidden = 16,16
batch = 16
)";

std::string error_of(const std::string& text) {
  try {
    run::parse_config(text);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("config parsing") {
  const auto c = run::parse_config(kSmokeLock);
  CHECK(c.kind == run::Kind::lock_dqn);
  CHECK(c.name == "smoke");
  CHECK(c.train_steps == 600);
  CHECK(c.seeds == std::vector<std::uint64_t>{3, 4});
  CHECK(c.lock.horizon == 16);
  CHECK(c.lock.dqn.n == 4);
  CHECK(c.lock.dqn.hidden == std::vector<int>{16, 16});
  CHECK(c.lock.dqn.lr == 3e-4);
  CHECK(c.lock.dqn.tau == 0.005);

  const auto d = run::parse_config("[run]\nkind = maze-agents\n");
  CHECK(d.maze.agent.value_goals.p_cur == 0.2);
  CHECK(d.maze.agent.value_goals.p_traj == 0.5);
  CHECK(d.maze.agent.actor_goals.p_geom == 1.0);
  CHECK(d.maze.agent.lr == 3e-4);
  CHECK(d.maze.agent.flow_steps == 10);

  CHECK(error_of("[lock]\nhorizn = 5\n").find("lock.horizn") != std::string::npos);
  CHECK(error_of("[locks]\nhorizon = 5\n").find("unknown section") != std::string::npos);
  CHECK(error_of("[dqn]\nlr = fast\n").find("dqn.lr") != std::string::npos);
  CHECK(error_of("[dqn]\nhidden = 16,0\n").find("dqn.hidden") != std::string::npos);
  CHECK(error_of("[run]\nseeds = \n").find("run.seeds") != std::string::npos);
  CHECK(error_of("[run]\nkind = chess\n").find("run.kind") != std::string::npos);
  CHECK(error_of("[maze]\nlayout = castle\n").find("maze.layout") != std::string::npos);
  CHECK(error_of("[run]\nkind = maze-agents\n[agent]\nvalue_goals = 0.5,0.5,0.5,0\n").find("agent.value_goals") !=
        std::string::npos);
  CHECK(error_of("[dqn]\ndouble_q = triple\n").find("dqn.double_q") != std::string::npos);
  CHECK(error_of("[lock]\ndataset = 1step\n[dqn]\nn = 4\n").find("lock.dataset") != std::string::npos);
  CHECK(error_of("[sweep]\naxis = colour\n").find("sweep.axis") != std::string::npos);
  CHECK(!error_of("[run]\nkind = maze-agents\n[agent]\nn = 1\n").empty());
}

TEST_CASE("resolved echo reproduces the config") {
  for (const char* text : {kSmokeLock, kSmokeMaze}) {
    const auto c = run::parse_config(text);
    const auto j = run::resolved_json(c);
    CHECK(j["build"].get<std::string>() == run::build_info());
    const auto back = run::config_from_json(j);
    CHECK(run::resolved_json(back) == j);
  }
}

TEST_CASE("exit codes and summaries") {
  CHECK(run::exit_code(ErrorKind::config) == 2);
  CHECK(run::exit_code(ErrorKind::invalid_layout) == 2);
  CHECK(run::exit_code(ErrorKind::numeric) == 3);
  CHECK(run::exit_code(ErrorKind::io) == 4);
  CHECK(run::exit_code(ErrorKind::format) == 4);

  // mean 3, sample sd sqrt(14/3), half-width 1.96 sd / 2.
  const auto s = run::summarize({1, 2, 3, 6});
  const double sd = std::sqrt(14.0 / 3.0);
  CHECK(s.mean == doctest::Approx(3.0));
  CHECK(s.sd == doctest::Approx(sd));
  CHECK(s.ci_lo == doctest::Approx(3.0 - 1.96 * sd / 2.0));
  CHECK(s.ci_hi == doctest::Approx(3.0 + 1.96 * sd / 2.0));
  const auto one = run::summarize({5});
  CHECK(one.ci_lo == 5.0);
  CHECK(one.ci_hi == 5.0);
}

TEST_CASE("zero training steps give one step-0 row per seed") {
  auto c = run::parse_config(kSmokeLock);
  c.train_steps = 0;
  const auto out = scratch("zero");
  const auto groups = run::run(c, out);
  CHECK(groups.size() == 2);
  for (auto seed : {3, 4}) {
    const auto rows = read_csv(out / ("seed_" + std::to_string(seed)) / "metrics.csv");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0][0] == "run_id");
    CHECK(rows[1][1] == "0");
    CHECK(fs::exists(out / ("seed_" + std::to_string(seed)) / "config.json"));
    CHECK(fs::exists(out / ("seed_" + std::to_string(seed)) / "checkpoint" / "q.hrlw"));
  }
  CHECK(read_csv(out / "metrics.csv").size() == 3);
}

TEST_CASE("runs are byte-reproducible") {
  const auto c = run::parse_config(kSmokeLock);
  const auto a = scratch("det_a"), b = scratch("det_b"), e = scratch("det_echo");
  run::run(c, a);
  run::run(c, b, {2, false});
  CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));
  CHECK(slurp(a / "seed_3" / "metrics.csv") == slurp(b / "seed_3" / "metrics.csv"));
  CHECK(read_csv(a / "metrics.csv").size() == 1 + 2 * 4);

  // The per-seed echo alone reproduces that seed.
  run::run(run::load_config(a / "seed_4" / "config.json"), e);
  CHECK(slurp(e / "seed_4" / "metrics.csv") == slurp(a / "seed_4" / "metrics.csv"));

  const auto m = run::parse_config(kSmokeMaze);
  const auto ma = scratch("maze_a"), mb = scratch("maze_b");
  const auto groups = run::run(m, ma);
  run::run(m, mb);
  CHECK(slurp(ma / "metrics.csv") == slurp(mb / "metrics.csv"));
  REQUIRE(groups.size() == 3);
  CHECK(groups[0].run_id == "mz/fbc/s1");
  CHECK(groups[2].run_id == "mz/sharsa/s1");
  const auto rows = read_csv(ma / "metrics.csv");
  CHECK(rows.size() == 1 + 3 * 3);
  CHECK(fs::exists(ma / "seed_1" / "checkpoint" / "manifest.json"));
  CHECK(fs::exists(ma / "seed_1" / "checkpoint" / "q_high.hrlw"));
}

TEST_CASE("numeric blow-up keeps the last good checkpoint") {
  auto c = run::parse_config(kSmokeLock);
  c.seeds = {0};
  c.lock.dqn.lr = 1e30;
  const auto out = scratch("blowup");
  try {
    run::run(c, out);
    FAIL("expected a numeric error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::numeric);
  }
  CHECK(fs::exists(out / "seed_0" / "checkpoint" / "q.hrlw"));
  const auto summary = nlohmann::json::parse(slurp(out / "seed_0" / "summary.json"));
  CHECK(summary["failed"].get<bool>());
  const auto rows = read_csv(out / "seed_0" / "metrics.csv");
  CHECK(rows.size() >= 2);
  CHECK(rows[1][1] == "0");
}

TEST_CASE("sweep aggregates") {
  auto c = run::parse_config(kSmokeLock);
  run::set_value(c, "sweep.axis", "H");
  run::set_value(c, "sweep.values", "8,16");
  run::set_value(c, "sweep.methods", "dqn-1,dqn-n4");
  const auto out = scratch("sweep");
  const auto groups = run::sweep(c, out);
  CHECK(groups.size() == 4);
  const auto rows = read_csv(out / "aggregate.csv");
  REQUIRE(rows.size() == 5);
  CHECK(rows[0][0] == "H");
  CHECK(rows[0][1] == "method");
  CHECK(rows[1][0] == "8");
  CHECK(rows[1][1] == "dqn-1");
  CHECK(rows[4][0] == "16");
  CHECK(rows[4][1] == "dqn-n4");

  // q_error columns: mean, ci_lo, ci_hi, then one per seed.
  std::size_t col = 0;
  for (std::size_t k = 0; k < rows[0].size(); ++k) {
    if (rows[0][k] == "q_error_mean") col = k;
  }
  REQUIRE(col > 0);
  CHECK(rows[0][col + 3] == "q_error_s3");
  CHECK(rows[0][col + 4] == "q_error_s4");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const double x = std::stod(rows[r][col + 3]), y = std::stod(rows[r][col + 4]);
    const double mean = (x + y) / 2.0;
    const double half = 1.96 * std::abs(x - y) / std::sqrt(2.0) / std::sqrt(2.0);
    CHECK(std::stod(rows[r][col]) == doctest::Approx(mean).epsilon(1e-8));
    CHECK(std::stod(rows[r][col + 1]) == doctest::Approx(mean - half).epsilon(1e-8));
    CHECK(std::stod(rows[r][col + 2]) == doctest::Approx(mean + half).epsilon(1e-8));
  }
  CHECK(fs::exists(out / "smoke_H8_dqn-1" / "seed_3" / "metrics.csv"));

  const auto again = scratch("sweep2");
  run::sweep(c, again, {2, false});
  CHECK(slurp(out / "aggregate.csv") == slurp(again / "aggregate.csv"));
}

TEST_CASE("dataset cache") {
  const auto dir = scratch("cache");
  setenv("HRL_CACHE_DIR", dir.c_str(), 1);
  auto c = run::parse_config(kSmokeLock);
  c.lock.data_seed = 99;
  const auto ds = run::dataset_for(c);
  unsetenv("HRL_CACHE_DIR");
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".hrld") {
      ++files;
      const auto back = data::load(e.path());
      CHECK(back.transition_count() == ds->transition_count());
    }
  }
  CHECK(files == 1);
  CHECK(run::dataset_for(c).get() == ds.get());
}
