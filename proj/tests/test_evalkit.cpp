#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "hrl/error.hpp"
#include "hrl/evalkit.hpp"

using namespace hrl;
using namespace hrl::eval;
using nn::MatF;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "hrl_test_evalkit";
  std::filesystem::create_directories(dir);
  return dir / name;
}

oracle::LockQTable zeros(int H) { return {H, std::vector<std::array<double, 2>>(static_cast<std::size_t>(H))}; }

}  // namespace

TEST_CASE("lock success") {
  const auto spec = envs::lock_new(512, 11);
  CHECK(eval_lock_success(spec, oracle::lock_oracle_q(spec)) == 1.0);
  CHECK(eval_lock_success(spec, zeros(512), 3) == 0.0);

  learn::DqnConfig c;
  c.state_dim = spec.state_dim;
  c.horizon = spec.horizon;
  c.hidden = {16};
  const learn::DqnLearner q(c);
  const double r = eval_lock_success(spec, q);
  CHECK((r == 0.0 || r == 1.0));
}

TEST_CASE("q error") {
  envs::LockSpec spec;
  spec.horizon = 4;
  spec.state_dim = 2;
  spec.answers = {0, 1, 1};
  const auto star = oracle::lock_oracle_q(spec);
  CHECK(q_error(star, star) == 0.0);
  CHECK(q_error(zeros(4), star) == doctest::Approx(3.0));

  // Order invariance: permuting which action is "correct" leaves the set of
  // absolute errors unchanged for a zero table.
  spec.answers = {1, 0, 0};
  CHECK(q_error(zeros(4), oracle::lock_oracle_q(spec)) == doctest::Approx(3.0));
}

TEST_CASE("per-position buckets") {
  const auto spec = envs::lock_new(64, 2);
  const auto star = oracle::lock_oracle_q(spec);
  for (double v : per_position_q_error(star, star, 8)) CHECK(v == 0.0);

  const auto z = zeros(64);
  const auto one = per_position_q_error(z, star, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == doctest::Approx(q_error(z, star)));

  // Zero table: error at distance d is (d + H) / 2; bucket means follow.
  const int H = 64, B = 9;
  const auto got = per_position_q_error(z, star, B);
  std::vector<double> sum(B, 0.0);
  std::vector<int> cnt(B, 0);
  for (int d = 1; d <= H - 1; ++d) {
    const int b = (d - 1) * B / (H - 1);
    sum[static_cast<std::size_t>(b)] += (d + H) / 2.0;
    ++cnt[static_cast<std::size_t>(b)];
  }
  int total = 0;
  for (int b = 0; b < B; ++b) {
    total += cnt[static_cast<std::size_t>(b)];
    CHECK(got[static_cast<std::size_t>(b)] == doctest::Approx(sum[static_cast<std::size_t>(b)] / cnt[static_cast<std::size_t>(b)]));
  }
  CHECK(total == H - 1);
  for (int b = 1; b < B; ++b) CHECK(got[static_cast<std::size_t>(b)] > got[static_cast<std::size_t>(b - 1)]);
}

TEST_CASE("spearman") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(spearman({1, 2, 3, 4}, {1, 100, 2, 3}) == doctest::Approx(0.4));
  // Ties take average ranks: ranks y = (1.5, 1.5, 3, 4).
  CHECK(spearman({1, 2, 3, 4}, {5, 5, 6, 7}) == doctest::Approx(0.9486832981).epsilon(1e-9));
}

TEST_CASE("td error matches the training loss and does not mutate") {
  const auto spec = envs::lock_new(32, 1);
  learn::DqnConfig c;
  c.state_dim = spec.state_dim;
  c.horizon = spec.horizon;
  c.hidden = {16, 16};
  learn::DqnLearner a(c), b(c);
  const auto ds = data::gen_lock_1step(spec, 2000, 3);
  data::BatchRequest req;
  req.batch = 32;
  Rng r1(7), r2(7);
  const auto before = nn::checksum(a.online());
  const double td = td_error(a, ds, req, 1, r1);
  CHECK(nn::checksum(a.online()) == before);
  CHECK(td == doctest::Approx(b.update(data::sample_segments(ds, req, r2))).epsilon(1e-6));
  Rng r3(8);
  CHECK(std::isfinite(td_error(a, ds, req, 4, r3)));
  CHECK(nn::checksum(a.online()) == before);
  CHECK(q_error(a, oracle::lock_oracle_q(spec), spec) == q_error(lock_q_snapshot(a, spec), oracle::lock_oracle_q(spec)));
}

TEST_CASE("maze tasks") {
  const auto spec = envs::maze_new("rooms-4", 0);
  const auto dist = oracle::maze_bfs(spec);
  const int maxd = dist.max_distance();
  for (auto set : {TaskSet::adjacent, TaskSet::medium, TaskSet::far}) {
    CHECK(task_set_from_string(to_string(set)) == set);
    const auto tasks = maze_tasks(spec, set, 10);
    CHECK(tasks.size() == 10);
    for (const auto& t : tasks) {
      const int d = dist.at(spec.cell_of(t.start), spec.cell_of(t.goal));
      CHECK(d == t.distance);
      if (set == TaskSet::adjacent) CHECK(d == 1);
      if (set == TaskSet::medium) CHECK((d >= 0.35 * maxd && d <= 0.65 * maxd));
      if (set == TaskSet::far) CHECK(d >= 0.85 * maxd);
    }
  }
  CHECK(maze_tasks(spec, TaskSet::far, 3).front().distance <= maze_tasks(spec, TaskSet::far, 3).back().distance);
  CHECK_THROWS_AS(task_set_from_string("near"), Error);
}

TEST_CASE("maze success") {
  for (const auto& id : envs::maze_layout_ids()) {
    const auto spec = envs::maze_new(id, 0);
    const auto tasks = maze_tasks(spec, TaskSet::far, 5);
    Rng rng(1);
    const auto bfs = eval_maze_success(spec, bfs_controller(spec), tasks, 3, spec.max_episode_steps, rng);
    CHECK_MESSAGE(bfs.success_rate == 1.0, id);
    CHECK(bfs.per_task.size() == tasks.size());
    CHECK(bfs.mean_steps_success > 0.0);

    const BatchActFn still = [](const MatF& s, const MatF&, const std::vector<int>&, Rng&) {
      return MatF(MatF::Zero(s.rows(), 2));
    };
    CHECK(eval_maze_success(spec, still, tasks, 2, 100, rng).success_rate == 0.0);

    auto same = tasks;
    for (auto& t : same) t.goal = t.start;
    CHECK(eval_maze_success(spec, still, same, 2, 100, rng).success_rate == 1.0);
  }
}

TEST_CASE("metrics csv") {
  const auto p = scratch("empty.csv");
  write_csv({}, p);
  CHECK(slurp(p) == "run_id,step,success_rate,td_error,q_error\n");

  std::vector<MetricsRow> rows(2);
  rows[0] = {"a", 0, 1.0 / 3.0, 0.5, 2.0, {{"zeta", 1.0}, {"alpha", 0.25}}};
  rows[1] = {"a", 100, 1.0, 1e-12, 123456789.125, {{"alpha", -2.0}}};
  const auto q = scratch("rows.csv");
  write_csv(rows, q);
  CHECK(slurp(q) ==
        "run_id,step,success_rate,td_error,q_error,alpha,zeta\n"
        "a,0,0.333333333,0.5,2,0.25,1\n"
        "a,100,1,1e-12,123456789,-2,\n");
  CHECK(!std::filesystem::exists(q.string() + ".tmp"));
  CHECK(format_double(0.1) == "0.1");
  CHECK_THROWS_AS(write_csv(rows, "/nonexistent-dir/x/metrics.csv"), Error);
}
