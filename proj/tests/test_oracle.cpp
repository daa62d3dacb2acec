#include <algorithm>
#include <limits>

#include "doctest.h"
#include "hrl/error.hpp"
#include "hrl/oracle.hpp"

using namespace hrl;
using namespace hrl::oracle;

namespace {

envs::LockSpec fixed_lock(std::vector<std::uint8_t> answers) {
  envs::LockSpec s;
  s.horizon = static_cast<int>(answers.size()) + 1;
  s.answers = std::move(answers);
  while ((1 << s.state_dim) < s.horizon) ++s.state_dim;
  return s;
}

double max_diff(const LockQTable& a, const LockQTable& b) {
  double m = 0.0;
  for (int i = 0; i < a.horizon; ++i) {
    for (int k = 0; k < 2; ++k) m = std::max(m, std::abs(a.at(i, k) - b.at(i, k)));
  }
  return m;
}

}  // namespace

TEST_CASE("lock oracle values") {
  const auto spec = fixed_lock({0, 1, 1});
  const auto q = lock_oracle_q(spec);
  REQUIRE(q.horizon == 4);
  CHECK(q.at(2, 1) == -1.0);
  CHECK(q.at(0, 0) == -3.0);
  CHECK(q.at(1, 1) == -2.0);
  for (int i = 0; i < 3; ++i) CHECK(q.at(i, 1 - spec.answers[static_cast<std::size_t>(i)]) == -4.0);
  CHECK(q.at(3, 0) == 0.0);
  CHECK(q.at(3, 1) == 0.0);
  CHECK(lock_oracle_q(envs::lock_new(2, 9)).at(0, envs::lock_new(2, 9).answers[0]) == -1.0);
}

TEST_CASE("oracle matches the closed form and the Bellman equation") {
  for (int H = 2; H <= 4096; H = H < 64 ? H + 1 : H * 2) {
    const auto spec = envs::lock_new(H, static_cast<std::uint64_t>(H));
    const auto q = lock_oracle_q(spec);
    auto v = [&](int i) { return i == H - 1 ? 0.0 : std::max(q.at(i, 0), q.at(i, 1)); };
    bool closed = true, bellman = true;
    for (int i = 0; i < H - 1; ++i) {
      const int c = spec.answers[static_cast<std::size_t>(i)];
      closed = closed && q.at(i, c) == -(H - 1 - i) && q.at(i, 1 - c) == -H;
      bellman = bellman && q.at(i, c) == -1.0 + v(i + 1) && q.at(i, 1 - c) == -1.0 + v(0);
    }
    CHECK_MESSAGE(closed, "H=" << H);
    CHECK_MESSAGE(bellman, "H=" << H);
  }
}

TEST_CASE("tabular iteration reaches the oracle") {
  const auto s64 = envs::lock_new(64, 1);
  const auto d1 = data::gen_lock_1step(s64, 20000, 2);
  const auto r1 = tabular_q_iteration(s64, d1, 1, 1.0, 1e-12);
  CHECK(max_diff(r1.table, lock_oracle_q(s64)) < 1e-9);
  CHECK(r1.iterations > 1);

  const auto s512 = envs::lock_new(512, 3);
  const auto d64 = data::gen_lock_nstep(s512, 64, 1 << 20, 4);
  const auto r64 = tabular_q_iteration(s512, d64, 64, 1.0, 1e-12);
  CHECK(max_diff(r64.table, lock_oracle_q(s512)) < 1e-9);
}

TEST_CASE("without the greedy cut, wrong-branch segments bias the fixed point") {
  const auto spec = envs::lock_new(32, 5);
  const auto ds = data::gen_lock_nstep(spec, 4, 1 << 16, 6);
  const auto cut = tabular_q_iteration(spec, ds, 4, 1.0, 1e-12, learn::NstepCut::greedy);
  CHECK(max_diff(cut.table, lock_oracle_q(spec)) < 1e-9);
  const auto raw = tabular_q_iteration(spec, ds, 4, 1.0, 1e-12, learn::NstepCut::none);
  CHECK(max_diff(raw.table, lock_oracle_q(spec)) > 1.0);
}

TEST_CASE("tabular iteration edge cases") {
  const auto spec = envs::lock_new(16, 1);
  const auto ds = data::gen_lock_1step(spec, 4000, 2);
  const auto zero = tabular_q_iteration(spec, ds, 1, 1.0, std::numeric_limits<double>::infinity());
  for (int i = 0; i < 16; ++i) {
    CHECK(zero.table.at(i, 0) == 0.0);
    CHECK(zero.table.at(i, 1) == 0.0);
  }
  const auto tiny = data::gen_lock_1step(spec, 5, 2);
  try {
    tabular_q_iteration(spec, tiny, 1, 1.0, 1e-9);
    FAIL("expected a coverage error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::coverage);
    CHECK(std::string(e.what()).find("misses") != std::string::npos);
  }
}

TEST_CASE("maze distances") {
  const auto spec = envs::maze_new("corridor-s", 0);
  const auto d = maze_bfs(spec);
  CHECK(d.cells.size() == 21);
  CHECK(d.max_distance() == 20);
  CHECK(d.at({1, 1}, {6, 6}) == 20);
  CHECK(d.at({1, 1}, {1, 2}) == 1);
  CHECK(d.at({1, 6}, {3, 6}) == 2);

  for (const auto& id : envs::maze_layout_ids()) {
    const auto m = envs::maze_new(id, 0);
    const auto dd = maze_bfs(m);
    const auto n = dd.cells.size();
    bool ok = true;
    for (std::size_t a = 0; a < n; ++a) {
      ok = ok && dd.at(dd.cells[a], dd.cells[a]) == 0;
      for (std::size_t b = 0; b < n; ++b) {
        const auto ab = dd.at(dd.cells[a], dd.cells[b]);
        ok = ok && ab == dd.at(dd.cells[b], dd.cells[a]);
        const int manhattan = std::abs(dd.cells[a].row - dd.cells[b].row) + std::abs(dd.cells[a].col - dd.cells[b].col);
        ok = ok && ab >= manhattan && (manhattan != 1 || ab == 1);
      }
    }
    Rng rng(1);
    for (int k = 0; k < 2000; ++k) {
      const auto& a = dd.cells[rng.below(n)];
      const auto& b = dd.cells[rng.below(n)];
      const auto& c = dd.cells[rng.below(n)];
      ok = ok && dd.at(a, c) <= dd.at(a, b) + dd.at(b, c);
    }
    CHECK_MESSAGE(ok, id);
  }
}
