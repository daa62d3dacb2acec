#include "hrl/envs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "hrl/error.hpp"
#include "hrl/rng.hpp"

namespace hrl::envs {

LockSpec lock_new(std::int64_t horizon, std::uint64_t seed) {
  if (horizon < 2 || horizon > kMaxLockHorizon) {
    throw Error(ErrorKind::invalid_horizon,
                "lock horizon must lie in [2, 2^24], got " + std::to_string(horizon));
  }
  LockSpec spec;
  spec.horizon = static_cast<int>(horizon);
  spec.seed = seed;
  spec.state_dim = 0;
  while ((std::int64_t{1} << spec.state_dim) < horizon) ++spec.state_dim;
  Rng rng(seed);
  spec.answers.resize(static_cast<std::size_t>(horizon - 1));
  for (auto& a : spec.answers) a = static_cast<std::uint8_t>(rng.next_u64() >> 63);
  return spec;
}

LockState lock_reset(const LockSpec& spec) { return {0, spec.horizon == 1}; }

LockTransition lock_step(const LockSpec& spec, LockState state, int action) {
  if (state.done || state.index == spec.horizon - 1) {
    throw Error(ErrorKind::episode_finished, "lock episode already reached the goal");
  }
  if (state.index < 0 || state.index >= spec.horizon) {
    throw Error(ErrorKind::invalid_state, "lock index out of range");
  }
  if (action != 0 && action != 1) {
    throw Error(ErrorKind::invalid_argument, "lock action must be 0 or 1");
  }
  const int next = action == spec.answers[static_cast<std::size_t>(state.index)] ? state.index + 1 : 0;
  const bool done = next == spec.horizon - 1;
  return {{next, done}, -1.0, done};
}

void lock_encode_into(const LockSpec& spec, int index, std::span<float> out) {
  if (index < 0 || index >= spec.horizon) {
    throw Error(ErrorKind::invalid_state, "lock index " + std::to_string(index) + " out of range");
  }
  if (out.size() != static_cast<std::size_t>(spec.state_dim)) {
    throw Error(ErrorKind::contract, "lock encoding buffer has wrong width");
  }
  for (int b = 0; b < spec.state_dim; ++b) out[static_cast<std::size_t>(b)] = static_cast<float>((index >> b) & 1);
}

std::vector<float> lock_encode(const LockSpec& spec, int index) {
  std::vector<float> code(static_cast<std::size_t>(spec.state_dim));
  lock_encode_into(spec, index, code);
  return code;
}

int lock_decode(std::span<const float> code) {
  int index = 0;
  for (std::size_t b = 0; b < code.size(); ++b) {
    if (code[b] > 0.5f) index |= 1 << b;
  }
  return index;
}

// ---------------------------------------------------------------------------

namespace {

struct Layout {
  std::string_view id;
  std::vector<std::string> rows;
};

const std::vector<Layout>& layouts() {
  static const std::vector<Layout> table = {
      {"corridor-s",
       {
           "########",
           "#......#",
           "######.#",
           "#......#",
           "#.######",
           "#......#",
           "######.#",
           "########",
       }},
      {"rooms-4",
       {
           "###########",
           "#....#....#",
           "#....#....#",
           "#.........#",
           "#....#....#",
           "##.####.###",
           "#....#....#",
           "#....#....#",
           "#.........#",
           "#....#....#",
           "###########",
       }},
      {"spiral",
       {
           "#############",
           "#...........#",
           "#.#########.#",
           "#.#.......#.#",
           "#.#.#####.#.#",
           "#.#.#...#.#.#",
           "#.#.#.#.#.#.#",
           "#.#.#.###.#.#",
           "#.#.#.....#.#",
           "#.#.#######.#",
           "#.#.........#",
           "#.###########",
           "#############",
       }},
  };
  return table;
}

// Keeps positions strictly inside a cell after a wall contact.
constexpr double kSkin = 1e-4;

}  // namespace

std::vector<std::string_view> maze_layout_ids() {
  std::vector<std::string_view> ids;
  for (const auto& l : layouts()) ids.push_back(l.id);
  return ids;
}

std::vector<std::string> maze_layout_rows(std::string_view id) {
  for (const auto& l : layouts()) {
    if (l.id == id) return l.rows;
  }
  throw Error(ErrorKind::invalid_layout, "unknown maze layout '" + std::string(id) + "'");
}

bool MazeSpec::is_wall(int row, int col) const {
  if (row < 0 || col < 0 || row >= rows || col >= cols) return true;
  return wall[static_cast<std::size_t>(row * cols + col)] != 0;
}

Cell MazeSpec::cell_of(const Vec2& pos) const {
  return {static_cast<int>(std::floor(pos[1] / cell_size)), static_cast<int>(std::floor(pos[0] / cell_size))};
}

Vec2 MazeSpec::center_of(Cell c) const { return {(c.col + 0.5) * cell_size, (c.row + 0.5) * cell_size}; }

std::vector<Cell> MazeSpec::free_cells() const {
  std::vector<Cell> out;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (!is_wall(r, c)) out.push_back({r, c});
    }
  }
  return out;
}

MazeSpec maze_from_rows(std::string_view name, const std::vector<std::string>& rows, std::uint64_t seed,
                        const MazeOverrides& o) {
  if (rows.empty() || rows.front().empty()) throw Error(ErrorKind::invalid_layout, "empty layout");
  MazeSpec spec;
  spec.layout = std::string(name);
  spec.rows = static_cast<int>(rows.size());
  spec.cols = static_cast<int>(rows.front().size());
  spec.seed = seed;
  spec.cell_size = o.cell_size;
  spec.action_bound = o.action_bound;
  spec.goal_tol = o.goal_tol;
  spec.max_episode_steps = o.max_episode_steps;
  if (!(spec.cell_size > 0.0) || !(spec.goal_tol > 0.0) || !(spec.goal_tol < spec.cell_size / 2) ||
      !(spec.action_bound > 0.0) || !(spec.action_bound <= spec.cell_size) || spec.max_episode_steps < 1) {
    throw Error(ErrorKind::invalid_layout, "maze tolerances violate 0 < goal_tol < cell_size/2, 0 < d_max <= cell_size");
  }
  for (const auto& row : rows) {
    if (static_cast<int>(row.size()) != spec.cols) throw Error(ErrorKind::invalid_layout, "ragged layout rows");
    for (char ch : row) {
      if (ch != '#' && ch != '.') throw Error(ErrorKind::invalid_layout, "layout characters must be '#' or '.'");
      spec.wall.push_back(ch == '#' ? 1 : 0);
    }
  }
  const auto free = spec.free_cells();
  if (free.empty()) throw Error(ErrorKind::invalid_layout, "layout has no free cells");
  std::vector<std::uint8_t> seen(spec.wall.size(), 0);
  std::deque<Cell> queue{free.front()};
  seen[static_cast<std::size_t>(free.front().row * spec.cols + free.front().col)] = 1;
  std::size_t visited = 1;
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    for (const auto& [dr, dc] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
      const Cell n{c.row + dr, c.col + dc};
      if (spec.is_wall(n.row, n.col)) continue;
      auto& s = seen[static_cast<std::size_t>(n.row * spec.cols + n.col)];
      if (s) continue;
      s = 1;
      ++visited;
      queue.push_back(n);
    }
  }
  if (visited != free.size()) {
    throw Error(ErrorKind::invalid_layout, "free cells of '" + spec.layout + "' are not connected");
  }
  return spec;
}

MazeSpec maze_new(std::string_view layout, std::uint64_t seed, const MazeOverrides& o) {
  return maze_from_rows(layout, maze_layout_rows(layout), seed, o);
}

bool maze_contains(const MazeSpec& spec, const Vec2& pos) {
  if (!std::isfinite(pos[0]) || !std::isfinite(pos[1])) return false;
  return spec.is_free(spec.cell_of(pos));
}

namespace {

// Moves one coordinate by `delta`, stopping just short of the boundary of the
// current cell when the destination cell is a wall.
double advance_axis(const MazeSpec& spec, const Vec2& pos, int axis, double delta) {
  Vec2 cand = pos;
  cand[static_cast<std::size_t>(axis)] += delta;
  if (maze_contains(spec, cand)) return cand[static_cast<std::size_t>(axis)];
  const double cs = spec.cell_size;
  const double cur = pos[static_cast<std::size_t>(axis)];
  const double base = std::floor(cur / cs) * cs;
  const double skin = kSkin * cs;
  return delta > 0 ? base + cs - skin : base + skin;
}

}  // namespace

MazeState maze_step(const MazeSpec& spec, const MazeState& state, const Vec2& action) {
  const double d = spec.action_bound;
  const double dx = std::clamp(std::isfinite(action[0]) ? action[0] : 0.0, -d, d);
  const double dy = std::clamp(std::isfinite(action[1]) ? action[1] : 0.0, -d, d);
  Vec2 pos = state.pos;
  pos[0] = advance_axis(spec, pos, 0, dx);
  pos[1] = advance_axis(spec, pos, 1, dy);
  return {pos};
}

bool reached(const MazeSpec& spec, const Vec2& s, const Vec2& g) {
  const double dx = s[0] - g[0];
  const double dy = s[1] - g[1];
  return dx * dx + dy * dy <= spec.goal_tol * spec.goal_tol;
}

}  // namespace hrl::envs
