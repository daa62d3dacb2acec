#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hrl::envs {

// ---------------------------------------------------------------------------
// Combination lock: H states in a chain. The answer action advances one step,
// any other action sends the agent back to index 0. Index H-1 is the goal.
// ---------------------------------------------------------------------------

struct LockSpec {
  int horizon = 0;                    // H
  std::vector<std::uint8_t> answers;  // H-1 entries in {0,1}
  std::uint64_t seed = 0;
  int state_dim = 0;  // ceil(log2 H)

  bool operator==(const LockSpec&) const = default;
};

struct LockState {
  int index = 0;
  bool done = false;
};

struct LockTransition {
  LockState next;
  double reward = 0.0;
  bool done = false;
};

inline constexpr int kLockActions = 2;
inline constexpr int kMaxLockHorizon = 1 << 24;

LockSpec lock_new(std::int64_t horizon, std::uint64_t seed);

LockState lock_reset(const LockSpec& spec);

LockTransition lock_step(const LockSpec& spec, LockState state, int action);

// Little-endian binary expansion of `index`, entries in {0, 1}.
std::vector<float> lock_encode(const LockSpec& spec, int index);
void lock_encode_into(const LockSpec& spec, int index, std::span<float> out);

// Inverse of lock_encode. Entries are thresholded at 0.5.
int lock_decode(std::span<const float> code);

// ---------------------------------------------------------------------------
// Point maze: a 2-D point moving inside the free cells of a wall grid.
// Positions are (x, y) with x along columns and y along rows.
// ---------------------------------------------------------------------------

using Vec2 = std::array<double, 2>;

struct Cell {
  int row = 0;
  int col = 0;
  bool operator==(const Cell&) const = default;
};

struct MazeSpec {
  std::string layout;
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> wall;  // row-major, 1 = wall
  double cell_size = 1.0;
  double action_bound = 0.25;  // per-axis max displacement
  double goal_tol = 0.3;
  int max_episode_steps = 400;
  std::uint64_t seed = 0;

  bool is_wall(int row, int col) const;
  bool is_free(Cell c) const { return !is_wall(c.row, c.col); }
  Cell cell_of(const Vec2& pos) const;
  Vec2 center_of(Cell c) const;
  std::vector<Cell> free_cells() const;
  // World bounding box of the grid.
  Vec2 world_min() const { return {0.0, 0.0}; }
  Vec2 world_max() const { return {cols * cell_size, rows * cell_size}; }
};

struct MazeState {
  Vec2 pos{};
};

struct MazeOverrides {
  double cell_size = 1.0;
  double action_bound = 0.25;
  double goal_tol = 0.3;
  int max_episode_steps = 400;
};

std::vector<std::string_view> maze_layout_ids();

// Rows of '#' (wall) and '.' (free) for a built-in layout.
std::vector<std::string> maze_layout_rows(std::string_view id);

MazeSpec maze_new(std::string_view layout, std::uint64_t seed, const MazeOverrides& o = {});

// Builds a spec from explicit rows; validates connectivity and tolerances.
MazeSpec maze_from_rows(std::string_view name, const std::vector<std::string>& rows,
                        std::uint64_t seed, const MazeOverrides& o = {});

bool maze_contains(const MazeSpec& spec, const Vec2& pos);

MazeState maze_step(const MazeSpec& spec, const MazeState& state, const Vec2& action);

bool reached(const MazeSpec& spec, const Vec2& s, const Vec2& g);

}  // namespace hrl::envs
