#pragma once

// Exact ground truth: backward-induction Q* for the lock, empirical tabular
// Q-iteration on a lock dataset, and all-pairs BFS distances on a maze.

#include <array>
#include <vector>

#include "hrl/data.hpp"
#include "hrl/envs.hpp"
#include "hrl/learners.hpp"

namespace hrl::oracle {

// H x 2 table; the terminal row H-1 is stored as 0.
struct LockQTable {
  int horizon = 0;
  std::vector<std::array<double, 2>> q;

  double at(int index, int action) const { return q[static_cast<std::size_t>(index)][static_cast<std::size_t>(action)]; }
};

LockQTable lock_oracle_q(const envs::LockSpec& spec);

struct TabularResult {
  LockQTable table;
  int iterations = 0;
};

// Jacobi iteration of the empirical n-step Bellman optimality backup over the
// distinct segments of `ds`. Every segment start contributes one backup sample
// for its (state, action) pair; the target of a pair is the mean over its
// samples. With the greedy cut, a segment is truncated at the first later
// step whose action is not greedy under the current table.
TabularResult tabular_q_iteration(const envs::LockSpec& spec, const data::Dataset& ds, int n, double gamma,
                                  double tol, learn::NstepCut cut = learn::NstepCut::greedy,
                                  int max_iterations = 1000000);

// All-pairs step counts between free cells (4-neighbourhood).
struct MazeDistances {
  int rows = 0;
  int cols = 0;
  std::vector<envs::Cell> cells;  // free cells in row-major order
  std::vector<int> index_of;      // rows*cols -> index into cells, -1 for walls
  std::vector<int> dist;          // cells x cells

  int at(envs::Cell a, envs::Cell b) const;
  int max_distance() const;
};

MazeDistances maze_bfs(const envs::MazeSpec& spec);

}  // namespace hrl::oracle
