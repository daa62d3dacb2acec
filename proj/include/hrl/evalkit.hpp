#pragma once

// Evaluation: lock success / TD error / Q error / per-position error, maze
// rollouts over fixed task sets, and CSV emission.

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "hrl/data.hpp"
#include "hrl/envs.hpp"
#include "hrl/learners.hpp"
#include "hrl/oracle.hpp"

namespace hrl::eval {

// Predicted Q over every lock index, read from the learner's online net.
oracle::LockQTable lock_q_snapshot(const learn::DqnLearner& learner, const envs::LockSpec& spec);

// Greedy rollout from index 0 for at most 2H steps (ties -> action 0).
double eval_lock_success(const envs::LockSpec& spec, const oracle::LockQTable& q, int episodes = 1);
double eval_lock_success(const envs::LockSpec& spec, const learn::DqnLearner& learner, int episodes = 1);

// Mean |Q - Q*| over the 2(H-1) non-terminal pairs.
double q_error(const oracle::LockQTable& q, const oracle::LockQTable& oracle);
double q_error(const learn::DqnLearner& learner, const oracle::LockQTable& oracle, const envs::LockSpec& spec);

// Mean TD loss of the learner over fresh segment batches; no updates.
double td_error(const learn::DqnLearner& learner, const data::Dataset& ds, const data::BatchRequest& req,
                int batches, Rng& rng);

// Buckets over distance-to-goal d = H-1-i in [1, H-1], split into
// `bucket_count` equal ranges ordered near -> far; mean |Q - Q*| per bucket.
std::vector<double> per_position_q_error(const oracle::LockQTable& q, const oracle::LockQTable& oracle,
                                         int bucket_count);

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// ---------------------------------------------------------------------------
// Maze

struct MazeTask {
  envs::Vec2 start{};
  envs::Vec2 goal{};
  int distance = 0;  // BFS cells between start and goal cell
};

enum class TaskSet { adjacent, medium, far };

TaskSet task_set_from_string(const std::string& s);
const char* to_string(TaskSet t);

// Deterministic task list over cell centres:
//   adjacent: BFS distance 1; medium: distance in [0.35, 0.65] * max;
//   far: distance >= 0.85 * max.
// Pairs are ordered by (distance, start, goal) and `count` of them are taken
// at evenly spaced positions.
std::vector<MazeTask> maze_tasks(const envs::MazeSpec& spec, TaskSet set, int count);

// Batched acting: rows of `s` and `g` are independent episodes; `t` is the
// per-episode step index. Returns one action per row.
using BatchActFn =
    std::function<nn::MatF(const nn::MatF& s, const nn::MatF& g, const std::vector<int>& t, Rng& rng)>;

struct MazeEvalResult {
  double success_rate = 0.0;
  std::vector<double> per_task;  // success fraction per task
  double mean_steps_success = 0.0;
};

// Every task is run `episodes_per_task` times; all episodes step together.
// Finished episodes stop moving but stay in the batch so the RNG stream
// consumed per step does not depend on which episodes finished.
MazeEvalResult eval_maze_success(const envs::MazeSpec& spec, const BatchActFn& act,
                                 const std::vector<MazeTask>& tasks, int episodes_per_task, int max_steps, Rng& rng);

// Noise-free BFS-following controller, batched.
BatchActFn bfs_controller(const envs::MazeSpec& spec);

// ---------------------------------------------------------------------------
// Metrics CSV

struct MetricsRow {
  std::string run_id;
  std::int64_t step = 0;
  double success_rate = 0.0;
  double td_error = 0.0;
  double q_error = 0.0;
  std::map<std::string, double> extra;
};

// Header run_id,step,success_rate,td_error,q_error followed by the sorted
// union of extra keys; %.9g floats; written via a temp file and rename.
void write_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path);

std::string format_double(double v);

// Atomic text write shared by every artifact writer.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace hrl::eval
