#pragma once

// Experiment runner: sectioned config files, per-seed training/evaluation
// runs, sweeps over one axis, and the dataset cache.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hrl/agents.hpp"
#include "hrl/error.hpp"
#include "hrl/learners.hpp"
#include "json.hpp"

namespace hrl::run {

enum class Kind { lock_dqn, maze_agents, grad_check, oracle_dump };

const char* to_string(Kind k);

struct LockSettings {
  int horizon = 512;
  std::uint64_t env_seed = 7;
  std::string dataset = "auto";  // auto | 1step | nstep
  int dataset_n = 0;             // 0 -> max(dqn n, 2)
  std::size_t dataset_size = std::size_t{1} << 20;
  std::uint64_t data_seed = 1;
  std::size_t batch = 64;
  int td_batches = 4;
  int buckets = 8;
  learn::DqnConfig dqn;
};

struct MazeSettings {
  std::string layout = "rooms-4";
  double noise_std = 0.1;
  std::size_t num_traj = 400;
  std::size_t traj_len = 501;
  std::uint64_t data_seed = 1;
  int max_steps = 400;
  std::vector<agents::Method> methods{agents::Method::fbc, agents::Method::hfbc, agents::Method::sharsa};
  std::vector<eval::TaskSet> task_sets{eval::TaskSet::far, eval::TaskSet::medium};
  int tasks = 5;
  int episodes = 15;
  agents::AgentConfig agent;
};

struct SweepSettings {
  std::string axis;  // H | n | dataset_size | mlp_width | lr | tau
  std::vector<std::string> values;
  std::vector<std::string> methods;  // dqn-1, dqn-n16, ... or maze methods
};

struct GradCheckSettings {
  std::vector<std::string> losses;  // empty -> all
  std::uint64_t seed = 0;
  double step = 1e-5;
  double tolerance = 1e-4;
};

struct RunConfig {
  Kind kind = Kind::lock_dqn;
  std::string name = "run";
  std::int64_t train_steps = 0;
  std::int64_t eval_every = 0;  // 0 -> only step 0 and the final step
  std::vector<std::uint64_t> seeds{0};
  double final_fraction = 0.2;
  std::string success_window = "all";  // all | final
  std::string output_dir;
  LockSettings lock;
  MazeSettings maze;
  SweepSettings sweep;
  GradCheckSettings grad;
};

// Parses the sectioned key = value format. Unknown sections or keys, bad
// values and inconsistent settings raise ErrorKind::config naming the key.
RunConfig parse_config(const std::string& text);
// Files ending in .json are read as a resolved echo (see resolved_json).
RunConfig load_config(const std::filesystem::path& path);

// Inverse of resolved_json: every section/key goes through set_value.
RunConfig config_from_json(const nlohmann::json& j);

// Applies one "section.key = value" assignment through the same parser.
void set_value(RunConfig& cfg, const std::string& dotted_key, const std::string& value);

// Fully resolved config plus build info.
nlohmann::json resolved_json(const RunConfig& cfg);

std::string build_info();

// Per-group result of one seed (lock: one group; maze: one per method).
struct GroupSummary {
  std::string run_id;
  std::uint64_t seed = 0;
  double success_rate = 0.0;
  double td_error = 0.0;
  double q_error = 0.0;
  std::map<std::string, double> extra;
};

struct RunOptions {
  int workers = 1;
  bool verbose = false;
};

// Trains and evaluates every seed. Each seed writes metrics.csv,
// config.json, summary.json and a checkpoint to out/seed_<k>/. On a numeric
// failure the metrics and the last finite checkpoint stay on disk and the
// error is rethrown after all seeds finished.
std::vector<GroupSummary> run(const RunConfig& cfg, const std::filesystem::path& out, const RunOptions& opt = {});

// Cross product of sweep values and methods; writes aggregate.csv with
// per-seed columns, means and 95% normal intervals.
std::vector<std::vector<GroupSummary>> sweep(const RunConfig& cfg, const std::filesystem::path& out,
                                             const RunOptions& opt = {});

// Dataset for the config: from HRL_CACHE_DIR when present, generated (and
// stored there) otherwise. Shared across threads within one process.
std::shared_ptr<const data::Dataset> dataset_for(const RunConfig& cfg);

// Summary statistics of one column.
struct Stat {
  double mean = 0.0;
  double sd = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};
Stat summarize(const std::vector<double>& xs);

// Process exit code for an error kind: 2 config, 3 numeric, 4 io.
int exit_code(ErrorKind kind);

std::uint64_t fnv1a(const std::string& s);

}  // namespace hrl::run
