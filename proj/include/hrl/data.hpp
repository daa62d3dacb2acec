#pragma once

#include <cstdint>
#include <filesystem>
#include "json.hpp"
#include <span>
#include <vector>

#include "hrl/envs.hpp"
#include "hrl/nn.hpp"
#include "hrl/rng.hpp"

namespace hrl::data {

enum class EnvKind : std::uint8_t { lock = 0, maze = 1 };

const char* to_string(EnvKind kind);

struct Trajectory {
  std::vector<float> states;   // (length + 1) x state_dim, row-major
  std::vector<float> actions;  // length x action_dim, row-major
  std::uint32_t length = 0;    // number of transitions
  bool terminal = false;       // final state is an absorbing terminal state

  bool operator==(const Trajectory&) const = default;
};

// Immutable offline dataset. Trajectories are stored as-is; a prefix index
// over transition and state counts gives O(log T) uniform anchor sampling and
// O(1) access to any segment once the trajectory is known.
class Dataset {
 public:
  Dataset(EnvKind kind, int state_dim, int action_dim, std::vector<Trajectory> trajectories,
          nlohmann::json meta = nlohmann::json::object());

  EnvKind env_kind() const { return kind_; }
  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }
  const nlohmann::json& meta() const { return meta_; }
  const std::vector<Trajectory>& trajectories() const { return trajs_; }
  std::size_t trajectory_count() const { return trajs_.size(); }
  std::size_t transition_count() const { return transition_prefix_.back(); }
  std::size_t state_count() const { return state_prefix_.back(); }

  std::span<const float> state(std::size_t traj, std::size_t t) const;
  std::span<const float> action(std::size_t traj, std::size_t t) const;

  // k-th transition / stored state in trajectory order -> (trajectory, step).
  std::pair<std::size_t, std::size_t> transition_at(std::size_t k) const;
  std::pair<std::size_t, std::size_t> state_at(std::size_t k) const;

  bool operator==(const Dataset& other) const;

 private:
  EnvKind kind_;
  int state_dim_;
  int action_dim_;
  std::vector<Trajectory> trajs_;
  nlohmann::json meta_;
  std::vector<std::size_t> transition_prefix_;
  std::vector<std::size_t> state_prefix_;
};

// ---------------------------------------------------------------------------
// Generators

Dataset gen_lock_1step(const envs::LockSpec& spec, std::size_t size, std::uint64_t seed);

Dataset gen_lock_nstep(const envs::LockSpec& spec, int n, std::size_t size, std::uint64_t seed);

struct PlayConfig {
  std::size_t num_traj = 0;
  std::size_t traj_len = 0;  // states per trajectory
  double noise_std = 0.0;
  std::uint64_t seed = 0;
};

Dataset gen_maze_play(const envs::MazeSpec& spec, const PlayConfig& cfg);

// Cell-level BFS distances to a target cell; -1 for walls.
std::vector<int> bfs_distance_field(const envs::MazeSpec& spec, envs::Cell target);

// Noise-free waypoint-controller action used by gen_maze_play: head for the
// centre of the BFS-next cell, or the waypoint centre once inside its cell.
envs::Vec2 play_controller_action(const envs::MazeSpec& spec, const std::vector<int>& field,
                                  const envs::Vec2& pos, envs::Cell waypoint);

// ---------------------------------------------------------------------------
// Batches

struct GoalSampleConfig {
  double p_cur = 0.0;
  double p_geom = 1.0;
  double p_traj = 0.0;
  double p_rand = 0.0;
  double geom_discount = 0.99;

  void validate() const;
};

enum class RewardKind { zero_one, minus_one_zero };

const char* to_string(RewardKind kind);
RewardKind reward_kind_from_string(const std::string& s);

// Goal reach predicate on phi_g(s) = s: squared distance <= tolerance^2.
// Tolerance 0 is exact equality (the lock's binary codes).
struct GoalSpace {
  double tolerance = 0.0;
  bool reached(std::span<const float> s, std::span<const float> g) const;
};

// Reward of one lock transition; goal-free batches use it.
inline constexpr float kStepReward = -1.0f;

struct Batch {
  nn::MatF s_h;      // B x state_dim
  nn::MatF a_h;      // B x action_dim
  nn::MatF s_next;   // s_{h+1}
  nn::MatF s_hn;     // s_{h+m}, m = min(n, steps to trajectory end)
  nn::MatF g;        // B x state_dim (empty for goal-free batches)
  nn::VecF reward_sums;
  std::vector<int> effective_n;
  std::vector<int> segment_len;  // m
  nn::VecF done_mask;
  std::vector<std::uint32_t> traj;
  std::vector<std::uint32_t> h;
  // Optional path s_{h+1..h+n-1}, a_{h+1..h+n-1} (zero padded past m).
  nn::MatF mid_states;
  nn::MatF mid_actions;

  std::size_t size() const { return static_cast<std::size_t>(s_h.rows()); }
};

struct BatchRequest {
  std::size_t batch = 256;
  int n = 1;
  double gamma = 1.0;
  bool with_path = false;
};

// Goal-conditioned batch following the p^D mixture.
Batch sample_batch(const Dataset& ds, const BatchRequest& req, const GoalSampleConfig& cfg, RewardKind reward_kind,
                   const GoalSpace& goals, Rng& rng);

// Goal-free n-step segments with the environment's per-step reward.
Batch sample_segments(const Dataset& ds, const BatchRequest& req, Rng& rng);

// ---------------------------------------------------------------------------
// Binary format: "HRLD", u16 version, header, per-trajectory payloads, JSON trailer.

inline constexpr std::uint16_t kDatasetVersion = 1;

void save(const Dataset& ds, const std::filesystem::path& path);
Dataset load(const std::filesystem::path& path);

}  // namespace hrl::data
