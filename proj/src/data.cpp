#include "hrl/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <iterator>

#include "hrl/error.hpp"

namespace hrl::data {

const char* to_string(EnvKind kind) { return kind == EnvKind::lock ? "lock" : "maze"; }

const char* to_string(RewardKind kind) { return kind == RewardKind::zero_one ? "zero-one" : "minus-one-zero"; }

RewardKind reward_kind_from_string(const std::string& s) {
  if (s == "zero-one") return RewardKind::zero_one;
  if (s == "minus-one-zero") return RewardKind::minus_one_zero;
  throw Error(ErrorKind::config, "unknown reward kind '" + s + "'");
}

Dataset::Dataset(EnvKind kind, int state_dim, int action_dim, std::vector<Trajectory> trajectories,
                 nlohmann::json meta)
    : kind_(kind), state_dim_(state_dim), action_dim_(action_dim), trajs_(std::move(trajectories)),
      meta_(std::move(meta)) {
  if (state_dim_ <= 0 || action_dim_ <= 0) throw Error(ErrorKind::invalid_argument, "dataset dims must be positive");
  transition_prefix_.reserve(trajs_.size() + 1);
  state_prefix_.reserve(trajs_.size() + 1);
  transition_prefix_.push_back(0);
  state_prefix_.push_back(0);
  for (const auto& t : trajs_) {
    if (t.length < 1) throw Error(ErrorKind::invalid_argument, "trajectory without transitions");
    if (t.states.size() != (t.length + 1) * static_cast<std::size_t>(state_dim_) ||
        t.actions.size() != t.length * static_cast<std::size_t>(action_dim_)) {
      throw Error(ErrorKind::invalid_argument, "trajectory arrays do not match length and dims");
    }
    transition_prefix_.push_back(transition_prefix_.back() + t.length);
    state_prefix_.push_back(state_prefix_.back() + t.length + 1);
  }
}

std::span<const float> Dataset::state(std::size_t traj, std::size_t t) const {
  const auto& tr = trajs_[traj];
  return {tr.states.data() + t * static_cast<std::size_t>(state_dim_), static_cast<std::size_t>(state_dim_)};
}

std::span<const float> Dataset::action(std::size_t traj, std::size_t t) const {
  const auto& tr = trajs_[traj];
  return {tr.actions.data() + t * static_cast<std::size_t>(action_dim_), static_cast<std::size_t>(action_dim_)};
}

std::pair<std::size_t, std::size_t> Dataset::transition_at(std::size_t k) const {
  const auto it = std::upper_bound(transition_prefix_.begin(), transition_prefix_.end(), k);
  const auto traj = static_cast<std::size_t>(std::distance(transition_prefix_.begin(), it)) - 1;
  return {traj, k - transition_prefix_[traj]};
}

std::pair<std::size_t, std::size_t> Dataset::state_at(std::size_t k) const {
  const auto it = std::upper_bound(state_prefix_.begin(), state_prefix_.end(), k);
  const auto traj = static_cast<std::size_t>(std::distance(state_prefix_.begin(), it)) - 1;
  return {traj, k - state_prefix_[traj]};
}

bool Dataset::operator==(const Dataset& other) const {
  return kind_ == other.kind_ && state_dim_ == other.state_dim_ && action_dim_ == other.action_dim_ &&
         trajs_ == other.trajs_ && meta_ == other.meta_;
}

// ---------------------------------------------------------------------------

namespace {

void append_lock_state(const envs::LockSpec& spec, int index, std::vector<float>& out) {
  const auto old = out.size();
  out.resize(old + static_cast<std::size_t>(spec.state_dim));
  envs::lock_encode_into(spec, index, std::span<float>(out).subspan(old));
}

nlohmann::json lock_meta(const envs::LockSpec& spec, const char* generator, std::size_t size, std::uint64_t seed) {
  return {{"generator", generator}, {"horizon", spec.horizon}, {"lock_seed", spec.seed}, {"size", size},
          {"seed", seed}};
}

}  // namespace

Dataset gen_lock_1step(const envs::LockSpec& spec, std::size_t size, std::uint64_t seed) {
  if (size < 1) throw Error(ErrorKind::invalid_size, "dataset size must be at least 1");
  Rng rng(seed);
  const auto tuples = static_cast<std::uint64_t>(2 * (spec.horizon - 1));
  std::vector<Trajectory> trajs(size);
  for (auto& t : trajs) {
    const auto k = rng.below(tuples);
    const int index = static_cast<int>(k / 2);
    const int action = static_cast<int>(k % 2);
    const auto step = envs::lock_step(spec, {index, false}, action);
    t.length = 1;
    append_lock_state(spec, index, t.states);
    append_lock_state(spec, step.next.index, t.states);
    t.actions.push_back(static_cast<float>(action));
    t.terminal = step.done;
  }
  return Dataset(EnvKind::lock, spec.state_dim, 1, std::move(trajs), lock_meta(spec, "lock-1step", size, seed));
}

Dataset gen_lock_nstep(const envs::LockSpec& spec, int n, std::size_t size, std::uint64_t seed) {
  if (n < 1) throw Error(ErrorKind::invalid_argument, "segment length n must be >= 1");
  if (size < 1 || size % static_cast<std::size_t>(n) != 0) {
    throw Error(ErrorKind::invalid_size, "n-step dataset size " + std::to_string(size) +
                                             " is not a positive multiple of n=" + std::to_string(n));
  }
  Rng rng(seed);
  std::vector<Trajectory> trajs(size / static_cast<std::size_t>(n));
  for (auto& t : trajs) {
    envs::LockState s{static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.horizon - 1))), false};
    const bool correct = rng.bernoulli(0.5);
    append_lock_state(spec, s.index, t.states);
    for (int k = 0; k < n && !s.done; ++k) {
      const int answer = spec.answers[static_cast<std::size_t>(s.index)];
      const int action = correct ? answer : 1 - answer;
      const auto step = envs::lock_step(spec, s, action);
      t.actions.push_back(static_cast<float>(action));
      append_lock_state(spec, step.next.index, t.states);
      ++t.length;
      s = step.next;
    }
    t.terminal = s.done;
  }
  auto meta = lock_meta(spec, "lock-nstep", size, seed);
  meta["n"] = n;
  return Dataset(EnvKind::lock, spec.state_dim, 1, std::move(trajs), std::move(meta));
}

// ---------------------------------------------------------------------------

std::vector<int> bfs_distance_field(const envs::MazeSpec& spec, envs::Cell target) {
  std::vector<int> dist(static_cast<std::size_t>(spec.rows * spec.cols), -1);
  if (!spec.is_free(target)) throw Error(ErrorKind::invalid_state, "BFS target is a wall cell");
  std::deque<envs::Cell> queue{target};
  dist[static_cast<std::size_t>(target.row * spec.cols + target.col)] = 0;
  while (!queue.empty()) {
    const auto c = queue.front();
    queue.pop_front();
    const int d = dist[static_cast<std::size_t>(c.row * spec.cols + c.col)];
    for (const auto& [dr, dc] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
      const envs::Cell nb{c.row + dr, c.col + dc};
      if (spec.is_wall(nb.row, nb.col)) continue;
      auto& nd = dist[static_cast<std::size_t>(nb.row * spec.cols + nb.col)];
      if (nd >= 0) continue;
      nd = d + 1;
      queue.push_back(nb);
    }
  }
  return dist;
}

envs::Vec2 play_controller_action(const envs::MazeSpec& spec, const std::vector<int>& field, const envs::Vec2& pos,
                                  envs::Cell waypoint) {
  const auto cur = spec.cell_of(pos);
  envs::Vec2 target = spec.center_of(waypoint);
  if (!(cur == waypoint)) {
    const int d = field[static_cast<std::size_t>(cur.row * spec.cols + cur.col)];
    for (const auto& [dr, dc] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
      const envs::Cell nb{cur.row + dr, cur.col + dc};
      if (spec.is_wall(nb.row, nb.col)) continue;
      if (field[static_cast<std::size_t>(nb.row * spec.cols + nb.col)] == d - 1) {
        target = spec.center_of(nb);
        break;
      }
    }
  }
  const double b = spec.action_bound;
  return {std::clamp(target[0] - pos[0], -b, b), std::clamp(target[1] - pos[1], -b, b)};
}

namespace {

// gcc 11 at -O3 vectorizes a plain double->float->double round trip away.
[[gnu::noinline]] envs::Vec2 round_f32(const envs::Vec2& v) {
  volatile float x = static_cast<float>(v[0]);
  volatile float y = static_cast<float>(v[1]);
  return {x, y};
}

}  // namespace

Dataset gen_maze_play(const envs::MazeSpec& spec, const PlayConfig& cfg) {
  if (cfg.traj_len < 2) throw Error(ErrorKind::invalid_size, "play trajectories need traj_len >= 2");
  if (cfg.num_traj < 1) throw Error(ErrorKind::invalid_size, "play dataset needs at least one trajectory");
  if (!(cfg.noise_std >= 0.0)) throw Error(ErrorKind::invalid_argument, "noise_std must be non-negative");
  const auto free = spec.free_cells();
  std::vector<std::vector<int>> fields;
  fields.reserve(free.size());
  for (const auto& c : free) fields.push_back(bfs_distance_field(spec, c));

  Rng rng(cfg.seed);
  const double b = spec.action_bound;
  std::vector<Trajectory> trajs(cfg.num_traj);
  for (auto& t : trajs) {
    const auto start = free[rng.below(free.size())];
    envs::MazeState s{{(start.col + rng.uniform()) * spec.cell_size, (start.row + rng.uniform()) * spec.cell_size}};
    std::size_t wp = rng.below(free.size());
    t.length = static_cast<std::uint32_t>(cfg.traj_len - 1);
    t.states.reserve(cfg.traj_len * 2);
    t.actions.reserve(t.length * 2);
    t.states.push_back(static_cast<float>(s.pos[0]));
    t.states.push_back(static_cast<float>(s.pos[1]));
    for (std::uint32_t k = 0; k < t.length; ++k) {
      const auto centre = spec.center_of(free[wp]);
      if (spec.cell_of(s.pos) == free[wp] && std::hypot(s.pos[0] - centre[0], s.pos[1] - centre[1]) <= b) {
        wp = rng.below(free.size());
      }
      auto a = play_controller_action(spec, fields[wp], s.pos, free[wp]);
      if (cfg.noise_std > 0.0) {
        a[0] = std::clamp(a[0] + cfg.noise_std * rng.normal(), -b, b);
        a[1] = std::clamp(a[1] + cfg.noise_std * rng.normal(), -b, b);
      }
      // Stored arrays are f32; step from the rounded values so the data is
      // exactly replayable.
      s.pos = round_f32(s.pos);
      a = round_f32(a);
      s = envs::maze_step(spec, s, a);
      t.actions.push_back(static_cast<float>(a[0]));
      t.actions.push_back(static_cast<float>(a[1]));
      t.states.push_back(static_cast<float>(s.pos[0]));
      t.states.push_back(static_cast<float>(s.pos[1]));
    }
  }
  nlohmann::json meta = {{"generator", "maze-play"}, {"layout", spec.layout}, {"num_traj", cfg.num_traj},
                         {"traj_len", cfg.traj_len}, {"noise_std", cfg.noise_std}, {"seed", cfg.seed}};
  return Dataset(EnvKind::maze, 2, 2, std::move(trajs), std::move(meta));
}

// ---------------------------------------------------------------------------

void GoalSampleConfig::validate() const {
  for (double w : {p_cur, p_geom, p_traj, p_rand}) {
    if (!(w >= 0.0)) throw Error(ErrorKind::config, "goal mixture weights must be non-negative");
  }
  if (std::abs(p_cur + p_geom + p_traj + p_rand - 1.0) > 1e-9) {
    throw Error(ErrorKind::config, "goal mixture weights must sum to 1");
  }
  if (!(geom_discount > 0.0 && geom_discount < 1.0)) {
    throw Error(ErrorKind::config, "geom_discount must lie in (0, 1)");
  }
}

bool GoalSpace::reached(std::span<const float> s, std::span<const float> g) const {
  double d2 = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double d = static_cast<double>(s[i]) - static_cast<double>(g[i]);
    d2 += d * d;
  }
  return d2 <= tolerance * tolerance;
}

namespace {

void copy_row(nn::MatF& m, std::size_t row, std::span<const float> v, std::size_t col_offset = 0) {
  std::copy(v.begin(), v.end(), m.data() + row * static_cast<std::size_t>(m.cols()) + col_offset);
}

void allocate(Batch& b, const Dataset& ds, const BatchRequest& req, bool with_goal) {
  const auto bs = static_cast<Eigen::Index>(req.batch);
  const int sd = ds.state_dim();
  b.s_h.resize(bs, sd);
  b.a_h.resize(bs, ds.action_dim());
  b.s_next.resize(bs, sd);
  b.s_hn.resize(bs, sd);
  if (with_goal) b.g.resize(bs, sd);
  b.reward_sums.resize(bs);
  b.done_mask.resize(bs);
  b.effective_n.assign(req.batch, 0);
  b.segment_len.assign(req.batch, 0);
  b.traj.assign(req.batch, 0);
  b.h.assign(req.batch, 0);
  if (req.with_path && req.n > 1) {
    b.mid_states = nn::MatF::Zero(bs, static_cast<Eigen::Index>(req.n - 1) * sd);
    b.mid_actions = nn::MatF::Zero(bs, static_cast<Eigen::Index>(req.n - 1) * ds.action_dim());
  }
}

void validate_request(const Dataset& ds, const BatchRequest& req) {
  if (req.n < 1) throw Error(ErrorKind::invalid_argument, "segment length n must be >= 1");
  if (req.batch < 1) throw Error(ErrorKind::invalid_argument, "batch size must be >= 1");
  if (ds.trajectory_count() == 0 || ds.transition_count() == 0) {
    throw Error(ErrorKind::invalid_argument, "cannot sample from an empty dataset");
  }
}

void fill_segment(Batch& b, std::size_t row, const Dataset& ds, const BatchRequest& req, std::size_t ti,
                  std::size_t h, std::size_t m) {
  b.traj[row] = static_cast<std::uint32_t>(ti);
  b.h[row] = static_cast<std::uint32_t>(h);
  b.segment_len[row] = static_cast<int>(m);
  copy_row(b.s_h, row, ds.state(ti, h));
  copy_row(b.a_h, row, ds.action(ti, h));
  copy_row(b.s_next, row, ds.state(ti, h + 1));
  copy_row(b.s_hn, row, ds.state(ti, h + m));
  if (b.mid_states.size() > 0) {
    const auto sd = static_cast<std::size_t>(ds.state_dim());
    const auto ad = static_cast<std::size_t>(ds.action_dim());
    for (std::size_t i = 1; i < m; ++i) {
      copy_row(b.mid_states, row, ds.state(ti, h + i), (i - 1) * sd);
      copy_row(b.mid_actions, row, ds.action(ti, h + i), (i - 1) * ad);
    }
  }
  (void)req;
}

}  // namespace

Batch sample_batch(const Dataset& ds, const BatchRequest& req, const GoalSampleConfig& cfg, RewardKind reward_kind,
                   const GoalSpace& goals, Rng& rng) {
  validate_request(ds, req);
  cfg.validate();
  Batch b;
  allocate(b, ds, req, true);
  const float r_hit = reward_kind == RewardKind::zero_one ? 1.0f : 0.0f;
  const float r_miss = reward_kind == RewardKind::zero_one ? 0.0f : -1.0f;
  const double c1 = cfg.p_cur;
  const double c2 = c1 + cfg.p_geom;
  const double c3 = c2 + cfg.p_traj;
  for (std::size_t row = 0; row < req.batch; ++row) {
    const auto [ti, h] = ds.transition_at(rng.below(ds.transition_count()));
    const std::size_t len = ds.trajectories()[ti].length;
    const double u = rng.uniform();
    std::span<const float> goal;
    if (u < c1) {
      goal = ds.state(ti, h);
    } else if (u < c2) {
      const auto delta = rng.geometric(1.0 - cfg.geom_discount);
      goal = ds.state(ti, std::min<std::size_t>(h + delta, len));
    } else if (u < c3) {
      goal = ds.state(ti, h + 1 + rng.below(len - h));
    } else {
      const auto [tj, j] = ds.state_at(rng.below(ds.state_count()));
      goal = ds.state(tj, j);
    }
    copy_row(b.g, row, goal);

    const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(req.n), len - h);
    fill_segment(b, row, ds, req, ti, h, m);
    double sum = 0.0;
    double disc = 1.0;
    int eff = static_cast<int>(m);
    bool done = false;
    for (std::size_t i = 0; i < m; ++i) {
      if (goals.reached(ds.state(ti, h + i), goal)) {
        sum += disc * r_hit;
        eff = static_cast<int>(i) + 1;
        done = true;
        break;
      }
      sum += disc * r_miss;
      disc *= req.gamma;
    }
    b.reward_sums[static_cast<Eigen::Index>(row)] = static_cast<float>(sum);
    b.effective_n[row] = eff;
    b.done_mask[static_cast<Eigen::Index>(row)] = done ? 1.0f : 0.0f;
  }
  return b;
}

Batch sample_segments(const Dataset& ds, const BatchRequest& req, Rng& rng) {
  validate_request(ds, req);
  Batch b;
  allocate(b, ds, req, false);
  for (std::size_t row = 0; row < req.batch; ++row) {
    const auto [ti, h] = ds.transition_at(rng.below(ds.transition_count()));
    const auto& tr = ds.trajectories()[ti];
    const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(req.n), tr.length - h);
    fill_segment(b, row, ds, req, ti, h, m);
    double sum = 0.0;
    double disc = 1.0;
    for (std::size_t i = 0; i < m; ++i) {
      sum += disc * kStepReward;
      disc *= req.gamma;
    }
    b.reward_sums[static_cast<Eigen::Index>(row)] = static_cast<float>(sum);
    b.effective_n[row] = static_cast<int>(m);
    b.done_mask[static_cast<Eigen::Index>(row)] = tr.terminal && h + m == tr.length ? 1.0f : 0.0f;
  }
  return b;
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kDatasetMagic[4] = {'H', 'R', 'L', 'D'};

static_assert(std::endian::native == std::endian::little, "dataset IO assumes a little-endian host");

template <class V>
void put(std::ostream& os, V v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

class Reader {
 public:
  explicit Reader(std::vector<char> buf) : buf_(std::move(buf)) {}

  template <class V>
  V get() {
    V v{};
    need(sizeof(V));
    std::memcpy(&v, buf_.data() + pos_, sizeof(V));
    pos_ += sizeof(V);
    return v;
  }

  void floats(std::vector<float>& out, std::size_t count) {
    need(count * sizeof(float));
    out.resize(count);
    std::memcpy(out.data(), buf_.data() + pos_, count * sizeof(float));
    pos_ += count * sizeof(float);
  }

  std::string bytes(std::size_t count) {
    need(count);
    std::string s(buf_.data() + pos_, count);
    pos_ += count;
    return s;
  }

  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw Error(ErrorKind::format, "dataset file is truncated");
  }

  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace

void save(const Dataset& ds, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorKind::io, "cannot open " + tmp.string() + " for writing");
    os.write(kDatasetMagic, 4);
    put<std::uint16_t>(os, kDatasetVersion);
    put<std::uint8_t>(os, static_cast<std::uint8_t>(ds.env_kind()));
    put<std::uint16_t>(os, static_cast<std::uint16_t>(ds.state_dim()));
    put<std::uint16_t>(os, static_cast<std::uint16_t>(ds.action_dim()));
    put<std::uint64_t>(os, ds.trajectory_count());
    nlohmann::json terminal = nlohmann::json::array();
    for (std::size_t i = 0; i < ds.trajectory_count(); ++i) {
      const auto& t = ds.trajectories()[i];
      put<std::uint32_t>(os, t.length);
      os.write(reinterpret_cast<const char*>(t.states.data()),
               static_cast<std::streamsize>(t.states.size() * sizeof(float)));
      os.write(reinterpret_cast<const char*>(t.actions.data()),
               static_cast<std::streamsize>(t.actions.size() * sizeof(float)));
      if (t.terminal) terminal.push_back(i);
    }
    const std::string trailer = nlohmann::json{{"meta", ds.meta()}, {"terminal", terminal}}.dump();
    put<std::uint64_t>(os, trailer.size());
    os.write(trailer.data(), static_cast<std::streamsize>(trailer.size()));
    os.flush();
    if (!os) throw Error(ErrorKind::io, "failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::io, "cannot move dataset into place: " + ec.message());
}

Dataset load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::io, "cannot open " + path.string());
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(is), {}));
  if (r.bytes(4) != std::string(kDatasetMagic, 4)) throw Error(ErrorKind::format, "bad dataset magic");
  const auto version = r.get<std::uint16_t>();
  if (version != kDatasetVersion) {
    throw Error(ErrorKind::version, "dataset version " + std::to_string(version) + " is not supported (expected " +
                                        std::to_string(kDatasetVersion) + ")");
  }
  const auto kind = r.get<std::uint8_t>();
  if (kind > 1) throw Error(ErrorKind::format, "unknown env kind");
  const auto sd = r.get<std::uint16_t>();
  const auto ad = r.get<std::uint16_t>();
  const auto count = r.get<std::uint64_t>();
  if (count > r.remaining()) throw Error(ErrorKind::format, "trajectory count exceeds file size");
  std::vector<Trajectory> trajs(count);
  for (auto& t : trajs) {
    t.length = r.get<std::uint32_t>();
    r.floats(t.states, (static_cast<std::size_t>(t.length) + 1) * sd);
    r.floats(t.actions, static_cast<std::size_t>(t.length) * ad);
  }
  const auto trailer_len = r.get<std::uint64_t>();
  if (trailer_len != r.remaining()) throw Error(ErrorKind::format, "metadata trailer length mismatch");
  nlohmann::json trailer;
  try {
    trailer = nlohmann::json::parse(r.bytes(trailer_len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, std::string("corrupt metadata trailer: ") + e.what());
  }
  for (const auto& i : trailer.at("terminal")) {
    const auto idx = i.get<std::size_t>();
    if (idx >= trajs.size()) throw Error(ErrorKind::format, "terminal index out of range");
    trajs[idx].terminal = true;
  }
  return Dataset(static_cast<EnvKind>(kind), sd, ad, std::move(trajs), trailer.at("meta"));
}

}  // namespace hrl::data
