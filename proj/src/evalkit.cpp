#include "hrl/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>
#include <set>

#include "hrl/error.hpp"

namespace hrl::eval {

oracle::LockQTable lock_q_snapshot(const learn::DqnLearner& learner, const envs::LockSpec& spec) {
  nn::MatF codes(spec.horizon, spec.state_dim);
  for (int i = 0; i < spec.horizon; ++i) {
    envs::lock_encode_into(spec, i, {codes.row(i).data(), static_cast<std::size_t>(spec.state_dim)});
  }
  const nn::MatF q = learner.q_values(codes);
  oracle::LockQTable t{spec.horizon, std::vector<std::array<double, 2>>(static_cast<std::size_t>(spec.horizon))};
  for (int i = 0; i < spec.horizon; ++i) t.q[static_cast<std::size_t>(i)] = {q(i, 0), q(i, 1)};
  return t;
}

double eval_lock_success(const envs::LockSpec& spec, const oracle::LockQTable& q, int episodes) {
  if (episodes < 1) throw Error(ErrorKind::invalid_argument, "episodes must be >= 1");
  int wins = 0;
  for (int e = 0; e < episodes; ++e) {
    envs::LockState s = envs::lock_reset(spec);
    for (int k = 0; k < 2 * spec.horizon && !s.done; ++k) {
      const int a = q.at(s.index, 1) > q.at(s.index, 0) ? 1 : 0;
      s = envs::lock_step(spec, s, a).next;
    }
    wins += s.done ? 1 : 0;
  }
  return static_cast<double>(wins) / episodes;
}

double eval_lock_success(const envs::LockSpec& spec, const learn::DqnLearner& learner, int episodes) {
  return eval_lock_success(spec, lock_q_snapshot(learner, spec), episodes);
}

double q_error(const oracle::LockQTable& q, const oracle::LockQTable& oracle) {
  if (q.horizon != oracle.horizon) throw Error(ErrorKind::contract, "Q tables of different horizons");
  double sum = 0.0;
  for (int i = 0; i + 1 < q.horizon; ++i) {
    for (int a = 0; a < 2; ++a) sum += std::abs(q.at(i, a) - oracle.at(i, a));
  }
  return sum / (2.0 * (q.horizon - 1));
}

double q_error(const learn::DqnLearner& learner, const oracle::LockQTable& oracle, const envs::LockSpec& spec) {
  return q_error(lock_q_snapshot(learner, spec), oracle);
}

double td_error(const learn::DqnLearner& learner, const data::Dataset& ds, const data::BatchRequest& req,
                int batches, Rng& rng) {
  if (batches < 1) throw Error(ErrorKind::invalid_argument, "batches must be >= 1");
  double sum = 0.0;
  for (int k = 0; k < batches; ++k) sum += learner.td_loss(data::sample_segments(ds, req, rng));
  return sum / batches;
}

std::vector<double> per_position_q_error(const oracle::LockQTable& q, const oracle::LockQTable& oracle,
                                         int bucket_count) {
  const int h = q.horizon;
  if (bucket_count < 1 || bucket_count > h - 1) {
    throw Error(ErrorKind::invalid_argument, "bucket_count must lie in [1, H-1]");
  }
  std::vector<double> sum(static_cast<std::size_t>(bucket_count), 0.0);
  std::vector<int> cnt(static_cast<std::size_t>(bucket_count), 0);
  for (int i = 0; i + 1 < h; ++i) {
    const long d = h - 1 - i;
    const auto b = static_cast<std::size_t>((d - 1) * bucket_count / (h - 1));
    sum[b] += std::abs(q.at(i, 0) - oracle.at(i, 0)) + std::abs(q.at(i, 1) - oracle.at(i, 1));
    cnt[b] += 2;
  }
  for (std::size_t b = 0; b < sum.size(); ++b) sum[b] /= cnt[b];
  return sum;
}

namespace {

std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(ErrorKind::invalid_argument, "spearman needs paired data");
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------

TaskSet task_set_from_string(const std::string& s) {
  if (s == "adjacent") return TaskSet::adjacent;
  if (s == "medium") return TaskSet::medium;
  if (s == "far") return TaskSet::far;
  throw Error(ErrorKind::config, "unknown task set '" + s + "'");
}

const char* to_string(TaskSet t) {
  switch (t) {
    case TaskSet::adjacent: return "adjacent";
    case TaskSet::medium: return "medium";
    case TaskSet::far: return "far";
  }
  return "?";
}

std::vector<MazeTask> maze_tasks(const envs::MazeSpec& spec, TaskSet set, int count) {
  if (count < 1) throw Error(ErrorKind::invalid_argument, "task count must be >= 1");
  const auto d = oracle::maze_bfs(spec);
  const int dmax = d.max_distance();
  std::vector<MazeTask> pool;
  for (const auto& a : d.cells) {
    for (const auto& b : d.cells) {
      const int dist = d.at(a, b);
      bool keep = false;
      switch (set) {
        case TaskSet::adjacent: keep = dist == 1; break;
        case TaskSet::medium: keep = dist >= 0.35 * dmax && dist <= 0.65 * dmax; break;
        case TaskSet::far: keep = dist >= 0.85 * dmax; break;
      }
      if (keep) pool.push_back({spec.center_of(a), spec.center_of(b), dist});
    }
  }
  if (pool.empty()) throw Error(ErrorKind::invalid_layout, "layout has no task pairs for this set");
  std::stable_sort(pool.begin(), pool.end(), [](const MazeTask& x, const MazeTask& y) { return x.distance < y.distance; });
  std::vector<MazeTask> out;
  const auto n = static_cast<std::size_t>(count);
  for (std::size_t k = 0; k < n; ++k) out.push_back(pool[(k * pool.size()) / n]);
  return out;
}

MazeEvalResult eval_maze_success(const envs::MazeSpec& spec, const BatchActFn& act,
                                 const std::vector<MazeTask>& tasks, int episodes_per_task, int max_steps, Rng& rng) {
  if (tasks.empty()) throw Error(ErrorKind::invalid_argument, "goal set must be nonempty");
  if (episodes_per_task < 1) throw Error(ErrorKind::invalid_argument, "episodes_per_task must be >= 1");
  const auto rows = static_cast<Eigen::Index>(tasks.size() * static_cast<std::size_t>(episodes_per_task));
  nn::MatF s(rows, 2), g(rows, 2);
  std::vector<envs::Vec2> pos(static_cast<std::size_t>(rows));
  std::vector<char> done(static_cast<std::size_t>(rows), 0);
  std::vector<int> steps(static_cast<std::size_t>(rows), 0);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& task = tasks[static_cast<std::size_t>(r) / static_cast<std::size_t>(episodes_per_task)];
    pos[static_cast<std::size_t>(r)] = task.start;
    g(r, 0) = static_cast<float>(task.goal[0]);
    g(r, 1) = static_cast<float>(task.goal[1]);
    done[static_cast<std::size_t>(r)] = envs::reached(spec, task.start, task.goal) ? 1 : 0;
  }
  std::vector<int> t(static_cast<std::size_t>(rows), 0);
  for (int k = 0; k < max_steps; ++k) {
    if (std::all_of(done.begin(), done.end(), [](char c) { return c != 0; })) break;
    for (Eigen::Index r = 0; r < rows; ++r) {
      s(r, 0) = static_cast<float>(pos[static_cast<std::size_t>(r)][0]);
      s(r, 1) = static_cast<float>(pos[static_cast<std::size_t>(r)][1]);
      t[static_cast<std::size_t>(r)] = k;
    }
    const nn::MatF a = act(s, g, t, rng);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto ur = static_cast<std::size_t>(r);
      if (done[ur]) continue;
      pos[ur] = envs::maze_step(spec, envs::MazeState{pos[ur]}, {a(r, 0), a(r, 1)}).pos;
      steps[ur] = k + 1;
      const auto& task = tasks[ur / static_cast<std::size_t>(episodes_per_task)];
      if (envs::reached(spec, pos[ur], task.goal)) done[ur] = 1;
    }
  }
  MazeEvalResult res;
  res.per_task.assign(tasks.size(), 0.0);
  double wins = 0.0, win_steps = 0.0;
  for (std::size_t r = 0; r < done.size(); ++r) {
    if (!done[r]) continue;
    wins += 1.0;
    win_steps += steps[r];
    res.per_task[r / static_cast<std::size_t>(episodes_per_task)] += 1.0 / episodes_per_task;
  }
  res.success_rate = wins / static_cast<double>(rows);
  res.mean_steps_success = wins > 0.0 ? win_steps / wins : 0.0;
  return res;
}

BatchActFn bfs_controller(const envs::MazeSpec& spec) {
  auto fields = std::make_shared<std::vector<std::vector<int>>>(static_cast<std::size_t>(spec.rows * spec.cols));
  return [spec, fields](const nn::MatF& s, const nn::MatF& g, const std::vector<int>&, Rng&) {
    nn::MatF a(s.rows(), 2);
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
      const envs::Cell goal = spec.cell_of({g(r, 0), g(r, 1)});
      auto& f = (*fields)[static_cast<std::size_t>(goal.row * spec.cols + goal.col)];
      if (f.empty()) f = data::bfs_distance_field(spec, goal);
      const auto v = data::play_controller_action(spec, f, {s(r, 0), s(r, 1)}, goal);
      a(r, 0) = static_cast<float>(v[0]);
      a(r, 1) = static_cast<float>(v[1]);
    }
    return a;
  };
}

// ---------------------------------------------------------------------------

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorKind::io, "cannot open " + tmp.string() + " for writing");
    os << text;
    os.flush();
    if (!os) throw Error(ErrorKind::io, "failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::io, "cannot rename " + tmp.string() + ": " + ec.message());
}

void write_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path) {
  std::set<std::string> keys;
  for (const auto& r : rows) {
    for (const auto& [k, v] : r.extra) keys.insert(k);
  }
  std::string out = "run_id,step,success_rate,td_error,q_error";
  for (const auto& k : keys) out += "," + k;
  out += "\n";
  for (const auto& r : rows) {
    out += r.run_id + "," + std::to_string(r.step) + "," + format_double(r.success_rate) + "," +
           format_double(r.td_error) + "," + format_double(r.q_error);
    for (const auto& k : keys) {
      const auto it = r.extra.find(k);
      out += ",";
      if (it != r.extra.end()) out += format_double(it->second);
    }
    out += "\n";
  }
  write_text_atomic(path, out);
}

}  // namespace hrl::eval
