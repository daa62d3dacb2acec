#include "hrl/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "hrl/error.hpp"

namespace hrl::oracle {

LockQTable lock_oracle_q(const envs::LockSpec& spec) {
  const int h = spec.horizon;
  LockQTable t{h, std::vector<std::array<double, 2>>(static_cast<std::size_t>(h), {0.0, 0.0})};
  // V*(H-1) = 0. Walking backwards along the answer chain gives V* on every
  // index; a wrong action costs one step plus V*(0).
  std::vector<double> v(static_cast<std::size_t>(h), 0.0);
  for (int i = h - 2; i >= 0; --i) v[static_cast<std::size_t>(i)] = -1.0 + v[static_cast<std::size_t>(i + 1)];
  for (int i = 0; i + 1 < h; ++i) {
    const int good = spec.answers[static_cast<std::size_t>(i)];
    auto& row = t.q[static_cast<std::size_t>(i)];
    row[static_cast<std::size_t>(good)] = -1.0 + v[static_cast<std::size_t>(i + 1)];
    row[static_cast<std::size_t>(1 - good)] = -1.0 + v[0];
    if (row[static_cast<std::size_t>(good)] < row[static_cast<std::size_t>(1 - good)]) {
      throw Error(ErrorKind::contract, "backward induction is not greedy-consistent");
    }
  }
  return t;
}

namespace {

struct Segment {
  std::vector<int> states;   // m + 1 indices
  std::vector<int> actions;  // m actions
  bool terminal = false;
};

int greedy_of(const LockQTable& t, int i) { return t.at(i, 1) > t.at(i, 0) ? 1 : 0; }

double max_of(const LockQTable& t, int i) { return std::max(t.at(i, 0), t.at(i, 1)); }

}  // namespace

TabularResult tabular_q_iteration(const envs::LockSpec& spec, const data::Dataset& ds, int n, double gamma,
                                  double tol, learn::NstepCut cut, int max_iterations) {
  if (n < 1) throw Error(ErrorKind::invalid_argument, "n must be >= 1");
  if (ds.env_kind() != data::EnvKind::lock || ds.state_dim() != spec.state_dim) {
    throw Error(ErrorKind::invalid_argument, "dataset does not belong to this lock");
  }
  const int h = spec.horizon;
  // Distinct segments with multiplicities.
  std::map<std::vector<int>, std::size_t> counts;
  std::vector<Segment> segs;
  std::vector<std::size_t> weight;
  for (std::size_t ti = 0; ti < ds.trajectory_count(); ++ti) {
    const auto& tr = ds.trajectories()[ti];
    for (std::size_t s0 = 0; s0 < tr.length; ++s0) {
      const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(n), tr.length - s0);
      Segment seg;
      std::vector<int> key;
      for (std::size_t i = 0; i <= m; ++i) {
        seg.states.push_back(envs::lock_decode(ds.state(ti, s0 + i)));
        key.push_back(seg.states.back());
        if (i < m) {
          seg.actions.push_back(ds.action(ti, s0 + i)[0] > 0.5f ? 1 : 0);
          key.push_back(seg.actions.back());
        }
      }
      seg.terminal = tr.terminal && s0 + m == tr.length;
      key.push_back(seg.terminal ? 1 : 0);
      auto [it, fresh] = counts.emplace(key, segs.size());
      if (fresh) {
        segs.push_back(std::move(seg));
        weight.push_back(1);
      } else {
        ++weight[it->second];
      }
    }
  }
  std::vector<std::array<double, 2>> wsum(static_cast<std::size_t>(h), {0.0, 0.0});
  for (std::size_t k = 0; k < segs.size(); ++k) {
    wsum[static_cast<std::size_t>(segs[k].states[0])][static_cast<std::size_t>(segs[k].actions[0])] +=
        static_cast<double>(weight[k]);
  }
  std::string missing;
  int missing_count = 0;
  for (int i = 0; i + 1 < h; ++i) {
    for (int a = 0; a < 2; ++a) {
      if (wsum[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)] == 0.0) {
        if (missing_count < 20) missing += " (" + std::to_string(i) + "," + std::to_string(a) + ")";
        ++missing_count;
      }
    }
  }
  if (missing_count > 0) {
    throw Error(ErrorKind::coverage, "dataset misses " + std::to_string(missing_count) +
                                         " (state, action) tuples:" + missing + (missing_count > 20 ? " ..." : ""));
  }

  TabularResult res{LockQTable{h, std::vector<std::array<double, 2>>(static_cast<std::size_t>(h), {0.0, 0.0})}, 0};
  LockQTable next = res.table;
  for (; res.iterations < max_iterations; ++res.iterations) {
    for (auto& row : next.q) row = {0.0, 0.0};
    for (std::size_t k = 0; k < segs.size(); ++k) {
      const auto& seg = segs[k];
      const int m = static_cast<int>(seg.actions.size());
      int stop = m;
      if (cut == learn::NstepCut::greedy) {
        for (int i = 1; i < m; ++i) {
          if (seg.actions[static_cast<std::size_t>(i)] != greedy_of(res.table, seg.states[static_cast<std::size_t>(i)])) {
            stop = i;
            break;
          }
        }
      }
      double y = 0.0;
      double disc = 1.0;
      for (int i = 0; i < stop; ++i) {
        y += disc * data::kStepReward;
        disc *= gamma;
      }
      const bool done = seg.terminal && stop == m;
      if (!done) y += disc * max_of(res.table, seg.states[static_cast<std::size_t>(stop)]);
      next.q[static_cast<std::size_t>(seg.states[0])][static_cast<std::size_t>(seg.actions[0])] +=
          static_cast<double>(weight[k]) * y;
    }
    double change = 0.0;
    for (int i = 0; i + 1 < h; ++i) {
      for (int a = 0; a < 2; ++a) {
        auto& v = next.q[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)];
        v /= wsum[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)];
        change = std::max(change, std::abs(v - res.table.at(i, a)));
      }
    }
    if (!(change >= tol)) return res;
    std::swap(res.table, next);
  }
  throw Error(ErrorKind::numeric, "tabular Q-iteration did not converge");
}

// ---------------------------------------------------------------------------

int MazeDistances::at(envs::Cell a, envs::Cell b) const {
  const int ia = index_of[static_cast<std::size_t>(a.row * cols + a.col)];
  const int ib = index_of[static_cast<std::size_t>(b.row * cols + b.col)];
  if (ia < 0 || ib < 0) throw Error(ErrorKind::invalid_state, "maze distance queried on a wall cell");
  return dist[static_cast<std::size_t>(ia) * cells.size() + static_cast<std::size_t>(ib)];
}

int MazeDistances::max_distance() const { return dist.empty() ? 0 : *std::max_element(dist.begin(), dist.end()); }

MazeDistances maze_bfs(const envs::MazeSpec& spec) {
  MazeDistances d;
  d.rows = spec.rows;
  d.cols = spec.cols;
  d.cells = spec.free_cells();
  d.index_of.assign(static_cast<std::size_t>(spec.rows * spec.cols), -1);
  for (std::size_t k = 0; k < d.cells.size(); ++k) {
    d.index_of[static_cast<std::size_t>(d.cells[k].row * spec.cols + d.cells[k].col)] = static_cast<int>(k);
  }
  const std::size_t nc = d.cells.size();
  d.dist.assign(nc * nc, 0);
  for (std::size_t a = 0; a < nc; ++a) {
    const auto field = data::bfs_distance_field(spec, d.cells[a]);
    for (std::size_t b = 0; b < nc; ++b) {
      const int v = field[static_cast<std::size_t>(d.cells[b].row * spec.cols + d.cells[b].col)];
      if (v < 0) throw Error(ErrorKind::invalid_layout, "maze free space is not connected");
      d.dist[a * nc + b] = v;
    }
  }
  return d;
}

}  // namespace hrl::oracle
