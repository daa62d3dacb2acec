#include "hrl/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <functional>
#include <iostream>
#include <fstream>
#include <mutex>
#include <regex>
#include <set>
#include <sstream>
#include <thread>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "hrl/data.hpp"
#include "hrl/evalkit.hpp"
#include "hrl/gradcheck.hpp"
#include "hrl/oracle.hpp"

#ifndef HRL_BUILD_INFO
#define HRL_BUILD_INFO "unknown"
#endif

namespace hrl::run {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(Kind k) {
  switch (k) {
    case Kind::lock_dqn: return "lock-dqn";
    case Kind::maze_agents: return "maze-agents";
    case Kind::grad_check: return "grad-check";
    case Kind::oracle_dump: return "oracle-dump";
  }
  return "?";
}

std::string build_info() { return std::string(HRL_BUILD_INFO) + " (" + __VERSION__ + ")"; }

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::numeric: return 3;
    case ErrorKind::io:
    case ErrorKind::format:
    case ErrorKind::version: return 4;
    default: return 2;
  }
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw Error(ErrorKind::config, key + ": " + why);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) bad(key, "expected a number, got '" + v + "'");
    return d;
  } catch (const std::logic_error&) {
    bad(key, "expected a number, got '" + v + "'");
  }
}

std::int64_t to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used != v.size()) bad(key, "expected an integer, got '" + v + "'");
    return i;
  } catch (const std::logic_error&) {
    bad(key, "expected an integer, got '" + v + "'");
  }
}

std::int64_t to_nonneg(const std::string& key, const std::string& v) {
  const auto i = to_int(key, v);
  if (i < 0) bad(key, "must be >= 0");
  return i;
}

std::int64_t to_positive(const std::string& key, const std::string& v) {
  const auto i = to_int(key, v);
  if (i < 1) bad(key, "must be >= 1");
  return i;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad(key, "expected true or false, got '" + v + "'");
}

std::vector<int> to_widths(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& s : split_list(v)) out.push_back(static_cast<int>(to_positive(key, s)));
  if (out.empty()) bad(key, "needs at least one layer width");
  return out;
}

data::GoalSampleConfig to_mixture(const std::string& key, const std::string& v, double discount) {
  const auto parts = split_list(v);
  if (parts.size() != 4) bad(key, "expected four probabilities p_cur,p_geom,p_traj,p_rand");
  data::GoalSampleConfig g{to_double(key, parts[0]), to_double(key, parts[1]), to_double(key, parts[2]),
                           to_double(key, parts[3]), discount};
  try {
    g.validate();
  } catch (const Error& e) {
    bad(key, e.what());
  }
  return g;
}

template <class F>
auto wrap(const std::string& key, F f) {
  try {
    return f();
  } catch (const Error& e) {
    std::string why = e.what();
    const std::string prefix = std::string(hrl::to_string(e.kind())) + ": ";
    if (why.rfind(prefix, 0) == 0) why = why.substr(prefix.size());
    bad(key, why);
  }
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& v)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"run.kind",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "lock-dqn") c.kind = Kind::lock_dqn;
         else if (v == "maze-agents") c.kind = Kind::maze_agents;
         else if (v == "grad-check") c.kind = Kind::grad_check;
         else if (v == "oracle-dump") c.kind = Kind::oracle_dump;
         else bad(k, "unknown kind '" + v + "' (lock-dqn, maze-agents, grad-check, oracle-dump)");
       }},
      {"run.name",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v.empty() || v.find_first_of("/\\ ") != std::string::npos) bad(k, "needs a non-empty name without / or spaces");
         c.name = v;
       }},
      {"run.train_steps", [](RunConfig& c, const std::string& k, const std::string& v) { c.train_steps = to_nonneg(k, v); }},
      {"run.eval_every", [](RunConfig& c, const std::string& k, const std::string& v) { c.eval_every = to_nonneg(k, v); }},
      {"run.seeds",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.seeds.clear();
         for (const auto& s : split_list(v)) c.seeds.push_back(static_cast<std::uint64_t>(to_nonneg(k, s)));
         if (c.seeds.empty()) bad(k, "needs at least one seed");
       }},
      {"run.final_fraction",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.final_fraction = to_double(k, v);
         if (!(c.final_fraction > 0.0 && c.final_fraction <= 1.0)) bad(k, "must lie in (0, 1]");
       }},
      {"run.success_window",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v != "all" && v != "final") bad(k, "expected all or final");
         c.success_window = v;
       }},
      {"run.output_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = v; }},

      {"lock.horizon",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.lock.horizon = static_cast<int>(to_int(k, v));
         if (c.lock.horizon < 2) bad(k, "must be >= 2");
       }},
      {"lock.env_seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.lock.env_seed = to_nonneg(k, v); }},
      {"lock.dataset",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v != "auto" && v != "1step" && v != "nstep") bad(k, "expected auto, 1step or nstep");
         c.lock.dataset = v;
       }},
      {"lock.dataset_n", [](RunConfig& c, const std::string& k, const std::string& v) { c.lock.dataset_n = static_cast<int>(to_nonneg(k, v)); }},
      {"lock.dataset_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.lock.dataset_size = to_positive(k, v); }},
      {"lock.data_seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.lock.data_seed = to_nonneg(k, v); }},
      {"lock.batch", [](RunConfig& c, const std::string& k, const std::string& v) { c.lock.batch = to_positive(k, v); }},
      {"lock.td_batches", [](RunConfig& c, const std::string& k, const std::string& v) { c.lock.td_batches = static_cast<int>(to_positive(k, v)); }},
      {"lock.buckets", [](RunConfig& c, const std::string& k, const std::string& v) { c.lock.buckets = static_cast<int>(to_positive(k, v)); }},

      {"dqn.n", [](RunConfig& c, const std::string& k, const std::string& v) { c.lock.dqn.n = static_cast<int>(to_positive(k, v)); }},
      {"dqn.gamma", [](RunConfig& c, const std::string& k, const std::string& v) { c.lock.dqn.gamma = to_double(k, v); }},
      {"dqn.lr", [](RunConfig& c, const std::string& k, const std::string& v) { c.lock.dqn.lr = to_double(k, v); }},
      {"dqn.tau", [](RunConfig& c, const std::string& k, const std::string& v) { c.lock.dqn.tau = to_double(k, v); }},
      {"dqn.hidden", [](RunConfig& c, const std::string& k, const std::string& v) { c.lock.dqn.hidden = to_widths(k, v); }},
      {"dqn.layer_norm", [](RunConfig& c, const std::string& k, const std::string& v) { c.lock.dqn.layer_norm = to_bool(k, v); }},
      {"dqn.double_q",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.lock.dqn.double_q = wrap(k, [&] { return learn::double_q_from_string(v); });
       }},
      {"dqn.cut",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.lock.dqn.cut = wrap(k, [&] { return learn::nstep_cut_from_string(v); });
       }},
      {"dqn.cut_refresh", [](RunConfig& c, const std::string& k, const std::string& v) { c.lock.dqn.cut_refresh = static_cast<int>(to_positive(k, v)); }},

      {"maze.layout",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         wrap(k, [&] { return envs::maze_new(v, 0); });
         c.maze.layout = v;
       }},
      {"maze.noise_std", [](RunConfig& c, const std::string& k, const std::string& v) { c.maze.noise_std = to_double(k, v); }},
      {"maze.num_traj", [](RunConfig& c, const std::string& k, const std::string& v) { c.maze.num_traj = to_positive(k, v); }},
      {"maze.traj_len",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.maze.traj_len = to_positive(k, v);
         if (c.maze.traj_len < 2) bad(k, "must be >= 2");
       }},
      {"maze.data_seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.maze.data_seed = to_nonneg(k, v); }},
      {"maze.max_steps", [](RunConfig& c, const std::string& k, const std::string& v) { c.maze.max_steps = static_cast<int>(to_positive(k, v)); }},
      {"maze.methods",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.maze.methods.clear();
         for (const auto& s : split_list(v)) c.maze.methods.push_back(wrap(k, [&] { return agents::method_from_string(s); }));
         if (c.maze.methods.empty()) bad(k, "needs at least one method");
       }},
      {"maze.task_sets",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.maze.task_sets.clear();
         for (const auto& s : split_list(v)) c.maze.task_sets.push_back(wrap(k, [&] { return eval::task_set_from_string(s); }));
         if (c.maze.task_sets.empty()) bad(k, "needs at least one task set");
       }},
      {"maze.tasks", [](RunConfig& c, const std::string& k, const std::string& v) { c.maze.tasks = static_cast<int>(to_positive(k, v)); }},
      {"maze.episodes", [](RunConfig& c, const std::string& k, const std::string& v) { c.maze.episodes = static_cast<int>(to_positive(k, v)); }},

      {"agent.n", [](RunConfig& c, const std::string& k, const std::string& v) { c.maze.agent.n = static_cast<int>(to_int(k, v)); }},
      {"agent.rs_n", [](RunConfig& c, const std::string& k, const std::string& v) { c.maze.agent.rs_n = static_cast<int>(to_int(k, v)); }},
      {"agent.subgoal_period", [](RunConfig& c, const std::string& k, const std::string& v) { c.maze.agent.subgoal_period = static_cast<int>(to_int(k, v)); }},
      {"agent.actor_hidden", [](RunConfig& c, const std::string& k, const std::string& v) { c.maze.agent.actor_hidden = to_widths(k, v); }},
      {"agent.value_hidden", [](RunConfig& c, const std::string& k, const std::string& v) { c.maze.agent.value_hidden = to_widths(k, v); }},
      {"agent.layer_norm", [](RunConfig& c, const std::string& k, const std::string& v) { c.maze.agent.layer_norm = to_bool(k, v); }},
      {"agent.lr", [](RunConfig& c, const std::string& k, const std::string& v) { c.maze.agent.lr = to_double(k, v); }},
      {"agent.tau", [](RunConfig& c, const std::string& k, const std::string& v) { c.maze.agent.tau = to_double(k, v); }},
      {"agent.gamma", [](RunConfig& c, const std::string& k, const std::string& v) { c.maze.agent.gamma = to_double(k, v); }},
      {"agent.loss",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.maze.agent.loss = wrap(k, [&] { return learn::loss_kind_from_string(v); });
       }},
      {"agent.q_heads", [](RunConfig& c, const std::string& k, const std::string& v) { c.maze.agent.q_heads = static_cast<int>(to_positive(k, v)); }},
      {"agent.aggregate",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.maze.agent.aggregate = wrap(k, [&] { return learn::aggregate_from_string(v); });
       }},
      {"agent.actor_goals",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.maze.agent.actor_goals = to_mixture(k, v, c.maze.agent.actor_goals.geom_discount);
       }},
      {"agent.hier_goals",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.maze.agent.hier_goals = to_mixture(k, v, c.maze.agent.hier_goals.geom_discount);
       }},
      {"agent.value_goals",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.maze.agent.value_goals = to_mixture(k, v, c.maze.agent.value_goals.geom_discount);
       }},
      {"agent.geom_discount",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         const double d = to_double(k, v);
         if (!(d > 0.0 && d < 1.0)) bad(k, "must lie in (0, 1)");
         c.maze.agent.actor_goals.geom_discount = c.maze.agent.value_goals.geom_discount = d;
         c.maze.agent.hier_goals.geom_discount = d;
       }},
      {"agent.flow_steps", [](RunConfig& c, const std::string& k, const std::string& v) { c.maze.agent.flow_steps = static_cast<int>(to_int(k, v)); }},
      {"agent.batch", [](RunConfig& c, const std::string& k, const std::string& v) { c.maze.agent.batch = to_positive(k, v); }},

      {"sweep.axis",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         static const std::vector<std::string> axes{"H", "n", "dataset_size", "mlp_width", "lr", "tau"};
         if (std::find(axes.begin(), axes.end(), v) == axes.end()) bad(k, "expected one of H, n, dataset_size, mlp_width, lr, tau");
         c.sweep.axis = v;
       }},
      {"sweep.values", [](RunConfig& c, const std::string&, const std::string& v) { c.sweep.values = split_list(v); }},
      {"sweep.methods", [](RunConfig& c, const std::string&, const std::string& v) { c.sweep.methods = split_list(v); }},

      {"grad_check.losses",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.grad.losses = split_list(v);
         for (const auto& s : c.grad.losses) {
           if (s != "all") wrap(k, [&] { return gradcheck::loss_from_string(s); });
         }
       }},
      {"grad_check.seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.grad.seed = to_nonneg(k, v); }},
      {"grad_check.step", [](RunConfig& c, const std::string& k, const std::string& v) { c.grad.step = to_double(k, v); }},
      {"grad_check.tolerance", [](RunConfig& c, const std::string& k, const std::string& v) { c.grad.tolerance = to_double(k, v); }},
  };
  return table;
}

void validate(const RunConfig& c) {
  if (c.kind == Kind::lock_dqn) {
    auto d = c.lock.dqn;
    d.state_dim = 1;
    d.horizon = c.lock.horizon;
    wrap("dqn", [&] {
      d.validate();
      return 0;
    });
    if (c.lock.dataset == "1step" && c.lock.dqn.n > 1) bad("lock.dataset", "1step data cannot feed n > 1 segments");
    if (c.lock.dataset == "nstep" || (c.lock.dataset == "auto" && c.lock.dqn.n > 1)) {
      const int dn = c.lock.dataset_n > 0 ? c.lock.dataset_n : c.lock.dqn.n;
      if (dn < c.lock.dqn.n) bad("lock.dataset_n", "must be >= dqn.n");
    }
  }
  if (c.kind == Kind::maze_agents) {
    auto a = c.maze.agent;
    agents::enable_components(a, c.maze.methods);
    wrap("agent", [&] {
      a.validate();
      return 0;
    });
    if (static_cast<std::size_t>(a.n) >= c.maze.traj_len) bad("agent.n", "must be shorter than maze.traj_len");
  }
}

}  // namespace

void set_value(RunConfig& cfg, const std::string& dotted_key, const std::string& value) {
  const auto& t = setters();
  const auto it = t.find(dotted_key);
  if (it == t.end()) {
    const auto dot = dotted_key.find('.');
    const std::string section = dotted_key.substr(0, dot);
    bool known_section = false;
    for (const auto& [k, _] : t) known_section = known_section || k.rfind(section + ".", 0) == 0;
    if (!known_section) bad(dotted_key, "unknown section [" + section + "]");
    bad(dotted_key, "unknown key");
  }
  it->second(cfg, dotted_key, trim(value));
}

RunConfig parse_config(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream is(text);
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(ErrorKind::config, "line " + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) bad(section, "key outside of any section");
    for (const auto& [key, value] : body) set_value(cfg, section + "." + key, value.data());
  }
  validate(cfg);
  return cfg;
}

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) bad("json", "expected an object of sections");
  RunConfig cfg;
  for (const auto& [section, body] : j.items()) {
    if (section == "build") continue;
    if (!body.is_object()) bad(section, "expected an object");
    for (const auto& [key, value] : body.items()) {
      std::string text;
      auto scalar = [](const json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return std::string(v.get<bool>() ? "true" : "false");
        return v.dump();
      };
      if (value.is_array()) {
        for (const auto& v : value) text += (text.empty() ? "" : ",") + scalar(v);
      } else {
        text = scalar(value);
      }
      set_value(cfg, section + "." + key, text);
    }
  }
  validate(cfg);
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    if (path.extension() == ".json") {
      json j;
      try {
        j = json::parse(ss.str());
      } catch (const json::exception& e) {
        bad("json", e.what());
      }
      return config_from_json(j);
    }
    return parse_config(ss.str());
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::config) throw;
    throw Error(ErrorKind::config, path.string() + ": " + std::string(e.what()).substr(std::string("config error: ").size()));
  }
}

namespace {

std::string widths(const std::vector<int>& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + std::to_string(w[i]);
  return s;
}

json mixture_json(const data::GoalSampleConfig& g) { return json::array({g.p_cur, g.p_geom, g.p_traj, g.p_rand}); }

int lock_dataset_n(const RunConfig& c) { return c.lock.dataset_n > 0 ? c.lock.dataset_n : c.lock.dqn.n; }

bool lock_uses_1step(const RunConfig& c) {
  return c.lock.dataset == "1step" || (c.lock.dataset == "auto" && c.lock.dqn.n == 1);
}

}  // namespace

json resolved_json(const RunConfig& c) {
  json j;
  j["build"] = build_info();
  j["run"] = {{"kind", to_string(c.kind)},
              {"name", c.name},
              {"train_steps", c.train_steps},
              {"eval_every", c.eval_every},
              {"seeds", c.seeds},
              {"final_fraction", c.final_fraction},
              {"success_window", c.success_window}};
  if (c.kind == Kind::lock_dqn) {
    const auto& l = c.lock;
    j["lock"] = {{"horizon", l.horizon},
                 {"env_seed", l.env_seed},
                 {"dataset", lock_uses_1step(c) ? "1step" : "nstep"},
                 {"dataset_n", lock_uses_1step(c) ? 1 : lock_dataset_n(c)},
                 {"dataset_size", l.dataset_size},
                 {"data_seed", l.data_seed},
                 {"batch", l.batch},
                 {"td_batches", l.td_batches},
                 {"buckets", l.buckets}};
    j["dqn"] = {{"n", l.dqn.n},
                {"gamma", l.dqn.gamma},
                {"lr", l.dqn.lr},
                {"tau", l.dqn.tau},
                {"hidden", widths(l.dqn.hidden)},
                {"layer_norm", l.dqn.layer_norm},
                {"double_q", learn::to_string(l.dqn.double_q)},
                {"cut", learn::to_string(l.dqn.cut)},
                {"cut_refresh", l.dqn.cut_refresh}};
  }
  if (c.kind == Kind::maze_agents) {
    const auto& m = c.maze;
    json methods = json::array(), sets = json::array();
    for (auto x : m.methods) methods.push_back(agents::to_string(x));
    for (auto x : m.task_sets) sets.push_back(eval::to_string(x));
    j["maze"] = {{"layout", m.layout},   {"noise_std", m.noise_std}, {"num_traj", m.num_traj},
                 {"traj_len", m.traj_len}, {"data_seed", m.data_seed}, {"max_steps", m.max_steps},
                 {"methods", methods},   {"task_sets", sets},        {"tasks", m.tasks},
                 {"episodes", m.episodes}};
    const auto& a = m.agent;
    j["agent"] = {{"n", a.n},
                  {"rs_n", a.rs_n},
                  {"subgoal_period", a.period()},
                  {"actor_hidden", widths(a.actor_hidden)},
                  {"value_hidden", widths(a.value_hidden)},
                  {"layer_norm", a.layer_norm},
                  {"lr", a.lr},
                  {"tau", a.tau},
                  {"gamma", a.gamma},
                  {"loss", learn::to_string(a.loss)},
                  {"q_heads", a.q_heads},
                  {"aggregate", learn::to_string(a.aggregate)},
                  {"actor_goals", mixture_json(a.actor_goals)},
                  {"hier_goals", mixture_json(a.hier_goals)},
                  {"value_goals", mixture_json(a.value_goals)},
                  {"geom_discount", a.value_goals.geom_discount},
                  {"flow_steps", a.flow_steps},
                  {"batch", a.batch}};
  }
  if (!c.sweep.axis.empty()) j["sweep"] = {{"axis", c.sweep.axis}, {"values", c.sweep.values}, {"methods", c.sweep.methods}};
  if (c.kind == Kind::grad_check) {
    j["grad_check"] = {{"losses", c.grad.losses}, {"seed", c.grad.seed}, {"step", c.grad.step}, {"tolerance", c.grad.tolerance}};
  }
  return j;
}

// ---------------------------------------------------------------------------
// Datasets

namespace {

json dataset_key(const RunConfig& c) {
  if (c.kind == Kind::lock_dqn) {
    return {{"env", "lock"},
            {"horizon", c.lock.horizon},
            {"env_seed", c.lock.env_seed},
            {"type", lock_uses_1step(c) ? "1step" : "nstep"},
            {"n", lock_uses_1step(c) ? 1 : lock_dataset_n(c)},
            {"size", c.lock.dataset_size},
            {"seed", c.lock.data_seed}};
  }
  if (c.kind == Kind::maze_agents) {
    return {{"env", "maze"},
            {"layout", c.maze.layout},
            {"num_traj", c.maze.num_traj},
            {"traj_len", c.maze.traj_len},
            {"noise_std", c.maze.noise_std},
            {"seed", c.maze.data_seed}};
  }
  throw Error(ErrorKind::config, "run.kind: " + std::string(to_string(c.kind)) + " has no dataset");
}

data::Dataset generate(const RunConfig& c) {
  if (c.kind == Kind::lock_dqn) {
    const auto spec = envs::lock_new(c.lock.horizon, c.lock.env_seed);
    if (lock_uses_1step(c)) return data::gen_lock_1step(spec, c.lock.dataset_size, c.lock.data_seed);
    return data::gen_lock_nstep(spec, std::max(2, lock_dataset_n(c)), c.lock.dataset_size, c.lock.data_seed);
  }
  const auto spec = envs::maze_new(c.maze.layout, 0);
  return data::gen_maze_play(spec, {c.maze.num_traj, c.maze.traj_len, c.maze.noise_std, c.maze.data_seed});
}

std::mutex g_cache_mutex;
std::map<std::string, std::shared_ptr<const data::Dataset>> g_cache;

}  // namespace

std::shared_ptr<const data::Dataset> dataset_for(const RunConfig& cfg) {
  const std::string key = dataset_key(cfg).dump();
  std::lock_guard<std::mutex> lock(g_cache_mutex);
  if (auto it = g_cache.find(key); it != g_cache.end()) return it->second;

  std::shared_ptr<const data::Dataset> ds;
  const char* dir = std::getenv("HRL_CACHE_DIR");
  if (dir && *dir) {
    char name[64];
    std::snprintf(name, sizeof name, "%016llx.hrld", static_cast<unsigned long long>(fnv1a(key)));
    const fs::path path = fs::path(dir) / name;
    if (fs::exists(path)) {
      ds = std::make_shared<const data::Dataset>(data::load(path));
    } else {
      ds = std::make_shared<const data::Dataset>(generate(cfg));
      std::error_code ec;
      fs::create_directories(path.parent_path(), ec);
      if (ec) throw Error(ErrorKind::io, "cannot create cache dir " + path.parent_path().string());
      const fs::path tmp = path.string() + ".tmp";
      data::save(*ds, tmp);
      fs::rename(tmp, path, ec);
      if (ec) throw Error(ErrorKind::io, "cannot write " + path.string());
      eval::write_text_atomic(path.string() + ".json", key + "\n");
    }
  } else {
    ds = std::make_shared<const data::Dataset>(generate(cfg));
  }
  g_cache[key] = ds;
  return ds;
}

// ---------------------------------------------------------------------------
// Statistics and helpers

Stat summarize(const std::vector<double>& xs) {
  Stat s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  const double half = 1.96 * s.sd / std::sqrt(static_cast<double>(xs.size()));
  s.ci_lo = s.mean - half;
  s.ci_hi = s.mean + half;
  return s;
}

namespace {

std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
  return seed * 0x9E3779B97F4A7C15ULL + stream * 0xBF58476D1CE4E5B9ULL + 0x94D049BB133111EBULL;
}

std::vector<std::int64_t> schedule(const RunConfig& c) {
  std::vector<std::int64_t> steps{0};
  if (c.eval_every > 0) {
    for (std::int64_t s = c.eval_every; s < c.train_steps; s += c.eval_every) steps.push_back(s);
  }
  if (c.train_steps > 0) steps.push_back(c.train_steps);
  return steps;
}

bool in_window(const RunConfig& c, std::int64_t step) {
  if (c.train_steps == 0) return true;
  return static_cast<double>(step) >= (1.0 - c.final_fraction) * static_cast<double>(c.train_steps) - 1e-9;
}

// Tasks [0, n) on a pool of `workers` threads. Exceptions are collected and
// the first one (in task order) is rethrown after everything finished.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

RunConfig for_seed(const RunConfig& c, std::uint64_t seed) {
  RunConfig one = c;
  one.seeds = {seed};
  return one;
}

void write_json(const fs::path& p, const json& j) { eval::write_text_atomic(p, j.dump(2) + "\n"); }

json summary_json(const std::vector<GroupSummary>& groups, bool failed, const std::string& why) {
  json arr = json::array();
  for (const auto& g : groups) {
    json e = {{"run_id", g.run_id},
              {"seed", g.seed},
              {"success_rate", g.success_rate},
              {"td_error", g.td_error},
              {"q_error", g.q_error}};
    for (const auto& [k, v] : g.extra) e["extra"][k] = v;
    arr.push_back(e);
  }
  json j = {{"groups", arr}, {"failed", failed}};
  if (failed) j["error"] = why;
  return j;
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

struct SeedOutput {
  std::vector<eval::MetricsRow> rows;
  std::vector<GroupSummary> groups;
};

// ---------------------------------------------------------------------------
// Lock

SeedOutput run_lock_seed(const RunConfig& c, std::uint64_t seed, const fs::path& dir, const RunOptions& opt) {
  const auto spec = envs::lock_new(c.lock.horizon, c.lock.env_seed);
  const auto ds = dataset_for(c);
  const auto star = oracle::lock_oracle_q(spec);

  learn::DqnConfig dc = c.lock.dqn;
  dc.state_dim = spec.state_dim;
  dc.horizon = spec.horizon;
  dc.seed = derive(seed, 1);
  learn::DqnLearner learner(dc);
  Rng rng(derive(seed, 2));
  const data::BatchRequest req{c.lock.batch, dc.n, dc.gamma, dc.n > 1 && dc.cut == learn::NstepCut::greedy};
  const std::string run_id = c.name + "/s" + std::to_string(seed);

  SeedOutput out;
  std::vector<std::vector<double>> window_pp;
  std::vector<double> all_success, window_success, window_td, window_q;
  double loss_sum = 0.0;
  std::int64_t loss_count = 0;
  std::string failure;

  auto evaluate = [&](std::int64_t step, std::size_t index) {
    const auto q = eval::lock_q_snapshot(learner, spec);
    Rng td_rng(derive(seed, 1000 + index));
    eval::MetricsRow row;
    row.run_id = run_id;
    row.step = step;
    row.success_rate = eval::eval_lock_success(spec, q);
    row.td_error = eval::td_error(learner, *ds, req, c.lock.td_batches, td_rng);
    row.q_error = eval::q_error(q, star);
    const auto pp = eval::per_position_q_error(q, star, std::min(c.lock.buckets, spec.horizon - 1));
    std::vector<double> idx(pp.size());
    for (std::size_t b = 0; b < pp.size(); ++b) {
      idx[b] = static_cast<double>(b);
      char key[32];
      std::snprintf(key, sizeof key, "pp_%02zu", b);
      row.extra[key] = pp[b];
    }
    row.extra["spearman"] = pp.size() > 1 ? eval::spearman(idx, pp) : 0.0;
    if (loss_count > 0) row.extra["train_loss"] = loss_sum / static_cast<double>(loss_count);
    loss_sum = 0.0;
    loss_count = 0;
    out.rows.push_back(row);
    all_success.push_back(row.success_rate);
    if (in_window(c, step)) {
      window_success.push_back(row.success_rate);
      window_td.push_back(row.td_error);
      window_q.push_back(row.q_error);
      window_pp.push_back(pp);
    }
    if (opt.verbose) {
      std::cerr << run_id << " step " << step << " success " << row.success_rate << " q_error " << row.q_error << "\n";
    }
    const bool finite = std::isfinite(row.q_error) && std::isfinite(row.td_error);
    if (finite) {
      fs::create_directories(dir / "checkpoint");
      std::ostringstream os;
      nn::save_params(os, learner.online());
      eval::write_text_atomic(dir / "checkpoint" / "q.hrlw", os.str());
      write_json(dir / "checkpoint" / "manifest.json", {{"step", step}, {"components", {"q"}}});
    }
    return finite;
  };

  const auto steps = schedule(c);
  std::int64_t done = 0;
  try {
    for (std::size_t e = 0; e < steps.size(); ++e) {
      for (; done < steps[e]; ++done) {
        const double l = learner.update(data::sample_segments(*ds, req, rng));
        if (!std::isfinite(l)) throw Error(ErrorKind::numeric, "non-finite TD loss at step " + std::to_string(done + 1));
        loss_sum += l;
        ++loss_count;
      }
      if (!evaluate(steps[e], e)) throw Error(ErrorKind::numeric, "non-finite evaluation at step " + std::to_string(steps[e]));
    }
  } catch (const Error& err) {
    if (err.kind() != ErrorKind::numeric) throw;
    failure = err.what();
  }

  GroupSummary g;
  g.run_id = run_id;
  g.seed = seed;
  g.success_rate = c.success_window == "all" ? mean_of(all_success) : mean_of(window_success);
  g.td_error = mean_of(window_td);
  g.q_error = mean_of(window_q);
  g.extra["success_all"] = mean_of(all_success);
  g.extra["success_final"] = mean_of(window_success);
  if (!window_pp.empty()) {
    std::vector<double> pp(window_pp.front().size(), 0.0), idx(pp.size());
    for (const auto& w : window_pp) {
      for (std::size_t b = 0; b < pp.size(); ++b) pp[b] += w[b] / static_cast<double>(window_pp.size());
    }
    for (std::size_t b = 0; b < pp.size(); ++b) {
      idx[b] = static_cast<double>(b);
      char key[32];
      std::snprintf(key, sizeof key, "pp_%02zu", b);
      g.extra[key] = pp[b];
    }
    g.extra["spearman"] = pp.size() > 1 ? eval::spearman(idx, pp) : 0.0;
  }
  out.groups.push_back(g);

  eval::write_csv(out.rows, dir / "metrics.csv");
  write_json(dir / "summary.json", summary_json(out.groups, !failure.empty(), failure));
  if (!failure.empty()) throw Error(ErrorKind::numeric, run_id + ": " + failure);
  return out;
}

// ---------------------------------------------------------------------------
// Maze

SeedOutput run_maze_seed(const RunConfig& c, std::uint64_t seed, const fs::path& dir, const RunOptions& opt) {
  envs::MazeOverrides mo;
  mo.max_episode_steps = c.maze.max_steps;
  const auto spec = envs::maze_new(c.maze.layout, 0, mo);
  const auto ds = dataset_for(c);

  agents::AgentConfig ac = c.maze.agent;
  agents::enable_components(ac, c.maze.methods);
  ac.seed = derive(seed, 1);
  agents::MazeAgent agent(spec, ac);
  Rng rng(derive(seed, 2));

  std::vector<std::vector<eval::MazeTask>> tasks;
  for (auto set : c.maze.task_sets) tasks.push_back(eval::maze_tasks(spec, set, c.maze.tasks));

  SeedOutput out;
  const std::size_t M = c.maze.methods.size();
  std::vector<std::vector<double>> all_success(M), window_td(M);
  std::vector<std::map<std::string, std::vector<double>>> window(M);
  std::string failure;

  auto evaluate = [&](std::int64_t step, std::size_t index) {
    Rng loss_rng(derive(seed, 1000 + index));
    const auto losses = agent.eval_losses(*ds, loss_rng);
    const std::map<std::string, double> loss_cols = {
        {"loss_flat", losses.flat_loss},       {"loss_high_flow", losses.high_flow_loss},
        {"loss_low_flow", losses.low_flow_loss}, {"loss_v_high", losses.v_high_loss},
        {"loss_q_high", losses.q_high_loss},   {"loss_v_low", losses.v_low_loss},
        {"loss_q_low", losses.q_low_loss}};
    bool finite = true;
    for (const auto& [k, v] : loss_cols) finite = finite && std::isfinite(v);

    for (std::size_t m = 0; m < M; ++m) {
      const auto method = c.maze.methods[m];
      eval::MetricsRow row;
      row.run_id = c.name + "/" + agents::to_string(method) + "/s" + std::to_string(seed);
      row.step = step;
      row.extra = loss_cols;
      for (std::size_t t = 0; t < tasks.size(); ++t) {
        agents::Policy policy(agent, method, ac.rs_n, ac.period());
        Rng er(derive(seed, 100000 + index * 1024 + m * 32 + t));
        const auto r = eval::eval_maze_success(spec, policy.as_fn(), tasks[t], c.maze.episodes, c.maze.max_steps, er);
        const std::string set = eval::to_string(c.maze.task_sets[t]);
        row.extra["success_" + set] = r.success_rate;
        row.extra["steps_" + set] = r.mean_steps_success;
        if (t == 0) row.success_rate = r.success_rate;
      }
      const bool critic = method == agents::Method::sharsa || method == agents::Method::dsharsa;
      row.td_error = critic ? losses.q_high_loss : 0.0;
      row.q_error = 0.0;
      out.rows.push_back(row);
      all_success[m].push_back(row.success_rate);
      if (in_window(c, step)) {
        window[m]["success"].push_back(row.success_rate);
        window_td[m].push_back(row.td_error);
        for (auto set : c.maze.task_sets) {
          const std::string k = std::string("success_") + eval::to_string(set);
          window[m][k].push_back(row.extra[k]);
        }
      }
      if (opt.verbose) {
        std::cerr << row.run_id << " step " << step;
        for (auto set : c.maze.task_sets) {
          const std::string k = std::string("success_") + eval::to_string(set);
          std::cerr << " " << k << " " << row.extra[k];
        }
        std::cerr << "\n";
      }
    }
    if (finite) {
      agent.save(dir / "checkpoint");
      write_json(dir / "checkpoint" / "step.json", {{"step", step}});
    }
    return finite;
  };

  const auto steps = schedule(c);
  std::int64_t done = 0;
  try {
    for (std::size_t e = 0; e < steps.size(); ++e) {
      for (; done < steps[e]; ++done) agent.train_step(*ds, rng);
      if (!evaluate(steps[e], e)) throw Error(ErrorKind::numeric, "non-finite losses at step " + std::to_string(steps[e]));
    }
  } catch (const Error& err) {
    if (err.kind() != ErrorKind::numeric) throw;
    failure = err.what();
  }

  for (std::size_t m = 0; m < M; ++m) {
    GroupSummary g;
    g.run_id = c.name + "/" + agents::to_string(c.maze.methods[m]) + "/s" + std::to_string(seed);
    g.seed = seed;
    g.success_rate = c.success_window == "all" ? mean_of(all_success[m]) : mean_of(window[m]["success"]);
    g.td_error = mean_of(window_td[m]);
    for (const auto& [k, v] : window[m]) {
      if (k != "success") g.extra[k] = mean_of(v);
    }
    out.groups.push_back(g);
  }
  eval::write_csv(out.rows, dir / "metrics.csv");
  write_json(dir / "summary.json", summary_json(out.groups, !failure.empty(), failure));
  if (!failure.empty()) throw Error(ErrorKind::numeric, c.name + "/s" + std::to_string(seed) + ": " + failure);
  return out;
}

SeedOutput run_seed(const RunConfig& c, std::uint64_t seed, const fs::path& dir, const RunOptions& opt) {
  fs::create_directories(dir);
  write_json(dir / "config.json", resolved_json(for_seed(c, seed)));
  if (c.kind == Kind::lock_dqn) return run_lock_seed(c, seed, dir, opt);
  if (c.kind == Kind::maze_agents) return run_maze_seed(c, seed, dir, opt);
  throw Error(ErrorKind::config, "run.kind: '" + std::string(to_string(c.kind)) + "' is not a training experiment");
}

}  // namespace

std::vector<GroupSummary> run(const RunConfig& cfg, const fs::path& out, const RunOptions& opt) {
  validate(cfg);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create output dir " + out.string());
  write_json(out / "config.json", resolved_json(cfg));

  std::vector<SeedOutput> results(cfg.seeds.size());
  std::exception_ptr first;
  std::mutex m;
  parallel_for(cfg.seeds.size(), opt.workers, [&](std::size_t i) {
    try {
      results[i] = run_seed(cfg, cfg.seeds[i], out / ("seed_" + std::to_string(cfg.seeds[i])), opt);
    } catch (...) {
      std::lock_guard<std::mutex> lock(m);
      if (!first) first = std::current_exception();
    }
  });

  std::vector<eval::MetricsRow> rows;
  std::vector<GroupSummary> groups;
  for (const auto& r : results) {
    rows.insert(rows.end(), r.rows.begin(), r.rows.end());
    groups.insert(groups.end(), r.groups.begin(), r.groups.end());
  }
  eval::write_csv(rows, out / "metrics.csv");
  if (first) std::rethrow_exception(first);
  return groups;
}

// ---------------------------------------------------------------------------
// Sweeps

namespace {

void apply_axis(RunConfig& c, const std::string& axis, const std::string& value) {
  const bool lock = c.kind == Kind::lock_dqn;
  const std::string key = "sweep.values";
  if (axis == "H") {
    if (!lock) bad(key, "axis H needs kind = lock-dqn");
    set_value(c, "lock.horizon", value);
  } else if (axis == "n") {
    set_value(c, lock ? "dqn.n" : "agent.n", value);
  } else if (axis == "dataset_size") {
    if (lock) {
      set_value(c, "lock.dataset_size", value);
    } else {
      const auto size = to_positive(key, value);
      c.maze.num_traj = std::max<std::size_t>(1, static_cast<std::size_t>(size) / (c.maze.traj_len - 1));
    }
  } else if (axis == "mlp_width") {
    const auto w = static_cast<int>(to_positive(key, value));
    if (lock) {
      for (auto& h : c.lock.dqn.hidden) h = w;
    } else {
      for (auto& h : c.maze.agent.actor_hidden) h = w;
      for (auto& h : c.maze.agent.value_hidden) h = w;
    }
  } else if (axis == "lr") {
    set_value(c, lock ? "dqn.lr" : "agent.lr", value);
  } else if (axis == "tau") {
    set_value(c, lock ? "dqn.tau" : "agent.tau", value);
  } else {
    bad("sweep.axis", "unknown axis '" + axis + "'");
  }
}

void apply_lock_method(RunConfig& c, const std::string& method) {
  static const std::regex re("dqn-n?([0-9]+)");
  std::smatch m;
  if (!std::regex_match(method, m, re)) bad("sweep.methods", "unknown lock method '" + method + "' (dqn-1, dqn-n16, ...)");
  set_value(c, "dqn.n", m[1].str());
}

std::string safe(const std::string& s) {
  std::string o = s;
  for (auto& ch : o) {
    if (ch == '/' || ch == ' ' || ch == '\\') ch = '_';
  }
  return o;
}

}  // namespace

std::vector<std::vector<GroupSummary>> sweep(const RunConfig& cfg, const fs::path& out, const RunOptions& opt) {
  if (cfg.sweep.axis.empty()) bad("sweep.axis", "missing");
  if (cfg.sweep.values.empty()) bad("sweep.values", "missing");
  const bool lock = cfg.kind == Kind::lock_dqn;
  if (!lock && cfg.kind != Kind::maze_agents) bad("run.kind", "sweeps need lock-dqn or maze-agents");

  // Points: (value, lock method) pairs; maze methods all come from one run.
  struct Point {
    std::string value, method;
    RunConfig cfg;
  };
  std::vector<Point> points;
  std::vector<std::string> methods = cfg.sweep.methods;
  if (lock && methods.empty()) methods = {"dqn-" + std::to_string(cfg.lock.dqn.n)};
  for (const auto& v : cfg.sweep.values) {
    if (lock) {
      for (const auto& meth : methods) {
        RunConfig c = cfg;
        apply_lock_method(c, meth);
        apply_axis(c, cfg.sweep.axis, v);
        c.name = cfg.name + "_" + safe(cfg.sweep.axis) + safe(v) + "_" + meth;
        validate(c);
        points.push_back({v, meth, c});
      }
    } else {
      RunConfig c = cfg;
      if (!methods.empty()) set_value(c, "maze.methods", [&] {
          std::string s;
          for (const auto& x : methods) s += (s.empty() ? "" : ",") + x;
          return s;
        }());
      apply_axis(c, cfg.sweep.axis, v);
      c.name = cfg.name + "_" + safe(cfg.sweep.axis) + safe(v);
      validate(c);
      points.push_back({v, "", c});
    }
  }

  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create output dir " + out.string());
  write_json(out / "config.json", resolved_json(cfg));

  // Flatten (point, seed) into one task list for the pool.
  const std::size_t S = cfg.seeds.size();
  std::vector<SeedOutput> results(points.size() * S);
  std::exception_ptr first;
  std::mutex m;
  RunOptions inner = opt;
  inner.workers = 1;
  parallel_for(results.size(), opt.workers, [&](std::size_t i) {
    const auto& p = points[i / S];
    const auto seed = cfg.seeds[i % S];
    try {
      const fs::path dir = out / p.cfg.name / ("seed_" + std::to_string(seed));
      if (i % S == 0) {
        fs::create_directories(out / p.cfg.name);
        write_json(out / p.cfg.name / "config.json", resolved_json(p.cfg));
      }
      results[i] = run_seed(p.cfg, seed, dir, inner);
    } catch (...) {
      std::lock_guard<std::mutex> lock(m);
      if (!first) first = std::current_exception();
    }
  });
  if (first) std::rethrow_exception(first);

  // Rows of the aggregate: one per (value, method).
  struct AggRow {
    std::string value, method;
    std::vector<GroupSummary> seeds;
  };
  std::vector<AggRow> agg;
  for (std::size_t p = 0; p < points.size(); ++p) {
    if (lock) {
      AggRow r{points[p].value, points[p].method, {}};
      for (std::size_t s = 0; s < S; ++s) r.seeds.push_back(results[p * S + s].groups.front());
      agg.push_back(r);
    } else {
      const auto& ms = points[p].cfg.maze.methods;
      for (std::size_t k = 0; k < ms.size(); ++k) {
        AggRow r{points[p].value, agents::to_string(ms[k]), {}};
        for (std::size_t s = 0; s < S; ++s) r.seeds.push_back(results[p * S + s].groups[k]);
        agg.push_back(r);
      }
    }
  }

  std::vector<std::string> metrics{"success_rate", "td_error", "q_error"};
  std::set<std::string> extra;
  for (const auto& r : agg) {
    for (const auto& g : r.seeds) {
      for (const auto& [k, _] : g.extra) extra.insert(k);
    }
  }
  metrics.insert(metrics.end(), extra.begin(), extra.end());

  auto value_of = [](const GroupSummary& g, const std::string& k) {
    if (k == "success_rate") return g.success_rate;
    if (k == "td_error") return g.td_error;
    if (k == "q_error") return g.q_error;
    const auto it = g.extra.find(k);
    return it == g.extra.end() ? std::nan("") : it->second;
  };

  std::ostringstream os;
  os << cfg.sweep.axis << ",method,seeds";
  for (const auto& k : metrics) {
    os << "," << k << "_mean," << k << "_ci_lo," << k << "_ci_hi";
    for (auto s : cfg.seeds) os << "," << k << "_s" << s;
  }
  os << "\n";
  for (const auto& r : agg) {
    os << r.value << "," << r.method << "," << S;
    for (const auto& k : metrics) {
      std::vector<double> xs;
      for (const auto& g : r.seeds) xs.push_back(value_of(g, k));
      const auto st = summarize(xs);
      os << "," << eval::format_double(st.mean) << "," << eval::format_double(st.ci_lo) << ","
         << eval::format_double(st.ci_hi);
      for (double x : xs) os << "," << (std::isnan(x) ? "" : eval::format_double(x));
    }
    os << "\n";
  }
  eval::write_text_atomic(out / "aggregate.csv", os.str());

  std::vector<std::vector<GroupSummary>> ret;
  for (const auto& r : agg) ret.push_back(r.seeds);
  return ret;
}

}  // namespace hrl::run
