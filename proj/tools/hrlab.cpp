#include <cstdio>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "hrl/data.hpp"
#include "hrl/envs.hpp"
#include "hrl/evalkit.hpp"
#include "hrl/gradcheck.hpp"
#include "hrl/oracle.hpp"
#include "hrl/runner.hpp"

using namespace hrl;

namespace {

run::RunConfig load(const std::string& path, const std::optional<std::uint64_t>& seed) {
  auto cfg = run::load_config(path);
  if (seed) cfg.seeds = {*seed};
  return cfg;
}

std::string out_dir(const run::RunConfig& cfg, const std::string& flag) {
  if (!flag.empty()) return flag;
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  throw Error(ErrorKind::config, "no output directory: pass --out or set run.output_dir");
}

void print_summary(const std::vector<run::GroupSummary>& groups) {
  for (const auto& g : groups) {
    std::printf("%s success_rate=%s td_error=%s q_error=%s\n", g.run_id.c_str(),
                eval::format_double(g.success_rate).c_str(), eval::format_double(g.td_error).c_str(),
                eval::format_double(g.q_error).c_str());
  }
}

int dump_layout(const std::string& id) {
  for (const auto& row : envs::maze_layout_rows(id)) std::printf("%s\n", row.c_str());
  return 0;
}

int dump_lock_oracle(int horizon, std::uint64_t env_seed) {
  const auto spec = envs::lock_new(horizon, env_seed);
  const auto q = oracle::lock_oracle_q(spec);
  std::printf("# lock H=%d env_seed=%llu: state correct_action Q(s,0) Q(s,1)\n", horizon,
              static_cast<unsigned long long>(env_seed));
  for (int i = 0; i < horizon - 1; ++i) {
    std::printf("%d %d %s %s\n", i, spec.answers[static_cast<std::size_t>(i)], eval::format_double(q.at(i, 0)).c_str(),
                eval::format_double(q.at(i, 1)).c_str());
  }
  return 0;
}

int dump_maze_oracle(const std::string& id) {
  const auto spec = envs::maze_new(id, 0);
  const auto d = oracle::maze_bfs(spec);
  std::printf("# %s: %zu free cells, max distance %d; rows list BFS distances from each cell\n", id.c_str(),
              d.cells.size(), d.max_distance());
  for (const auto& a : d.cells) {
    std::printf("%d,%d:", a.row, a.col);
    for (const auto& b : d.cells) std::printf(" %d", d.at(a, b));
    std::printf("\n");
  }
  return 0;
}

int grad_check(const std::vector<std::string>& names, std::uint64_t seed, double step, double tol) {
  std::vector<gradcheck::Loss> losses;
  if (names.empty() || (names.size() == 1 && names[0] == "all")) {
    losses = gradcheck::all_losses();
  } else {
    for (const auto& n : names) losses.push_back(gradcheck::loss_from_string(n));
  }
  bool ok = true;
  for (auto l : losses) {
    const auto r = gradcheck::grad_check(l, seed, step);
    const bool pass = r.max_rel_error < tol;
    ok = ok && pass;
    std::printf("%-18s params=%-4zu max_rel_error=%.3e %s\n", gradcheck::to_string(l), r.parameters, r.max_rel_error,
                pass ? "ok" : "FAIL");
  }
  return ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hrlab: horizon-reduction experiments on the combination lock and point mazes"};
  app.require_subcommand(1);

  std::string config, out;
  int workers = 1;
  std::optional<std::uint64_t> seed_override;
  bool verbose = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "Sectioned config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "Output directory (defaults to run.output_dir)");
    sub->add_option("--workers", workers, "Parallel (seed x point) runs")->check(CLI::PositiveNumber);
    sub->add_option("--seed-override", seed_override, "Run only this seed");
    sub->add_flag("-v,--verbose", verbose, "Progress on stderr");
  };

  auto* run_cmd = app.add_subcommand("run", "Train and evaluate every seed of one config");
  add_common(run_cmd);
  auto* sweep_cmd = app.add_subcommand("sweep", "Cross product over the [sweep] axis and methods");
  add_common(sweep_cmd);

  auto* gc_cmd = app.add_subcommand("grad-check", "Finite-difference check of every training loss");
  std::vector<std::string> gc_losses;
  std::uint64_t gc_seed = 0;
  double gc_step = 1e-5, gc_tol = 1e-4;
  std::string gc_config;
  gc_cmd->add_option("--loss", gc_losses, "dqn, sarsa-regression, sarsa-bce, flow-matching or all");
  gc_cmd->add_option("--seed", gc_seed);
  gc_cmd->add_option("--step", gc_step);
  gc_cmd->add_option("--tolerance", gc_tol);
  gc_cmd->add_option("--config", gc_config, "Config with a [grad_check] section")->check(CLI::ExistingFile);

  auto* layout_cmd = app.add_subcommand("dump-layout", "Print a maze layout");
  std::string layout_id;
  layout_cmd->add_option("id", layout_id, "Layout id")->required();

  auto* oracle_cmd = app.add_subcommand("dump-oracle", "Print the exact oracle table");
  std::string oracle_env;
  int horizon = 4;
  std::uint64_t env_seed = 7;
  std::string oracle_config;
  oracle_cmd->add_option("env", oracle_env, "lock or a maze layout id");
  oracle_cmd->add_option("--horizon,-H", horizon, "Lock size");
  oracle_cmd->add_option("--env-seed", env_seed, "Lock permutation seed");
  oracle_cmd->add_option("--config", oracle_config, "Take the environment from a config")->check(CLI::ExistingFile);

  auto* data_cmd = app.add_subcommand("dataset-gen", "Generate (or fetch from HRL_CACHE_DIR) the dataset of a config");
  std::string data_config, data_out;
  data_cmd->add_option("--config", data_config)->required()->check(CLI::ExistingFile);
  data_cmd->add_option("--out", data_out, "Also write the dataset to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run_cmd) {
      const auto cfg = load(config, seed_override);
      print_summary(run::run(cfg, out_dir(cfg, out), {workers, verbose}));
      return 0;
    }
    if (*sweep_cmd) {
      const auto cfg = load(config, seed_override);
      for (const auto& g : run::sweep(cfg, out_dir(cfg, out), {workers, verbose})) print_summary(g);
      return 0;
    }
    if (*gc_cmd) {
      if (!gc_config.empty()) {
        const auto cfg = run::load_config(gc_config);
        return grad_check(gc_losses.empty() ? cfg.grad.losses : gc_losses, cfg.grad.seed, cfg.grad.step,
                          cfg.grad.tolerance);
      }
      return grad_check(gc_losses, gc_seed, gc_step, gc_tol);
    }
    if (*layout_cmd) return dump_layout(layout_id);
    if (*oracle_cmd) {
      if (!oracle_config.empty()) {
        const auto cfg = run::load_config(oracle_config);
        if (cfg.kind == run::Kind::maze_agents) return dump_maze_oracle(cfg.maze.layout);
        return dump_lock_oracle(cfg.lock.horizon, cfg.lock.env_seed);
      }
      if (oracle_env.empty() || oracle_env == "lock") return dump_lock_oracle(horizon, env_seed);
      return dump_maze_oracle(oracle_env);
    }
    if (*data_cmd) {
      const auto cfg = run::load_config(data_config);
      const auto ds = run::dataset_for(cfg);
      if (!data_out.empty()) data::save(*ds, data_out);
      std::printf("%zu trajectories, %zu transitions\n", ds->trajectory_count(), ds->transition_count());
      return 0;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "hrlab: %s\n", e.what());
    return run::exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "hrlab: io error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "hrlab: %s\n", e.what());
    return 1;
  }
  return 0;
}
