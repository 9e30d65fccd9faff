// Copyright 2026 The rmpc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "rmpc/rmpc.hpp"

namespace {

namespace fs = std::filesystem;
using namespace rmpc;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  int episodes = -1;
  std::string out = "out";
  std::string policy;
  std::string timing_mode;
  int workers = -1;
};

PipelineConfig resolve(const Options& o) {
  PipelineConfig cfg = o.config.empty() ? PipelineConfig{} : load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.timing_mode.empty()) cfg.timing_mode = parse_timing_mode(o.timing_mode);
  if (o.workers > 0) cfg.workers = o.workers;
  cfg.validate();
  return cfg;
}

fs::path out_dir(const Options& o) {
  fs::path dir(o.out);
  fs::create_directories(dir);
  return dir;
}

void print_metrics(const MetricsRow& m) {
  std::printf("%s: %d episodes  success %.1f%%  rollover %.1f%%  collision %.1f%%  boundary %.1f%%  max_step %.1f%%\n",
              m.method.c_str(), m.episodes, m.pct[0], m.pct[1], m.pct[2], m.pct[3], m.pct[4]);
  for (Model model : kAllModels) {
    const auto& s = m.solves[static_cast<std::size_t>(model_index(model))];
    std::printf("  %-10s calls %8lld  mean %.3f ms  std %.3f ms\n", std::string(model_name(model)).c_str(),
                static_cast<long long>(s.count), s.mean(), s.stddev());
  }
}

void write_outputs(const std::string& method, const PipelineConfig& cfg, const std::vector<EpisodeResult>& results,
                   const fs::path& dir) {
  const MetricsRow m = summarize(method, results);
  export_metrics({m}, (dir / "metrics.csv").string());
  export_trajectories(results, (dir / "trajectories.csv").string());
  std::ofstream svg(dir / "trajectories.svg");
  write_trajectory_svg(svg, results, cfg.world);
  print_metrics(m);
  std::printf("wrote %s\n", dir.string().c_str());
}

/// Grid episodes by default; --episodes N switches to N sampled starts.
std::vector<GridEpisode> evaluation_set(const Options& o, const PipelineConfig& cfg) {
  if (o.episodes > 0) return sampled_episodes(cfg.world, cfg.seed, o.episodes);
  return grid_episodes(cfg.grid, cfg.world, cfg.seed);
}

QPolicy load_policy(const Options& o, const PipelineConfig& cfg) {
  if (o.policy.empty()) throw std::invalid_argument("--policy is required");
  return load_checkpoint(o.policy, config_hash(cfg));
}

int cmd_train(const Options& o) {
  const PipelineConfig cfg = resolve(o);
  const int episodes = o.episodes >= 0 ? o.episodes : 500;
  const fs::path dir = out_dir(o);
  const TrainingResult r = train_dqn(cfg, episodes, cfg.seed, [](const TrainingLogRow& row) {
    if ((row.episode + 1) % 10 == 0) {
      std::printf("episode %5d  reward %8.3f  %-9s  loss %.4f  eps %.3f\n", row.episode + 1, row.reward,
                  std::string(outcome_name(row.outcome)).c_str(), row.loss, row.epsilon);
      std::fflush(stdout);
    }
  });
  save_checkpoint((dir / "policy.bin").string(), r.policy, config_hash(cfg));
  export_training_log(r.log, (dir / "training_log.csv").string());
  std::printf("wrote %s\n", dir.string().c_str());
  return 0;
}

int cmd_eval(const Options& o) {
  const PipelineConfig cfg = resolve(o);
  const QPolicy q = load_policy(o, cfg);
  const auto results = run_episodes(evaluation_set(o, cfg), policy_runner(greedy_policy(q)), cfg, cfg.workers);
  write_outputs("dqn", cfg, results, out_dir(o));
  return 0;
}

int cmd_baseline(const Options& o) {
  const PipelineConfig cfg = resolve(o);
  const auto results = run_episodes(evaluation_set(o, cfg), baseline_runner(), cfg, cfg.workers);
  write_outputs("baseline", cfg, results, out_dir(o));
  return 0;
}

int cmd_rollout(const Options& o) {
  const PipelineConfig cfg = resolve(o);
  const EpisodeRunner runner = o.policy.empty() ? baseline_runner() : policy_runner(greedy_policy(load_policy(o, cfg)));
  const auto results = run_episodes(sampled_episodes(cfg.world, cfg.seed, 1), runner, cfg, 1);
  const EpisodeResult& r = results.front();
  for (const auto& row : r.trace) {
    std::printf("t %6.2f  base (%6.3f, %6.3f)  %-10s %s\n", row.t, row.x_b, row.y_b,
                std::string(model_name(row.model)).c_str(), std::string(target_type_name(row.target_type)).c_str());
  }
  std::printf("outcome %s after %d actions, reward %.3f\n", std::string(outcome_name(r.outcome)).c_str(), r.rl_steps,
              r.reward);
  const fs::path dir = out_dir(o);
  export_trajectories(results, (dir / "rollout.csv").string());
  return 0;
}

int cmd_dump_action_table(const Options& o) {
  const PipelineConfig cfg = resolve(o);
  const ActionCodec codec(cfg.chain, cfg.codec, cfg.action_duration);
  std::cout << "index,model,target_type,description\n";
  for (const auto& e : codec.table()) {
    std::cout << e.index << ',' << model_name(e.model) << ',' << target_type_name(e.target_type) << ',' << e.describe()
              << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reduced-model NMPC selection with a DQN policy"};
  app.require_subcommand(1);
  Options o;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "master seed (overrides config)");
    sub->add_option("--timing-mode", o.timing_mode, "sync or realtime")->check(CLI::IsMember({"sync", "realtime"}));
  };
  const auto add_run = [&](CLI::App* sub) {
    add_common(sub);
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--workers", o.workers, "evaluation threads")->check(CLI::PositiveNumber);
  };

  CLI::App* train = app.add_subcommand("train", "train a DQN policy");
  add_run(train);
  train->add_option("--episodes", o.episodes, "training episodes (default 500)")->check(CLI::NonNegativeNumber);

  CLI::App* eval = app.add_subcommand("eval", "evaluate a trained policy on the grid");
  add_run(eval);
  eval->add_option("--policy", o.policy, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--episodes", o.episodes, "use N sampled starts instead of the grid")->check(CLI::PositiveNumber);

  CLI::App* baseline = app.add_subcommand("baseline", "evaluate the whole-body baseline on the grid");
  add_run(baseline);
  baseline->add_option("--episodes", o.episodes, "use N sampled starts instead of the grid")
      ->check(CLI::PositiveNumber);

  CLI::App* rollout = app.add_subcommand("rollout", "run one episode and print its trace");
  add_run(rollout);
  rollout->add_option("--policy", o.policy, "checkpoint file (baseline if omitted)")->check(CLI::ExistingFile);

  CLI::App* dump = app.add_subcommand("dump-action-table", "print the discrete action table as CSV");
  add_common(dump);

  CLI11_PARSE(app, argc, argv);
  try {
    if (train->parsed()) return cmd_train(o);
    if (eval->parsed()) return cmd_eval(o);
    if (baseline->parsed()) return cmd_baseline(o);
    if (rollout->parsed()) return cmd_rollout(o);
    return cmd_dump_action_table(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
  }
  return 1;
}
