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

// Episode orchestration: policy-driven and whole-body baseline episodes, the
// evaluation grid, metrics, CSV/SVG exporters and DQN training.

#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "rmpc/action_codec.hpp"
#include "rmpc/drl.hpp"
#include "rmpc/env.hpp"
#include "rmpc/nmpc.hpp"
#include "rmpc/robot_models.hpp"
#include "rmpc/slq.hpp"

namespace rmpc {

enum class TimingMode { Synchronous, Realtime };

/// Evaluation grid: every (base x, base y, goal x, yaw) combination, each run
/// `runs` times with a small seeded jitter on the start pose.
struct GridSpec {
  std::vector<double> base_x{-1.0, 0.0, 1.0};
  std::vector<double> base_y{-2.0, -1.5, -1.0};
  std::vector<double> goal_x{-0.8, 0.0, 0.8};
  int yaw_count = 4;
  int runs = 5;
  double position_jitter = 0.05;
  double yaw_jitter = 0.05;

  int configurations() const {
    return static_cast<int>(base_x.size() * base_y.size() * goal_x.size()) * yaw_count;
  }

  /// yaw_count values equally spaced over [-pi, pi).
  std::vector<double> yaws() const {
    std::vector<double> y;
    for (int k = 0; k < yaw_count; ++k) y.push_back(-std::numbers::pi + 2.0 * std::numbers::pi * k / yaw_count);
    return y;
  }

  void validate() const {
    if (base_x.empty() || base_y.empty() || goal_x.empty()) throw ConfigError("grid", "sample lists must not be empty");
    if (yaw_count < 1) throw ConfigError("grid.yaw_count", "must be >= 1");
    if (runs < 1) throw ConfigError("grid.runs", "must be >= 1");
    if (!(position_jitter >= 0.0)) throw ConfigError("grid.position_jitter", "must be >= 0");
    if (!(yaw_jitter >= 0.0)) throw ConfigError("grid.yaw_jitter", "must be >= 0");
  }
};

struct PipelineConfig {
  KinematicChain chain = KinematicChain::default_chain();
  WorldConfig world;
  RewardParams reward;
  // Rollout step matched to the control period.
  SlqSettings slq{.dt = 0.05};
  RbfParams rbf;
  CodecConfig codec;
  DqnConfig dqn;
  GridSpec grid;
  // T_action: simulated seconds one RL action is held.
  double action_duration = 1.0;
  double control_dt = 0.05;
  TimingMode timing_mode = TimingMode::Synchronous;
  std::uint64_t seed = 1;
  int workers = 4;

  void validate() const {
    chain.validate();
    world.validate(chain);
    reward.validate();
    slq.validate();
    if (!(rbf.mu > 0.0)) throw ConfigError("rbf.mu", "must be > 0");
    if (!(rbf.delta > 0.0)) throw ConfigError("rbf.delta", "must be > 0");
    codec.validate(chain);
    dqn.validate();
    grid.validate();
    if (!(control_dt > 0.0)) throw ConfigError("control_dt", "must be > 0");
    if (!(action_duration >= control_dt)) throw ConfigError("action_duration", "must be >= control_dt");
    if (workers < 1) throw ConfigError("workers", "must be >= 1");
  }
};

/// splitmix64 of (a, b, c); used to derive independent per-episode streams.
inline std::uint64_t derive_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  std::uint64_t z = a;
  for (std::uint64_t v : {b, c}) {
    z += 0x9e3779b97f4a7c15ULL + v;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
  }
  return z;
}

struct SolveStats {
  std::int64_t count = 0;
  double sum_ms = 0.0;
  double sum_sq_ms = 0.0;
  double min_ms = std::numeric_limits<double>::infinity();

  void add(double ms) {
    ++count;
    sum_ms += ms;
    sum_sq_ms += ms * ms;
    min_ms = std::min(min_ms, ms);
  }
  void merge(const SolveStats& o) {
    count += o.count;
    sum_ms += o.sum_ms;
    sum_sq_ms += o.sum_sq_ms;
    min_ms = std::min(min_ms, o.min_ms);
  }
  double mean() const { return count > 0 ? sum_ms / static_cast<double>(count) : 0.0; }
  /// Population standard deviation.
  double stddev() const {
    if (count < 2) return 0.0;
    const double m = mean();
    return std::sqrt(std::max(0.0, sum_sq_ms / static_cast<double>(count) - m * m));
  }
};

struct TraceRow {
  int step = 0;
  double t = 0.0;
  double x_b = 0.0;
  double y_b = 0.0;
  Model model = Model::WholeBody;
  TargetType target_type = TargetType::Goal;

  bool operator==(const TraceRow&) const = default;
};

struct EpisodeResult {
  Outcome outcome = Outcome::Running;
  int rl_steps = 0;
  double reward = 0.0;
  std::array<SolveStats, kNumModels> solves{};
  std::int64_t solver_failures = 0;
  std::vector<TraceRow> trace;
  std::vector<Transition> transitions;

  std::int64_t total_solves() const {
    std::int64_t n = 0;
    for (const auto& s : solves) n += s.count;
    return n;
  }
};

/// Discrete table index or continuous action vector.
using PolicyAction = std::variant<int, ContinuousAction>;
using Policy = std::function<PolicyAction(const Observation&, const SimState&)>;

struct ActionResult {
  RewardBreakdown reward;
  int control_steps = 0;
};

/// Holds one decoded action for T_action: solve, apply, step, until the
/// action horizon elapses or the episode ends.
inline ActionResult execute_action(Environment& env, MultiModelMpc& mpc, const ActionCodec& codec,
                                   const DecodedAction& d, const PipelineConfig& cfg, EpisodeResult& out) {
  ActionResult res;
  env.begin_action(d.model);
  const int n_arm = env.chain().dof();
  const auto mi = static_cast<std::size_t>(model_index(d.model));
  double t_p = 0.0;
  while (t_p < cfg.action_duration - 1e-9 && !env.done()) {
    const NmpcProblem p = codec.problem(d, env.state().wb);
    Eigen::VectorXd u;
    double solve_time = 0.0;
    try {
      const auto step = mpc.step(p);
      u = step.control;
      solve_time = step.solve_time;
    } catch (const SolverDiverged& e) {
      ++out.solver_failures;
      u = Eigen::VectorXd::Zero(model_control_dim(d.model, n_arm));
      solve_time = std::max(e.last_iterate().solve_time, 1e-9);
    }
    out.solves[mi].add(solve_time * 1e3);
    const double dt = cfg.timing_mode == TimingMode::Synchronous ? cfg.control_dt : solve_time;
    env.step(map_whole_body_control(d.model, u, n_arm), dt);
    const auto& s = env.state();
    out.trace.push_back({static_cast<int>(out.trace.size()), s.t, s.wb.base.x, s.wb.base.y, d.model, d.target_type});
    t_p += dt;
    ++res.control_steps;
  }
  res.reward = env.end_action();
  return res;
}

namespace detail {
/// Resets a model's warm start when the new action changes its target.
class WarmStartTracker {
 public:
  void before(MultiModelMpc& mpc, const DecodedAction& d) {
    auto& last = last_[static_cast<std::size_t>(model_index(d.model))];
    const bool same = last.has_value() && last->first.position == d.target.position &&
                      last->first.orientation.eigen().coeffs() == d.target.orientation.eigen().coeffs() &&
                      last->second.x == d.base_target.x && last->second.y == d.base_target.y &&
                      last->second.yaw == d.base_target.yaw;
    if (!same) mpc.reset_warm_start(d.model);
    last = std::make_pair(d.target, d.base_target);
  }

 private:
  std::array<std::optional<std::pair<Pose3, BaseState>>, kNumModels> last_;
};

template <class Decide, class OnTransition>
EpisodeResult run_actions(Environment& env, MultiModelMpc& mpc, const ActionCodec& codec, const PipelineConfig& cfg,
                          Decide&& decide, OnTransition&& on_transition) {
  if (env.in_action() || env.state().n != 0) throw LifecycleError("episode must start from a freshly reset environment");
  EpisodeResult out;
  mpc.reset_warm_start();
  WarmStartTracker warm;
  while (!env.done()) {
    Observation o = env.observation();
    const auto [decoded, index] = decide(o, env.state());
    warm.before(mpc, decoded);
    const ActionResult a = execute_action(env, mpc, codec, decoded, cfg, out);
    out.reward += a.reward.total;
    ++out.rl_steps;
    on_transition(Transition{std::move(o), index, a.reward.total, env.observation(), env.done()}, out);
  }
  out.outcome = env.outcome();
  return out;
}
}  // namespace detail

/// Policy-driven episode on a freshly reset environment.
inline EpisodeResult run_episode(const Policy& policy, Environment& env, MultiModelMpc& mpc, const ActionCodec& codec,
                                 const PipelineConfig& cfg, bool record_transitions = false) {
  return detail::run_actions(
      env, mpc, codec, cfg,
      [&](const Observation& o, const SimState& s) -> std::pair<DecodedAction, int> {
        const PolicyAction a = policy(o, s);
        if (const int* i = std::get_if<int>(&a)) return {codec.decode_discrete(*i, s), *i};
        return {codec.decode(std::get<ContinuousAction>(a), s), -1};
      },
      [&](Transition t, EpisodeResult& out) {
        if (record_transitions) out.transitions.push_back(std::move(t));
      });
}

/// Whole-body model tracking the goal with every constraint group active.
inline DecodedAction baseline_action(const ActionCodec& codec, const SimState& s) {
  DecodedAction d;
  d.model = Model::WholeBody;
  d.costs = codec.config().costs[static_cast<std::size_t>(model_index(Model::WholeBody))];
  d.constraints = codec.groups();
  d.target_type = TargetType::Goal;
  d.target = s.goal;
  d.base_target = standoff_pose(s.wb.base, s.goal.position, codec.config().base_standoff);
  return d;
}

/// Baseline episode: no policy; the action horizon only paces the step budget.
inline EpisodeResult run_episode_baseline(Environment& env, MultiModelMpc& mpc, const ActionCodec& codec,
                                          const PipelineConfig& cfg) {
  return detail::run_actions(
      env, mpc, codec, cfg,
      [&](const Observation&, const SimState& s) -> std::pair<DecodedAction, int> {
        return {baseline_action(codec, s), -1};
      },
      [](Transition, EpisodeResult&) {});
}

/// Discrete index of the (whole-body, goal) entry.
inline constexpr int kWholeBodyGoalIndex = static_cast<int>(Model::WholeBody) * kTargetsPerModel;

struct GridEpisode {
  int episode = 0;
  int configuration = 0;
  int run = 0;
  BaseState base;
  Pose3 goal;
};

inline std::vector<GridEpisode> grid_episodes(const GridSpec& g, const WorldConfig& w, std::uint64_t master_seed) {
  std::vector<GridEpisode> out;
  const std::vector<double> yaws = g.yaws();
  int config = 0;
  for (double bx : g.base_x) {
    for (double by : g.base_y) {
      for (double gx : g.goal_x) {
        for (double yaw : yaws) {
          for (int run = 0; run < g.runs; ++run) {
            std::mt19937_64 rng(derive_seed(master_seed, static_cast<std::uint64_t>(config), static_cast<std::uint64_t>(run)));
            std::uniform_real_distribution<double> u(-1.0, 1.0);
            GridEpisode e;
            e.episode = static_cast<int>(out.size());
            e.configuration = config;
            e.run = run;
            e.base = {bx + g.position_jitter * u(rng), by + g.position_jitter * u(rng),
                      wrap_angle(yaw + g.yaw_jitter * u(rng))};
            e.goal = {Vec3(gx, w.goal_y, w.goal_z), w.goal_orientation};
            out.push_back(e);
          }
          ++config;
        }
      }
    }
  }
  return out;
}

/// `count` episodes with starts drawn by sample_start.
inline std::vector<GridEpisode> sampled_episodes(const WorldConfig& w, std::uint64_t seed, int count) {
  std::vector<GridEpisode> out;
  for (int i = 0; i < count; ++i) {
    GridEpisode e;
    e.episode = i;
    e.configuration = i;
    std::tie(e.base, e.goal) = sample_start(w, derive_seed(seed, 0x5a3b1e, static_cast<std::uint64_t>(i)));
    out.push_back(e);
  }
  return out;
}

struct MetricsRow {
  std::string method;
  int episodes = 0;
  // success, rollover, collision, boundary, max_step
  std::array<double, 5> pct{};
  std::array<SolveStats, kNumModels> solves{};

  double success_pct() const { return pct[0]; }
};

inline MetricsRow summarize(const std::string& method, const std::vector<EpisodeResult>& results) {
  MetricsRow row;
  row.method = method;
  row.episodes = static_cast<int>(results.size());
  std::array<int, 5> counts{};
  for (const auto& r : results) {
    switch (r.outcome) {
      case Outcome::Success: ++counts[0]; break;
      case Outcome::Rollover: ++counts[1]; break;
      case Outcome::Collision: ++counts[2]; break;
      case Outcome::Boundary: ++counts[3]; break;
      case Outcome::MaxStep: ++counts[4]; break;
      case Outcome::Running: break;
    }
    for (int m = 0; m < kNumModels; ++m) row.solves[static_cast<std::size_t>(m)].merge(r.solves[static_cast<std::size_t>(m)]);
  }
  for (std::size_t i = 0; i < counts.size(); ++i) {
    row.pct[i] = results.empty() ? 0.0 : 100.0 * counts[i] / static_cast<double>(results.size());
  }
  return row;
}

using EpisodeRunner =
    std::function<EpisodeResult(Environment&, MultiModelMpc&, const ActionCodec&, const PipelineConfig&)>;

inline EpisodeRunner baseline_runner() {
  return [](Environment& env, MultiModelMpc& mpc, const ActionCodec& codec, const PipelineConfig& cfg) {
    return run_episode_baseline(env, mpc, codec, cfg);
  };
}

inline EpisodeRunner policy_runner(Policy policy) {
  return [policy = std::move(policy)](Environment& env, MultiModelMpc& mpc, const ActionCodec& codec,
                                      const PipelineConfig& cfg) { return run_episode(policy, env, mpc, codec, cfg); };
}

inline Policy greedy_policy(const QPolicy& q) {
  return [q](const Observation& o, const SimState&) -> PolicyAction { return q.greedy(o); };
}

/// Runs the given episodes on `workers` threads, each with its own
/// environment, solver and codec. Results are indexed by episode.
inline std::vector<EpisodeResult> run_episodes(const std::vector<GridEpisode>& episodes, const EpisodeRunner& runner,
                                               const PipelineConfig& cfg, int workers) {
  cfg.validate();
  std::vector<EpisodeResult> results(episodes.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::string> errors(static_cast<std::size_t>(std::max(workers, 1)));
  auto work = [&](std::size_t w) {
    try {
      Environment env(cfg.chain, cfg.world, cfg.reward);
      MultiModelMpc mpc(cfg.chain, cfg.slq, cfg.rbf, cfg.control_dt);
      const ActionCodec codec(cfg.chain, cfg.codec, cfg.action_duration);
      for (std::size_t i = next++; i < episodes.size(); i = next++) {
        env.reset(episodes[i].base, episodes[i].goal);
        try {
          results[i] = runner(env, mpc, codec, cfg);
        } catch (const LifecycleError&) {
          // A lifecycle violation aborts the episode as a failure.
          results[i] = EpisodeResult{};
          results[i].outcome = env.done() ? env.outcome() : Outcome::MaxStep;
        }
      }
    } catch (const std::exception& e) {
      errors[w] = e.what();
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work, static_cast<std::size_t>(w));
  work(0);
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (!e.empty()) throw std::runtime_error("evaluation worker failed: " + e);
  }
  return results;
}

struct GridResult {
  MetricsRow metrics;
  std::vector<GridEpisode> episodes;
  std::vector<EpisodeResult> results;
};

inline GridResult eval_grid(const std::string& method, const EpisodeRunner& runner, const PipelineConfig& cfg,
                            int workers) {
  GridResult g;
  g.episodes = grid_episodes(cfg.grid, cfg.world, cfg.seed);
  g.results = run_episodes(g.episodes, runner, cfg, workers);
  g.metrics = summarize(method, g.results);
  return g;
}

/// Fraction of control steps per model over a set of episodes.
inline std::array<double, kNumModels> model_usage(const std::vector<EpisodeResult>& results) {
  std::array<double, kNumModels> counts{};
  double total = 0.0;
  for (const auto& r : results) {
    for (const auto& row : r.trace) {
      counts[static_cast<std::size_t>(model_index(row.model))] += 1.0;
      total += 1.0;
    }
  }
  if (total > 0.0) {
    for (auto& c : counts) c /= total;
  }
  return counts;
}

inline constexpr std::string_view kMetricsHeader =
    "method,success_pct,rollover_pct,collision_pct,boundary_pct,maxstep_pct,calls_base,mean_dtp_base_ms,"
    "std_dtp_base_ms,calls_arm,mean_dtp_arm_ms,std_dtp_arm_ms,calls_wb,mean_dtp_wb_ms,std_dtp_wb_ms";
inline constexpr std::string_view kTrajectoryHeader = "episode,step,t,x_b,y_b,model_index,target_type,outcome";
inline constexpr std::string_view kTrainingHeader = "episode,steps,reward,outcome,loss,epsilon";

namespace detail {
inline std::ofstream open_output(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << std::setprecision(10);
  return os;
}
}  // namespace detail

inline void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows) {
  os << kMetricsHeader << '\n';
  for (const auto& r : rows) {
    os << r.method;
    for (double p : r.pct) os << ',' << p;
    for (const auto& s : r.solves) os << ',' << s.count << ',' << s.mean() << ',' << s.stddev();
    os << '\n';
  }
}

inline void export_metrics(const std::vector<MetricsRow>& rows, const std::string& path) {
  auto os = detail::open_output(path);
  write_metrics_csv(os, rows);
  if (!os) throw std::runtime_error("failed writing " + path);
}

inline void write_trajectory_csv(std::ostream& os, const std::vector<EpisodeResult>& results) {
  os << kTrajectoryHeader << '\n';
  for (std::size_t e = 0; e < results.size(); ++e) {
    const auto& r = results[e];
    for (const auto& row : r.trace) {
      os << e << ',' << row.step << ',' << row.t << ',' << row.x_b << ',' << row.y_b << ','
         << model_index(row.model) << ',' << target_type_name(row.target_type) << ',' << outcome_name(r.outcome)
         << '\n';
    }
  }
}

inline void export_trajectories(const std::vector<EpisodeResult>& results, const std::string& path) {
  auto os = detail::open_output(path);
  os << std::setprecision(17);
  write_trajectory_csv(os, results);
  if (!os) throw std::runtime_error("failed writing " + path);
}

/// Per-model control-step counts read back from a trajectory CSV.
inline std::array<std::int64_t, kNumModels> read_trajectory_model_counts(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kTrajectoryHeader) throw std::runtime_error("unexpected trajectory header");
  std::array<std::int64_t, kNumModels> counts{};
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    for (int i = 0; i < 6; ++i) std::getline(ss, field, ',');
    counts[static_cast<std::size_t>(model_index(model_from_index(std::stoi(field))))]++;
  }
  return counts;
}

struct TrainingLogRow {
  int episode = 0;
  int steps = 0;
  double reward = 0.0;
  Outcome outcome = Outcome::Running;
  double loss = 0.0;
  double epsilon = 0.0;

  bool operator==(const TrainingLogRow&) const = default;
};

inline void write_training_log_csv(std::ostream& os, const std::vector<TrainingLogRow>& log) {
  os << kTrainingHeader << '\n';
  for (const auto& r : log) {
    os << r.episode << ',' << r.steps << ',' << r.reward << ',' << outcome_name(r.outcome) << ',' << r.loss << ','
       << r.epsilon << '\n';
  }
}

inline void export_training_log(const std::vector<TrainingLogRow>& log, const std::string& path) {
  auto os = detail::open_output(path);
  write_training_log_csv(os, log);
  if (!os) throw std::runtime_error("failed writing " + path);
}

/// Top-down map of base paths, one dot per control step coloured by model
/// (green base, blue arm, magenta whole body); failed episodes in grey.
inline void write_trajectory_svg(std::ostream& os, const std::vector<EpisodeResult>& results, const WorldConfig& w) {
  constexpr double kScale = 100.0;
  const double width = (w.bounds.x.max - w.bounds.x.min) * kScale;
  const double height = (w.bounds.y.max - w.bounds.y.min) * kScale;
  const auto px = [&](double x) { return (x - w.bounds.x.min) * kScale; };
  const auto py = [&](double y) { return (w.bounds.y.max - y) * kScale; };
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\" stroke=\"black\"/>\n";
  for (const auto& b : w.boxes) {
    os << "<rect x=\"" << px(b.center.x() - 0.5 * b.width) << "\" y=\"" << py(b.center.y() + 0.5 * b.length)
       << "\" width=\"" << b.width * kScale << "\" height=\"" << b.length * kScale << "\" fill=\"#bbbbbb\"/>\n";
  }
  constexpr std::array<const char*, kNumModels> kColour{"green", "blue", "magenta"};
  for (const auto& r : results) {
    const bool ok = r.outcome == Outcome::Success;
    for (const auto& row : r.trace) {
      os << "<circle cx=\"" << px(row.x_b) << "\" cy=\"" << py(row.y_b) << "\" r=\"1.5\" fill=\""
         << (ok ? kColour[static_cast<std::size_t>(model_index(row.model))] : "grey") << "\"/>\n";
    }
  }
  os << "</svg>\n";
}

struct TrainingResult {
  QPolicy policy;
  std::vector<TrainingLogRow> log;
};

/// DQN over the discrete table: one transition and (once the replay holds a
/// batch) one update per RL step. Episodes start from seeded random resets.
inline TrainingResult train_dqn(const PipelineConfig& cfg, int episodes, std::uint64_t seed,
                                const std::function<void(const TrainingLogRow&)>& progress = {}) {
  cfg.validate();
  Environment env(cfg.chain, cfg.world, cfg.reward);
  MultiModelMpc mpc(cfg.chain, cfg.slq, cfg.rbf, cfg.control_dt);
  const ActionCodec codec(cfg.chain, cfg.codec, cfg.action_duration);
  DqnConfig dcfg = cfg.dqn;
  dcfg.seed = derive_seed(seed, 0xd9e);
  DqnAgent agent(cfg.world.observation_dim(cfg.chain.dof()), kDiscreteActions, dcfg);
  TrainingResult out;
  for (int e = 0; e < episodes; ++e) {
    env.reset(derive_seed(seed, 0xe915, static_cast<std::uint64_t>(e)));
    double loss_sum = 0.0;
    int updates = 0;
    EpisodeResult r;
    try {
      r = detail::run_actions(
          env, mpc, codec, cfg,
          [&](const Observation& o, const SimState& s) -> std::pair<DecodedAction, int> {
            const int a = agent.act(o);
            return {codec.decode_discrete(a, s), a};
          },
          [&](Transition t, EpisodeResult&) {
            agent.remember(std::move(t));
            if (agent.ready()) {
              loss_sum += agent.update();
              ++updates;
            }
          });
    } catch (const LifecycleError&) {
      // Abort only this episode.
      r.outcome = env.outcome();
    }
    const TrainingLogRow row{e, r.rl_steps, r.reward, r.outcome, updates > 0 ? loss_sum / updates : 0.0,
                             agent.epsilon()};
    out.log.push_back(row);
    if (progress) progress(row);
  }
  out.policy = {agent.online(), agent.normalizer()};
  return out;
}

}  // namespace rmpc
