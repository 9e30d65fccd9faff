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

// JSON configuration: strict loading (unknown keys are errors), defaults for
// omitted keys, dumping and a content hash for checkpoint compatibility.

#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "rmpc/pipeline.hpp"

namespace rmpc {

using Json = nlohmann::ordered_json;

namespace config_detail {

/// Reads the members of one JSON object, tracking which keys were consumed.
class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

  const Json* find(const std::string& k) {
    used_.insert(k);
    const auto it = j_.find(k);
    return it == j_.end() ? nullptr : &*it;
  }

  template <class T>
  void get(const std::string& k, T& out) {
    if (const Json* v = find(k)) out = convert<T>(*v, key(k));
  }

  void get_interval(const std::string& k, Interval& out) {
    if (const Json* v = find(k)) {
      const auto p = convert<std::vector<double>>(*v, key(k));
      if (p.size() != 2) throw ConfigError(key(k), "expected [min, max]");
      out = {p[0], p[1]};
    }
  }

  void get_vec3(const std::string& k, Vec3& out) {
    if (const Json* v = find(k)) out = to_vec3(*v, key(k));
  }

  void get_quaternion(const std::string& k, UnitQuaternion& out) {
    if (const Json* v = find(k)) {
      const auto q = convert<std::vector<double>>(*v, key(k));
      if (q.size() != 4) throw ConfigError(key(k), "expected [w, x, y, z]");
      try {
        out = UnitQuaternion(q[0], q[1], q[2], q[3]);
      } catch (const DimensionError& e) {
        throw ConfigError(key(k), e.what());
      }
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError(key(it.key()), "unknown key");
    }
  }

  template <class T>
  static T convert(const Json& v, const std::string& k) {
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError(k, "expected a number");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(k, "expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError(k, "expected an integer");
        if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
          throw ConfigError(k, "expected a non-negative integer");
        }
      }
      return v.get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(k, std::string("invalid value: ") + e.what());
    }
  }

  static Vec3 to_vec3(const Json& v, const std::string& k) {
    const auto p = convert<std::vector<double>>(v, k);
    if (p.size() != 3) throw ConfigError(k, "expected [x, y, z]");
    return {p[0], p[1], p[2]};
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> used_;
};

inline Json vec3_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }
inline Json quat_json(const UnitQuaternion& q) { return Json::array({q.w(), q.x(), q.y(), q.z()}); }
inline Json interval_json(const Interval& i) { return Json::array({i.min, i.max}); }
inline Json pose_json(const Pose3& p) {
  return Json{{"position", vec3_json(p.position)}, {"orientation", quat_json(p.orientation)}};
}

inline void read_pose(const Json& j, const std::string& path, Pose3& p) {
  Reader r(j, path);
  r.get_vec3("position", p.position);
  r.get_quaternion("orientation", p.orientation);
  r.finish();
}

inline Json chain_json(const KinematicChain& c) {
  Json joints = Json::array();
  for (const auto& j : c.joints) {
    joints.push_back(Json{{"axis", vec3_json(j.axis)},
                          {"offset", pose_json(j.offset)},
                          {"position_min", j.position_min},
                          {"position_max", j.position_max},
                          {"velocity_max", j.velocity_max},
                          {"mass", j.mass},
                          {"com", vec3_json(j.com)}});
  }
  std::vector<double> home(c.home.data(), c.home.data() + c.home.size());
  return Json{{"mount", pose_json(c.mount)},
              {"joints", joints},
              {"ee_offset", pose_json(c.ee_offset)},
              {"home", home},
              {"base",
               {{"half_length", c.base.half_length},
                {"half_width", c.base.half_width},
                {"corner_height", c.base.corner_height},
                {"mass", c.base.mass},
                {"com", vec3_json(c.base.com)},
                {"v_max", c.base.v_max},
                {"omega_max", c.base.omega_max}}},
              {"collision_points_per_link", c.collision_points_per_link}};
}

inline void read_chain(const Json& j, KinematicChain& c) {
  Reader r(j, "chain");
  if (const Json* m = r.find("mount")) read_pose(*m, "chain.mount", c.mount);
  if (const Json* js = r.find("joints")) {
    if (!js->is_array()) throw ConfigError("chain.joints", "expected an array");
    c.joints.clear();
    for (std::size_t i = 0; i < js->size(); ++i) {
      const std::string path = "chain.joints[" + std::to_string(i) + "]";
      Reader jr((*js)[i], path);
      JointSpec spec;
      jr.get_vec3("axis", spec.axis);
      if (const Json* o = jr.find("offset")) read_pose(*o, path + ".offset", spec.offset);
      jr.get("position_min", spec.position_min);
      jr.get("position_max", spec.position_max);
      jr.get("velocity_max", spec.velocity_max);
      jr.get("mass", spec.mass);
      jr.get_vec3("com", spec.com);
      jr.finish();
      c.joints.push_back(spec);
    }
  }
  if (const Json* e = r.find("ee_offset")) read_pose(*e, "chain.ee_offset", c.ee_offset);
  if (const Json* h = r.find("home")) {
    const auto v = Reader::convert<std::vector<double>>(*h, "chain.home");
    c.home = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  if (const Json* b = r.find("base")) {
    Reader br(*b, "chain.base");
    br.get("half_length", c.base.half_length);
    br.get("half_width", c.base.half_width);
    br.get("corner_height", c.base.corner_height);
    br.get("mass", c.base.mass);
    br.get_vec3("com", c.base.com);
    br.get("v_max", c.base.v_max);
    br.get("omega_max", c.base.omega_max);
    br.finish();
  }
  r.get("collision_points_per_link", c.collision_points_per_link);
  r.finish();
}

inline std::string progress_mode_name(TargetProgressMode m) {
  return m == TargetProgressMode::Formula ? "formula" : "remaining_distance";
}

inline Json world_json(const WorldConfig& w) {
  Json boxes = Json::array();
  for (const auto& b : w.boxes) {
    boxes.push_back(Json{{"center", vec3_json(b.center)},
                         {"yaw", b.yaw},
                         {"width", b.width},
                         {"length", b.length},
                         {"height", b.height}});
  }
  Json pairs = Json::array();
  for (const auto& [a, b] : w.self_pairs) pairs.push_back(Json::array({a, b}));
  return Json{{"bounds",
               {{"x", interval_json(w.bounds.x)}, {"y", interval_json(w.bounds.y)}, {"z", interval_json(w.bounds.z)}}},
              {"boxes", boxes},
              {"start_x", interval_json(w.start_x)},
              {"start_y", interval_json(w.start_y)},
              {"start_yaw", interval_json(w.start_yaw)},
              {"goal_x", interval_json(w.goal_x)},
              {"goal_y", w.goal_y},
              {"goal_z", w.goal_z},
              {"goal_orientation", quat_json(w.goal_orientation)},
              {"success_threshold", w.success_threshold},
              {"collision_distance", w.collision_distance},
              {"ground_height", w.ground_height},
              {"self_pairs", pairs},
              {"self_collision_distance", w.self_collision_distance},
              {"support_half_length", w.support_half_length},
              {"support_half_width", w.support_half_width},
              {"max_roll", w.max_roll},
              {"max_pitch", w.max_pitch},
              {"com_threshold", w.com_threshold},
              {"sub_target_tolerance", w.sub_target_tolerance},
              {"target_progress_mode", progress_mode_name(w.target_progress_mode)}};
}

inline void read_world(const Json& j, WorldConfig& w) {
  Reader r(j, "world");
  if (const Json* b = r.find("bounds")) {
    Reader br(*b, "world.bounds");
    br.get_interval("x", w.bounds.x);
    br.get_interval("y", w.bounds.y);
    br.get_interval("z", w.bounds.z);
    br.finish();
  }
  if (const Json* bs = r.find("boxes")) {
    if (!bs->is_array()) throw ConfigError("world.boxes", "expected an array");
    w.boxes.clear();
    for (std::size_t i = 0; i < bs->size(); ++i) {
      Reader br((*bs)[i], "world.boxes[" + std::to_string(i) + "]");
      Box3 b;
      br.get_vec3("center", b.center);
      br.get("yaw", b.yaw);
      br.get("width", b.width);
      br.get("length", b.length);
      br.get("height", b.height);
      br.finish();
      w.boxes.push_back(b);
    }
  }
  r.get_interval("start_x", w.start_x);
  r.get_interval("start_y", w.start_y);
  r.get_interval("start_yaw", w.start_yaw);
  r.get_interval("goal_x", w.goal_x);
  r.get("goal_y", w.goal_y);
  r.get("goal_z", w.goal_z);
  r.get_quaternion("goal_orientation", w.goal_orientation);
  r.get("success_threshold", w.success_threshold);
  r.get("collision_distance", w.collision_distance);
  r.get("ground_height", w.ground_height);
  if (const Json* p = r.find("self_pairs")) {
    const auto pairs = Reader::convert<std::vector<std::vector<int>>>(*p, "world.self_pairs");
    w.self_pairs.clear();
    for (const auto& q : pairs) {
      if (q.size() != 2) throw ConfigError("world.self_pairs", "expected [a, b] pairs");
      w.self_pairs.emplace_back(q[0], q[1]);
    }
  }
  r.get("self_collision_distance", w.self_collision_distance);
  r.get("support_half_length", w.support_half_length);
  r.get("support_half_width", w.support_half_width);
  r.get("max_roll", w.max_roll);
  r.get("max_pitch", w.max_pitch);
  r.get("com_threshold", w.com_threshold);
  r.get("sub_target_tolerance", w.sub_target_tolerance);
  if (const Json* m = r.find("target_progress_mode")) {
    const auto s = Reader::convert<std::string>(*m, "world.target_progress_mode");
    if (s == "formula") {
      w.target_progress_mode = TargetProgressMode::Formula;
    } else if (s == "remaining_distance") {
      w.target_progress_mode = TargetProgressMode::RemainingDistance;
    } else {
      throw ConfigError("world.target_progress_mode", "expected \"formula\" or \"remaining_distance\"");
    }
  }
  r.finish();
}

inline Json reward_json(const RewardParams& p) {
  return Json{{"tau_success", p.tau_success}, {"tau_boundary", p.tau_boundary}, {"tau_collision", p.tau_collision},
              {"tau_roll", p.tau_roll},       {"tau_max_step", p.tau_max_step}, {"tau_target", p.tau_target},
              {"gamma", p.gamma},             {"alpha_sub", p.alpha_sub},       {"w_model", p.w_model},
              {"w_goal", p.w_goal},           {"w_target", p.w_target},         {"max_rl_steps", p.max_rl_steps}};
}

inline void read_reward(const Json& j, RewardParams& p) {
  Reader r(j, "reward");
  r.get("tau_success", p.tau_success);
  r.get("tau_boundary", p.tau_boundary);
  r.get("tau_collision", p.tau_collision);
  r.get("tau_roll", p.tau_roll);
  r.get("tau_max_step", p.tau_max_step);
  r.get("tau_target", p.tau_target);
  r.get("gamma", p.gamma);
  r.get("alpha_sub", p.alpha_sub);
  r.get("w_model", p.w_model);
  r.get("w_goal", p.w_goal);
  r.get("w_target", p.w_target);
  r.get("max_rl_steps", p.max_rl_steps);
  r.finish();
}

inline Json slq_json(const SlqSettings& s) {
  return Json{{"horizon", s.horizon},
              {"dt", s.dt},
              {"max_iterations", s.max_iterations},
              {"line_search_halvings", s.line_search_halvings},
              {"convergence_tolerance", s.convergence_tolerance},
              {"min_hessian_eigenvalue", s.min_hessian_eigenvalue},
              {"log_iterations", s.log_iterations}};
}

inline void read_slq(const Json& j, SlqSettings& s) {
  Reader r(j, "slq");
  r.get("horizon", s.horizon);
  r.get("dt", s.dt);
  r.get("max_iterations", s.max_iterations);
  r.get("line_search_halvings", s.line_search_halvings);
  r.get("convergence_tolerance", s.convergence_tolerance);
  r.get("min_hessian_eigenvalue", s.min_hessian_eigenvalue);
  r.get("log_iterations", s.log_iterations);
  r.finish();
}

inline Json cost_json(const CostSpec& c) {
  return Json{{"control_weights", c.control_weights},
              {"position_weight", c.position_weight},
              {"orientation_weight", c.orientation_weight},
              {"terminal_position_scale", c.terminal_position_scale},
              {"terminal_orientation_scale", c.terminal_orientation_scale}};
}

inline void read_cost(const Json& j, const std::string& path, CostSpec& c) {
  Reader r(j, path);
  r.get("control_weights", c.control_weights);
  r.get("position_weight", c.position_weight);
  r.get("orientation_weight", c.orientation_weight);
  r.get("terminal_position_scale", c.terminal_position_scale);
  r.get("terminal_orientation_scale", c.terminal_orientation_scale);
  r.finish();
}

inline Json codec_json(const CodecConfig& c) {
  Json costs;
  for (Model m : kAllModels) costs[std::string(model_name(m))] = cost_json(c.costs[static_cast<std::size_t>(model_index(m))]);
  const auto& g = c.ranges;
  return Json{{"ranges",
               {{"sub_x", interval_json(g.sub_x)},
                {"sub_y", interval_json(g.sub_y)},
                {"sub_z", interval_json(g.sub_z)},
                {"goal_x", interval_json(g.goal_x)},
                {"goal_y", interval_json(g.goal_y)},
                {"goal_z", interval_json(g.goal_z)}}},
              {"costs", costs},
              {"base_standoff", c.base_standoff}};
}

inline void read_codec(const Json& j, CodecConfig& c) {
  Reader r(j, "codec");
  if (const Json* g = r.find("ranges")) {
    Reader gr(*g, "codec.ranges");
    gr.get_interval("sub_x", c.ranges.sub_x);
    gr.get_interval("sub_y", c.ranges.sub_y);
    gr.get_interval("sub_z", c.ranges.sub_z);
    gr.get_interval("goal_x", c.ranges.goal_x);
    gr.get_interval("goal_y", c.ranges.goal_y);
    gr.get_interval("goal_z", c.ranges.goal_z);
    gr.finish();
  }
  if (const Json* cs = r.find("costs")) {
    Reader cr(*cs, "codec.costs");
    for (Model m : kAllModels) {
      const std::string name(model_name(m));
      if (const Json* e = cr.find(name)) read_cost(*e, "codec.costs." + name, c.costs[static_cast<std::size_t>(model_index(m))]);
    }
    cr.finish();
  }
  r.get("base_standoff", c.base_standoff);
  r.finish();
}

inline Json dqn_json(const DqnConfig& d) {
  return Json{{"hidden", d.hidden},
              {"learning_rate", d.learning_rate},
              {"discount", d.discount},
              {"epsilon_start", d.epsilon_start},
              {"epsilon_end", d.epsilon_end},
              {"epsilon_decay_steps", d.epsilon_decay_steps},
              {"replay_capacity", d.replay_capacity},
              {"batch_size", d.batch_size},
              {"target_sync", d.target_sync},
              {"gradient_clip", d.gradient_clip},
              {"normalizer_warmup", d.normalizer_warmup},
              {"seed", d.seed}};
}

inline void read_dqn(const Json& j, DqnConfig& d) {
  Reader r(j, "dqn");
  r.get("hidden", d.hidden);
  r.get("learning_rate", d.learning_rate);
  r.get("discount", d.discount);
  r.get("epsilon_start", d.epsilon_start);
  r.get("epsilon_end", d.epsilon_end);
  r.get("epsilon_decay_steps", d.epsilon_decay_steps);
  r.get("replay_capacity", d.replay_capacity);
  r.get("batch_size", d.batch_size);
  r.get("target_sync", d.target_sync);
  r.get("gradient_clip", d.gradient_clip);
  r.get("normalizer_warmup", d.normalizer_warmup);
  r.get("seed", d.seed);
  r.finish();
}

inline Json grid_json(const GridSpec& g) {
  return Json{{"base_x", g.base_x},         {"base_y", g.base_y},   {"goal_x", g.goal_x},
              {"yaw_count", g.yaw_count},   {"runs", g.runs},       {"position_jitter", g.position_jitter},
              {"yaw_jitter", g.yaw_jitter}};
}

inline void read_grid(const Json& j, GridSpec& g) {
  Reader r(j, "grid");
  r.get("base_x", g.base_x);
  r.get("base_y", g.base_y);
  r.get("goal_x", g.goal_x);
  r.get("yaw_count", g.yaw_count);
  r.get("runs", g.runs);
  r.get("position_jitter", g.position_jitter);
  r.get("yaw_jitter", g.yaw_jitter);
  r.finish();
}

inline std::string timing_mode_name(TimingMode m) { return m == TimingMode::Synchronous ? "sync" : "realtime"; }

}  // namespace config_detail

inline TimingMode parse_timing_mode(const std::string& s) {
  if (s == "sync") return TimingMode::Synchronous;
  if (s == "realtime") return TimingMode::Realtime;
  throw ConfigError("timing_mode", "expected \"sync\" or \"realtime\"");
}

inline Json config_to_json(const PipelineConfig& c) {
  using namespace config_detail;
  return Json{{"chain", chain_json(c.chain)},
              {"world", world_json(c.world)},
              {"reward", reward_json(c.reward)},
              {"slq", slq_json(c.slq)},
              {"rbf", {{"mu", c.rbf.mu}, {"delta", c.rbf.delta}}},
              {"codec", codec_json(c.codec)},
              {"dqn", dqn_json(c.dqn)},
              {"grid", grid_json(c.grid)},
              {"action_duration", c.action_duration},
              {"control_dt", c.control_dt},
              {"timing_mode", timing_mode_name(c.timing_mode)},
              {"seed", c.seed},
              {"workers", c.workers}};
}

/// Defaults for every omitted key; unknown keys and invalid values throw
/// ConfigError naming the key.
inline PipelineConfig config_from_json(const Json& j) {
  using namespace config_detail;
  PipelineConfig c;
  Reader r(j, "");
  if (const Json* v = r.find("chain")) read_chain(*v, c.chain);
  if (const Json* v = r.find("world")) read_world(*v, c.world);
  if (const Json* v = r.find("reward")) read_reward(*v, c.reward);
  if (const Json* v = r.find("slq")) read_slq(*v, c.slq);
  if (const Json* v = r.find("rbf")) {
    Reader rr(*v, "rbf");
    rr.get("mu", c.rbf.mu);
    rr.get("delta", c.rbf.delta);
    rr.finish();
  }
  if (const Json* v = r.find("codec")) read_codec(*v, c.codec);
  if (const Json* v = r.find("dqn")) read_dqn(*v, c.dqn);
  if (const Json* v = r.find("grid")) read_grid(*v, c.grid);
  r.get("action_duration", c.action_duration);
  r.get("control_dt", c.control_dt);
  if (const Json* v = r.find("timing_mode")) c.timing_mode = parse_timing_mode(Reader::convert<std::string>(*v, "timing_mode"));
  r.get("seed", c.seed);
  r.get("workers", c.workers);
  r.finish();
  c.validate();
  return c;
}

inline PipelineConfig parse_config(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("<file>", e.what());
  }
  return config_from_json(j);
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("<file>", "cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

inline std::string dump_config(const PipelineConfig& c) { return config_to_json(c).dump(2); }

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash of everything a trained policy depends on (robot, world, reward,
/// solver, decoding, action timing); training-only and evaluation-only
/// settings are excluded.
inline std::uint64_t config_hash(const PipelineConfig& c) {
  Json j = config_to_json(c);
  j.erase("dqn");
  j.erase("grid");
  j.erase("seed");
  j.erase("workers");
  j.erase("timing_mode");
  return fnv1a(j.dump());
}

}  // namespace rmpc
