#pragma once

// Planning-problem generation and demonstration datasets (JSON lines).

#include <atomic>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "xmopkit/collision.hpp"
#include "xmopkit/ik.hpp"
#include "xmopkit/kinematics.hpp"
#include "xmopkit/planner.hpp"
#include "xmopkit/robot_model.hpp"

namespace xmopkit {

struct MakeProblemOptions {
  int max_retries = 25;
  std::optional<std::uint64_t> robot_seed;  // fixed embodiment for every attempt
  GoalIkOptions ik;
};

struct MakeProblemResult {
  std::optional<PlanningProblem> problem;
  int attempts = 0;
  std::string failure;
};

/// Seed of the embodiment make_problem samples on attempt `attempt`.
inline std::uint64_t embodiment_seed(std::uint64_t seed, int attempt, const MakeProblemOptions& options = {}) {
  return options.robot_seed ? *options.robot_seed : derive_seed(seed, static_cast<std::uint64_t>(attempt), 0);
}

/// Samples an embodiment and solves goal IK for both endpoint poses,
/// resampling the embodiment until both succeed.
inline MakeProblemResult make_problem(Family family, Strategy strategy, const Scene& scene, const Pose& ee_start,
                                      const Pose& ee_goal, std::uint64_t seed, const MakeProblemOptions& options = {}) {
  MakeProblemResult out;
  for (int attempt = 0; attempt < options.max_retries; ++attempt) {
    out.attempts = attempt + 1;
    PlanningProblem p;
    p.tmpl = sample_template(family, strategy, embodiment_seed(seed, attempt, options));
    p.tmpl.family = to_string(family);
    p.robot = compile_robot(p.tmpl);
    p.frames = sample_frames(p.robot, derive_seed(seed, static_cast<std::uint64_t>(attempt), 1));
    p.scene = scene;
    const IkResult s = goal_ik(p.robot, scene, ee_start, derive_seed(seed, static_cast<std::uint64_t>(attempt), 2), options.ik);
    if (!s.success) continue;
    const IkResult g = goal_ik(p.robot, scene, ee_goal, derive_seed(seed, static_cast<std::uint64_t>(attempt), 3), options.ik);
    if (!g.success) continue;
    p.start = s.joints;
    p.goal = g.joints;
    // The goal pose is where the goal configuration puts the end-effector,
    // so reaching the goal configuration meets the 9D termination gate.
    p.goal_ee = end_effector_pose(p.robot, g.joints);
    out.problem = std::move(p);
    return out;
  }
  out.failure = "ik_exhausted";
  return out;
}

// ---------------------------------------------------------------------------
// Demonstration records

struct Demonstration {
  KinematicTemplate tmpl;
  FrameAssignment frames;
  Scene scene;
  JointConfig start;
  JointConfig goal;
  Pose goal_ee = Pose::Identity();
  std::vector<JointConfig> waypoints;  // retimed
  std::optional<double> plan_time_s;
  double path_length = 0.0;
};

inline nlohmann::json vector_json(const VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline VectorXd vector_from_json(const nlohmann::json& j) {
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

inline nlohmann::json demo_to_json(const Demonstration& d) {
  nlohmann::json w = nlohmann::json::array();
  for (const auto& q : d.waypoints) w.push_back(vector_json(q));
  return {{"template", template_to_json(d.tmpl)},
          {"frames", d.frames.cylinder_index},
          {"scene", scene_to_json(d.scene)},
          {"start", vector_json(d.start)},
          {"goal", vector_json(d.goal)},
          {"goal_ee_9d", vector_json(to_9d(d.goal_ee).vector())},
          {"waypoints", w},
          {"plan_time_s", d.plan_time_s ? nlohmann::json(*d.plan_time_s) : nlohmann::json(nullptr)},
          {"path_length", d.path_length}};
}

inline Demonstration demo_from_json(const nlohmann::json& j) {
  Demonstration d;
  d.tmpl = template_from_json(j.at("template"));
  d.frames.cylinder_index = j.at("frames").get<std::vector<int>>();
  d.scene = scene_from_json(j.at("scene"));
  d.start = vector_from_json(j.at("start"));
  d.goal = vector_from_json(j.at("goal"));
  const VectorXd g = vector_from_json(j.at("goal_ee_9d"));
  if (g.size() != 9) throw InvalidArgument("goal_ee_9d must have 9 entries");
  d.goal_ee = from_9d(Vector9d(g));
  for (const auto& w : j.at("waypoints")) d.waypoints.push_back(vector_from_json(w));
  if (!j.at("plan_time_s").is_null()) d.plan_time_s = j.at("plan_time_s").get<double>();
  d.path_length = j.at("path_length").get<double>();
  if (d.waypoints.empty()) throw InvalidArgument("demonstration has no waypoints");
  return d;
}

/// Output metadata record: tool version, config hash and master seed.
inline nlohmann::json metadata_record(const std::string& kind, const nlohmann::json& config, std::uint64_t seed) {
  return {{"xmopkit_version", std::string(kVersion)},
          {"kind", kind},
          {"config_hash", hex64(fnv1a(config.dump()))},
          {"master_seed", seed},
          {"config", config}};
}

struct DemoDataset {
  nlohmann::json metadata;
  std::vector<Demonstration> records;
};

inline void write_jsonl(std::ostream& os, const nlohmann::json& meta, const std::vector<nlohmann::json>& rows) {
  os << nlohmann::json{{"metadata", meta}}.dump() << '\n';
  for (const auto& r : rows) os << r.dump() << '\n';
}

inline DemoDataset read_demos(std::istream& is) {
  DemoDataset ds;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    if (first && j.contains("metadata")) {
      ds.metadata = j.at("metadata");
    } else {
      ds.records.push_back(demo_from_json(j));
    }
    first = false;
  }
  return ds;
}

inline DemoDataset read_demos(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open demonstration file '" + path + "'");
  return read_demos(in);
}

// ---------------------------------------------------------------------------
// Dataset generation

struct GenDemosConfig {
  std::size_t n = 10;
  Family family = Family::Sawyer7;
  Strategy strategy = Strategy::Normal;
  SceneConfig scene;
  std::uint64_t master_seed = 0;
  unsigned workers = 1;
  int attempts_per_record = 20;  // replacement problems per record index
  double min_endpoint_distance = 0.15;  // m, between start and goal end-effector positions
  std::optional<std::uint64_t> robot_seed;
  bool record_timing = false;  // wall-clock times make files non-reproducible
  PlannerConfig planner;

  nlohmann::json to_json() const {
    return {{"n", n},
            {"family", to_string(family)},
            {"strategy", to_string(strategy)},
            {"scene", scene_config_to_json(scene)},
            {"attempts_per_record", attempts_per_record},
            {"min_endpoint_distance", min_endpoint_distance},
            {"robot_seed", robot_seed ? nlohmann::json(*robot_seed) : nlohmann::json(nullptr)},
            {"record_timing", record_timing},
            {"planner_iterations", planner.max_iterations},
            {"shortcut_attempts", planner.shortcut_attempts}};
  }
};

struct GenDemosResult {
  std::vector<Demonstration> records;  // ordered by record index
  std::size_t failures = 0;           // failed problems (replaced or not)
  std::size_t missing = 0;            // record indices with no success
  bool partial() const { return missing > 0; }
};

namespace detail {

inline std::optional<JointConfig> random_free_config(const RobotModel& robot, const Scene& scene, Rng& rng) {
  for (int k = 0; k < 200; ++k) {
    JointConfig j = uniform_in_box(rng, robot.lower(), robot.upper());
    if (config_collision_free(robot, scene, j)) return j;
  }
  return std::nullopt;
}

// One problem: endpoints from FK of the first embodiment make_problem will
// sample, so they are reachable by construction for that robot.
inline std::optional<PlanningProblem> try_problem(const GenDemosConfig& cfg, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 7));
  const Scene scene = generate_scene(cfg.scene, rng);
  MakeProblemOptions mpo;
  mpo.robot_seed = cfg.robot_seed;
  const RobotModel probe = compile_robot(sample_template(cfg.family, cfg.strategy, embodiment_seed(seed, 0, mpo)));
  const auto js = random_free_config(probe, scene, rng);
  const auto jg = random_free_config(probe, scene, rng);
  if (!js || !jg) return std::nullopt;
  const Pose ps = end_effector_pose(probe, *js);
  const Pose pg = end_effector_pose(probe, *jg);
  if ((ps.translation() - pg.translation()).norm() < cfg.min_endpoint_distance) return std::nullopt;
  MakeProblemResult mp = make_problem(cfg.family, cfg.strategy, scene, ps, pg, seed, mpo);
  return std::move(mp.problem);
}

inline std::optional<Demonstration> try_demo(const GenDemosConfig& cfg, std::uint64_t seed, std::size_t& failures) {
  const std::optional<PlanningProblem> mp = try_problem(cfg, seed);
  if (!mp) {
    ++failures;
    return std::nullopt;
  }
  const PlanningProblem& p = *mp;
  const PlanResult pr = plan(p, cfg.planner, derive_seed(seed, 8));
  if (!pr.success) {
    ++failures;
    return std::nullopt;
  }
  auto dense = retime_checked(p.robot, p.scene, pr.path.waypoints);
  if (!dense) {
    ++failures;
    return std::nullopt;
  }
  Demonstration d;
  d.tmpl = p.tmpl;
  d.frames = p.frames;
  d.scene = p.scene;
  d.start = p.start;
  d.goal = p.goal;
  d.goal_ee = p.goal_ee;
  d.waypoints = std::move(*dense);
  d.path_length = path_length(d.waypoints);
  if (cfg.record_timing) d.plan_time_s = pr.path.plan_time_s + pr.path.shortcut_time_s;
  return d;
}

}  // namespace detail

/// Generates cfg.n demonstrations. Record i draws its problems from seeds
/// derive_seed(master, i, attempt); workers pull record indices and results
/// are merged by index, so the output does not depend on the worker count.
inline GenDemosResult gen_demos(const GenDemosConfig& cfg) {
  std::vector<std::optional<Demonstration>> slots(cfg.n);
  std::vector<std::size_t> fails(cfg.n, 0);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < cfg.n; i = next++) {
      for (int a = 0; a < cfg.attempts_per_record && !slots[i]; ++a) {
        slots[i] = detail::try_demo(cfg, derive_seed(cfg.master_seed, i, static_cast<std::uint64_t>(a)), fails[i]);
      }
    }
  };
  const unsigned nw = std::max(1u, cfg.workers);
  if (nw == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < nw; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  GenDemosResult res;
  for (std::size_t i = 0; i < cfg.n; ++i) {
    res.failures += fails[i];
    if (slots[i]) {
      res.records.push_back(std::move(*slots[i]));
    } else {
      ++res.missing;
    }
  }
  return res;
}

inline void write_demos(std::ostream& os, const GenDemosConfig& cfg, const GenDemosResult& res) {
  nlohmann::json meta = metadata_record("demonstrations", cfg.to_json(), cfg.master_seed);
  meta["records"] = res.records.size();
  meta["failures"] = res.failures;
  meta["partial"] = res.partial();
  std::vector<nlohmann::json> rows;
  rows.reserve(res.records.size());
  for (const auto& d : res.records) rows.push_back(demo_to_json(d));
  write_jsonl(os, meta, rows);
}

/// The planning problem a demonstration solves.
inline PlanningProblem problem_from_demo(const Demonstration& d) {
  PlanningProblem p;
  p.tmpl = d.tmpl;
  p.robot = compile_robot(d.tmpl);
  p.frames = d.frames;
  p.scene = d.scene;
  p.start = d.start;
  p.goal = d.goal;
  p.goal_ee = d.goal_ee;
  return p;
}

/// Problems only (no planning), drawn with the same seeds as gen_demos.
/// Indices whose attempts all fail are skipped.
inline std::vector<PlanningProblem> gen_problems(const GenDemosConfig& cfg) {
  std::vector<PlanningProblem> out;
  for (std::size_t i = 0; i < cfg.n; ++i) {
    for (int a = 0; a < cfg.attempts_per_record; ++a) {
      auto p = detail::try_problem(cfg, derive_seed(cfg.master_seed, i, static_cast<std::uint64_t>(a)));
      if (p) {
        out.push_back(std::move(*p));
        break;
      }
    }
  }
  return out;
}

}  // namespace xmopkit
