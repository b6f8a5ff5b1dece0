#pragma once

// Joint-space RRT-Connect with shortcutting and piecewise-linear re-timing.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "xmopkit/collision.hpp"
#include "xmopkit/kinematics.hpp"
#include "xmopkit/robot_model.hpp"

namespace xmopkit {

inline constexpr double kEdgeResolution = 0.02;
inline constexpr double kRetimeStep = 0.05;
inline constexpr double kMaxPathLength = 10.0;

struct PlanningProblem {
  KinematicTemplate tmpl;
  RobotModel robot;
  FrameAssignment frames;
  Scene scene;
  JointConfig start;
  JointConfig goal;
  Pose goal_ee = Pose::Identity();

  void validate() const {
    if (!robot.within_limits(start) || !robot.within_limits(goal)) {
      throw InvalidArgument("planning problem endpoints must lie within joint limits");
    }
    validate_frames(robot, frames);
    if (!config_collision_free(robot, scene, start)) throw InvalidArgument("planning problem start is in collision");
    if (!config_collision_free(robot, scene, goal)) throw InvalidArgument("planning problem goal is in collision");
  }
};

struct Path {
  std::vector<JointConfig> waypoints;
  double plan_time_s = 0.0;
  double shortcut_time_s = 0.0;
  double length = 0.0;
};

inline double path_length(const std::vector<JointConfig>& waypoints) {
  double sum = 0.0;
  for (std::size_t i = 1; i < waypoints.size(); ++i) sum += (waypoints[i] - waypoints[i - 1]).norm();
  return sum;
}

inline double path_length(const Path& p) { return path_length(p.waypoints); }

/// Checks the straight joint-space segment a -> b at the given per-joint
/// resolution (b included, a assumed already checked).
inline bool segment_valid(const RobotModel& robot, const Scene& scene, const JointConfig& a, const JointConfig& b,
                          double resolution = kEdgeResolution) {
  const double span = (b - a).cwiseAbs().maxCoeff();
  const int n = std::max(1, static_cast<int>(std::ceil(span / resolution - 1e-9)));
  for (int k = 1; k <= n; ++k) {
    const JointConfig q = a + (static_cast<double>(k) / n) * (b - a);
    if (!robot.within_limits(q, 1e-12) || !config_collision_free(robot, scene, q)) return false;
  }
  return true;
}

/// Dense re-validation of a whole waypoint list.
inline bool path_valid(const RobotModel& robot, const Scene& scene, const std::vector<JointConfig>& waypoints,
                       double resolution = kEdgeResolution) {
  if (waypoints.empty()) return false;
  if (!robot.within_limits(waypoints.front(), 1e-12) || !config_collision_free(robot, scene, waypoints.front())) {
    return false;
  }
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    if (!segment_valid(robot, scene, waypoints[i - 1], waypoints[i], resolution)) return false;
  }
  return true;
}

struct ShortcutOptions {
  int attempts = 200;
  double resolution = kEdgeResolution;
};

/// Replaces random sub-paths with straight segments when the segment is
/// valid and strictly shorter. Length never increases.
inline std::vector<JointConfig> shortcut(const RobotModel& robot, const Scene& scene, std::vector<JointConfig> path,
                                         std::uint64_t seed, const ShortcutOptions& options = {}) {
  Rng rng(seed);
  for (int attempt = 0; attempt < options.attempts && path.size() > 2; ++attempt) {
    std::uniform_int_distribution<std::size_t> pick(0, path.size() - 1);
    std::size_t i = pick(rng);
    std::size_t k = pick(rng);
    if (i > k) std::swap(i, k);
    if (k < i + 2) continue;
    double sub = 0.0;
    for (std::size_t m = i + 1; m <= k; ++m) sub += (path[m] - path[m - 1]).norm();
    if (!((path[k] - path[i]).norm() < sub)) continue;
    if (!segment_valid(robot, scene, path[i], path[k], options.resolution)) continue;
    path.erase(path.begin() + static_cast<std::ptrdiff_t>(i + 1), path.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return path;
}

/// Linear interpolation so that consecutive waypoints differ by at most
/// `max_step` on every joint. Endpoints are kept exactly.
inline std::vector<JointConfig> retime(const std::vector<JointConfig>& path, double max_step = kRetimeStep) {
  if (!(max_step > 0.0)) throw InvalidArgument("retime: max_step must be positive");
  std::vector<JointConfig> out;
  if (path.empty()) return out;
  out.push_back(path.front());
  for (std::size_t i = 1; i < path.size(); ++i) {
    const JointConfig& a = path[i - 1];
    const JointConfig& b = path[i];
    const double span = (b - a).cwiseAbs().maxCoeff();
    const int n = std::max(1, static_cast<int>(std::ceil(span / max_step - 1e-9)));
    for (int k = 1; k < n; ++k) out.push_back(a + (static_cast<double>(k) / n) * (b - a));
    out.push_back(b);
  }
  for (std::size_t i = 1; i < out.size(); ++i) {
    if ((out[i] - out[i - 1]).cwiseAbs().maxCoeff() > max_step + 1e-12) {
      throw NumericalError("retime: step bound violated");
    }
  }
  return out;
}

/// retime plus a collision check at every output waypoint.
inline std::optional<std::vector<JointConfig>> retime_checked(const RobotModel& robot, const Scene& scene,
                                                              const std::vector<JointConfig>& path,
                                                              double max_step = kRetimeStep) {
  auto out = retime(path, max_step);
  for (const auto& q : out) {
    if (!config_collision_free(robot, scene, q)) return std::nullopt;
  }
  return out;
}

struct PlannerConfig {
  int max_iterations = 4000;  // tree-growth iterations; the search budget
  double extend_step = 0.3;   // rad, Euclidean
  int shortcut_attempts = 200;
  double resolution = kEdgeResolution;
  double max_path_length = kMaxPathLength;
  double time_limit_s = 30.0;  // wall-clock guard only; budgets are iteration counts
};

struct PlanResult {
  bool success = false;
  Path path;
  std::string failure;  // empty on success
  int iterations = 0;
};

namespace detail {

struct Tree {
  std::vector<JointConfig> nodes;
  std::vector<int> parent;

  int nearest(const JointConfig& q) const {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const double d = (nodes[i] - q).squaredNorm();
      if (d < bd) {
        bd = d;
        best = static_cast<int>(i);
      }
    }
    return best;
  }
  int add(const JointConfig& q, int p) {
    nodes.push_back(q);
    parent.push_back(p);
    return static_cast<int>(nodes.size()) - 1;
  }
  std::vector<JointConfig> branch(int i) const {
    std::vector<JointConfig> out;
    for (; i >= 0; i = parent[static_cast<std::size_t>(i)]) out.push_back(nodes[static_cast<std::size_t>(i)]);
    return out;  // leaf first
  }
};

enum class Extend { Trapped, Advanced, Reached };

inline Extend extend(Tree& t, const JointConfig& target, const RobotModel& robot, const Scene& scene,
                     const PlannerConfig& cfg, int& new_index) {
  const int near = t.nearest(target);
  const JointConfig& qn = t.nodes[static_cast<std::size_t>(near)];
  const JointConfig dir = target - qn;
  const double dist = dir.norm();
  const bool reach = dist <= cfg.extend_step;
  const JointConfig q = reach ? target : JointConfig(qn + (cfg.extend_step / dist) * dir);
  if (!segment_valid(robot, scene, qn, q, cfg.resolution)) return Extend::Trapped;
  new_index = t.add(q, near);
  return reach ? Extend::Reached : Extend::Advanced;
}

}  // namespace detail

/// RRT-Connect from start to goal, then shortcutting. The returned path is
/// re-validated densely; paths longer than `max_path_length` are rejected.
inline PlanResult plan(const PlanningProblem& problem, const PlannerConfig& cfg, std::uint64_t seed) {
  problem.validate();
  const RobotModel& robot = problem.robot;
  const Scene& scene = problem.scene;
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

  PlanResult res;
  std::vector<JointConfig> raw;
  if (problem.start == problem.goal) {
    raw = {problem.start};
  } else if (segment_valid(robot, scene, problem.start, problem.goal, cfg.resolution)) {
    raw = {problem.start, problem.goal};
  } else {
    Rng rng(seed);
    detail::Tree ta, tb;
    ta.add(problem.start, -1);
    tb.add(problem.goal, -1);
    bool a_is_start = true;
    const VectorXd lo = robot.lower();
    const VectorXd hi = robot.upper();
    for (int it = 0; it < cfg.max_iterations; ++it) {
      res.iterations = it + 1;
      if (elapsed() > cfg.time_limit_s) break;
      const JointConfig q_rand = uniform_in_box(rng, lo, hi);
      int ia = -1;
      if (detail::extend(ta, q_rand, robot, scene, cfg, ia) != detail::Extend::Trapped) {
        const JointConfig q_new = ta.nodes[static_cast<std::size_t>(ia)];
        int ib = -1;
        detail::Extend e = detail::Extend::Advanced;
        while (e == detail::Extend::Advanced) e = detail::extend(tb, q_new, robot, scene, cfg, ib);
        if (e == detail::Extend::Reached) {
          auto from_a = ta.branch(ia);
          auto from_b = tb.branch(ib);
          std::reverse(from_a.begin(), from_a.end());
          from_a.insert(from_a.end(), from_b.begin() + 1, from_b.end());
          if (!a_is_start) std::reverse(from_a.begin(), from_a.end());
          raw = std::move(from_a);
          break;
        }
      }
      std::swap(ta, tb);
      a_is_start = !a_is_start;
    }
  }
  res.path.plan_time_s = elapsed();
  if (raw.empty()) {
    res.failure = "timeout";
    return res;
  }

  ShortcutOptions so;
  so.attempts = cfg.shortcut_attempts;
  so.resolution = cfg.resolution;
  res.path.waypoints = shortcut(robot, scene, std::move(raw), derive_seed(seed, 1), so);
  res.path.shortcut_time_s = elapsed() - res.path.plan_time_s;
  res.path.length = path_length(res.path.waypoints);

  if (!path_valid(robot, scene, res.path.waypoints, cfg.resolution)) {
    res.failure = "invalid_path";
    return res;
  }
  if (res.path.length > cfg.max_path_length) {
    res.failure = "path_too_long";
    return res;
  }
  res.success = true;
  return res;
}

}  // namespace xmopkit
