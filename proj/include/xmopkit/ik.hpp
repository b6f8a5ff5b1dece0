#pragma once

// Goal inverse kinematics (end-effector target with collision avoidance) and
// whole-body inverse kinematics (match every link pose).

#include <cmath>
#include <limits>
#include <optional>

#include "xmopkit/collision.hpp"
#include "xmopkit/kinematics.hpp"
#include "xmopkit/optimize.hpp"
#include "xmopkit/robot_model.hpp"

namespace xmopkit {

/// Groove objective: negative Gaussian well plus quartic wall.
inline double groove_cost(double distance) {
  const double d2 = distance * distance;
  return -std::exp(-d2 / 0.08) + 25.0 * d2 * d2;
}

inline double position_cost(const Eigen::Vector3d& x, const Eigen::Vector3d& goal) {
  return groove_cost((x - goal).norm());
}

/// Analytic gradient of position_cost with respect to x.
inline Eigen::Vector3d position_cost_gradient(const Eigen::Vector3d& x, const Eigen::Vector3d& goal) {
  const Eigen::Vector3d e = x - goal;
  const double d2 = e.squaredNorm();
  return (std::exp(-d2 / 0.08) * 2.0 / 0.08 + 100.0 * d2) * e;
}

inline double orientation_cost(const Eigen::Quaterniond& q, const Eigen::Quaterniond& goal) {
  return groove_cost(quaternion_distance(q, goal));
}

struct IkResult {
  JointConfig joints;
  double cost = std::numeric_limits<double>::infinity();
  bool success = false;
  int attempts = 0;
  double position_error = std::numeric_limits<double>::infinity();
  double orientation_error = std::numeric_limits<double>::infinity();
};

inline constexpr double kPositionTolerance = 0.01;
inline const double kOrientationTolerance = 5.0 * M_PI / 180.0;

struct GoalIkOptions {
  int attempts = 5;
  int max_iterations = 500;
  double position_tolerance = kPositionTolerance;
  double orientation_tolerance = kOrientationTolerance;
  bool collision_cost = true;
  std::optional<JointConfig> initial_guess;  // used for the first attempt
};

inline double goal_ik_cost(const RobotModel& robot, const Scene& scene, const Pose& target, const JointConfig& j,
                           bool with_collision) {
  const Pose ee = end_effector_pose(robot, j);
  double c = position_cost(ee.translation(), target.translation()) +
             orientation_cost(Eigen::Quaterniond(ee.linear()), Eigen::Quaterniond(target.linear()));
  if (with_collision) c += collision_cost(robot, scene, j);
  return c;
}

/// Minimizes position + orientation + collision cost within joint bounds,
/// with up to `attempts` random restarts. Success requires the end-effector
/// within the position/orientation gates and a collision-free configuration.
inline IkResult goal_ik(const RobotModel& robot, const Scene& scene, const Pose& target, std::uint64_t seed,
                        const GoalIkOptions& options = {}) {
  if (!is_valid_pose(target, 1e-6)) throw InvalidArgument("goal_ik: target is not a valid pose");
  Rng rng(seed);
  const VectorXd lo = robot.lower();
  const VectorXd hi = robot.upper();
  const Eigen::Quaterniond q_target(target.linear());

  IkResult best;
  for (int attempt = 0; attempt < options.attempts; ++attempt) {
    JointConfig init = (attempt == 0 && options.initial_guess) ? *options.initial_guess : uniform_in_box(rng, lo, hi);
    BoundConstrainedProblem problem;
    problem.lower = lo;
    problem.upper = hi;
    problem.initial = init;
    problem.objective = [&](const VectorXd& j) { return goal_ik_cost(robot, scene, target, j, options.collision_cost); };
    MinimizeOptions mo;
    mo.max_iterations = options.max_iterations;
    const SolveResult sol = minimize(problem, mo);

    const Pose ee = end_effector_pose(robot, sol.solution);
    IkResult r;
    r.joints = sol.solution;
    r.cost = sol.cost;
    r.attempts = attempt + 1;
    r.position_error = (ee.translation() - target.translation()).norm();
    r.orientation_error = quaternion_distance(Eigen::Quaterniond(ee.linear()), q_target);
    r.success = r.position_error < options.position_tolerance && r.orientation_error < options.orientation_tolerance &&
                config_collision_free(robot, scene, sol.solution);
    if (r.success) return r;
    if (r.cost < best.cost) best = r;
  }
  best.attempts = options.attempts;
  best.success = false;
  return best;
}

struct WholeBodyIkOptions {
  int max_attempts = 10;
  double cost_threshold = 1e-4;
  int iterations = 100;
  double perturbation = 0.1;
  std::uint64_t seed = 0;
};

/// Recovers joints whose forward kinematics matches every link pose of
/// `target` (sum of squared 9D differences), starting from `initial` and
/// perturbing it on failure.
inline IkResult whole_body_ik(const RobotModel& robot, const FrameAssignment& frames, const WholeBodyPose& target,
                              const JointConfig& initial, const WholeBodyIkOptions& options = {}) {
  if (target.size() != robot.token_count()) throw InvalidArgument("whole_body_ik: target has wrong link count");
  if (static_cast<std::size_t>(initial.size()) != robot.dof) throw InvalidArgument("whole_body_ik: wrong dof");
  Rng rng(options.seed);
  const VectorXd lo = robot.lower();
  const VectorXd hi = robot.upper();
  JointConfig guess = clamp_to_box(initial, lo, hi);

  BoundConstrainedProblem problem;
  problem.lower = lo;
  problem.upper = hi;
  problem.objective = [&](const VectorXd& j) { return whole_body_distance(forward_kinematics(robot, frames, j), target); };
  MinimizeOptions mo;
  mo.max_iterations = options.iterations;

  IkResult best;
  for (int attempt = 0; attempt < options.max_attempts; ++attempt) {
    problem.initial = guess;
    const SolveResult sol = minimize(problem, mo);
    if (sol.cost < best.cost) {
      best.joints = sol.solution;
      best.cost = sol.cost;
    }
    best.attempts = attempt + 1;
    if (sol.cost < options.cost_threshold) {
      best.joints = sol.solution;
      best.cost = sol.cost;
      best.success = true;
      break;
    }
    guess = clamp_to_box(guess + options.perturbation * standard_normal(rng, guess.size()), lo, hi);
  }
  if (!best.joints.size()) best.joints = guess;
  const Pose ee = end_effector_pose(robot, best.joints);
  best.position_error = (ee.translation() - target.back().translation()).norm();
  best.orientation_error = rotation_distance(ee.linear(), target.back().linear());
  return best;
}

}  // namespace xmopkit
