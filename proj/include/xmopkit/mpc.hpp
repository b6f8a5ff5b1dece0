#pragma once

// Receding-horizon rollout: sample a batch of candidate trajectories, score
// them for collisions, execute a short prefix of the best one, repeat.

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "xmopkit/collision.hpp"
#include "xmopkit/denoiser.hpp"
#include "xmopkit/planner.hpp"
#include "xmopkit/policy.hpp"

namespace xmopkit {

/// Candidate trajectory for the horizon after configuration j.
using Policy = std::function<InferResult(const JointConfig& j, std::uint64_t seed)>;
/// Builds the policy for one problem (the scripted expert plans here).
using PolicyFactory = std::function<std::optional<Policy>(const PlanningProblem&, std::uint64_t seed)>;
/// Per-waypoint collision scores of a candidate; the trajectory score is
/// their mean.
using Scorer =
    std::function<std::vector<double>(const PlanningProblem&, const std::vector<JointConfig>&, std::uint64_t seed)>;

struct RolloutConfig {
  int batch = 16;
  int horizon = 16;
  int min_execute = 2;
  int max_execute = 4;
  double goal_threshold = 0.01;  // 9D distance of the end-effector to the goal
  int max_steps = 200;
  int score_points = kDefaultScorePoints;
  int stuck_iterations = 5;
  double stuck_improvement = 1e-4;

  void validate() const {
    if (batch < 1 || horizon < 1 || min_execute < 1 || max_execute < min_execute || max_execute > horizon ||
        max_steps < 1) {
      throw InvalidArgument("RolloutConfig: need batch >= 1 and 1 <= min_execute <= max_execute <= horizon");
    }
  }
};

/// Oracle scorer: colliding fraction of sampled robot surface points.
inline Scorer geometric_scorer(int n_points = kDefaultScorePoints) {
  return [n_points](const PlanningProblem& p, const std::vector<JointConfig>& w, std::uint64_t seed) {
    Rng rng(seed);
    return score_steps(p.robot, p.scene, w, n_points, rng);
  };
}

/// First index of the minimum.
inline std::size_t select_candidate(const std::vector<double>& scores) {
  if (scores.empty()) throw InvalidArgument("select_candidate: no scores");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] < scores[best]) best = i;
  }
  return best;
}

/// Longest prefix length in [lo, hi] whose per-step scores are all zero;
/// lo when even that prefix collides.
inline int execution_length(const std::vector<double>& step_scores, int lo, int hi) {
  int n = 0;
  while (n < hi && n < static_cast<int>(step_scores.size()) && step_scores[static_cast<std::size_t>(n)] == 0.0) ++n;
  return std::max(lo, n);
}

inline double mean_score(const std::vector<double>& s) {
  if (s.empty()) return 0.0;
  double sum = 0.0;
  for (double v : s) sum += v;
  return sum / static_cast<double>(s.size());
}

enum class Outcome { Reached, Timeout, IkFailure, Stuck };

inline std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::Reached: return "reached";
    case Outcome::Timeout: return "timeout";
    case Outcome::IkFailure: return "ik_failure";
    case Outcome::Stuck: return "stuck";
  }
  return "unknown";
}

struct RolloutIteration {
  std::vector<double> scores;
  std::size_t selected = 0;
  int executed = 0;
  double goal_error = 0.0;  // after executing
};

struct RolloutResult {
  std::vector<JointConfig> trajectory;  // starts at the problem's start
  Outcome outcome = Outcome::Timeout;
  std::vector<RolloutIteration> iterations;
  double solution_time_s = 0.0;

  int steps() const { return static_cast<int>(trajectory.size()) - 1; }
};

inline double goal_error(const PlanningProblem& p, const JointConfig& j) {
  return pose_goal_error(end_effector_pose(p.robot, j), p.goal_ee);
}

inline RolloutResult rollout(const PlanningProblem& problem, const Policy& policy, const Scorer& scorer,
                             const RolloutConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  problem.validate();
  const auto t0 = std::chrono::steady_clock::now();
  RolloutResult res;
  res.trajectory.push_back(problem.start);
  JointConfig j = problem.start;
  double err = goal_error(problem, j);
  int flat = 0;

  for (std::uint64_t it = 0; err >= cfg.goal_threshold; ++it) {
    if (res.steps() >= cfg.max_steps) {
      res.outcome = Outcome::Timeout;
      break;
    }
    std::vector<InferResult> cands;
    std::vector<std::vector<double>> step_scores;
    RolloutIteration trace;
    bool any_first_valid = false;
    for (int b = 0; b < cfg.batch; ++b) {
      InferResult c = policy(j, derive_seed(seed, it, static_cast<std::uint64_t>(b)));
      if (static_cast<int>(c.joints.size()) < cfg.min_execute || c.joints.size() != c.valid.size()) {
        throw InvalidArgument("policy returned fewer steps than the execution horizon");
      }
      std::vector<double> s = scorer(problem, c.joints, derive_seed(seed, it, 1000 + static_cast<std::uint64_t>(b)));
      // A step without a valid IK solution counts as fully colliding.
      for (std::size_t k = 0; k < s.size(); ++k) {
        if (!c.valid[k]) s[k] = 1.0;
      }
      any_first_valid = any_first_valid || c.valid.front();
      trace.scores.push_back(mean_score(s));
      cands.push_back(std::move(c));
      step_scores.push_back(std::move(s));
    }
    if (!any_first_valid) {
      res.outcome = Outcome::IkFailure;
      res.iterations.push_back(std::move(trace));
      break;
    }
    trace.selected = select_candidate(trace.scores);
    const InferResult& win = cands[trace.selected];
    const int want = execution_length(step_scores[trace.selected], cfg.min_execute, cfg.max_execute);
    const int budget = cfg.max_steps - res.steps();
    const double before = err;
    for (int k = 0; k < std::min(want, budget); ++k) {
      if (!win.valid[static_cast<std::size_t>(k)]) break;
      j = win.joints[static_cast<std::size_t>(k)];
      res.trajectory.push_back(j);
      ++trace.executed;
      err = goal_error(problem, j);
      if (err < cfg.goal_threshold) break;
    }
    trace.goal_error = err;
    res.iterations.push_back(std::move(trace));
    if (err < cfg.goal_threshold) break;
    // Stuck means the goal error stopped changing (e.g. locked at a joint
    // limit); moving away from the goal on a detour does not count.
    flat = std::abs(before - err) < cfg.stuck_improvement ? flat + 1 : 0;
    if (flat >= cfg.stuck_iterations) {
      res.outcome = Outcome::Stuck;
      break;
    }
  }
  if (err < cfg.goal_threshold) res.outcome = Outcome::Reached;
  res.solution_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

struct SuccessReport {
  bool success = false;
  std::string reason;  // empty on success: joint_limits, collision or goal_tolerance
};

/// Dense re-validation of an executed trajectory plus the terminal 1 cm / 5
/// degree gates. Independent of how the rollout terminated.
inline SuccessReport success_check(const std::vector<JointConfig>& trajectory, const PlanningProblem& problem,
                                   double resolution = kEdgeResolution) {
  SuccessReport r;
  if (trajectory.empty()) {
    r.reason = "empty";
    return r;
  }
  for (const auto& q : trajectory) {
    if (!problem.robot.within_limits(q, 1e-9)) {
      r.reason = "joint_limits";
      return r;
    }
  }
  if (!path_valid(problem.robot, problem.scene, trajectory, resolution)) {
    r.reason = "collision";
    return r;
  }
  const Pose ee = end_effector_pose(problem.robot, trajectory.back());
  const double pos = (ee.translation() - problem.goal_ee.translation()).norm();
  const double rot = rotation_distance(ee.linear(), problem.goal_ee.linear());
  if (!(pos < kPositionTolerance) || !(rot < kOrientationTolerance)) {
    r.reason = "goal_tolerance";
    return r;
  }
  r.success = true;
  return r;
}

inline SuccessReport success_check(const RolloutResult& result, const PlanningProblem& problem) {
  return success_check(result.trajectory, problem);
}

// ---------------------------------------------------------------------------
// Policies

/// Policy backed by a denoiser: infer() for the problem's robot and goal.
inline Policy denoiser_policy(const PlanningProblem& problem, const Denoiser& denoiser, const DiffusionSchedule& sc,
                              const InferOptions& opts = {}) {
  return [&problem, &denoiser, &sc, opts](const JointConfig& j, std::uint64_t seed) {
    return infer(problem.robot, problem.frames, j, problem.goal_ee, denoiser, sc, seed, opts);
  };
}

/// Follows a classical plan: transforms to the next H waypoints after the
/// waypoint nearest to j go through the full denoising and whole-body IK
/// pipeline via a scripted denoiser.
inline std::optional<Policy> scripted_expert(const PlanningProblem& problem, std::uint64_t seed,
                                             const PlannerConfig& planner = {}, const InferOptions& opts = {}) {
  const PlanResult pr = plan(problem, planner, seed);
  if (!pr.success) return std::nullopt;
  auto path = std::make_shared<const std::vector<JointConfig>>(retime(pr.path.waypoints));
  auto sc = std::make_shared<const DiffusionSchedule>(DiffusionSchedule::square_cosine());
  return Policy([&problem, path, sc, opts](const JointConfig& j, std::uint64_t s) {
    const auto& w = *path;
    std::size_t near = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double d = (w[i] - j).squaredNorm();
      if (d < best) {
        best = d;
        near = i;
      }
    }
    const WholeBodyPose now = forward_kinematics(problem.robot, problem.frames, j);
    std::vector<WholeBodyPose> future;
    for (int k = 1; k <= opts.horizon; ++k) {
      future.push_back(forward_kinematics(problem.robot, problem.frames,
                                          w[std::min(near + static_cast<std::size_t>(k), w.size() - 1)]));
    }
    const VectorXd clean = encode_transforms(problem.robot.dof, relative_transforms(now, future), opts.slots);
    const ScriptedDenoiser oracle(*sc, clean);
    return infer(problem.robot, problem.frames, j, problem.goal_ee, oracle, *sc, s, opts);
  });
}

// ---------------------------------------------------------------------------
// Evaluation

struct ProblemOutcome {
  std::size_t problem_id = 0;
  std::string outcome;
  bool success = false;
  std::string failure_reason;
  double path_length = 0.0;
  double solution_time_s = 0.0;
  int steps = 0;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

inline std::optional<MeanStd> mean_std(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  MeanStd m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  for (double x : v) m.std += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(m.std / static_cast<double>(v.size()));
  return m;
}

struct EvaluationReport {
  std::vector<ProblemOutcome> rows;

  std::size_t successes() const {
    std::size_t n = 0;
    for (const auto& r : rows) n += r.success;
    return n;
  }
  double success_rate() const {
    return rows.empty() ? 0.0 : 100.0 * static_cast<double>(successes()) / static_cast<double>(rows.size());
  }
  std::optional<MeanStd> path_length() const { return over_successes(&ProblemOutcome::path_length); }
  std::optional<MeanStd> solution_time() const { return over_successes(&ProblemOutcome::solution_time_s); }

 private:
  std::optional<MeanStd> over_successes(double ProblemOutcome::*field) const {
    std::vector<double> v;
    for (const auto& r : rows) {
      if (r.success) v.push_back(r.*field);
    }
    return mean_std(v);
  }
};

/// Runs the MPC rollout on every problem. A problem whose policy cannot be
/// built (e.g. the expert's planner fails) counts as a failure.
inline EvaluationReport evaluate(const std::vector<PlanningProblem>& problems, const PolicyFactory& factory,
                                 const Scorer& scorer, const RolloutConfig& cfg, std::uint64_t seed) {
  EvaluationReport rep;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    const PlanningProblem& p = problems[i];
    ProblemOutcome row;
    row.problem_id = i;
    const auto t0 = std::chrono::steady_clock::now();
    const std::optional<Policy> policy = factory(p, derive_seed(seed, i, 0));
    if (!policy) {
      row.outcome = "no_policy";
      row.failure_reason = "no_policy";
      rep.rows.push_back(row);
      continue;
    }
    const RolloutResult r = rollout(p, *policy, scorer, cfg, derive_seed(seed, i, 1));
    const SuccessReport ok = success_check(r, p);
    row.outcome = to_string(r.outcome);
    row.success = ok.success;
    row.failure_reason = ok.reason;
    row.path_length = path_length(r.trajectory);
    row.solution_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    row.steps = r.steps();
    rep.rows.push_back(row);
  }
  return rep;
}

/// Classical baseline: plan with full access to the scene geometry, retime
/// and apply the same success check.
inline EvaluationReport evaluate_classical(const std::vector<PlanningProblem>& problems, const PlannerConfig& planner,
                                           std::uint64_t seed) {
  EvaluationReport rep;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    const PlanningProblem& p = problems[i];
    ProblemOutcome row;
    row.problem_id = i;
    const auto t0 = std::chrono::steady_clock::now();
    const PlanResult pr = plan(p, planner, derive_seed(seed, i));
    row.solution_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!pr.success) {
      row.outcome = pr.failure;
      row.failure_reason = pr.failure;
      rep.rows.push_back(row);
      continue;
    }
    const std::vector<JointConfig> traj = retime(pr.path.waypoints);
    const SuccessReport ok = success_check(traj, p);
    row.outcome = "reached";
    row.success = ok.success;
    row.failure_reason = ok.reason;
    row.path_length = path_length(traj);
    row.steps = static_cast<int>(traj.size()) - 1;
    rep.rows.push_back(row);
  }
  return rep;
}

/// Metrics CSV. Solution times are wall-clock and vary between runs unless
/// `include_time` is false, in which case the column is left empty.
inline void write_metrics_csv(std::ostream& os, const EvaluationReport& rep, bool include_time = true) {
  os << "problem_id,outcome,success,path_length,solution_time_s,steps\n";
  os.precision(10);
  for (const auto& r : rep.rows) {
    os << r.problem_id << ',' << r.outcome << ',' << (r.success ? 1 : 0) << ',' << r.path_length << ',';
    if (include_time) os << r.solution_time_s;
    os << ',' << r.steps << '\n';
  }
}

}  // namespace xmopkit
