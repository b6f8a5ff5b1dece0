#include <gtest/gtest.h>

#include <memory>
#include <sstream>

#include "xmopkit/mpc.hpp"

using namespace xmopkit;

namespace {

const PlanningProblem& empty_problem() {
  static const PlanningProblem p = [] {
    GenDemosConfig cfg;
    cfg.n = 1;
    cfg.scene.empty = true;
    cfg.master_seed = 3;
    return gen_problems(cfg).at(0);
  }();
  return p;
}

// Straight-line candidate toward the problem goal, `frac` of the way per
// step, all steps marked valid.
Policy line_policy(const PlanningProblem& p, double frac, int horizon = kHorizon) {
  return [&p, frac, horizon](const JointConfig& j, std::uint64_t) {
    InferResult r;
    JointConfig q = j;
    for (int h = 0; h < horizon; ++h) {
      q = q + frac * (p.goal - q);
      r.joints.push_back(q);
      r.valid.push_back(true);
    }
    return r;
  };
}

Scorer zero_scorer() {
  return [](const PlanningProblem&, const std::vector<JointConfig>& w, std::uint64_t) {
    return std::vector<double>(w.size(), 0.0);
  };
}

RolloutConfig small_batch() {
  RolloutConfig cfg;
  cfg.batch = 2;
  return cfg;
}

}  // namespace

TEST(Select, LowestScoreWinsAndTiesGoFirst) {
  EXPECT_EQ(select_candidate({0.2, 0.0, 0.1}), 1u);
  EXPECT_EQ(select_candidate({0.3, 0.1, 0.1, 0.2}), 1u);
  EXPECT_EQ(select_candidate({0.0, 0.0}), 0u);
  EXPECT_THROW(select_candidate({}), InvalidArgument);
}

TEST(Select, ExecutionLength) {
  EXPECT_EQ(execution_length(std::vector<double>(16, 0.0), 2, 4), 4);
  EXPECT_EQ(execution_length({0.0, 0.0, 0.0, 0.1, 0.0}, 2, 4), 3);
  EXPECT_EQ(execution_length({0.5, 0.0, 0.0, 0.0}, 2, 4), 2);
  EXPECT_EQ(execution_length({0.0, 0.2, 0.0, 0.0}, 2, 4), 2);
}

TEST(Rollout, StartAtGoalFinishesImmediately) {
  PlanningProblem p = empty_problem();
  p.start = p.goal;
  const RolloutResult r = rollout(p, line_policy(p, 0.1), zero_scorer(), small_batch(), 1);
  EXPECT_EQ(r.outcome, Outcome::Reached);
  EXPECT_EQ(r.steps(), 0);
  EXPECT_TRUE(r.iterations.empty());
  EXPECT_TRUE(success_check(r, p).success);
}

TEST(Rollout, LinePolicyReachesAndStopsAtGoal) {
  const PlanningProblem& p = empty_problem();
  const RolloutResult r = rollout(p, line_policy(p, 0.2), zero_scorer(), small_batch(), 1);
  ASSERT_EQ(r.outcome, Outcome::Reached);
  EXPECT_LT(goal_error(p, r.trajectory.back()), 0.01);
  // Execution stops at the first waypoint inside the threshold.
  EXPECT_GE(goal_error(p, r.trajectory[r.trajectory.size() - 2]), 0.01);
  for (const auto& it : r.iterations) {
    EXPECT_GE(it.executed, 1);
    EXPECT_LE(it.executed, 4);
  }
  EXPECT_EQ(r.iterations.front().executed, 4);
}

TEST(Rollout, CollidingPrefixExecutesMinimum) {
  const PlanningProblem& p = empty_problem();
  Scorer first_hits = [](const PlanningProblem&, const std::vector<JointConfig>& w, std::uint64_t) {
    std::vector<double> s(w.size(), 0.0);
    s[0] = 0.25;
    return s;
  };
  const RolloutResult r = rollout(p, line_policy(p, 0.01), first_hits, small_batch(), 1);
  ASSERT_FALSE(r.iterations.empty());
  EXPECT_EQ(r.iterations.front().executed, 2);
}

TEST(Rollout, InvalidFirstStepsEndInIkFailure) {
  const PlanningProblem& p = empty_problem();
  Policy broken = [](const JointConfig& j, std::uint64_t) {
    InferResult r;
    r.joints.assign(kHorizon, j);
    r.valid.assign(kHorizon, false);
    return r;
  };
  const RolloutResult r = rollout(p, broken, zero_scorer(), small_batch(), 1);
  EXPECT_EQ(r.outcome, Outcome::IkFailure);
  EXPECT_EQ(r.steps(), 0);
  EXPECT_FALSE(success_check(r, p).success);
}

TEST(Rollout, InvalidStepsScoreAsColliding) {
  const PlanningProblem& p = empty_problem();
  Policy half = [&p](const JointConfig& j, std::uint64_t seed) {
    InferResult r = line_policy(p, 0.05)(j, seed);
    for (std::size_t k = 8; k < r.valid.size(); ++k) r.valid[k] = false;
    return r;
  };
  RolloutConfig cfg = small_batch();
  cfg.max_steps = 4;
  const RolloutResult r = rollout(p, half, zero_scorer(), cfg, 1);
  ASSERT_FALSE(r.iterations.empty());
  EXPECT_DOUBLE_EQ(r.iterations.front().scores.front(), 0.5);
}

TEST(Rollout, SelectedCandidateIsTheArgmin) {
  const PlanningProblem& p = empty_problem();
  // Each candidate gets a seeded offset so candidates differ; the scorer
  // draws a seeded constant per candidate.
  auto made = std::make_shared<std::vector<InferResult>>();
  Policy noisy = [&p, made](const JointConfig& j, std::uint64_t seed) {
    InferResult r = line_policy(p, 0.1)(j, seed);
    Rng rng(seed);
    const double off = std::uniform_real_distribution<double>(0.0, 1e-3)(rng);
    for (auto& q : r.joints) q[0] += off;
    made->push_back(r);
    return r;
  };
  Scorer by_seed = [](const PlanningProblem&, const std::vector<JointConfig>& w, std::uint64_t seed) {
    Rng rng(seed);
    return std::vector<double>(w.size(), std::uniform_real_distribution<double>(0.0, 1.0)(rng));
  };
  RolloutConfig cfg;
  cfg.batch = 8;
  cfg.max_steps = 2;
  const RolloutResult r = rollout(p, noisy, by_seed, cfg, 9);
  ASSERT_EQ(r.iterations.size(), 1u);
  const auto& it = r.iterations.front();
  std::size_t best = 0;
  for (std::size_t b = 1; b < it.scores.size(); ++b) {
    if (it.scores[b] < it.scores[best]) best = b;
  }
  EXPECT_EQ(it.selected, best);
  EXPECT_EQ(it.executed, 2);
  EXPECT_EQ(r.trajectory[1], (*made)[best].joints[0]);
}

TEST(Rollout, StationaryPolicyIsStuck) {
  const PlanningProblem& p = empty_problem();
  Policy still = [](const JointConfig& j, std::uint64_t) {
    InferResult r;
    r.joints.assign(kHorizon, j);
    r.valid.assign(kHorizon, true);
    return r;
  };
  const RolloutResult r = rollout(p, still, zero_scorer(), small_batch(), 1);
  EXPECT_EQ(r.outcome, Outcome::Stuck);
  EXPECT_EQ(r.iterations.size(), 5u);
}

TEST(Rollout, StepCapGivesTimeout) {
  const PlanningProblem& p = empty_problem();
  RolloutConfig cfg = small_batch();
  cfg.max_steps = 6;
  const RolloutResult r = rollout(p, line_policy(p, 0.01), zero_scorer(), cfg, 1);
  EXPECT_EQ(r.outcome, Outcome::Timeout);
  EXPECT_EQ(r.steps(), 6);
}

TEST(Rollout, RejectsBadConfig) {
  const PlanningProblem& p = empty_problem();
  RolloutConfig cfg;
  cfg.max_execute = 20;
  EXPECT_THROW(rollout(p, line_policy(p, 0.1), zero_scorer(), cfg, 1), InvalidArgument);
}

TEST(Rollout, ScriptedExpertReachesInEmptyScene) {
  const PlanningProblem& p = empty_problem();
  const auto expert = scripted_expert(p, 4);
  ASSERT_TRUE(expert.has_value());
  const RolloutResult r = rollout(p, *expert, geometric_scorer(), RolloutConfig{}, 5);
  EXPECT_EQ(r.outcome, Outcome::Reached);
  const SuccessReport ok = success_check(r, p);
  EXPECT_TRUE(ok.success) << ok.reason;
  EXPECT_LE(r.steps(), 200);
}

TEST(SuccessCheck, Reasons) {
  const PlanningProblem& p = empty_problem();
  const std::vector<JointConfig> straight = retime({p.start, p.goal});
  ASSERT_TRUE(path_valid(p.robot, p.scene, straight, kEdgeResolution));
  EXPECT_TRUE(success_check(straight, p).success);

  PlanningProblem near = p;
  near.goal_ee.translation() += Eigen::Vector3d(0.005, 0.0, 0.0);
  EXPECT_TRUE(success_check(straight, near).success);

  PlanningProblem off = p;
  off.goal_ee.translation() += Eigen::Vector3d(0.015, 0.0, 0.0);
  EXPECT_EQ(success_check(straight, off).reason, "goal_tolerance");

  PlanningProblem turned = p;
  const Eigen::AngleAxisd six_degrees(6.0 * M_PI / 180.0, Eigen::Vector3d::UnitZ());
  turned.goal_ee.linear() = turned.goal_ee.linear() * six_degrees.toRotationMatrix();
  EXPECT_EQ(success_check(straight, turned).reason, "goal_tolerance");

  std::vector<JointConfig> beyond = straight;
  beyond[beyond.size() / 2][1] = p.robot.upper()[1] + 0.1;
  EXPECT_EQ(success_check(beyond, p).reason, "joint_limits");

  // A sphere around the midpoint end-effector blocks the path but not the
  // terminal configuration.
  PlanningProblem blocked = p;
  const JointConfig mid = straight[straight.size() / 2];
  Sphere s;
  s.center = end_effector_pose(p.robot, mid).translation();
  s.radius = 0.05;
  blocked.scene.spheres.push_back(s);
  ASSERT_TRUE(config_collision_free(blocked.robot, blocked.scene, straight.back()));
  EXPECT_EQ(success_check(straight, blocked).reason, "collision");
  EXPECT_EQ(success_check(std::vector<JointConfig>{}, p).reason, "empty");
}

TEST(Evaluate, Aggregates) {
  EvaluationReport rep;
  for (std::size_t i = 0; i < 10; ++i) {
    ProblemOutcome row;
    row.problem_id = i;
    row.success = i < 7;
    row.outcome = row.success ? "reached" : "timeout";
    row.path_length = row.success ? 1.0 + static_cast<double>(i) : 99.0;
    row.solution_time_s = 0.5;
    rep.rows.push_back(row);
  }
  EXPECT_EQ(rep.successes(), 7u);
  EXPECT_DOUBLE_EQ(rep.success_rate(), 70.0);
  const auto pl = rep.path_length();
  ASSERT_TRUE(pl.has_value());
  EXPECT_DOUBLE_EQ(pl->mean, 4.0);
  EXPECT_NEAR(pl->std, 2.0, 1e-12);
  EXPECT_DOUBLE_EQ(rep.solution_time()->std, 0.0);

  EvaluationReport none;
  none.rows.resize(3);
  EXPECT_DOUBLE_EQ(none.success_rate(), 0.0);
  EXPECT_FALSE(none.path_length().has_value());
  EXPECT_FALSE(none.solution_time().has_value());
}

TEST(Evaluate, MissingPolicyCountsAsFailure) {
  const std::vector<PlanningProblem> ps{empty_problem(), empty_problem()};
  PolicyFactory factory = [](const PlanningProblem& p, std::uint64_t) -> std::optional<Policy> {
    if (p.scene.empty()) return std::nullopt;
    return line_policy(p, 0.1);
  };
  const EvaluationReport rep = evaluate(ps, factory, zero_scorer(), small_batch(), 1);
  ASSERT_EQ(rep.rows.size(), 2u);
  EXPECT_EQ(rep.rows[0].outcome, "no_policy");
  EXPECT_FALSE(rep.rows[1].success);
}

TEST(Evaluate, CsvLayout) {
  EvaluationReport rep;
  ProblemOutcome row;
  row.outcome = "reached";
  row.success = true;
  row.path_length = 1.5;
  row.solution_time_s = 0.25;
  row.steps = 12;
  rep.rows.push_back(row);
  std::ostringstream with, without;
  write_metrics_csv(with, rep);
  write_metrics_csv(without, rep, false);
  EXPECT_EQ(with.str(), "problem_id,outcome,success,path_length,solution_time_s,steps\n0,reached,1,1.5,0.25,12\n");
  EXPECT_EQ(without.str(), "problem_id,outcome,success,path_length,solution_time_s,steps\n0,reached,1,1.5,,12\n");
}

TEST(Evaluate, ClassicalBaselineSucceedsInEmptyScene) {
  const EvaluationReport rep = evaluate_classical({empty_problem()}, PlannerConfig{}, 2);
  ASSERT_EQ(rep.rows.size(), 1u);
  EXPECT_TRUE(rep.rows[0].success) << rep.rows[0].failure_reason;
  EXPECT_GT(rep.rows[0].path_length, 0.0);
}
