#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <set>

#include "xmopkit/demos.hpp"
#include "xmopkit/policy.hpp"
#include "xmopkit/tokens.hpp"
#include "oracles.hpp"

using namespace xmopkit;

namespace {

GenDemosConfig small_config(std::size_t n, Family family = Family::Sawyer7) {
  GenDemosConfig cfg;
  cfg.n = n;
  cfg.family = family;
  cfg.scene.empty = true;
  cfg.master_seed = 5;
  return cfg;
}

const std::vector<Demonstration>& demos7() {
  static const std::vector<Demonstration> d = gen_demos(small_config(3)).records;
  return d;
}

const std::vector<Demonstration>& demos6() {
  static const std::vector<Demonstration> d = gen_demos(small_config(2, Family::Ur6)).records;
  return d;
}

TinyDenoiserDims small_dims() {
  TinyDenoiserDims d;
  d.embed = 4;
  d.hidden = 12;
  return d;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tokens and masks

TEST(Tokens, SequenceLength) {
  EXPECT_EQ(sequence_length(8, 16), 137);
  for (int D = 2; D <= 9; ++D) {
    for (int H = 1; H <= 20; ++H) EXPECT_EQ(sequence_length(D, H), D * (H + 1) + 1);
  }
  EXPECT_EQ(build_masks(7).rows(), 137);
  EXPECT_EQ(build_masks(7).cols(), 137);
}

TEST(Masks, MatchBruteForceOracle) {
  for (std::size_t dof : {6u, 7u}) {
    const AttentionMask m = build_masks(dof, 8, 16);
    long mismatches = 0;
    for (int r = 0; r < 137; ++r) {
      for (int c = 0; c < 137; ++c) mismatches += m(r, c) != oracle::allows(r, c, dof, 8);
    }
    EXPECT_EQ(mismatches, 0) << "dof " << dof;
  }
  const AttentionMask small = build_masks(2, 4, 3);
  for (int r = 0; r < small.rows(); ++r) {
    for (int c = 0; c < small.cols(); ++c) EXPECT_EQ(small(r, c), oracle::allows(r, c, 2, 4));
  }
}

TEST(Masks, SevenDofQueryExample) {
  const AttentionMask m = build_masks(7);
  const int row = query_token(8, 5, 3);
  for (int l = 0; l <= 3; ++l) EXPECT_TRUE(m(row, query_token(8, 5, l)));
  for (int l = 4; l < 8; ++l) EXPECT_FALSE(m(row, query_token(8, 5, l)));
  EXPECT_TRUE(m(row, query_token(8, 4, 3)));
  EXPECT_FALSE(m(row, query_token(8, 4, 2)));
  EXPECT_FALSE(m(row, query_token(8, 3, 3)));
  EXPECT_FALSE(m(row, query_token(8, 6, 3)));
  for (int c = 0; c <= 8; ++c) EXPECT_TRUE(m(row, c));
}

TEST(Masks, SixDofHidesSeventhSlotKeys) {
  const AttentionMask m = build_masks(6);
  EXPECT_FALSE(m.col(observation_token(6)).any());
  for (int h = 1; h <= 16; ++h) EXPECT_FALSE(m.col(query_token(8, h, 6)).any());
  // The end-effector slot stays visible.
  EXPECT_TRUE(m(query_token(8, 2, 7), query_token(8, 2, 7)));
  const AttentionMask m7 = build_masks(7);
  EXPECT_TRUE(m7(query_token(8, 2, 6), query_token(8, 2, 6)));
}

TEST(Masks, UnsupportedDof) {
  EXPECT_THROW(build_masks(8), InvalidArgument);
  EXPECT_THROW(build_masks(0), InvalidArgument);
}

TEST(Lpe, ShapeRangeAndDistinctRows) {
  const Eigen::MatrixXd e = sinusoidal_lpe(8, 16);
  EXPECT_EQ(e.rows(), 8);
  EXPECT_EQ(e.cols(), 16);
  EXPECT_LE(e.cwiseAbs().maxCoeff(), 1.0);
  for (int a = 0; a < 8; ++a) {
    for (int b = a + 1; b < 8; ++b) EXPECT_GT((e.row(a) - e.row(b)).norm(), 1e-3);
  }
  const Eigen::MatrixXd e4 = sinusoidal_lpe(8, 4);
  for (int a = 0; a < 8; ++a) {
    for (int b = a + 1; b < 8; ++b) EXPECT_GT((e4.row(a) - e4.row(b)).norm(), 1e-3);
  }
  EXPECT_THROW(sinusoidal_lpe(8, 5), InvalidArgument);
}

TEST(Tokens, TransformEncodingRoundTrip) {
  const RobotModel r = compile_robot(nominal_template(Family::Ur6));
  Rng rng(2);
  const FrameAssignment f = sample_frames(r, rng);
  const WholeBodyPose now = forward_kinematics(r, f, uniform_in_box(rng, r.lower(), r.upper()));
  std::vector<WholeBodyPose> fut;
  for (int k = 0; k < 16; ++k) fut.push_back(forward_kinematics(r, f, uniform_in_box(rng, r.lower(), r.upper())));
  const TransformSet t = relative_transforms(now, fut);
  const VectorXd q = encode_transforms(r.dof, t);
  ASSERT_EQ(q.size(), 16 * 8 * 9);
  // Slot 6 is missing for a 6-dof robot.
  for (int h = 0; h < 16; ++h) EXPECT_EQ(q.segment(query_offset(8, h, 6), 9).norm(), 0.0);
  const TransformSet back = decode_transforms(r.dof, q);
  for (std::size_t h = 0; h < t.size(); ++h) {
    for (std::size_t l = 0; l < t[h].size(); ++l) EXPECT_LT((back[h][l].matrix() - t[h][l].matrix()).norm(), 1e-12);
  }
}

// ---------------------------------------------------------------------------
// Diffusion

TEST(Schedule, SquareCosineProperties) {
  const DiffusionSchedule sc = DiffusionSchedule::square_cosine();
  ASSERT_EQ(sc.alpha_bar.size(), 101u);
  EXPECT_EQ(sc.alpha(0), 1.0);
  for (int t = 1; t <= 100; ++t) {
    EXPECT_LT(sc.alpha(t), sc.alpha(t - 1));
    EXPECT_GT(sc.alpha(t), 0.0);
  }
  EXPECT_GT(sc.alpha(1), 0.999);
  // First beta from the closed form.
  auto f = [](double t) { return std::pow(std::cos((t + 0.008) / 1.008 * M_PI / 2.0), 2); };
  EXPECT_NEAR(sc.alpha(1), f(0.01) / f(0.0), 1e-15);
  const std::vector<int> steps = sc.inference_steps();
  ASSERT_EQ(steps.size(), 10u);
  for (std::size_t k = 1; k < steps.size(); ++k) EXPECT_EQ(steps[k - 1] - steps[k], 10);
  EXPECT_EQ(steps.back(), 1);
}

TEST(Schedule, AddNoiseNearStart) {
  const DiffusionSchedule sc = DiffusionSchedule::square_cosine();
  Rng rng(3);
  const VectorXd a0 = standard_normal(rng, 50);
  const VectorXd eps = standard_normal(rng, 50);
  const VectorXd a1 = add_noise(sc, a0, eps, 1);
  EXPECT_LE((a1 - a0).norm(), std::sqrt(1.0 - sc.alpha(1)) * eps.norm() + (1.0 - std::sqrt(sc.alpha(1))) * a0.norm());
  EXPECT_EQ((add_noise(sc, a0, eps, 0) - a0).norm(), 0.0);
}

TEST(Schedule, OracleDdimReconstructs) {
  const DiffusionSchedule sc = DiffusionSchedule::square_cosine();
  Rng rng(4);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const VectorXd a0 = standard_normal(rng, 30);
    VectorXd x = standard_normal(rng, 30);
    const std::vector<int> steps = sc.inference_steps();
    for (std::size_t k = 0; k < steps.size(); ++k) {
      const int prev = k + 1 < steps.size() ? steps[k + 1] : 0;
      x = ddim_step(sc, x, implied_noise(sc, x, a0, steps[k]), steps[k], prev);
    }
    worst = std::max(worst, (x - a0).cwiseAbs().maxCoeff());
  }
  EXPECT_LT(worst, 1e-2);
}

// ---------------------------------------------------------------------------
// Training samples and losses

TEST(TrainStep, OracleDenoiserHasZeroLoss) {
  const DiffusionSchedule sc = DiffusionSchedule::square_cosine();
  const Demonstration& d = demos7().front();
  const RobotModel r = compile_robot(d.tmpl);
  Rng rng(6);
  for (int k = 0; k < 10; ++k) {
    const DenoisingSample s = make_training_sample(d, r, sc, rng);
    const ScriptedDenoiser oracle(sc, s.clean);
    EXPECT_LT(denoising_loss(oracle, s), 1e-20);
  }
}

TEST(TrainStep, ZeroPredictionLossIsNoiseVariance) {
  const DiffusionSchedule sc = DiffusionSchedule::square_cosine();
  ZeroDenoiser zero;
  Rng rng(7);
  double sum = 0.0;
  const int n = 300;
  for (int k = 0; k < n; ++k) sum += train_step(demos7()[static_cast<std::size_t>(k) % demos7().size()], zero, sc, rng);
  // Each loss averages 1152 squared normals; the mean over n has sd ~ 0.0024.
  EXPECT_NEAR(sum / n, 1.0, 0.015);
}

TEST(TrainStep, SixDofLossIgnoresMissingSlot) {
  const DiffusionSchedule sc = DiffusionSchedule::square_cosine();
  const Demonstration& d = demos6().front();
  const RobotModel r = compile_robot(d.tmpl);
  ASSERT_EQ(r.dof, 6u);
  Rng rng(8);
  const DenoisingSample s = make_training_sample(d, r, sc, rng);
  for (int h = 0; h < 16; ++h) {
    EXPECT_EQ(s.eps.segment(query_offset(8, h, 6), 9).norm(), 0.0);
    EXPECT_EQ(s.noisy.segment(query_offset(8, h, 6), 9).norm(), 0.0);
  }
  // Garbage in the missing slot of the prediction leaves the loss unchanged.
  const ScriptedDenoiser oracle(sc, s.clean);
  VectorXd pred = oracle.predict(s.noisy, s.condition, s.tau);
  const double base = masked_mse(pred, s.eps, s.condition.available);
  for (int h = 0; h < 16; ++h) pred.segment(query_offset(8, h, 6), 9).setConstant(5.0);
  EXPECT_EQ(masked_mse(pred, s.eps, s.condition.available), base);
}

TEST(TrainStep, ShortRecordRejected) {
  Demonstration d = demos7().front();
  d.waypoints.resize(1);
  const DiffusionSchedule sc = DiffusionSchedule::square_cosine();
  ZeroDenoiser zero;
  Rng rng(1);
  EXPECT_THROW(train_step(d, zero, sc, rng), InvalidArgument);
}

// ---------------------------------------------------------------------------
// TinyDenoiser

TEST(TinyDenoiser, BackpropMatchesFiniteDifferences) {
  const DiffusionSchedule sc = DiffusionSchedule::square_cosine();
  TinyDenoiser m;
  m.initialize(9);
  // Move off the zero skip gains and biases so their gradients are exercised.
  Rng prng(10);
  VectorXd p = m.parameters() + 0.01 * standard_normal(prng, m.parameter_count());
  m.set_parameters(p);
  Rng rng(11);
  std::vector<DenoisingSample> batch;
  for (int k = 0; k < 3; ++k) {
    const Demonstration& d = demos7()[static_cast<std::size_t>(k)];
    batch.push_back(make_training_sample(d, compile_robot(d.tmpl), sc, rng));
  }
  batch.push_back(make_training_sample(demos6().front(), compile_robot(demos6().front().tmpl), sc, rng));
  VectorXd g;
  m.loss_and_gradient(batch, &g);
  std::uniform_int_distribution<Eigen::Index> pick(0, m.parameter_count() - 1);
  const double h = 1e-5;
  for (int k = 0; k < 20; ++k) {
    const Eigen::Index i = pick(rng);
    VectorXd q = p;
    q[i] = p[i] + h;
    m.set_parameters(q);
    const double up = m.loss_and_gradient(batch, nullptr);
    q[i] = p[i] - h;
    m.set_parameters(q);
    const double down = m.loss_and_gradient(batch, nullptr);
    const double fd = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(fd), std::abs(g[i]), 1e-6});
    EXPECT_LT(std::abs(fd - g[i]) / scale, 1e-4) << "parameter " << i << " fd " << fd << " grad " << g[i];
  }
}

TEST(TinyDenoiser, MissingSlotContributesNoGradient) {
  const DiffusionSchedule sc = DiffusionSchedule::square_cosine();
  TinyDenoiser m(small_dims());
  m.initialize(1);
  Rng rng(12);
  const Demonstration& d = demos6().front();
  DenoisingSample s = make_training_sample(d, compile_robot(d.tmpl), sc, rng);
  VectorXd g1, g2;
  const double l1 = m.loss_and_gradient({s}, &g1);
  for (int h = 0; h < 16; ++h) {
    s.eps.segment(query_offset(8, h, 6), 9).setConstant(3.0);
    s.noisy.segment(query_offset(8, h, 6), 9).setConstant(-2.0);
  }
  s.condition.observation.row(6).setConstant(7.0);
  const double l2 = m.loss_and_gradient({s}, &g2);
  EXPECT_EQ(l1, l2);
  EXPECT_EQ((g1 - g2).cwiseAbs().maxCoeff(), 0.0);
}

TEST(TinyDenoiser, FixedSeedFixesParameters) {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 3;
  cfg.dims = small_dims();
  cfg.samples_per_record = 2;
  const TrainResult a = train_tiny(demos7(), cfg);
  const TrainResult b = train_tiny(demos7(), cfg);
  EXPECT_EQ(a.model.parameters(), b.model.parameters());
  EXPECT_EQ(a.ema, b.ema);
  ASSERT_EQ(a.curve.size(), 3u);
  EXPECT_EQ(a.curve.front().epoch, 0);
  cfg.seed = 4;
  EXPECT_NE(train_tiny(demos7(), cfg).model.parameters(), a.model.parameters());
}

TEST(TinyDenoiser, EmptyDatasetRejected) {
  EXPECT_THROW(train_tiny({}, TrainConfig{}), InvalidArgument);
}

TEST(TinyDenoiser, CheckpointRoundTripIsBitwise) {
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.dims = small_dims();
  const TrainResult t = train_tiny(demos7(), cfg);
  const std::string path = (std::filesystem::temp_directory_path() / "xmopkit_ckpt_test.bin").string();
  t.model.save(path, t.ema, {{"seed", 0}});
  const auto c = TinyDenoiser::read_checkpoint(path);
  std::remove(path.c_str());
  EXPECT_EQ(c.parameters, t.model.parameters());
  EXPECT_EQ(c.ema, t.ema);
  TinyDenoiser back(TinyDenoiserDims::from_json(c.header.at("dims")));
  back.set_parameters(c.ema);
  const DiffusionSchedule sc = DiffusionSchedule::square_cosine();
  const Demonstration& d = demos7().front();
  const PlanningProblem p = problem_from_demo(d);
  const TinyDenoiser ema = t.ema_model();
  const VectorXd x1 = infer(p.robot, p.frames, p.start, p.goal_ee, ema, sc, 5).transforms;
  const VectorXd x2 = infer(p.robot, p.frames, p.start, p.goal_ee, back, sc, 5).transforms;
  EXPECT_EQ(x1, x2);
}

// ---------------------------------------------------------------------------
// EMA

TEST(Ema, Rules) {
  Rng rng(13);
  const VectorXd p = standard_normal(rng, 20);
  EXPECT_EQ(ema_update(p, p, 0.9999), p);
  const VectorXd s = standard_normal(rng, 20);
  EXPECT_EQ(ema_update(p, s, 0.0), p);
  VectorXd sh = s;
  for (int k = 0; k < 200; ++k) sh = ema_update(p, sh, 0.9);
  EXPECT_LT((sh - p).norm(), std::pow(0.9, 200) * (s - p).norm() * 1.0001);
  EXPECT_DOUBLE_EQ(ema_warmup_decay(0), 0.1);
  EXPECT_DOUBLE_EQ(ema_warmup_decay(10'000'000), kEmaDecay);
}

// ---------------------------------------------------------------------------
// Inference

TEST(Infer, IdentityTransformsHoldStill) {
  const DiffusionSchedule sc = DiffusionSchedule::square_cosine();
  for (Family fam : {Family::Sawyer7, Family::Ur6}) {
    const RobotModel r = compile_robot(sample_template(fam, Strategy::Normal, 17));
    Rng rng(14);
    const FrameAssignment f = sample_frames(r, rng);
    const JointConfig j = uniform_in_box(rng, r.lower(), r.upper());
    const TransformSet ident(16, WholeBodyPose(r.token_count(), Pose::Identity()));
    const ScriptedDenoiser still(sc, encode_transforms(r.dof, ident));
    const InferResult res = infer(r, f, j, end_effector_pose(r, j), still, sc, 3);
    ASSERT_EQ(res.joints.size(), 16u);
    for (std::size_t k = 0; k < 16; ++k) {
      EXPECT_TRUE(res.valid[k]);
      EXPECT_LT((res.joints[k] - j).cwiseAbs().maxCoeff(), 1e-6);
    }
  }
}

TEST(Infer, ScriptedDemonstrationIsRecovered) {
  const DiffusionSchedule sc = DiffusionSchedule::square_cosine();
  for (const auto* set : {&demos7(), &demos6()}) {
    const Demonstration& d = set->front();
    const PlanningProblem p = problem_from_demo(d);
    const auto& w = d.waypoints;
    const WholeBodyPose now = forward_kinematics(p.robot, p.frames, w[0]);
    std::vector<WholeBodyPose> fut;
    for (std::size_t k = 1; k <= 16; ++k) fut.push_back(forward_kinematics(p.robot, p.frames, w[std::min(k, w.size() - 1)]));
    const ScriptedDenoiser demo(sc, encode_transforms(p.robot.dof, relative_transforms(now, fut)));
    const InferResult res = infer(p.robot, p.frames, w[0], p.goal_ee, demo, sc, 4);
    for (std::size_t k = 0; k < 16; ++k) {
      EXPECT_TRUE(res.valid[k]);
      EXPECT_LT((res.joints[k] - w[std::min(k + 1, w.size() - 1)]).cwiseAbs().maxCoeff(), 1e-2) << "step " << k;
    }
  }
}

TEST(Infer, NoiseSeedsGiveDistinctSamples) {
  const DiffusionSchedule sc = DiffusionSchedule::square_cosine();
  TinyDenoiser m(small_dims());
  m.initialize(2);
  const PlanningProblem p = problem_from_demo(demos7().front());
  InferOptions opts;
  opts.ik.max_attempts = 1;
  std::set<std::vector<double>> seen;
  for (std::uint64_t s = 0; s < 4; ++s) {
    const VectorXd x = infer(p.robot, p.frames, p.start, p.goal_ee, m, sc, s, opts).transforms;
    seen.insert(std::vector<double>(x.data(), x.data() + x.size()));
  }
  EXPECT_GT(seen.size(), 1u);
}
