#pragma once

// Training samples, denoising inference through whole-body IK, EMA and the
// toy training loop for TinyDenoiser.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <vector>

#include "xmopkit/demos.hpp"
#include "xmopkit/denoiser.hpp"
#include "xmopkit/diffusion.hpp"
#include "xmopkit/ik.hpp"
#include "xmopkit/kinematics.hpp"
#include "xmopkit/tokens.hpp"

namespace xmopkit {

inline constexpr double kObservationNoise = 0.01;  // rad

struct SampleOptions {
  int slots = kTokenSlots;
  int horizon = kHorizon;
  double observation_noise = kObservationNoise;
};

/// One noised example from a demonstration: a chunk start t, noisy
/// observation j_t + eta N(0, I) under randomized link frames, the goal
/// end-effector pose of the final waypoint, and the transforms to the next
/// H waypoints (the final waypoint repeats past the end).
inline DenoisingSample make_training_sample(const Demonstration& demo, const RobotModel& robot,
                                            const DiffusionSchedule& sc, Rng& rng, const SampleOptions& opts = {}) {
  const auto& w = demo.waypoints;
  if (w.size() < 2) throw InvalidArgument("training record needs at least 2 waypoints");
  std::uniform_int_distribution<std::size_t> pick_t(0, w.size() - 1);
  const std::size_t t = pick_t(rng);
  const JointConfig obs = w[t] + opts.observation_noise * standard_normal(rng, robot.dof);
  const FrameAssignment frames = sample_frames(robot, rng);
  const WholeBodyPose now = forward_kinematics(robot, frames, obs);
  const Pose goal = end_effector_pose(robot, w.back());
  std::vector<WholeBodyPose> future;
  future.reserve(static_cast<std::size_t>(opts.horizon));
  for (int k = 1; k <= opts.horizon; ++k) {
    const std::size_t idx = std::min(t + static_cast<std::size_t>(k), w.size() - 1);
    future.push_back(forward_kinematics(robot, frames, w[idx]));
  }

  DenoisingSample s;
  s.condition = make_condition(robot.dof, now, goal, opts.slots);
  s.clean = encode_transforms(robot.dof, relative_transforms(now, future), opts.slots);
  std::uniform_int_distribution<int> pick_tau(1, sc.train_steps);
  s.tau = pick_tau(rng);
  s.eps = standard_normal(rng, s.clean.size());
  zero_missing(s.eps, s.condition.available);
  s.noisy = add_noise(sc, s.clean, s.eps, s.tau);
  return s;
}

/// Builds one sample and hands it to the denoiser; returns the loss.
inline double train_step(const Demonstration& demo, Denoiser& denoiser, const DiffusionSchedule& sc, Rng& rng,
                         double lr = 0.0, const SampleOptions& opts = {}) {
  const RobotModel robot = compile_robot(demo.tmpl);
  return denoiser.train_on({make_training_sample(demo, robot, sc, rng, opts)}, lr);
}

// ---------------------------------------------------------------------------
// Inference

struct InferOptions {
  int slots = kTokenSlots;
  int horizon = kHorizon;
  WholeBodyIkOptions ik;
};

struct InferResult {
  std::vector<JointConfig> joints;  // one per horizon step; j_t where invalid
  std::vector<bool> valid;          // whole-body IK met its threshold
  VectorXd transforms;              // denoised query vector
};

/// Joint targets for the horizon from a denoised transform vector. Steps
/// whose tokens do not decode or whose IK fails are marked invalid.
inline InferResult joints_from_transforms(const RobotModel& robot, const FrameAssignment& frames, const JointConfig& j_t,
                                          const VectorXd& transforms, std::uint64_t seed, const InferOptions& opts = {}) {
  const WholeBodyPose now = forward_kinematics(robot, frames, j_t);
  InferResult res;
  res.transforms = transforms;
  const Eigen::Index block = static_cast<Eigen::Index>(opts.slots) * kTokenWidth;
  for (int h = 0; h < opts.horizon; ++h) {
    TransformSet step;
    try {
      step = decode_transforms(robot.dof, transforms.segment(h * block, block), opts.slots);
    } catch (const NumericalError&) {
      res.joints.push_back(j_t);
      res.valid.push_back(false);
      continue;
    }
    const WholeBodyPose target = apply_transforms(step, now).front();
    WholeBodyIkOptions ik = opts.ik;
    ik.seed = derive_seed(seed, static_cast<std::uint64_t>(h));
    const IkResult r = whole_body_ik(robot, frames, target, j_t, ik);
    res.joints.push_back(r.joints);
    res.valid.push_back(r.success);
  }
  return res;
}

/// Reverse diffusion from Gaussian noise conditioned on the observation and
/// goal, then whole-body IK per horizon step with j_t as initial guess.
inline InferResult infer(const RobotModel& robot, const FrameAssignment& frames, const JointConfig& j_t,
                         const Pose& goal, const Denoiser& denoiser, const DiffusionSchedule& sc, std::uint64_t seed,
                         const InferOptions& opts = {}) {
  const PolicyCondition cond = make_condition(robot.dof, forward_kinematics(robot, frames, j_t), goal, opts.slots);
  Rng rng(seed);
  VectorXd x = standard_normal(rng, static_cast<Eigen::Index>(opts.horizon) * opts.slots * kTokenWidth);
  zero_missing(x, cond.available);
  const std::vector<int> steps = sc.inference_steps();
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const int tau = steps[k];
    const int prev = k + 1 < steps.size() ? steps[k + 1] : 0;
    x = ddim_step(sc, x, denoiser.predict(x, cond, tau), tau, prev);
    zero_missing(x, cond.available);
  }
  return joints_from_transforms(robot, frames, j_t, x, derive_seed(seed, 1), opts);
}

// ---------------------------------------------------------------------------
// EMA and the toy training loop

inline constexpr double kEmaDecay = 0.9999;

inline VectorXd ema_update(const VectorXd& params, const VectorXd& shadow, double decay = kEmaDecay) {
  if (params.size() != shadow.size()) throw InvalidArgument("ema_update: size mismatch");
  return decay * shadow + (1.0 - decay) * params;
}

/// Decay actually applied at update `step` (0-based): (1 + n) / (10 + n),
/// capped at `decay`, so early shadows are not dominated by the random
/// initialization.
inline double ema_warmup_decay(std::size_t step, double decay = kEmaDecay) {
  const double n = static_cast<double>(step);
  return std::min(decay, (1.0 + n) / (10.0 + n));
}

struct TrainConfig {
  int epochs = 50;
  std::uint64_t seed = 0;
  double learning_rate = 0.05;
  bool adam = false;
  std::size_t batch = 8;
  int samples_per_record = 4;  // chunks drawn from each record per epoch
  double ema_decay = kEmaDecay;
  double loss_smoothing = 0.3;  // weight of the newest epoch in the smoothed loss
  TinyDenoiserDims dims;
  SampleOptions sample;

  nlohmann::json to_json() const {
    return {{"epochs", epochs},
            {"learning_rate", learning_rate},
            {"adam", adam},
            {"batch", batch},
            {"samples_per_record", samples_per_record},
            {"ema_decay", ema_decay},
            {"loss_smoothing", loss_smoothing},
            {"observation_noise", sample.observation_noise},
            {"dims", dims.to_json()}};
  }
};

struct LossRow {
  int epoch = 0;
  double mean_loss = 0.0;
  double smoothed_loss = 0.0;  // exponential smoothing of mean_loss over epochs
};

struct TrainResult {
  TinyDenoiser model;
  VectorXd ema;
  std::vector<LossRow> curve;  // row 0 is the untrained model

  /// Final smoothed loss relative to the untrained loss.
  double loss_ratio() const { return curve.back().smoothed_loss / curve.front().mean_loss; }
  /// Copy of the model with the EMA weights loaded.
  TinyDenoiser ema_model() const {
    TinyDenoiser m = model;
    m.set_parameters(ema);
    return m;
  }
};

/// Plain SGD with a fixed learning rate over shuffled records, one EMA
/// update per step. Single-threaded, so a fixed seed fixes every parameter.
inline TrainResult train_tiny(const std::vector<Demonstration>& data, const TrainConfig& cfg) {
  if (data.empty()) throw InvalidArgument("train_tiny: empty dataset");
  if (cfg.epochs < 0 || cfg.batch == 0) throw InvalidArgument("train_tiny: epochs must be >= 0 and batch > 0");
  const DiffusionSchedule sc = DiffusionSchedule::square_cosine(cfg.dims.train_steps);
  std::vector<RobotModel> robots;
  robots.reserve(data.size());
  for (const auto& d : data) robots.push_back(compile_robot(d.tmpl));

  TrainResult res{TinyDenoiser(cfg.dims), VectorXd(), {}};
  res.model.initialize(derive_seed(cfg.seed, 0));
  if (cfg.adam) res.model.enable_adam();
  res.ema = res.model.parameters();
  Rng rng(derive_seed(cfg.seed, 1));

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (int k = 0; k < cfg.samples_per_record; ++k) order.push_back(i);
  }
  auto draw = [&](std::size_t i) { return make_training_sample(data[i], robots[i], sc, rng, cfg.sample); };

  // Epoch 0: loss of the untrained model on one pass of fresh samples.
  {
    double sum = 0.0;
    for (std::size_t i : order) sum += denoising_loss(res.model, draw(i));
    const double mean = sum / static_cast<double>(order.size());
    res.curve.push_back({0, mean, mean});
  }
  std::size_t step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t at = 0; at < order.size(); at += cfg.batch) {
      std::vector<DenoisingSample> batch;
      for (std::size_t k = at; k < std::min(order.size(), at + cfg.batch); ++k) batch.push_back(draw(order[k]));
      sum += res.model.train_on(batch, cfg.learning_rate);
      ++batches;
      res.ema = ema_update(res.model.parameters(), res.ema, ema_warmup_decay(step++, cfg.ema_decay));
    }
    const double mean = sum / static_cast<double>(batches);
    const double smooth = cfg.loss_smoothing * mean + (1.0 - cfg.loss_smoothing) * res.curve.back().smoothed_loss;
    res.curve.push_back({epoch, mean, smooth});
  }
  return res;
}

inline void write_loss_csv(std::ostream& os, const std::vector<LossRow>& curve) {
  os << "epoch,mean_loss,ema_loss\n";
  os.precision(17);
  for (const auto& r : curve) os << r.epoch << ',' << r.mean_loss << ',' << r.smoothed_loss << '\n';
}

}  // namespace xmopkit
