#pragma once

// Pose-token sequence layout, attention masks and link position embeddings.
//
// Sequence order: D observation tokens, one goal token, then H blocks of D
// query tokens. Slot l of a block holds link l for l < dof and the
// end-effector in the last slot; slots in between are unavailable.

#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "xmopkit/common.hpp"
#include "xmopkit/kinematics.hpp"
#include "xmopkit/robot_model.hpp"

namespace xmopkit {

inline constexpr int kTokenSlots = 8;
inline constexpr int kHorizon = 16;
inline constexpr int kTokenWidth = 9;

using AttentionMask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

inline int sequence_length(int slots, int horizon) { return slots * (horizon + 1) + 1; }

inline int observation_token(int slot) { return slot; }
inline int goal_token(int slots) { return slots; }
inline int query_token(int slots, int h, int slot) { return slots + 1 + (h - 1) * slots + slot; }

inline void check_layout(std::size_t dof, int slots, int horizon) {
  if (slots < 2 || horizon < 1) throw InvalidArgument("token layout needs at least 2 slots and 1 horizon step");
  if (dof < 1 || dof + 1 > static_cast<std::size_t>(slots)) {
    throw InvalidArgument("unsupported dof " + std::to_string(dof) + " for " + std::to_string(slots) + " token slots");
  }
}

/// Slot of link i (0 = base, dof = end-effector).
inline int link_slot(std::size_t dof, std::size_t link, int slots = kTokenSlots) {
  return link == dof ? slots - 1 : static_cast<int>(link);
}

inline std::vector<bool> slot_availability(std::size_t dof, int slots = kTokenSlots) {
  check_layout(dof, slots, 1);
  std::vector<bool> out(static_cast<std::size_t>(slots), false);
  for (std::size_t l = 0; l <= dof; ++l) out[static_cast<std::size_t>(link_slot(dof, l, slots))] = true;
  return out;
}

/// Row = attending token, column = attended token; true means permitted.
inline AttentionMask build_masks(std::size_t dof, int slots = kTokenSlots, int horizon = kHorizon) {
  check_layout(dof, slots, horizon);
  const int n = sequence_length(slots, horizon);
  const std::vector<bool> avail = slot_availability(dof, slots);
  AttentionMask m = AttentionMask::Constant(n, n, false);

  // Condition tokens see each other; queries see every condition token.
  const int n_cond = slots + 1;
  m.topLeftCorner(n_cond, n_cond).setConstant(true);
  m.bottomLeftCorner(n - n_cond, n_cond).setConstant(true);

  for (int h = 1; h <= horizon; ++h) {
    for (int l = 0; l < slots; ++l) {
      const int row = query_token(slots, h, l);
      for (int a = 0; a <= l; ++a) m(row, query_token(slots, h, a)) = true;
      if (h > 1) m(row, query_token(slots, h - 1, l)) = true;
    }
  }
  // Keys of missing links are hidden everywhere, observation included.
  for (int l = 0; l < slots; ++l) {
    if (avail[static_cast<std::size_t>(l)]) continue;
    m.col(observation_token(l)).setConstant(false);
    for (int h = 1; h <= horizon; ++h) m.col(query_token(slots, h, l)).setConstant(false);
  }
  return m;
}

/// Sinusoidal table, one row per link slot: sin/cos pairs at geometric
/// frequencies. Reused unchanged at every horizon step.
inline Eigen::MatrixXd sinusoidal_lpe(int slots, int dim) {
  if (slots < 1 || dim < 2 || dim % 2 != 0) throw InvalidArgument("sinusoidal_lpe: need slots >= 1 and even dim >= 2");
  Eigen::MatrixXd e(slots, dim);
  for (int p = 0; p < slots; ++p) {
    for (int i = 0; i < dim / 2; ++i) {
      const double w = std::pow(10000.0, -2.0 * i / dim);
      e(p, 2 * i) = std::sin(p * w);
      e(p, 2 * i + 1) = std::cos(p * w);
    }
  }
  return e;
}

// ---------------------------------------------------------------------------
// Token encoding of whole-body poses and transforms

/// Observation and goal tokens plus the slot availability of one robot.
struct PolicyCondition {
  Eigen::MatrixXd observation;  // slots x 9, zero rows for missing links
  Vector9d goal = Vector9d::Zero();
  std::vector<bool> available;
};

inline PolicyCondition make_condition(std::size_t dof, const WholeBodyPose& now, const Pose& goal,
                                      int slots = kTokenSlots) {
  if (now.size() != dof + 1) throw InvalidArgument("make_condition: pose list does not match dof");
  PolicyCondition c;
  c.available = slot_availability(dof, slots);
  c.observation = Eigen::MatrixXd::Zero(slots, kTokenWidth);
  for (std::size_t l = 0; l <= dof; ++l) c.observation.row(link_slot(dof, l, slots)) = to_9d(now[l]).vector().transpose();
  c.goal = to_9d(goal).vector();
  return c;
}

/// Flat index of component k of query (h, slot), h counted from 0.
inline Eigen::Index query_offset(int slots, int h, int slot, int k = 0) {
  return (static_cast<Eigen::Index>(h) * slots + slot) * kTokenWidth + k;
}

/// Sets every entry of an unavailable slot to zero.
inline void zero_missing(VectorXd& queries, const std::vector<bool>& available) {
  const int slots = static_cast<int>(available.size());
  const auto horizon = static_cast<int>(queries.size() / (slots * kTokenWidth));
  for (int h = 0; h < horizon; ++h) {
    for (int l = 0; l < slots; ++l) {
      if (!available[static_cast<std::size_t>(l)]) queries.segment(query_offset(slots, h, l), kTokenWidth).setZero();
    }
  }
}

/// 0/1 weights over the flat query vector.
inline VectorXd query_weights(const std::vector<bool>& available, int horizon) {
  const int slots = static_cast<int>(available.size());
  VectorXd w = VectorXd::Ones(static_cast<Eigen::Index>(horizon) * slots * kTokenWidth);
  zero_missing(w, available);
  return w;
}

inline VectorXd encode_transforms(std::size_t dof, const TransformSet& transforms, int slots = kTokenSlots) {
  const auto horizon = static_cast<int>(transforms.size());
  VectorXd q = VectorXd::Zero(static_cast<Eigen::Index>(horizon) * slots * kTokenWidth);
  for (int h = 0; h < horizon; ++h) {
    const auto& step = transforms[static_cast<std::size_t>(h)];
    if (step.size() != dof + 1) throw InvalidArgument("encode_transforms: transform set does not match dof");
    for (std::size_t l = 0; l <= dof; ++l) {
      q.segment(query_offset(slots, h, link_slot(dof, l, slots)), kTokenWidth) = to_9d(step[l]).vector();
    }
  }
  return q;
}

/// Inverse of encode_transforms; throws NumericalError on degenerate tokens.
inline TransformSet decode_transforms(std::size_t dof, const VectorXd& queries, int slots = kTokenSlots) {
  const auto horizon = static_cast<int>(queries.size() / (slots * kTokenWidth));
  if (static_cast<Eigen::Index>(horizon) * slots * kTokenWidth != queries.size()) {
    throw InvalidArgument("decode_transforms: query vector has the wrong size");
  }
  TransformSet out(static_cast<std::size_t>(horizon), WholeBodyPose(dof + 1));
  for (int h = 0; h < horizon; ++h) {
    for (std::size_t l = 0; l <= dof; ++l) {
      const Vector9d v = queries.segment<kTokenWidth>(query_offset(slots, h, link_slot(dof, l, slots)));
      out[static_cast<std::size_t>(h)][l] = from_9d(v);
    }
  }
  return out;
}

}  // namespace xmopkit
