#pragma once

// SE(3) pose algebra, forward kinematics and the 9D pose representation.

#include <cmath>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "xmopkit/common.hpp"
#include "xmopkit/robot_model.hpp"

namespace xmopkit {

using Pose = Eigen::Isometry3d;
using JointConfig = Eigen::VectorXd;

/// Per-link poses relative to the robot base. Entry 0 is the base (always
/// identity), the last entry is the end-effector tool frame.
using WholeBodyPose = std::vector<Pose>;

/// Relative transforms over a horizon: [step][link].
using TransformSet = std::vector<WholeBodyPose>;

inline constexpr double kRotationTolerance = 1e-9;

inline bool is_valid_pose(const Pose& p, double tol = kRotationTolerance) {
  const Eigen::Matrix3d r = p.linear();
  if (!r.allFinite() || !p.translation().allFinite()) return false;
  if ((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  if (std::abs(r.determinant() - 1.0) > tol) return false;
  const auto bottom = p.matrix().row(3);
  return bottom(0) == 0.0 && bottom(1) == 0.0 && bottom(2) == 0.0 && bottom(3) == 1.0;
}

/// Frames of every link (joint frames, before frame assignment): entry i is
/// the frame of link i in the base frame.
inline std::vector<Pose> link_frames(const RobotModel& robot, const JointConfig& j) {
  if (static_cast<std::size_t>(j.size()) != robot.dof) {
    throw InvalidArgument("joint vector has " + std::to_string(j.size()) + " entries, robot has " +
                          std::to_string(robot.dof) + " joints");
  }
  std::vector<Pose> frames(robot.dof + 1, Pose::Identity());
  for (std::size_t i = 1; i <= robot.dof; ++i) {
    const CompiledLink& link = robot.links[i];
    Pose local = Pose::Identity();
    local.translation() = link.joint_origin;
    local.linear() = Eigen::AngleAxisd(j[static_cast<Eigen::Index>(i - 1)], link.joint_axis).toRotationMatrix();
    frames[i] = frames[i - 1] * local;
  }
  return frames;
}

inline WholeBodyPose forward_kinematics(const RobotModel& robot, const FrameAssignment& frames, const JointConfig& j) {
  if (frames.cylinder_index.size() != robot.dof - 1) throw InvalidArgument("frame assignment length must be dof - 1");
  const std::vector<Pose> lf = link_frames(robot, j);
  WholeBodyPose out(robot.token_count());
  out[0] = Pose::Identity();
  for (std::size_t i = 1; i < robot.dof; ++i) {
    const auto& cyls = robot.links[i].cylinders;
    const auto idx = static_cast<std::size_t>(frames.cylinder_index[i - 1]);
    if (idx >= cyls.size()) throw InvalidArgument("frame index out of range");
    out[i] = lf[i] * cyls[idx].frame();
  }
  out[robot.dof] = lf[robot.dof] * robot.ee_frame;
  return out;
}

inline Pose end_effector_pose(const RobotModel& robot, const JointConfig& j) {
  return link_frames(robot, j)[robot.dof] * robot.ee_frame;
}

/// T_k = p_future[k] * p_now^-1 per link, so that T_k * p_now = p_future[k].
inline TransformSet relative_transforms(const WholeBodyPose& now, const std::vector<WholeBodyPose>& future) {
  TransformSet out;
  out.reserve(future.size());
  std::vector<Pose> inv(now.size());
  for (std::size_t l = 0; l < now.size(); ++l) inv[l] = now[l].inverse(Eigen::Isometry);
  for (const auto& step : future) {
    if (step.size() != now.size()) throw InvalidArgument("pose lists differ in length");
    WholeBodyPose t(now.size());
    for (std::size_t l = 0; l < now.size(); ++l) t[l] = step[l] * inv[l];
    out.push_back(std::move(t));
  }
  return out;
}

inline std::vector<WholeBodyPose> apply_transforms(const TransformSet& transforms, const WholeBodyPose& now) {
  std::vector<WholeBodyPose> out;
  out.reserve(transforms.size());
  for (const auto& step : transforms) {
    if (step.size() != now.size()) throw InvalidArgument("transform and pose lists differ in length");
    WholeBodyPose p(now.size());
    for (std::size_t l = 0; l < now.size(); ++l) p[l] = step[l] * now[l];
    out.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// 9D representation: translation followed by the first two rotation columns.

using Vector9d = Eigen::Matrix<double, 9, 1>;

struct Pose9D {
  Eigen::Vector3d o = Eigen::Vector3d::Zero();
  Eigen::Vector3d x = Eigen::Vector3d::UnitX();
  Eigen::Vector3d y = Eigen::Vector3d::UnitY();

  Vector9d vector() const {
    Vector9d v;
    v << o, x, y;
    return v;
  }
  static Pose9D from_vector(const Eigen::Ref<const Vector9d>& v) {
    return {v.segment<3>(0), v.segment<3>(3), v.segment<3>(6)};
  }
};

inline Pose9D to_9d(const Pose& p) {
  return {p.translation(), p.linear().col(0), p.linear().col(1)};
}

/// Gram-Schmidt reconstruction. Throws NumericalError when x is (near) zero
/// or x and y are (near) parallel.
inline Pose from_9d(const Pose9D& r) {
  const double nx = r.x.norm();
  const double ny = r.y.norm();
  if (!(nx >= 1e-8) || !(ny >= 1e-8)) throw NumericalError("from_9d: degenerate rotation columns (zero norm)");
  const Eigen::Vector3d ex = r.x / nx;
  if (std::abs(ex.dot(r.y / ny)) > 1.0 - 1e-8) throw NumericalError("from_9d: rotation columns are parallel");
  Eigen::Vector3d ey = r.y - ex.dot(r.y) * ex;
  ey.normalize();
  Pose p = Pose::Identity();
  p.linear().col(0) = ex;
  p.linear().col(1) = ey;
  p.linear().col(2) = ex.cross(ey);
  p.translation() = r.o;
  return p;
}

inline Pose from_9d(const Eigen::Ref<const Vector9d>& v) { return from_9d(Pose9D::from_vector(v)); }

/// Rotation angle between two unit quaternions, invariant to the sign of
/// either argument.
inline double quaternion_distance(const Eigen::Quaterniond& q1, const Eigen::Quaterniond& q2) {
  const double n1 = q1.norm();
  const double n2 = q2.norm();
  if (!(n1 > 0.0) || !(n2 > 0.0)) throw InvalidArgument("quaternion_distance: zero-norm quaternion");
  const double d = std::min(1.0, std::abs(q1.coeffs().dot(q2.coeffs())) / (n1 * n2));
  return 2.0 * std::acos(d);
}

inline double rotation_distance(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  return quaternion_distance(Eigen::Quaterniond(a), Eigen::Quaterniond(b));
}

/// Euclidean norm of the difference of the two 9D vectors.
inline double pose_goal_error(const Pose& ee, const Pose& goal) {
  return (to_9d(ee).vector() - to_9d(goal).vector()).norm();
}

/// Sum over links of squared 9D differences; the whole-body IK objective.
inline double whole_body_distance(const WholeBodyPose& a, const WholeBodyPose& b) {
  if (a.size() != b.size()) throw InvalidArgument("whole-body poses differ in length");
  double sum = 0.0;
  for (std::size_t l = 0; l < a.size(); ++l) {
    sum += (a[l].translation() - b[l].translation()).squaredNorm();
    sum += (a[l].linear().leftCols<2>() - b[l].linear().leftCols<2>()).squaredNorm();
  }
  return sum;
}

}  // namespace xmopkit
