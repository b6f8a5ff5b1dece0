#pragma once

// Kinematic templates for procedurally sampled manipulators and their
// compilation into cylinder-geometry kinematic chains.
//
// Link index convention used throughout the library: index 0 is the fixed
// base link, indices 1..M-1 are the sampled link templates, and index M is
// the end-effector. Joint i (1-based) drives link i. A robot with M joints
// therefore has M + 1 pose tokens.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include "xmopkit/common.hpp"

namespace xmopkit {

enum class Axis : std::uint8_t { X = 0, Y = 1, Z = 2 };

inline char axis_char(Axis a) { return static_cast<char>('x' + static_cast<int>(a)); }

inline Axis axis_from_char(char c) {
  switch (c) {
    case 'x': return Axis::X;
    case 'y': return Axis::Y;
    case 'z': return Axis::Z;
    default: throw InvalidArgument(std::string("pattern character must be x, y or z, got '") + c + "'");
  }
}

inline Eigen::Vector3d unit_axis(Axis a, int sign = 1) {
  Eigen::Vector3d v = Eigen::Vector3d::Zero();
  v[static_cast<int>(a)] = sign >= 0 ? 1.0 : -1.0;
  return v;
}

/// Rotation whose z column points along the signed coordinate axis. Used for
/// cylinder frames and the end-effector tool frame.
inline Eigen::Matrix3d axis_frame(Axis a, int sign) {
  Eigen::Matrix3d r;
  switch (a) {
    case Axis::X: r.col(0) = Eigen::Vector3d::UnitY(); r.col(1) = Eigen::Vector3d::UnitZ(); r.col(2) = Eigen::Vector3d::UnitX(); break;
    case Axis::Y: r.col(0) = Eigen::Vector3d::UnitZ(); r.col(1) = Eigen::Vector3d::UnitX(); r.col(2) = Eigen::Vector3d::UnitY(); break;
    case Axis::Z: r.setIdentity(); break;
  }
  if (sign < 0) r = r * Eigen::Vector3d(1.0, -1.0, -1.0).asDiagonal();
  return r;
}

struct LinkTemplate {
  std::array<Axis, 3> pattern{Axis::Z, Axis::X, Axis::Y};
  double len_x = 0.0;
  double len_y = 0.0;
  double len_z = 0.0;
  double radius = 0.05;
  bool chiral_flip = false;

  double length(Axis a) const {
    switch (a) {
      case Axis::X: return len_x;
      case Axis::Y: return len_y;
      case Axis::Z: return len_z;
    }
    return 0.0;
  }
  double cylinder_length(std::size_t slot) const { return length(pattern[slot]); }

  std::string pattern_string() const {
    return {axis_char(pattern[0]), axis_char(pattern[1]), axis_char(pattern[2])};
  }
  // Base-3 code with x=0, y=1, z=2, most significant digit first.
  int pattern_code() const {
    return 9 * static_cast<int>(pattern[0]) + 3 * static_cast<int>(pattern[1]) + static_cast<int>(pattern[2]);
  }
  static std::array<Axis, 3> pattern_from_code(int code) {
    if (code < 0 || code > 26) throw InvalidArgument("pattern code out of range [0, 26]");
    return {static_cast<Axis>(code / 9), static_cast<Axis>((code / 3) % 3), static_cast<Axis>(code % 3)};
  }
  static std::array<Axis, 3> pattern_from_string(const std::string& p) {
    if (p.size() != 3) throw InvalidArgument("link pattern must have 3 characters");
    return {axis_from_char(p[0]), axis_from_char(p[1]), axis_from_char(p[2])};
  }

  void validate() const {
    for (double l : {len_x, len_y, len_z}) {
      if (!std::isfinite(l) || l < 0.0) throw InvalidArgument("link lengths must be finite and >= 0");
    }
    if (!std::isfinite(radius) || radius <= 0.0) throw InvalidArgument("link radius must be > 0");
    if (cylinder_length(0) <= 0.0 || cylinder_length(2) <= 0.0) {
      throw InvalidArgument("first and last cylinder of a link must have positive length");
    }
  }
};

struct EndEffectorTemplate {
  double base_height = 0.05;
  double base_radius = 0.035;
  double cuboid_scale = 1.0;

  void validate() const {
    if (!(base_height > 0.0) || !(base_radius > 0.0) || !(cuboid_scale > 0.0) ||
        !std::isfinite(base_height) || !std::isfinite(base_radius) || !std::isfinite(cuboid_scale)) {
      throw InvalidArgument("end-effector height, radius and scale must be finite and > 0");
    }
  }
};

struct JointConstraint {
  double lower = -M_PI;
  double upper = M_PI;

  void validate() const {
    if (!std::isfinite(lower) || !std::isfinite(upper) || !(lower < upper)) {
      throw InvalidArgument("joint limits must be finite with lower < upper");
    }
  }
};

enum class Family { Sawyer7, Ur6 };
enum class Strategy { Normal, Uniform };

inline std::string to_string(Family f) { return f == Family::Sawyer7 ? "sawyer7" : "ur6"; }
inline std::string to_string(Strategy s) { return s == Strategy::Normal ? "normal" : "uniform"; }

inline Family family_from_string(const std::string& s) {
  if (s == "sawyer7") return Family::Sawyer7;
  if (s == "ur6") return Family::Ur6;
  throw InvalidArgument("unknown robot family '" + s + "' (expected sawyer7 or ur6)");
}

inline Strategy strategy_from_string(const std::string& s) {
  if (s == "normal") return Strategy::Normal;
  if (s == "uniform") return Strategy::Uniform;
  throw InvalidArgument("unknown sampling strategy '" + s + "' (expected normal or uniform)");
}

inline constexpr int kTemplateRows = 8;

/// M - 1 link templates, one end-effector template and M joint constraints.
/// Serializes to an 8 x M matrix: rows 0..5 hold the link (or end-effector)
/// parameters, rows 6..7 the joint limits.
struct KinematicTemplate {
  std::vector<LinkTemplate> links;
  EndEffectorTemplate end_effector;
  std::vector<JointConstraint> joints;

  // Provenance, carried through the native file format.
  std::string family;
  std::string strategy;
  std::uint64_t seed = 0;

  std::size_t columns() const { return joints.size(); }

  void validate() const {
    if (joints.size() != links.size() + 1) {
      throw InvalidArgument("template needs exactly one more joint than link templates");
    }
    if (links.empty()) throw InvalidArgument("template needs at least one link");
    for (const auto& l : links) l.validate();
    end_effector.validate();
    for (const auto& j : joints) j.validate();
    for (std::size_t i = 1; i < links.size(); ++i) {
      if (links[i - 1].pattern[2] != links[i].pattern[0]) {
        throw InvalidArgument("chain incompatibility between link " + std::to_string(i) + " and " +
                              std::to_string(i + 1));
      }
    }
  }

  Eigen::MatrixXd matrix() const {
    const auto m = static_cast<Eigen::Index>(columns());
    Eigen::MatrixXd kt(kTemplateRows, m);
    for (Eigen::Index c = 0; c + 1 < m; ++c) {
      const auto& l = links[static_cast<std::size_t>(c)];
      kt.col(c).head<6>() << l.pattern_code(), l.len_x, l.len_y, l.len_z, l.radius, l.chiral_flip ? 1.0 : 0.0;
    }
    kt.col(m - 1).head<6>() << end_effector.base_height, end_effector.base_radius, end_effector.cuboid_scale, -1.0,
        -1.0, -1.0;
    for (Eigen::Index c = 0; c < m; ++c) {
      kt(6, c) = joints[static_cast<std::size_t>(c)].lower;
      kt(7, c) = joints[static_cast<std::size_t>(c)].upper;
    }
    return kt;
  }

  static KinematicTemplate from_matrix(const Eigen::MatrixXd& kt) {
    if (kt.rows() != kTemplateRows || kt.cols() < 2) throw InvalidArgument("template matrix must be 8 x M with M >= 2");
    KinematicTemplate t;
    const Eigen::Index m = kt.cols();
    for (Eigen::Index c = 0; c + 1 < m; ++c) {
      LinkTemplate l;
      const double code = kt(0, c);
      if (code != std::round(code)) throw InvalidArgument("pattern code must be integral");
      l.pattern = LinkTemplate::pattern_from_code(static_cast<int>(code));
      l.len_x = kt(1, c);
      l.len_y = kt(2, c);
      l.len_z = kt(3, c);
      l.radius = kt(4, c);
      if (kt(5, c) != 0.0 && kt(5, c) != 1.0) throw InvalidArgument("chiral flip must be 0 or 1");
      l.chiral_flip = kt(5, c) == 1.0;
      t.links.push_back(l);
    }
    const auto e = kt.col(m - 1);
    if (e(3) != -1.0 || e(4) != -1.0 || e(5) != -1.0) {
      throw InvalidArgument("end-effector column must be padded with -1");
    }
    t.end_effector = {e(0), e(1), e(2)};
    for (Eigen::Index c = 0; c < m; ++c) t.joints.push_back({kt(6, c), kt(7, c)});
    t.validate();
    return t;
  }
};

inline bool operator==(const LinkTemplate& a, const LinkTemplate& b) {
  return a.pattern == b.pattern && a.len_x == b.len_x && a.len_y == b.len_y && a.len_z == b.len_z &&
         a.radius == b.radius && a.chiral_flip == b.chiral_flip;
}
inline bool operator==(const EndEffectorTemplate& a, const EndEffectorTemplate& b) {
  return a.base_height == b.base_height && a.base_radius == b.base_radius && a.cuboid_scale == b.cuboid_scale;
}
inline bool operator==(const JointConstraint& a, const JointConstraint& b) {
  return a.lower == b.lower && a.upper == b.upper;
}
inline bool operator==(const KinematicTemplate& a, const KinematicTemplate& b) {
  return a.links == b.links && a.end_effector == b.end_effector && a.joints == b.joints;
}

// ---------------------------------------------------------------------------
// Native template format

inline nlohmann::json template_to_json(const KinematicTemplate& t) {
  nlohmann::json j;
  j["family"] = t.family;
  j["strategy"] = t.strategy;
  j["seed"] = t.seed;
  const Eigen::MatrixXd kt = t.matrix();
  nlohmann::json cols = nlohmann::json::array();
  for (Eigen::Index c = 0; c < kt.cols(); ++c) {
    nlohmann::json col = nlohmann::json::array();
    for (Eigen::Index r = 0; r < kt.rows(); ++r) col.push_back(kt(r, c));
    cols.push_back(std::move(col));
  }
  j["columns"] = std::move(cols);
  return j;
}

inline KinematicTemplate template_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("columns")) throw InvalidArgument("template JSON needs a 'columns' array");
  const auto& cols = j.at("columns");
  if (!cols.is_array() || cols.size() < 2) throw InvalidArgument("template JSON needs at least two columns");
  Eigen::MatrixXd kt(kTemplateRows, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (!cols[c].is_array() || cols[c].size() != kTemplateRows) {
      throw InvalidArgument("every template column must hold 8 numbers");
    }
    for (int r = 0; r < kTemplateRows; ++r) kt(r, static_cast<Eigen::Index>(c)) = cols[c][static_cast<std::size_t>(r)].get<double>();
  }
  KinematicTemplate t = KinematicTemplate::from_matrix(kt);
  t.family = j.value("family", std::string{});
  t.strategy = j.value("strategy", std::string{});
  t.seed = j.value("seed", std::uint64_t{0});
  return t;
}

// ---------------------------------------------------------------------------
// Family nominal designs and sampling

inline LinkTemplate make_link(const char* pattern, double lx, double ly, double lz, double r, bool cf) {
  LinkTemplate l;
  l.pattern = LinkTemplate::pattern_from_string(pattern);
  l.len_x = lx;
  l.len_y = ly;
  l.len_z = lz;
  l.radius = r;
  l.chiral_flip = cf;
  return l;
}

/// Nominal parameters mimicking the commercial design of each family.
inline KinematicTemplate nominal_template(Family family) {
  KinematicTemplate t;
  t.family = to_string(family);
  t.strategy = "nominal";
  if (family == Family::Sawyer7) {
    t.links = {
        make_link("zxy", 0.08, 0.12, 0.32, 0.060, false),
        make_link("yzx", 0.20, 0.10, 0.00, 0.055, false),
        make_link("xzy", 0.20, 0.10, 0.00, 0.050, true),
        make_link("yzx", 0.20, 0.09, 0.00, 0.050, false),
        make_link("xzy", 0.18, 0.09, 0.00, 0.045, false),
        make_link("yzx", 0.10, 0.08, 0.00, 0.040, false),
    };
    t.end_effector = {0.05, 0.035, 0.8};
    t.joints = {{-3.05, 3.05}, {-3.0, 3.0}, {-3.05, 3.05}, {-3.0, 3.0}, {-2.98, 2.98}, {-2.98, 2.98}, {-3.1, 3.1}};
  } else {
    t.links = {
        make_link("zxy", 0.00, 0.12, 0.15, 0.055, false),
        make_link("yzy", 0.00, 0.07, 0.42, 0.050, true),
        make_link("yzy", 0.00, 0.06, 0.39, 0.045, false),
        make_link("yxz", 0.00, 0.08, 0.10, 0.040, false),
        make_link("zxy", 0.00, 0.09, 0.09, 0.040, false),
    };
    t.end_effector = {0.05, 0.035, 0.8};
    t.joints = {{-3.1, 3.1}, {-3.1, 3.1}, {-2.8, 2.8}, {-3.1, 3.1}, {-3.1, 3.1}, {-3.1, 3.1}};
  }
  return t;
}

inline std::size_t family_dof(Family f) { return f == Family::Sawyer7 ? 7 : 6; }

struct SamplingSpread {
  // normal strategy: standard deviations
  double length_rel_sigma = 0.15;
  double radius_rel_sigma = 0.20;
  double joint_sigma = 0.2;
  double ee_rel_sigma = 0.15;
  // uniform strategy: multiplicative / additive half-ranges
  double length_rel_range = 0.4;
  double radius_rel_range = 0.25;
  double joint_range = 0.3;
  double ee_rel_range = 0.3;
};

namespace detail {

// Hard validity conditions shared by both sampling strategies.
inline bool plausible(const KinematicTemplate& t) {
  try {
    t.validate();
  } catch (const InvalidArgument&) {
    return false;
  }
  for (const auto& l : t.links) {
    if (l.radius < 0.015 || l.radius > 0.09) return false;
    for (std::size_t s = 0; s < 3; ++s) {
      const double len = l.cylinder_length(s);
      if (len != 0.0 && len < 0.02) return false;
    }
    if (l.cylinder_length(0) + l.cylinder_length(1) + l.cylinder_length(2) < 2.0 * l.radius + 0.02) return false;
  }
  for (const auto& j : t.joints) {
    if (j.lower < -M_PI || j.upper > M_PI || j.upper - j.lower < 1.0) return false;
  }
  const auto& e = t.end_effector;
  return e.base_height >= 0.01 && e.base_radius >= 0.01 && e.cuboid_scale >= 0.3;
}

}  // namespace detail

/// Samples a template around the family's nominal design. Patterns and
/// chiral flips are fixed by the family; zero-length (2-cylinder) slots stay
/// zero. Invalid draws are rejected; throws after 100 rejections.
inline KinematicTemplate sample_template(Family family, Strategy strategy, std::uint64_t seed,
                                         const SamplingSpread& spread = {}) {
  const KinematicTemplate nominal = nominal_template(family);
  Rng rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  auto rel = [&](double nom, double sigma, double range) {
    if (nom == 0.0) return 0.0;
    return strategy == Strategy::Normal ? nom * (1.0 + sigma * nd(rng)) : nom * (1.0 + range * ud(rng));
  };
  auto add = [&](double nom, double sigma, double range) {
    return strategy == Strategy::Normal ? nom + sigma * nd(rng) : nom + range * ud(rng);
  };

  for (int attempt = 0; attempt < 100; ++attempt) {
    KinematicTemplate t = nominal;
    t.strategy = to_string(strategy);
    t.seed = seed;
    for (auto& l : t.links) {
      l.len_x = rel(l.len_x, spread.length_rel_sigma, spread.length_rel_range);
      l.len_y = rel(l.len_y, spread.length_rel_sigma, spread.length_rel_range);
      l.len_z = rel(l.len_z, spread.length_rel_sigma, spread.length_rel_range);
      l.radius = rel(l.radius, spread.radius_rel_sigma, spread.radius_rel_range);
    }
    auto& e = t.end_effector;
    e.base_height = rel(e.base_height, spread.ee_rel_sigma, spread.ee_rel_range);
    e.base_radius = rel(e.base_radius, spread.ee_rel_sigma, spread.ee_rel_range);
    e.cuboid_scale = rel(e.cuboid_scale, spread.ee_rel_sigma, spread.ee_rel_range);
    for (auto& j : t.joints) {
      j.lower = std::max(add(j.lower, spread.joint_sigma, spread.joint_range), -M_PI);
      j.upper = std::min(add(j.upper, spread.joint_sigma, spread.joint_range), M_PI);
    }
    if (detail::plausible(t)) return t;
  }
  throw NumericalError("sample_template: 100 consecutive invalid draws for family " + to_string(family));
}

// ---------------------------------------------------------------------------
// Compiled robot model

struct Capsule {
  Eigen::Vector3d a = Eigen::Vector3d::Zero();
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  double radius = 0.0;
};

/// Cylinder in its link's frame: axis segment from start to end.
struct Cylinder {
  Eigen::Vector3d start = Eigen::Vector3d::Zero();
  Eigen::Vector3d end = Eigen::Vector3d::Zero();
  double radius = 0.0;
  Axis axis = Axis::Z;
  int sign = 1;

  double length() const { return (end - start).norm(); }
  Eigen::Vector3d center() const { return 0.5 * (start + end); }
  /// Pose of this cylinder in the link frame (origin at the axis midpoint,
  /// z along the extrusion direction).
  Eigen::Isometry3d frame() const {
    Eigen::Isometry3d f = Eigen::Isometry3d::Identity();
    f.linear() = axis_frame(axis, sign);
    f.translation() = center();
    return f;
  }
};

/// Oriented box in its link's frame.
struct Box {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d half_extents = Eigen::Vector3d::Zero();
};

struct CompiledLink {
  std::vector<Cylinder> cylinders;
  std::vector<Box> boxes;
  std::vector<Capsule> capsules;  // collision geometry, link frame
  Eigen::Vector3d joint_origin = Eigen::Vector3d::Zero();  // in the parent link frame
  Eigen::Vector3d joint_axis = Eigen::Vector3d::UnitZ();   // unit, in this link's frame
};

struct RobotModel {
  std::size_t dof = 0;
  std::vector<CompiledLink> links;  // size dof + 1: base, links, end-effector
  std::vector<Eigen::Vector3d> joint_axes;
  std::vector<JointConstraint> joint_limits;
  Eigen::Isometry3d ee_frame = Eigen::Isometry3d::Identity();  // tool frame in the end-effector link frame
  KinematicTemplate source;

  std::size_t token_count() const { return dof + 1; }
  std::size_t end_effector_index() const { return dof; }

  VectorXd lower() const {
    VectorXd v(static_cast<Eigen::Index>(dof));
    for (std::size_t i = 0; i < dof; ++i) v[static_cast<Eigen::Index>(i)] = joint_limits[i].lower;
    return v;
  }
  VectorXd upper() const {
    VectorXd v(static_cast<Eigen::Index>(dof));
    for (std::size_t i = 0; i < dof; ++i) v[static_cast<Eigen::Index>(i)] = joint_limits[i].upper;
    return v;
  }
  bool within_limits(const VectorXd& j, double tol = 0.0) const {
    if (static_cast<std::size_t>(j.size()) != dof) return false;
    for (std::size_t i = 0; i < dof; ++i) {
      const double v = j[static_cast<Eigen::Index>(i)];
      if (!(v >= joint_limits[i].lower - tol && v <= joint_limits[i].upper + tol)) return false;
    }
    return true;
  }
  VectorXd clamp(const VectorXd& j) const { return clamp_to_box(j, lower(), upper()); }
};

namespace detail {

inline Capsule box_capsule(const Box& b) {
  Eigen::Index longest = 0;
  b.half_extents.maxCoeff(&longest);
  double cross_sq = 0.0;
  for (Eigen::Index k = 0; k < 3; ++k) {
    if (k != longest) cross_sq += b.half_extents[k] * b.half_extents[k];
  }
  const Eigen::Vector3d dir = b.rotation.col(longest) * b.half_extents[longest];
  return {b.center - dir, b.center + dir, std::sqrt(cross_sq)};
}

}  // namespace detail

/// Compiles a template into a kinematic chain.
///
/// Cylinders extrude sequentially along the pattern axes. A link's first
/// cylinder continues the signed direction in which its parent exits; the
/// middle and last cylinders extrude along +axis, and a chiral flip reverses
/// the last one. Joint i sits at the exit point of link i-1 and rotates about
/// the first extrusion direction of link i. The end-effector base cylinder
/// continues the last link's exit direction; its top-center is the tool frame.
inline RobotModel compile_robot(const KinematicTemplate& tmpl) {
  tmpl.validate();
  RobotModel robot;
  robot.source = tmpl;
  robot.dof = tmpl.joints.size();
  robot.joint_limits = tmpl.joints;
  robot.links.resize(robot.dof + 1);

  Eigen::Vector3d exit_point = Eigen::Vector3d::Zero();
  Axis exit_axis = Axis::Z;
  int exit_sign = 1;

  for (std::size_t i = 0; i < tmpl.links.size(); ++i) {
    const LinkTemplate& lt = tmpl.links[i];
    CompiledLink& link = robot.links[i + 1];
    link.joint_origin = exit_point;
    int first_sign = exit_sign;
    if (i == 0 && lt.pattern[0] != exit_axis) first_sign = 1;
    link.joint_axis = unit_axis(lt.pattern[0], first_sign);

    Eigen::Vector3d cursor = Eigen::Vector3d::Zero();
    for (std::size_t s = 0; s < 3; ++s) {
      const double len = lt.cylinder_length(s);
      int sign = 1;
      if (s == 0) sign = first_sign;
      if (s == 2 && lt.chiral_flip) sign = -1;
      if (len > 0.0) {
        Cylinder c;
        c.start = cursor;
        c.end = cursor + len * unit_axis(lt.pattern[s], sign);
        c.radius = lt.radius;
        c.axis = lt.pattern[s];
        c.sign = sign;
        link.cylinders.push_back(c);
        link.capsules.push_back({c.start, c.end, c.radius});
        cursor = c.end;
      }
      if (s == 2) {
        exit_axis = lt.pattern[2];
        exit_sign = sign;
      }
    }
    exit_point = cursor;
  }

  // End-effector: base cylinder plus three cuboids (palm and two fingers)
  // expressed in the tool frame, whose z axis is the approach direction.
  const EndEffectorTemplate& e = tmpl.end_effector;
  CompiledLink& ee = robot.links[robot.dof];
  ee.joint_origin = exit_point;
  ee.joint_axis = unit_axis(exit_axis, exit_sign);
  Cylinder base;
  base.start = Eigen::Vector3d::Zero();
  base.end = e.base_height * unit_axis(exit_axis, exit_sign);
  base.radius = e.base_radius;
  base.axis = exit_axis;
  base.sign = exit_sign;
  ee.cylinders.push_back(base);
  ee.capsules.push_back({base.start, base.end, base.radius});

  robot.ee_frame = Eigen::Isometry3d::Identity();
  robot.ee_frame.linear() = axis_frame(exit_axis, exit_sign);
  robot.ee_frame.translation() = base.end;

  const double s = e.cuboid_scale;
  const std::array<std::pair<Eigen::Vector3d, Eigen::Vector3d>, 3> tool_boxes = {{
      {Eigen::Vector3d(0.0, 0.0, 0.01 * s), Eigen::Vector3d(0.015 * s, 0.08 * s, 0.01 * s)},
      {Eigen::Vector3d(0.0, 0.065 * s, 0.05 * s), Eigen::Vector3d(0.012 * s, 0.012 * s, 0.03 * s)},
      {Eigen::Vector3d(0.0, -0.065 * s, 0.05 * s), Eigen::Vector3d(0.012 * s, 0.012 * s, 0.03 * s)},
  }};
  for (const auto& [center, half] : tool_boxes) {
    Box b;
    b.center = robot.ee_frame * center;
    b.rotation = robot.ee_frame.linear();
    b.half_extents = half;
    ee.boxes.push_back(b);
    ee.capsules.push_back(detail::box_capsule(b));
  }

  robot.joint_axes.reserve(robot.dof);
  for (std::size_t i = 1; i <= robot.dof; ++i) robot.joint_axes.push_back(robot.links[i].joint_axis);
  return robot;
}

// ---------------------------------------------------------------------------
// Frame assignment (frame augmentation)

/// Per sampled link (indices 1..M-1), which constituent cylinder supplies the
/// link's pose frame. The base and end-effector frames are fixed.
struct FrameAssignment {
  std::vector<int> cylinder_index;

  bool operator==(const FrameAssignment&) const = default;
};

inline FrameAssignment default_frames(const RobotModel& robot) {
  return FrameAssignment{std::vector<int>(robot.dof - 1, 0)};
}

inline std::uint64_t frame_assignment_count(const RobotModel& robot) {
  std::uint64_t n = 1;
  for (std::size_t i = 1; i < robot.dof; ++i) n *= robot.links[i].cylinders.size();
  return n;
}

inline void validate_frames(const RobotModel& robot, const FrameAssignment& frames) {
  if (frames.cylinder_index.size() != robot.dof - 1) throw InvalidArgument("frame assignment length must be dof - 1");
  for (std::size_t i = 0; i < frames.cylinder_index.size(); ++i) {
    const int idx = frames.cylinder_index[i];
    if (idx < 0 || static_cast<std::size_t>(idx) >= robot.links[i + 1].cylinders.size()) {
      throw InvalidArgument("frame index out of range for link " + std::to_string(i + 1));
    }
  }
}

inline FrameAssignment sample_frames(const RobotModel& robot, Rng& rng) {
  FrameAssignment f;
  f.cylinder_index.reserve(robot.dof - 1);
  for (std::size_t i = 1; i < robot.dof; ++i) {
    std::uniform_int_distribution<int> ud(0, static_cast<int>(robot.links[i].cylinders.size()) - 1);
    f.cylinder_index.push_back(ud(rng));
  }
  return f;
}

inline FrameAssignment sample_frames(const RobotModel& robot, std::uint64_t seed) {
  Rng rng(seed);
  return sample_frames(robot, rng);
}

// ---------------------------------------------------------------------------
// URDF export

namespace detail {

inline std::string fmt3(const Eigen::Vector3d& v) {
  std::ostringstream os;
  os.precision(17);
  os << v.x() << ' ' << v.y() << ' ' << v.z();
  return os.str();
}

inline Eigen::Vector3d rpy(const Eigen::Matrix3d& r) {
  return {std::atan2(r(2, 1), r(2, 2)), std::asin(std::clamp(-r(2, 0), -1.0, 1.0)), std::atan2(r(1, 0), r(0, 0))};
}

inline void urdf_geometry(std::ostringstream& os, const CompiledLink& link) {
  auto emit = [&](const char* tag, const Eigen::Vector3d& xyz, const Eigen::Matrix3d& rot, const std::string& geom) {
    os << "    <" << tag << ">\n      <origin xyz=\"" << fmt3(xyz) << "\" rpy=\"" << fmt3(rpy(rot)) << "\"/>\n"
       << "      <geometry>" << geom << "</geometry>\n    </" << tag << ">\n";
  };
  for (const Cylinder& c : link.cylinders) {
    std::ostringstream g;
    g.precision(17);
    g << "<cylinder radius=\"" << c.radius << "\" length=\"" << c.length() << "\"/>";
    const Eigen::Isometry3d f = c.frame();
    emit("visual", f.translation(), f.linear(), g.str());
    emit("collision", f.translation(), f.linear(), g.str());
  }
  for (const Box& b : link.boxes) {
    const std::string g = "<box size=\"" + fmt3(2.0 * b.half_extents) + "\"/>";
    emit("visual", b.center, b.rotation, g);
    emit("collision", b.center, b.rotation, g);
  }
}

}  // namespace detail

inline std::string link_name(const RobotModel& robot, std::size_t i) {
  if (i == 0) return "base_link";
  if (i == robot.dof) return "ee_link";
  return "link_" + std::to_string(i);
}

/// URDF with cylinder (and end-effector box) primitives and one revolute
/// joint per degree of freedom.
inline std::string export_urdf(const RobotModel& robot, const std::string& name = "xmopkit_robot") {
  std::ostringstream os;
  os.precision(17);
  os << "<?xml version=\"1.0\"?>\n<robot name=\"" << name << "\">\n";
  for (std::size_t i = 0; i <= robot.dof; ++i) {
    os << "  <link name=\"" << link_name(robot, i) << "\">\n";
    detail::urdf_geometry(os, robot.links[i]);
    os << "  </link>\n";
  }
  for (std::size_t i = 1; i <= robot.dof; ++i) {
    const auto& lim = robot.joint_limits[i - 1];
    os << "  <joint name=\"joint_" << i << "\" type=\"revolute\">\n"
       << "    <parent link=\"" << link_name(robot, i - 1) << "\"/>\n"
       << "    <child link=\"" << link_name(robot, i) << "\"/>\n"
       << "    <origin xyz=\"" << detail::fmt3(robot.links[i].joint_origin) << "\" rpy=\"0 0 0\"/>\n"
       << "    <axis xyz=\"" << detail::fmt3(robot.links[i].joint_axis) << "\"/>\n"
       << "    <limit lower=\"" << lim.lower << "\" upper=\"" << lim.upper
       << "\" effort=\"100\" velocity=\"1\"/>\n"
       << "  </joint>\n";
  }
  os << "</robot>\n";
  return os.str();
}

}  // namespace xmopkit
