#pragma once

// Geometric scenes and exact primitive queries. Robot links are modeled as
// capsules; obstacles are axis-aligned cuboids and spheres.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include "xmopkit/common.hpp"
#include "xmopkit/kinematics.hpp"
#include "xmopkit/robot_model.hpp"

namespace xmopkit {

struct Cuboid {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d half_extents = Eigen::Vector3d::Constant(0.1);
};

struct Sphere {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 0.1;
};

struct Scene {
  std::vector<Cuboid> cuboids;
  std::vector<Sphere> spheres;

  bool empty() const { return cuboids.empty() && spheres.empty(); }

  void validate() const {
    for (const auto& c : cuboids) {
      if (!c.center.allFinite() || !c.half_extents.allFinite() || (c.half_extents.array() <= 0.0).any()) {
        throw InvalidArgument("cuboid needs finite center and positive half-extents");
      }
    }
    for (const auto& s : spheres) {
      if (!s.center.allFinite() || !(s.radius > 0.0) || !std::isfinite(s.radius)) {
        throw InvalidArgument("sphere needs finite center and positive radius");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Scene file format: JSON list of primitives.

inline nlohmann::json vec_json(const Eigen::Vector3d& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

inline Eigen::Vector3d vec_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw InvalidArgument("expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline nlohmann::json scene_to_json(const Scene& s) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& c : s.cuboids) {
    out.push_back({{"type", "cuboid"}, {"center", vec_json(c.center)}, {"half_extents", vec_json(c.half_extents)}});
  }
  for (const auto& sp : s.spheres) {
    out.push_back({{"type", "sphere"}, {"center", vec_json(sp.center)}, {"radius", sp.radius}});
  }
  return out;
}

inline Scene scene_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw InvalidArgument("scene JSON must be a list of primitives");
  Scene s;
  for (const auto& p : j) {
    const std::string type = p.at("type").get<std::string>();
    if (type == "cuboid") {
      s.cuboids.push_back({vec_from_json(p.at("center")), vec_from_json(p.at("half_extents"))});
    } else if (type == "sphere") {
      s.spheres.push_back({vec_from_json(p.at("center")), p.at("radius").get<double>()});
    } else {
      throw InvalidArgument("unknown primitive type '" + type + "'");
    }
  }
  s.validate();
  return s;
}

/// Tabletop-style cuboid clutter around the robot base.
struct SceneConfig {
  int min_obstacles = 1;
  int max_obstacles = 8;
  double min_half_extent = 0.03;
  double max_half_extent = 0.12;
  double inner_radius = 0.35;  // keep-out cylinder around the base axis
  double outer_radius = 0.85;
  double min_height = 0.0;
  double max_height = 0.9;
  bool empty = false;
};

inline nlohmann::json scene_config_to_json(const SceneConfig& c) {
  return {{"min_obstacles", c.min_obstacles}, {"max_obstacles", c.max_obstacles},
          {"min_half_extent", c.min_half_extent}, {"max_half_extent", c.max_half_extent},
          {"inner_radius", c.inner_radius}, {"outer_radius", c.outer_radius},
          {"min_height", c.min_height}, {"max_height", c.max_height}, {"empty", c.empty}};
}

inline SceneConfig scene_config_from_json(const nlohmann::json& j) {
  SceneConfig c;
  c.min_obstacles = j.value("min_obstacles", c.min_obstacles);
  c.max_obstacles = j.value("max_obstacles", c.max_obstacles);
  c.min_half_extent = j.value("min_half_extent", c.min_half_extent);
  c.max_half_extent = j.value("max_half_extent", c.max_half_extent);
  c.inner_radius = j.value("inner_radius", c.inner_radius);
  c.outer_radius = j.value("outer_radius", c.outer_radius);
  c.min_height = j.value("min_height", c.min_height);
  c.max_height = j.value("max_height", c.max_height);
  c.empty = j.value("empty", c.empty);
  if (c.min_obstacles < 0 || c.max_obstacles < c.min_obstacles || c.min_half_extent <= 0.0 ||
      c.max_half_extent < c.min_half_extent || c.outer_radius <= c.inner_radius || c.max_height < c.min_height) {
    throw InvalidArgument("scene config out of range");
  }
  return c;
}

inline Scene generate_scene(const SceneConfig& cfg, Rng& rng) {
  Scene s;
  if (cfg.empty) return s;
  std::uniform_int_distribution<int> count(cfg.min_obstacles, cfg.max_obstacles);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    Cuboid c;
    for (int k = 0; k < 3; ++k) c.half_extents[k] = cfg.min_half_extent + (cfg.max_half_extent - cfg.min_half_extent) * unit(rng);
    const double theta = 2.0 * M_PI * unit(rng);
    // Keep the whole footprint outside the base keep-out radius.
    const double margin = c.half_extents.head<2>().norm();
    const double r_lo = cfg.inner_radius + margin;
    const double r_hi = std::max(r_lo, cfg.outer_radius);
    const double r = r_lo + (r_hi - r_lo) * unit(rng);
    c.center = {r * std::cos(theta), r * std::sin(theta), cfg.min_height + (cfg.max_height - cfg.min_height) * unit(rng)};
    s.cuboids.push_back(c);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Primitive distances

namespace geometry {

inline double point_segment_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const Eigen::Vector3d ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (a + t * ab - p).norm();
}

/// Closest distance between segments [p1,q1] and [p2,q2].
inline double segment_segment_distance(const Eigen::Vector3d& p1, const Eigen::Vector3d& q1,
                                       const Eigen::Vector3d& p2, const Eigen::Vector3d& q2) {
  constexpr double eps = 1e-15;
  const Eigen::Vector3d d1 = q1 - p1;
  const Eigen::Vector3d d2 = q2 - p2;
  const Eigen::Vector3d r = p1 - p2;
  const double a = d1.squaredNorm();
  const double e = d2.squaredNorm();
  const double f = d2.dot(r);
  double s = 0.0;
  double t = 0.0;
  if (a <= eps && e <= eps) return r.norm();
  if (a <= eps) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= eps) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double denom = a * e - b * b;
      s = denom > eps ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  return ((p1 + s * d1) - (p2 + t * d2)).norm();
}

/// Signed distance from a point to an axis-aligned box (negative inside).
inline double point_box_signed_distance(const Eigen::Vector3d& p, const Cuboid& box) {
  const Eigen::Vector3d q = (p - box.center).cwiseAbs() - box.half_extents;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

/// Minimum over the segment of the box signed distance. The signed distance
/// of a convex set is convex, so its restriction to a segment is unimodal and
/// golden-section search converges to the minimum.
inline double segment_box_signed_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Cuboid& box) {
  const Eigen::Vector3d d = b - a;
  auto f = [&](double t) { return point_box_signed_distance(a + t * d, box); };
  constexpr double inv_phi = 0.6180339887498949;
  double lo = 0.0;
  double hi = 1.0;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = f(x1);
  double f2 = f(x2);
  for (int it = 0; it < 64 && hi - lo > 1e-13; ++it) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = f(x2);
    }
  }
  return std::min({f1, f2, f(0.0), f(1.0)});
}

struct Aabb {
  Eigen::Vector3d lo;
  Eigen::Vector3d hi;

  bool intersects(const Aabb& o, double inflate = 0.0) const {
    return (lo.array() - inflate <= o.hi.array()).all() && (o.lo.array() <= hi.array() + inflate).all();
  }
};

inline Aabb capsule_aabb(const Eigen::Vector3d& a, const Eigen::Vector3d& b, double r) {
  return {a.cwiseMin(b).array() - r, a.cwiseMax(b).array() + r};
}
inline Aabb cuboid_aabb(const Cuboid& c) { return {c.center - c.half_extents, c.center + c.half_extents}; }
inline Aabb sphere_aabb(const Sphere& s) {
  return {s.center.array() - s.radius, s.center.array() + s.radius};
}

}  // namespace geometry

/// Capsule clearance (signed; negative = penetration) against each primitive.
inline double capsule_cuboid_clearance(const Capsule& c, const Cuboid& box) {
  return geometry::segment_box_signed_distance(c.a, c.b, box) - c.radius;
}
inline double capsule_sphere_clearance(const Capsule& c, const Sphere& s) {
  return geometry::point_segment_distance(s.center, c.a, c.b) - c.radius - s.radius;
}
inline double capsule_capsule_clearance(const Capsule& c1, const Capsule& c2) {
  return geometry::segment_segment_distance(c1.a, c1.b, c2.a, c2.b) - c1.radius - c2.radius;
}

// ---------------------------------------------------------------------------
// Robot geometry at a configuration

struct PosedCapsule {
  Capsule capsule;
  std::size_t link = 0;
  geometry::Aabb box;
};

inline std::vector<PosedCapsule> posed_capsules(const RobotModel& robot, const JointConfig& j) {
  const std::vector<Pose> frames = link_frames(robot, j);
  std::vector<PosedCapsule> out;
  for (std::size_t l = 0; l < robot.links.size(); ++l) {
    for (const Capsule& c : robot.links[l].capsules) {
      PosedCapsule pc;
      pc.capsule = {frames[l] * c.a, frames[l] * c.b, c.radius};
      pc.link = l;
      pc.box = geometry::capsule_aabb(pc.capsule.a, pc.capsule.b, c.radius);
      out.push_back(pc);
    }
  }
  return out;
}

/// Links i and k are exempt from self-collision when adjacent in the chain.
inline bool self_pair_checked(std::size_t link_a, std::size_t link_b) {
  return (link_a > link_b ? link_a - link_b : link_b - link_a) >= 2;
}

struct CollisionReport {
  std::vector<bool> link_in_collision;   // environment or self, per link
  std::vector<bool> environment_collision;
  std::vector<std::pair<std::size_t, std::size_t>> self_collision_pairs;

  bool any() const { return std::find(link_in_collision.begin(), link_in_collision.end(), true) != link_in_collision.end(); }
};

/// Frame assignment does not change collision geometry, so collision queries
/// take only the robot, scene and joint vector.
inline CollisionReport check_config(const RobotModel& robot, const Scene& scene, const JointConfig& j) {
  const auto caps = posed_capsules(robot, j);
  CollisionReport rep;
  rep.link_in_collision.assign(robot.token_count(), false);
  rep.environment_collision.assign(robot.token_count(), false);
  for (const auto& pc : caps) {
    if (rep.environment_collision[pc.link]) continue;
    bool hit = false;
    for (const auto& box : scene.cuboids) {
      if (pc.box.intersects(geometry::cuboid_aabb(box)) && capsule_cuboid_clearance(pc.capsule, box) < 0.0) {
        hit = true;
        break;
      }
    }
    for (std::size_t s = 0; !hit && s < scene.spheres.size(); ++s) {
      if (pc.box.intersects(geometry::sphere_aabb(scene.spheres[s])) &&
          capsule_sphere_clearance(pc.capsule, scene.spheres[s]) < 0.0) {
        hit = true;
      }
    }
    if (hit) rep.environment_collision[pc.link] = true;
  }
  std::vector<std::vector<bool>> pair_hit(robot.token_count(), std::vector<bool>(robot.token_count(), false));
  for (std::size_t a = 0; a < caps.size(); ++a) {
    for (std::size_t b = a + 1; b < caps.size(); ++b) {
      const std::size_t la = std::min(caps[a].link, caps[b].link);
      const std::size_t lb = std::max(caps[a].link, caps[b].link);
      if (!self_pair_checked(la, lb) || pair_hit[la][lb]) continue;
      if (caps[a].box.intersects(caps[b].box) && capsule_capsule_clearance(caps[a].capsule, caps[b].capsule) < 0.0) {
        pair_hit[la][lb] = true;
        rep.self_collision_pairs.emplace_back(la, lb);
      }
    }
  }
  std::sort(rep.self_collision_pairs.begin(), rep.self_collision_pairs.end());
  for (std::size_t l = 0; l < robot.token_count(); ++l) rep.link_in_collision[l] = rep.environment_collision[l];
  for (const auto& [a, b] : rep.self_collision_pairs) {
    rep.link_in_collision[a] = true;
    rep.link_in_collision[b] = true;
  }
  return rep;
}

inline bool config_collision_free(const RobotModel& robot, const Scene& scene, const JointConfig& j) {
  return !check_config(robot, scene, j).any();
}

struct SelfDistance {
  std::size_t link_a = 0;
  std::size_t link_b = 0;
  double clearance = 0.0;
};

struct DistanceQuery {
  std::vector<std::vector<double>> environment;  // per link
  std::vector<SelfDistance> self;

  std::size_t size() const {
    std::size_t n = self.size();
    for (const auto& v : environment) n += v.size();
    return n;
  }
};

inline constexpr double kSelfQueryRadius = 0.1;
inline constexpr double kEnvironmentQueryRadius = 0.3;

/// Signed clearances for every primitive pair whose AABBs intersect after
/// inflation by the query radius.
inline DistanceQuery min_distances(const RobotModel& robot, const Scene& scene, const JointConfig& j,
                                   double self_radius = kSelfQueryRadius, double env_radius = kEnvironmentQueryRadius) {
  const auto caps = posed_capsules(robot, j);
  DistanceQuery q;
  q.environment.resize(robot.token_count());
  for (const auto& pc : caps) {
    for (const auto& box : scene.cuboids) {
      if (pc.box.intersects(geometry::cuboid_aabb(box), env_radius)) {
        q.environment[pc.link].push_back(capsule_cuboid_clearance(pc.capsule, box));
      }
    }
    for (const auto& s : scene.spheres) {
      if (pc.box.intersects(geometry::sphere_aabb(s), env_radius)) {
        q.environment[pc.link].push_back(capsule_sphere_clearance(pc.capsule, s));
      }
    }
  }
  for (std::size_t a = 0; a < caps.size(); ++a) {
    for (std::size_t b = a + 1; b < caps.size(); ++b) {
      if (!self_pair_checked(caps[a].link, caps[b].link)) continue;
      if (caps[a].box.intersects(caps[b].box, self_radius)) {
        q.self.push_back({std::min(caps[a].link, caps[b].link), std::max(caps[a].link, caps[b].link),
                          capsule_capsule_clearance(caps[a].capsule, caps[b].capsule)});
      }
    }
  }
  return q;
}

/// Exponential barrier on a single clearance: 1.8^(0.01 - x) below 0.01 m.
inline double collision_barrier(double clearance) {
  return clearance - 0.01 < 0.0 ? std::pow(1.8, -clearance + 0.01) : 0.0;
}

inline double collision_cost(const DistanceQuery& q) {
  double c = 0.0;
  for (const auto& link : q.environment) {
    for (double x : link) c += collision_barrier(x);
  }
  for (const auto& s : q.self) c += collision_barrier(s.clearance);
  return c;
}

inline double collision_cost(const RobotModel& robot, const Scene& scene, const JointConfig& j) {
  return collision_cost(min_distances(robot, scene, j));
}

// ---------------------------------------------------------------------------
// Labeled surface points

inline constexpr int kObstacleLabel = -1;

struct LabeledPointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<int> labels;  // link index, or kObstacleLabel

  std::size_t size() const { return points.size(); }
};

namespace detail {

struct SurfacePatch {
  enum class Kind { CylinderSide, CylinderCap, BoxFace, SphereSurface } kind;
  double area = 0.0;
  Pose frame = Pose::Identity();  // patch-local to world
  double radius = 0.0;
  double length = 0.0;
  Eigen::Vector2d face_half = Eigen::Vector2d::Zero();
  int label = 0;
};

inline void add_cylinder(std::vector<SurfacePatch>& out, const Pose& world_from_link, const Cylinder& c, int label) {
  const Pose f = world_from_link * c.frame();  // z along axis, origin at center
  const double len = c.length();
  out.push_back({SurfacePatch::Kind::CylinderSide, 2.0 * M_PI * c.radius * len, f, c.radius, len, {}, label});
  for (int side : {-1, 1}) {
    Pose cap = f;
    cap.translation() = f * Eigen::Vector3d(0.0, 0.0, side * 0.5 * len);
    out.push_back({SurfacePatch::Kind::CylinderCap, M_PI * c.radius * c.radius, cap, c.radius, 0.0, {}, label});
  }
}

inline void add_box(std::vector<SurfacePatch>& out, const Pose& world_from_box, const Eigen::Vector3d& half, int label) {
  // Six faces; each face frame has its normal along local z.
  for (int axis = 0; axis < 3; ++axis) {
    const int u = (axis + 1) % 3;
    const int v = (axis + 2) % 3;
    for (int side : {-1, 1}) {
      Eigen::Matrix3d r;
      r.col(0) = Eigen::Vector3d::Unit(u);
      r.col(1) = Eigen::Vector3d::Unit(v);
      r.col(2) = Eigen::Vector3d::Unit(axis);
      Pose local = Pose::Identity();
      local.linear() = r;
      local.translation() = side * half[axis] * Eigen::Vector3d::Unit(axis);
      SurfacePatch p{SurfacePatch::Kind::BoxFace, 4.0 * half[u] * half[v], world_from_box * local, 0.0, 0.0,
                     Eigen::Vector2d(half[u], half[v]), label};
      out.push_back(p);
    }
  }
}

inline Eigen::Vector3d sample_patch(const SurfacePatch& p, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::Vector3d local;
  switch (p.kind) {
    case SurfacePatch::Kind::CylinderSide: {
      const double th = 2.0 * M_PI * unit(rng);
      local = {p.radius * std::cos(th), p.radius * std::sin(th), (unit(rng) - 0.5) * p.length};
      break;
    }
    case SurfacePatch::Kind::CylinderCap: {
      const double th = 2.0 * M_PI * unit(rng);
      const double rr = p.radius * std::sqrt(unit(rng));
      local = {rr * std::cos(th), rr * std::sin(th), 0.0};
      break;
    }
    case SurfacePatch::Kind::BoxFace:
      local = {(2.0 * unit(rng) - 1.0) * p.face_half.x(), (2.0 * unit(rng) - 1.0) * p.face_half.y(), 0.0};
      break;
    case SurfacePatch::Kind::SphereSurface: {
      std::normal_distribution<double> nd(0.0, 1.0);
      Eigen::Vector3d d(nd(rng), nd(rng), nd(rng));
      while (d.norm() < 1e-12) d = {nd(rng), nd(rng), nd(rng)};
      local = p.radius * d.normalized();
      break;
    }
  }
  return p.frame * local;
}

inline std::vector<SurfacePatch> robot_patches(const RobotModel& robot, const JointConfig& j) {
  const std::vector<Pose> frames = link_frames(robot, j);
  std::vector<SurfacePatch> patches;
  for (std::size_t l = 0; l < robot.links.size(); ++l) {
    for (const Cylinder& c : robot.links[l].cylinders) add_cylinder(patches, frames[l], c, static_cast<int>(l));
    for (const Box& b : robot.links[l].boxes) {
      Pose bp = Pose::Identity();
      bp.linear() = b.rotation;
      bp.translation() = b.center;
      add_box(patches, frames[l] * bp, b.half_extents, static_cast<int>(l));
    }
  }
  return patches;
}

inline std::vector<SurfacePatch> scene_patches(const Scene& scene) {
  std::vector<SurfacePatch> patches;
  for (const auto& c : scene.cuboids) {
    Pose f = Pose::Identity();
    f.translation() = c.center;
    add_box(patches, f, c.half_extents, kObstacleLabel);
  }
  for (const auto& s : scene.spheres) {
    Pose f = Pose::Identity();
    f.translation() = s.center;
    patches.push_back({SurfacePatch::Kind::SphereSurface, 4.0 * M_PI * s.radius * s.radius, f, s.radius, 0.0, {},
                       kObstacleLabel});
  }
  return patches;
}

inline void sample_patches(const std::vector<SurfacePatch>& patches, int n, Rng& rng, LabeledPointCloud& out) {
  if (patches.empty() || n <= 0) return;
  std::vector<double> w;
  w.reserve(patches.size());
  for (const auto& p : patches) w.push_back(p.area);
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  for (int i = 0; i < n; ++i) {
    const SurfacePatch& p = patches[pick(rng)];
    out.points.push_back(sample_patch(p, rng));
    out.labels.push_back(p.label);
  }
}

}  // namespace detail

/// Area-uniform surface samples; robot points carry their link index and
/// obstacle points carry kObstacleLabel.
inline LabeledPointCloud sample_surface_points(const RobotModel& robot, const Scene& scene, const JointConfig& j,
                                               int n_robot, int n_obstacle, std::uint64_t seed) {
  if (n_robot <= 0 || n_obstacle <= 0) throw InvalidArgument("sample_surface_points: point counts must be positive");
  Rng rng(seed);
  LabeledPointCloud cloud;
  detail::sample_patches(detail::robot_patches(robot, j), n_robot, rng, cloud);
  detail::sample_patches(detail::scene_patches(scene), n_obstacle, rng, cloud);
  return cloud;
}

inline LabeledPointCloud sample_robot_points(const RobotModel& robot, const JointConfig& j, int n, Rng& rng) {
  if (n <= 0) throw InvalidArgument("sample_robot_points: point count must be positive");
  LabeledPointCloud cloud;
  detail::sample_patches(detail::robot_patches(robot, j), n, rng, cloud);
  return cloud;
}

enum class PointLabel : std::int8_t { Excluded = -1, Free = 0, Colliding = 1 };

/// Robot points inherit their link's collision flag; obstacle points are
/// excluded from the binary labels.
inline std::vector<PointLabel> label_collisions(const LabeledPointCloud& cloud, const CollisionReport& report) {
  std::vector<PointLabel> out;
  out.reserve(cloud.size());
  for (int label : cloud.labels) {
    if (label == kObstacleLabel) {
      out.push_back(PointLabel::Excluded);
    } else {
      const auto l = static_cast<std::size_t>(label);
      if (l >= report.link_in_collision.size()) throw InvalidArgument("point label outside the report's link range");
      out.push_back(report.link_in_collision[l] ? PointLabel::Colliding : PointLabel::Free);
    }
  }
  return out;
}

inline constexpr double kBinaryCollisionRatio = 0.001;

/// True when the colliding fraction of robot points exceeds 0.001.
inline bool binary_collision_condition(const std::vector<PointLabel>& labels) {
  std::size_t robot = 0;
  std::size_t colliding = 0;
  for (PointLabel l : labels) {
    if (l == PointLabel::Excluded) continue;
    ++robot;
    if (l == PointLabel::Colliding) ++colliding;
  }
  if (robot == 0) return false;
  return static_cast<double>(colliding) / static_cast<double>(robot) > kBinaryCollisionRatio;
}

/// Mean colliding-point fraction over the steps of a trajectory, given
/// per-step point labels. Obstacle (excluded) labels do not count toward N.
inline double score_from_labels(const std::vector<std::vector<PointLabel>>& steps) {
  if (steps.empty()) return 0.0;
  double colliding = 0.0;
  double total = 0.0;
  for (const auto& step : steps) {
    for (PointLabel l : step) {
      if (l == PointLabel::Excluded) continue;
      total += 1.0;
      if (l == PointLabel::Colliding) colliding += 1.0;
    }
  }
  return total > 0.0 ? colliding / total : 0.0;
}

inline constexpr int kDefaultScorePoints = 4096;

/// Per-step colliding-point fractions of a joint trajectory, using the
/// geometric oracle's labels on N sampled robot surface points.
inline std::vector<double> score_steps(const RobotModel& robot, const Scene& scene,
                                       const std::vector<JointConfig>& waypoints, int n_points, Rng& rng) {
  std::vector<double> out;
  out.reserve(waypoints.size());
  for (const auto& j : waypoints) {
    const CollisionReport rep = check_config(robot, scene, j);
    if (!rep.any()) {
      out.push_back(0.0);
      continue;
    }
    const LabeledPointCloud cloud = sample_robot_points(robot, j, n_points, rng);
    const auto labels = label_collisions(cloud, rep);
    out.push_back(score_from_labels({labels}));
  }
  return out;
}

inline double score_trajectory(const RobotModel& robot, const Scene& scene, const std::vector<JointConfig>& waypoints,
                               int n_points, std::uint64_t seed) {
  if (waypoints.empty()) return 0.0;
  Rng rng(seed);
  const auto steps = score_steps(robot, scene, waypoints, n_points, rng);
  double s = 0.0;
  for (double v : steps) s += v;
  return s / static_cast<double>(steps.size());
}

}  // namespace xmopkit
