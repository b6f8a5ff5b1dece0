#pragma once

// Balanced collision-classification records built from demonstrations.

#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "xmopkit/collision.hpp"
#include "xmopkit/demos.hpp"

namespace xmopkit {

struct CollisionRecord {
  std::size_t template_ref = 0;  // index of the source demonstration
  JointConfig joint_config;
  double eta = 0.0;
  std::vector<bool> per_link_collision;
  bool binary_label = false;
};

struct CollisionDataOptions {
  int max_resamples = 100;
  int cloud_points = kDefaultScorePoints;
  std::optional<double> fixed_eta;  // forces the noise scale
};

inline nlohmann::json collision_record_to_json(const CollisionRecord& r) {
  return {{"template_ref", r.template_ref},
          {"joint_config", vector_json(r.joint_config)},
          {"eta", r.eta},
          {"per_link_collision", r.per_link_collision},
          {"binary_label", r.binary_label}};
}

inline JointConfig perturb_config(const JointConfig& j, double eta, Rng& rng) {
  return j + eta * standard_normal(rng, j.size());
}

/// One perturbed waypoint per demonstration, j + eta * N(0, I) with
/// eta ~ U(0, 1). Classes alternate per demonstration and each draw is
/// resampled until it has the wanted label; the result is trimmed so that
/// positives and negatives are exactly equal in number.
inline std::vector<CollisionRecord> gen_collision_dataset(const std::vector<Demonstration>& demos, std::uint64_t seed,
                                                          const CollisionDataOptions& options = {}) {
  if (demos.empty()) throw InvalidArgument("gen_collision_dataset: no demonstrations");
  std::vector<CollisionRecord> pos, neg;
  for (std::size_t i = 0; i < demos.size(); ++i) {
    const Demonstration& d = demos[i];
    const RobotModel robot = compile_robot(d.tmpl);
    Rng rng(derive_seed(seed, i));
    std::uniform_int_distribution<std::size_t> pick(0, d.waypoints.size() - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const bool want = (i % 2) == 0;
    for (int k = 0; k < options.max_resamples; ++k) {
      const JointConfig& base = d.waypoints[pick(rng)];
      CollisionRecord r;
      r.template_ref = i;
      r.eta = options.fixed_eta ? *options.fixed_eta : unit(rng);
      r.joint_config = perturb_config(base, r.eta, rng);
      const CollisionReport rep = check_config(robot, d.scene, r.joint_config);
      r.per_link_collision = rep.link_in_collision;
      if (rep.any()) {
        const auto cloud = sample_surface_points(robot, d.scene, r.joint_config, options.cloud_points, 1, derive_seed(seed, i, k));
        r.binary_label = binary_collision_condition(label_collisions(cloud, rep));
      }
      if (r.binary_label == want) {
        (r.binary_label ? pos : neg).push_back(std::move(r));
        break;
      }
    }
  }
  const std::size_t m = std::min(pos.size(), neg.size());
  std::vector<CollisionRecord> out;
  out.reserve(2 * m);
  // Interleave to keep source order stable.
  std::size_t a = 0, b = 0;
  while (a < m || b < m) {
    if (b >= m || (a < m && pos[a].template_ref < neg[b].template_ref)) {
      out.push_back(std::move(pos[a++]));
    } else {
      out.push_back(std::move(neg[b++]));
    }
  }
  return out;
}

inline void write_collision_dataset(std::ostream& os, const std::vector<CollisionRecord>& records,
                                    const nlohmann::json& config, std::uint64_t seed) {
  nlohmann::json meta = metadata_record("collision_dataset", config, seed);
  std::size_t positives = 0;
  for (const auto& r : records) positives += r.binary_label;
  meta["records"] = records.size();
  meta["positives"] = positives;
  std::vector<nlohmann::json> rows;
  for (const auto& r : records) rows.push_back(collision_record_to_json(r));
  write_jsonl(os, meta, rows);
}

}  // namespace xmopkit
