#pragma once

// Planar press-fit world. The press axis is +x, the lateral axis is y; z and
// orientation of the end effector are held fixed. A carton is rigidly
// attached to the end effector through grasp_offset and collides with the
// container walls, fixed obstacles and previously placed cartons through
// penalty contacts.
//
// Config file schema (SI units):
//   {
//     "container":        {"min": [x, y], "max": [x, y]},   interior
//     "wall_thickness":   m,
//     "placed_cartons":   [{"min": [x, y], "max": [x, y]}, ...],
//     "obstacles":        [{"min": [x, y], "max": [x, y]}, ...],  wall stiffness
//     "carton":           [half_x, half_y],
//     "grasp_offset":     [x, y],
//     "wall_stiffness":   N/m,
//     "carton_stiffness": N/m,
//     "contact_damping":  N s/m,
//     "ee_mass":          kg,
//     "dt":               s,
//     "sensor_noise_std": N,
//     "max_speed":        m/s
//   }

#include "pressfit/core/serialization.hpp"
#include "pressfit/core/types.hpp"

#include <random>
#include <string>
#include <vector>

namespace pressfit::sim {

struct Rect {
  Vec2 min = Vec2::Zero();
  Vec2 max = Vec2::Zero();

  static Rect centered(const Vec2 &center, const Vec2 &half);
  Vec2 center() const { return 0.5 * (min + max); }
  Vec2 half() const { return 0.5 * (max - min); }
  bool operator==(const Rect &o) const { return min == o.min && max == o.max; }
};

struct WorldConfig {
  Rect container = Rect{Vec2(0.5, -0.2), Vec2(0.815, 0.1)};
  double wall_thickness = 0.05;
  std::vector<Rect> placed_cartons;
  std::vector<Rect> obstacles;
  Vec2 carton = Vec2(0.015, 0.0125);
  Vec2 grasp_offset = Vec2::Zero();
  double wall_stiffness = 8000.0;
  double carton_stiffness = 2000.0;
  double contact_damping = 20.0;
  double ee_mass = 2.0;
  double dt = 1.0 / 870.0;
  double sensor_noise_std = 0.0;
  double max_speed = 2.0;

  /// Throws Error{"InvalidConfig"}.
  void validate() const;
  /// Container walls as solid slabs followed by the fixed obstacles.
  std::vector<Rect> stiff_rects() const;
  bool operator==(const WorldConfig &) const = default;
};

struct SimState {
  Pose ee_pose;
  Vec3 ee_velocity = Vec3::Zero();
  Pose attractor;
  Vec3 stiffness = Vec3::Constant(600.0);
  Wrench wrench;
  double time = 0.0;
};

/// Rectangle occupied by the grasped carton when the end effector is at ee.
Rect carton_rect(const Vec3 &ee, const WorldConfig &config);

struct Contact {
  Vec2 normal = Vec2::Zero(); // points from the obstacle into the carton
  double penetration = 0.0;
  Vec2 point = Vec2::Zero();
  Vec2 force = Vec2::Zero(); // on the carton
  bool stiff = false;
};

struct ContactForces {
  Vec3 force = Vec3::Zero();
  /// Torque about the end effector: r x f with r from the end effector to
  /// each contact point.
  Vec3 torque = Vec3::Zero();
  std::vector<Contact> contacts;
};

/// Penalty forces on a carton occupying `carton` and moving with `velocity`.
/// For every overlapping obstacle the normal is taken along the axis of least
/// penetration; the force is k * depth - c * (normal velocity), never pulling.
ContactForces contact_forces(const Rect &carton, const Vec2 &velocity, const Vec3 &ee,
                             const WorldConfig &config);
ContactForces contact_forces(const SimState &state, const WorldConfig &config);

/// One semi-implicit Euler step of
///   m a = K (attractor - x) - D v + f_ext,  D_i = 2 sqrt(K_i m)
/// in the x-y plane. The wrench reading is the negated contact wrench used
/// for the step plus Gaussian noise (std sensor_noise_std on forces and
/// sensor_noise_std * 0.01 m on torques) drawn from rng when noise is on.
/// Throws Error{"Instability"} if the speed exceeds config.max_speed.
SimState step(const SimState &state, const WorldConfig &config, std::mt19937_64 *rng = nullptr);

/// ½ vᵀ m v + ½ Δxᵀ K Δx with Δx = attractor - position.
double mechanical_energy(const SimState &state, const WorldConfig &config);

/// Reflection of the world across the x-z plane (y -> -y).
WorldConfig mirror_world(const WorldConfig &config);
Pose mirror_pose(const Pose &pose);
SimState mirror_state(const SimState &state);

/// Fixed end-effector height and orientation used by every preset.
double ee_height();
Quaternion ee_orientation();

struct Scenario {
  std::string name;
  WorldConfig world;
  Pose start;
  /// End-effector pose with the carton seated in its slot.
  Pose goal;
  /// Goal pose the robot is told about; differs from the seat for goal presets.
  Pose goal_estimate;
};

/// Presets: "training", "start_variation_1".."5", "goal_1".."5",
/// "grasp_1".."5". `overrides` is merged into the world config JSON (and may
/// carry "start" / "goal_estimate" positions). Throws Error{"UnknownPreset"}.
Scenario spawn_scenario(const std::string &preset, const json &overrides = json::object());
std::vector<std::string> preset_names();

void to_json(json &j, const Rect &r);
void from_json(const json &j, Rect &r);
void to_json(json &j, const WorldConfig &c);
void from_json(const json &j, WorldConfig &c);
void to_json(json &j, const Scenario &s);

WorldConfig load_world_config(const std::string &path);

} // namespace pressfit::sim
