#include "pressfit/sim/world.hpp"

#include <algorithm>
#include <cmath>

namespace pressfit::sim {

namespace {

constexpr double kTorqueLever = 0.01;

// Seat of the grasped carton in the nominal slot.
const Vec2 kSlot(0.80, -0.05);
constexpr double kClearance = 0.001;

Rect neighbor(double side, const WorldConfig &c) {
  const Vec2 center(kSlot.x(), kSlot.y() + side * (2.0 * c.carton.y() + kClearance));
  return Rect::centered(center, c.carton);
}

Vec3 planar(const Vec2 &xy) { return Vec3(xy.x(), xy.y(), ee_height()); }

void add_contact(const Rect &carton, const Rect &obstacle, double stiffness, bool stiff,
                 const Vec2 &velocity, const Vec3 &ee, const WorldConfig &config,
                 ContactForces &out) {
  const Vec2 overlap_min = carton.min.cwiseMax(obstacle.min);
  const Vec2 overlap_max = carton.max.cwiseMin(obstacle.max);
  const Vec2 depth = overlap_max - overlap_min;
  if (depth.x() <= 0.0 || depth.y() <= 0.0) return;

  Contact c;
  c.stiff = stiff;
  c.point = 0.5 * (overlap_min + overlap_max);
  const Vec2 delta = carton.center() - obstacle.center();
  const int axis = depth.x() < depth.y() ? 0 : 1;
  c.normal[axis] = delta[axis] >= 0.0 ? 1.0 : -1.0;
  c.penetration = depth[axis];
  const double magnitude =
      std::max(0.0, stiffness * c.penetration - config.contact_damping * velocity.dot(c.normal));
  c.force = magnitude * c.normal;

  const Vec2 r = c.point - ee.head<2>();
  out.force.head<2>() += c.force;
  out.torque.z() += r.x() * c.force.y() - r.y() * c.force.x();
  out.contacts.push_back(c);
}

} // namespace

Rect Rect::centered(const Vec2 &center, const Vec2 &half) { return {center - half, center + half}; }

void WorldConfig::validate() const {
  const auto fail = [](const std::string &what) { throw Error("InvalidConfig", what); };
  if (!(dt > 0.0 && dt <= 0.01)) fail("dt must lie in (0, 0.01]");
  if (!(ee_mass > 0.0)) fail("ee_mass must be positive");
  if (!(carton.minCoeff() > 0.0)) fail("carton half-extents must be positive");
  if (!(carton_stiffness > 0.0 && carton_stiffness < wall_stiffness)) {
    fail("carton_stiffness must be positive and below wall_stiffness");
  }
  if (!(contact_damping >= 0.0)) fail("contact_damping must be non-negative");
  if (!(sensor_noise_std >= 0.0)) fail("sensor_noise_std must be non-negative");
  if (!(max_speed > 0.0)) fail("max_speed must be positive");
  if (!(wall_thickness > 0.0)) fail("wall_thickness must be positive");
  if (!(container.max.array() > container.min.array()).all()) fail("container is empty");
}

std::vector<Rect> WorldConfig::stiff_rects() const {
  const double t = wall_thickness;
  const Vec2 lo = container.min, hi = container.max;
  std::vector<Rect> out{
      Rect{Vec2(lo.x() - t, lo.y() - t), Vec2(lo.x(), hi.y() + t)}, // rear
      Rect{Vec2(hi.x(), lo.y() - t), Vec2(hi.x() + t, hi.y() + t)}, // front (press stop)
      Rect{Vec2(lo.x(), lo.y() - t), Vec2(hi.x(), lo.y())},         // -y side
      Rect{Vec2(lo.x(), hi.y()), Vec2(hi.x(), hi.y() + t)},         // +y side
  };
  out.insert(out.end(), obstacles.begin(), obstacles.end());
  return out;
}

Rect carton_rect(const Vec3 &ee, const WorldConfig &config) {
  return Rect::centered(ee.head<2>() + config.grasp_offset, config.carton);
}

ContactForces contact_forces(const Rect &carton, const Vec2 &velocity, const Vec3 &ee,
                             const WorldConfig &config) {
  ContactForces out;
  for (const Rect &r : config.stiff_rects()) {
    add_contact(carton, r, config.wall_stiffness, true, velocity, ee, config, out);
  }
  for (const Rect &r : config.placed_cartons) {
    add_contact(carton, r, config.carton_stiffness, false, velocity, ee, config, out);
  }
  return out;
}

ContactForces contact_forces(const SimState &state, const WorldConfig &config) {
  const Vec3 &ee = state.ee_pose.position;
  return contact_forces(carton_rect(ee, config), state.ee_velocity.head<2>(), ee, config);
}

SimState step(const SimState &state, const WorldConfig &config, std::mt19937_64 *rng) {
  const ContactForces cf = contact_forces(state, config);
  const double m = config.ee_mass;
  const double dt = config.dt;

  SimState next = state;
  Vec3 x = state.ee_pose.position;
  Vec3 v = state.ee_velocity;
  for (int i = 0; i < 2; ++i) {
    const double k = state.stiffness[i];
    const double d = 2.0 * std::sqrt(k * m);
    const double a = (k * (state.attractor.position[i] - x[i]) - d * v[i] + cf.force[i]) / m;
    v[i] += a * dt;
  }
  v.z() = 0.0;
  if (!v.allFinite() || v.norm() > config.max_speed) {
    throw Error("Instability", "end-effector speed exceeded max_speed; check dt and stiffness");
  }
  x.head<2>() += v.head<2>() * dt;

  next.ee_pose.position = x;
  next.ee_velocity = v;
  next.time = state.time + dt;
  next.wrench = Wrench{-cf.force, -cf.torque};
  if (config.sensor_noise_std > 0.0) {
    if (rng == nullptr) throw Error("InvalidArgument", "sensor noise requires a generator");
    std::normal_distribution<double> force_noise(0.0, config.sensor_noise_std);
    std::normal_distribution<double> torque_noise(0.0, config.sensor_noise_std * kTorqueLever);
    for (int i = 0; i < 3; ++i) next.wrench.force[i] += force_noise(*rng);
    for (int i = 0; i < 3; ++i) next.wrench.torque[i] += torque_noise(*rng);
  }
  return next;
}

double mechanical_energy(const SimState &state, const WorldConfig &config) {
  const Vec3 dx = state.attractor.position - state.ee_pose.position;
  return 0.5 * config.ee_mass * state.ee_velocity.squaredNorm() +
         0.5 * dx.dot(state.stiffness.cwiseProduct(dx));
}

namespace {

Rect mirror_rect(const Rect &r) {
  return {Vec2(r.min.x(), -r.max.y()), Vec2(r.max.x(), -r.min.y())};
}

} // namespace

WorldConfig mirror_world(const WorldConfig &config) {
  WorldConfig m = config;
  m.container = mirror_rect(config.container);
  for (auto &r : m.placed_cartons) r = mirror_rect(r);
  for (auto &r : m.obstacles) r = mirror_rect(r);
  m.grasp_offset.y() = -config.grasp_offset.y();
  return m;
}

Pose mirror_pose(const Pose &pose) {
  Pose m = pose;
  m.position.y() = -pose.position.y();
  return m;
}

SimState mirror_state(const SimState &state) {
  SimState m = state;
  m.ee_pose = mirror_pose(state.ee_pose);
  m.attractor = mirror_pose(state.attractor);
  m.ee_velocity.y() = -state.ee_velocity.y();
  m.wrench = mirror_y(state.wrench);
  return m;
}

double ee_height() { return 0.43; }

Quaternion ee_orientation() { return Quaternion{0.58, -0.50, 0.48, -0.40}.normalized(); }

std::vector<std::string> preset_names() {
  std::vector<std::string> names{"training"};
  for (const char *family : {"start_variation_", "goal_", "grasp_"}) {
    for (int i = 1; i <= 5; ++i) names.push_back(family + std::to_string(i));
  }
  return names;
}

Scenario spawn_scenario(const std::string &preset, const json &overrides) {
  Scenario s;
  s.name = preset;
  WorldConfig &w = s.world;
  w.placed_cartons = {neighbor(-1.0, w), neighbor(1.0, w)};
  Vec2 start(0.74, -0.05);
  Vec2 estimate = kSlot;

  const auto family = [&](const std::string &prefix) -> int {
    if (preset.rfind(prefix, 0) != 0 || preset.size() != prefix.size() + 1) return 0;
    const int i = preset.back() - '0';
    return i >= 1 && i <= 5 ? i : 0;
  };

  if (preset == "training") {
    // Nominal slot, nominal start, demonstration grasp.
  } else if (const int i = family("start_variation_")) {
    // Lateral offsets are a third of the reference offsets; height offsets map to +y.
    const Vec2 starts[] = {{0.74, -0.05}, {0.74, -0.02}, {0.74, -0.03}, {0.74, -0.08}, {0.59, -0.05}};
    start = starts[i - 1];
  } else if (const int i = family("goal_")) {
    switch (i) {
    case 2:
      estimate.y() += 0.001;
      break;
    case 3:
      w.placed_cartons = {neighbor(-1.0, w)};
      estimate.y() += 0.002;
      break;
    case 4:
      estimate.y() += 0.004;
      break;
    case 5:
      w.placed_cartons = {neighbor(1.0, w)};
      w.obstacles = {neighbor(-1.0, w)};
      estimate.y() -= 0.006;
      break;
    default:
      break;
    }
  } else if (const int i = family("grasp_")) {
    const double offsets[] = {-0.006, -0.003, 0.003, 0.0, 0.006};
    w.grasp_offset = Vec2(0.0, offsets[i - 1]);
  } else {
    throw Error("UnknownPreset", "unknown scenario preset '" + preset + "'");
  }

  if (!overrides.is_null() && !overrides.empty()) {
    json merged = w;
    for (const auto &[key, value] : overrides.items()) {
      if (key == "start") {
        start = vec2_from_json(value);
      } else if (key == "goal_estimate") {
        estimate = vec2_from_json(value);
      } else {
        merged[key] = value;
      }
    }
    w = merged.get<WorldConfig>();
  }
  w.validate();

  s.start = Pose(planar(start), ee_orientation());
  s.goal = Pose(planar(kSlot - w.grasp_offset), ee_orientation());
  // The robot assumes the demonstration grasp, so its estimate ignores grasp_offset.
  s.goal_estimate = Pose(planar(estimate), ee_orientation());
  return s;
}

void to_json(json &j, const Rect &r) { j = json{{"min", vec_to_json(r.min)}, {"max", vec_to_json(r.max)}}; }

void from_json(const json &j, Rect &r) {
  r.min = vec2_from_json(j.at("min"));
  r.max = vec2_from_json(j.at("max"));
}

void to_json(json &j, const WorldConfig &c) {
  j = json{{"container", c.container},
           {"wall_thickness", c.wall_thickness},
           {"placed_cartons", c.placed_cartons},
           {"obstacles", c.obstacles},
           {"carton", vec_to_json(c.carton)},
           {"grasp_offset", vec_to_json(c.grasp_offset)},
           {"wall_stiffness", c.wall_stiffness},
           {"carton_stiffness", c.carton_stiffness},
           {"contact_damping", c.contact_damping},
           {"ee_mass", c.ee_mass},
           {"dt", c.dt},
           {"sensor_noise_std", c.sensor_noise_std},
           {"max_speed", c.max_speed}};
}

void from_json(const json &j, WorldConfig &c) {
  c = WorldConfig{};
  const auto read = [&](const char *key, double &field) {
    if (j.contains(key)) field = j.at(key).get<double>();
  };
  if (j.contains("container")) c.container = j.at("container").get<Rect>();
  if (j.contains("placed_cartons")) c.placed_cartons = j.at("placed_cartons").get<std::vector<Rect>>();
  if (j.contains("obstacles")) c.obstacles = j.at("obstacles").get<std::vector<Rect>>();
  if (j.contains("carton")) c.carton = vec2_from_json(j.at("carton"));
  if (j.contains("grasp_offset")) c.grasp_offset = vec2_from_json(j.at("grasp_offset"));
  read("wall_thickness", c.wall_thickness);
  read("wall_stiffness", c.wall_stiffness);
  read("carton_stiffness", c.carton_stiffness);
  read("contact_damping", c.contact_damping);
  read("ee_mass", c.ee_mass);
  read("dt", c.dt);
  read("sensor_noise_std", c.sensor_noise_std);
  read("max_speed", c.max_speed);
}

void to_json(json &j, const Scenario &s) {
  j = json{{"name", s.name}, {"world", s.world}, {"start", s.start}, {"goal", s.goal},
           {"goal_estimate", s.goal_estimate}};
}

WorldConfig load_world_config(const std::string &path) {
  WorldConfig c = read_json_file(path).get<WorldConfig>();
  c.validate();
  return c;
}

} // namespace pressfit::sim
