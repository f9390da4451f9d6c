#pragma once

// JSON schema (all SI units):
//   Vec3          [x, y, z]
//   Pose          {"position": [x, y, z], "orientation": [w, x, y, z]}
//   Wrench        {"force": [fx, fy, fz], "torque": [tx, ty, tz]}
//   DemoSample    {"state": Vec3, "attractor_distance": Vec3, "stiffness": Vec3}
//   Demonstration {"dt": s, "samples": [DemoSample...]}
//   Feedback      {"offsets": Vec3, "source": "human" | "recovery"}
//   RunRecord     {"success": bool, "ticks": n,
//                  "trajectory": [{"t": s, "pose": Pose}...],
//                  "collisions": [{"t": s, "side": "left"|"right", "recovered": bool}...],
//                  "wrench_log": [{"t": s, "wrench": Wrench}...]}
// Doubles are written with round-trip precision so parse(dump(x)) == x bit for bit.

#include "pressfit/core/types.hpp"

#include <json.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace pressfit {

using json = nlohmann::json;

json vec_to_json(const Eigen::VectorXd &v);
Vec3 vec3_from_json(const json &j);
Vec2 vec2_from_json(const json &j);

void to_json(json &j, const Quaternion &q);
void from_json(const json &j, Quaternion &q);
void to_json(json &j, const Pose &p);
void from_json(const json &j, Pose &p);
void to_json(json &j, const Wrench &w);
void from_json(const json &j, Wrench &w);
void to_json(json &j, const DemoSample &s);
void from_json(const json &j, DemoSample &s);
void to_json(json &j, const Demonstration &d);
void from_json(const json &j, Demonstration &d);
void to_json(json &j, const Feedback &f);
void from_json(const json &j, Feedback &f);
void to_json(json &j, const RunRecord &r);
void from_json(const json &j, RunRecord &r);

/// CSV with header "t,fx,fy,fz,tx,ty,tz".
void write_wrench_csv(std::ostream &os, const std::vector<TimedWrench> &log);
std::vector<TimedWrench> read_wrench_csv(std::istream &is);

/// CSV with header "t,x,y,z".
void write_trajectory_csv(std::ostream &os, const std::vector<TimedPose> &traj);
std::vector<TimedPose> read_trajectory_csv(std::istream &is);

json read_json_file(const std::string &path);
void write_json_file(const std::string &path, const json &j);
void write_text_file(const std::string &path, const std::string &text);

/// Formats a double with round-trip precision.
std::string format_double(double v);

} // namespace pressfit
