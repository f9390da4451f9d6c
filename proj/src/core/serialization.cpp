#include "pressfit/core/serialization.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace pressfit {

namespace {

Eigen::VectorXd vec_from_json(const json &j, Eigen::Index n) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n) {
    throw Error("MalformedMessage", "expected an array of " + std::to_string(n) + " numbers");
  }
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = j.at(i).get<double>();
  return v;
}

std::vector<double> split_doubles(const std::string &line) {
  std::vector<double> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(std::stod(cell));
  return out;
}

} // namespace

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

json vec_to_json(const Eigen::VectorXd &v) {
  json j = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

Vec3 vec3_from_json(const json &j) { return vec_from_json(j, 3); }
Vec2 vec2_from_json(const json &j) { return vec_from_json(j, 2); }

void to_json(json &j, const Quaternion &q) { j = json::array({q.w, q.x, q.y, q.z}); }

void from_json(const json &j, Quaternion &q) {
  const Eigen::VectorXd v = vec_from_json(j, 4);
  q = Quaternion{v[0], v[1], v[2], v[3]};
}

void to_json(json &j, const Pose &p) {
  j = json{{"position", vec_to_json(p.position)}, {"orientation", p.orientation}};
}

void from_json(const json &j, Pose &p) {
  p.position = vec3_from_json(j.at("position"));
  p.orientation = j.at("orientation").get<Quaternion>();
}

void to_json(json &j, const Wrench &w) {
  j = json{{"force", vec_to_json(w.force)}, {"torque", vec_to_json(w.torque)}};
}

void from_json(const json &j, Wrench &w) {
  w.force = vec3_from_json(j.at("force"));
  w.torque = vec3_from_json(j.at("torque"));
}

void to_json(json &j, const DemoSample &s) {
  j = json{{"state", vec_to_json(s.state)},
           {"attractor_distance", vec_to_json(s.attractor_distance)},
           {"stiffness", vec_to_json(s.stiffness)}};
}

void from_json(const json &j, DemoSample &s) {
  s.state = vec3_from_json(j.at("state"));
  s.attractor_distance = vec3_from_json(j.at("attractor_distance"));
  s.stiffness = vec3_from_json(j.at("stiffness"));
}

void to_json(json &j, const Demonstration &d) {
  j = json{{"dt", d.dt}, {"samples", d.samples}};
}

void from_json(const json &j, Demonstration &d) {
  d.dt = j.at("dt").get<double>();
  d.samples = j.at("samples").get<std::vector<DemoSample>>();
}

void to_json(json &j, const Feedback &f) {
  j = json{{"offsets", vec_to_json(f.offsets)}, {"source", std::string(to_string(f.source))}};
}

void from_json(const json &j, Feedback &f) {
  f.offsets = vec3_from_json(j.at("offsets"));
  f.source = feedback_source_from_string(j.at("source").get<std::string>());
}

void to_json(json &j, const RunRecord &r) {
  json traj = json::array();
  for (const auto &tp : r.trajectory) traj.push_back({{"t", tp.time}, {"pose", tp.pose}});
  json wl = json::array();
  for (const auto &tw : r.wrench_log) wl.push_back({{"t", tw.time}, {"wrench", tw.wrench}});
  json col = json::array();
  for (const auto &c : r.collisions) {
    col.push_back({{"t", c.time}, {"side", std::string(to_string(c.side))}, {"recovered", c.recovered}});
  }
  j = json{{"success", r.success},
           {"ticks", r.ticks},
           {"trajectory", traj},
           {"collisions", col},
           {"wrench_log", wl}};
}

void from_json(const json &j, RunRecord &r) {
  r = RunRecord{};
  r.success = j.at("success").get<bool>();
  r.ticks = j.at("ticks").get<long>();
  for (const auto &e : j.at("trajectory")) {
    r.trajectory.push_back({e.at("t").get<double>(), e.at("pose").get<Pose>()});
  }
  for (const auto &e : j.at("collisions")) {
    r.collisions.push_back({e.at("t").get<double>(),
                            contact_side_from_string(e.at("side").get<std::string>()),
                            e.at("recovered").get<bool>()});
  }
  if (j.contains("wrench_log")) {
    for (const auto &e : j.at("wrench_log")) {
      r.wrench_log.push_back({e.at("t").get<double>(), e.at("wrench").get<Wrench>()});
    }
  }
}

void write_wrench_csv(std::ostream &os, const std::vector<TimedWrench> &log) {
  os << "t,fx,fy,fz,tx,ty,tz\n";
  for (const auto &tw : log) {
    os << format_double(tw.time);
    for (int i = 0; i < 3; ++i) os << ',' << format_double(tw.wrench.force[i]);
    for (int i = 0; i < 3; ++i) os << ',' << format_double(tw.wrench.torque[i]);
    os << '\n';
  }
}

std::vector<TimedWrench> read_wrench_csv(std::istream &is) {
  std::vector<TimedWrench> out;
  std::string line;
  if (!std::getline(is, line) || line.rfind("t,fx", 0) != 0) {
    throw Error("MalformedFile", "wrench CSV must start with header t,fx,fy,fz,tx,ty,tz");
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto v = split_doubles(line);
    if (v.size() != 7) throw Error("MalformedFile", "wrench CSV row needs 7 columns");
    out.push_back({v[0], Wrench{Vec3(v[1], v[2], v[3]), Vec3(v[4], v[5], v[6])}});
  }
  return out;
}

void write_trajectory_csv(std::ostream &os, const std::vector<TimedPose> &traj) {
  os << "t,x,y,z\n";
  for (const auto &tp : traj) {
    os << format_double(tp.time);
    for (int i = 0; i < 3; ++i) os << ',' << format_double(tp.pose.position[i]);
    os << '\n';
  }
}

std::vector<TimedPose> read_trajectory_csv(std::istream &is) {
  std::vector<TimedPose> out;
  std::string line;
  if (!std::getline(is, line) || line.rfind("t,x", 0) != 0) {
    throw Error("MalformedFile", "trajectory CSV must start with header t,x,y,z");
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto v = split_doubles(line);
    if (v.size() != 4) throw Error("MalformedFile", "trajectory CSV row needs 4 columns");
    out.push_back({v[0], Pose(Vec3(v[1], v[2], v[3]))});
  }
  return out;
}

json read_json_file(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw Error("MissingArtifacts", "cannot open " + path);
  return json::parse(in);
}

void write_json_file(const std::string &path, const json &j) {
  write_text_file(path, j.dump(2) + "\n");
}

void write_text_file(const std::string &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("IoError", "cannot write " + path);
  out << text;
}

} // namespace pressfit
