#include "pressfit/core/types.hpp"

#include <cmath>

namespace pressfit {

double Quaternion::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Quaternion Quaternion::normalized() const {
  const double n = norm();
  if (!std::isfinite(n) || n == 0.0) {
    throw Error("InvalidPose", "quaternion must be finite and non-zero");
  }
  return {w / n, x / n, y / n, z / n};
}

Pose::Pose(Vec3 p, Quaternion q) : position(std::move(p)), orientation(q.normalized()) {}

double pose_distance(const Pose &a, const Pose &b) {
  return (a.position - b.position).norm();
}

Wrench mirror_y(const Wrench &w) {
  Wrench m = w;
  m.force.y() = -w.force.y();
  m.torque.x() = -w.torque.x();
  m.torque.z() = -w.torque.z();
  return m;
}

void Demonstration::validate() const {
  if (samples.empty()) throw Error("InvalidDemonstration", "demonstration has no samples");
  if (!(dt > 0.0)) throw Error("InvalidDemonstration", "demonstration dt must be positive");
}

Feedback Feedback::capped(Vec3 offsets, FeedbackSource source, double cap) {
  return {offsets.cwiseMax(-cap).cwiseMin(cap), source};
}

std::string_view to_string(ContactSide side) {
  return side == ContactSide::left ? "left" : "right";
}

ContactSide contact_side_from_string(std::string_view s) {
  if (s == "left") return ContactSide::left;
  if (s == "right") return ContactSide::right;
  throw Error("MalformedMessage", "unknown contact side '" + std::string(s) + "'");
}

ContactSide flip(ContactSide side) {
  return side == ContactSide::left ? ContactSide::right : ContactSide::left;
}

std::string_view to_string(FeedbackSource source) {
  return source == FeedbackSource::human ? "human" : "recovery";
}

FeedbackSource feedback_source_from_string(std::string_view s) {
  if (s == "human") return FeedbackSource::human;
  if (s == "recovery") return FeedbackSource::recovery;
  throw Error("MalformedMessage", "unknown feedback source '" + std::string(s) + "'");
}

} // namespace pressfit
