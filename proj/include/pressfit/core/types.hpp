#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pressfit {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

/// Base class for every error raised by the library. Carries a stable kind
/// tag so callers (and the teach server) can report it without parsing text.
class Error : public std::runtime_error {
public:
  Error(std::string kind, const std::string &what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string &kind() const noexcept { return kind_; }

private:
  std::string kind_;
};

/// Unit quaternion stored (w, x, y, z).
struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double norm() const;
  /// Returns a unit quaternion; throws on a zero or non-finite input.
  Quaternion normalized() const;
  bool operator==(const Quaternion &) const = default;
};

struct Pose {
  Vec3 position = Vec3::Zero();
  Quaternion orientation{};

  Pose() = default;
  Pose(Vec3 p, Quaternion q = {});

  bool operator==(const Pose &o) const {
    return position == o.position && orientation == o.orientation;
  }
};

/// Euclidean distance between positions. Orientation does not participate.
double pose_distance(const Pose &a, const Pose &b);

struct Wrench {
  Vec3 force = Vec3::Zero();
  Vec3 torque = Vec3::Zero();

  bool finite() const { return force.allFinite() && torque.allFinite(); }
  bool operator==(const Wrench &o) const {
    return force == o.force && torque == o.torque;
  }
};

/// Reflection across the x-z plane: y-force, x-torque and z-torque change sign.
Wrench mirror_y(const Wrench &w);

struct DemoSample {
  Vec3 state = Vec3::Zero();
  Vec3 attractor_distance = Vec3::Zero();
  Vec3 stiffness = Vec3::Zero();

  bool operator==(const DemoSample &o) const {
    return state == o.state && attractor_distance == o.attractor_distance &&
           stiffness == o.stiffness;
  }
};

struct Demonstration {
  std::vector<DemoSample> samples;
  double dt = 0.0;

  /// Throws Error{"InvalidDemonstration"} when empty or dt <= 0.
  void validate() const;
  bool operator==(const Demonstration &) const = default;
};

enum class FeedbackSource { human, recovery };

struct Feedback {
  Vec3 offsets = Vec3::Zero();
  FeedbackSource source = FeedbackSource::human;

  /// Clamps each component to [-cap, cap].
  static Feedback capped(Vec3 offsets, FeedbackSource source, double cap = 1.0);
  bool is_zero() const { return offsets.isZero(0.0); }
  bool operator==(const Feedback &o) const {
    return offsets == o.offsets && source == o.source;
  }
};

enum class ContactSide { left, right };

std::string_view to_string(ContactSide side);
ContactSide contact_side_from_string(std::string_view s);
ContactSide flip(ContactSide side);

std::string_view to_string(FeedbackSource source);
FeedbackSource feedback_source_from_string(std::string_view s);

struct TimedPose {
  double time = 0.0;
  Pose pose;
  bool operator==(const TimedPose &) const = default;
};

struct TimedWrench {
  double time = 0.0;
  Wrench wrench;
  bool operator==(const TimedWrench &) const = default;
};

struct CollisionEvent {
  double time = 0.0;
  ContactSide side = ContactSide::left;
  bool recovered = false;
  bool operator==(const CollisionEvent &) const = default;
};

struct RunRecord {
  std::vector<TimedPose> trajectory;
  std::vector<TimedWrench> wrench_log;
  std::vector<CollisionEvent> collisions;
  bool success = false;
  long ticks = 0;

  bool operator==(const RunRecord &) const = default;
};

} // namespace pressfit
