#pragma once

#include "pressfit/core/serialization.hpp"
#include "pressfit/core/types.hpp"
#include "pressfit/gp/fit.hpp"
#include "pressfit/gp/gp_model.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

namespace pressfit::policy {

struct PolicyConfig {
  double delta_lim = 0.01;           // m
  double k_max = 2000.0;             // N/m
  double k_min = 200.0;              // floor at low uncertainty, N/m
  double k_uncertain = 600.0;        // floor at prior-level uncertainty, N/m
  double feedback_gain = 0.01;       // m per unit offset
  double feedback_cap = 1.0;
  double sigma_threshold_ratio = 0.5; // of the fitted signal variance
  double stabilization_kappa = 1.0;
  Vec3 demo_stiffness = Vec3::Constant(600.0);
  // Hyperparameter search for the attractor-distance GPs.
  double length_scale_min = 0.03;
  double length_scale_max = 0.3;
  double initial_length_scale = 0.05; // also the value kept on axes the demo never spans
  double noise_ratio_min = 1e-3;      // noise variance relative to the output scale
  double noise_ratio_max = 1e-1;
  int fit_restarts = 4;
  std::uint64_t seed = 0;

  bool operator==(const PolicyConfig &) const = default;
};

/// Six independent scalar GPs over the end-effector position: three for the
/// attractor distance and three for the diagonal stiffness. Hyperparameters
/// are fitted once in train() and frozen afterwards.
struct Policy {
  std::array<gp::GpModel, 3> gp_dx;
  std::array<gp::GpModel, 3> gp_ks;
  double delta_lim = 0.01;
  double alpha = 0.0;
  double sigma_threshold = 0.0;
  double feedback_gain = 0.01;
  PolicyConfig config;

  /// Signal variance of the attractor-distance kernel (the prior Σ).
  double prior_sigma() const { return gp_dx[0].kernel().signal_variance; }
};

struct Query {
  Vec3 dx = Vec3::Zero();
  Vec3 ks = Vec3::Zero();
  /// Largest posterior variance over the attractor-distance axes.
  double sigma = 0.0;
};

struct ControlCommand {
  Vec3 attractor_distance = Vec3::Zero();
  Vec3 stiffness = Vec3::Zero();
};

/// Δx^d(x_{t-1}) = x_t - x_{t-1}: N poses give N-1 samples, each clipped to
/// ±delta_lim, with the configured demonstration stiffness.
/// Throws Error{"TooShort"} for fewer than two poses and
/// Error{"InvalidDemonstration"} if times do not strictly increase.
Demonstration record_demonstration(const std::vector<TimedPose> &trajectory,
                                   const PolicyConfig &config = {});

/// Fits the attractor-distance kernel on the axis with the largest output
/// spread and shares it across the three Δx GPs; the stiffness GPs share the
/// same length scales and noise ratio. Derives alpha and sigma_threshold from
/// the fitted kernel.
Policy train(const Demonstration &demo, const PolicyConfig &config = {});

Query query(const Policy &policy, const Vec3 &x);

/// -alpha * grad Σ at x.
Vec3 stabilization(const Policy &policy, const Vec3 &x);

struct Increment {
  Vec3 dx = Vec3::Zero();
  Vec3 ks = Vec3::Zero();
};

/// Δx_inc = feedback_gain * offsets. On every axis with a nonzero offset
/// K_s_inc = K_s |Δx + Δx_inc| / delta_lim - K_s; other axes keep their stiffness.
Increment interpret_feedback(const Policy &policy, const Feedback &feedback, const Vec3 &dx,
                             const Vec3 &ks);

struct AbsorbOutcome {
  Policy policy;
  bool appended = false;
};

/// Σ(x) >= sigma_threshold appends (x, Δx + Δx_inc, clip(K_s + K_s_inc)) to
/// every GP; otherwise each GP is corrected in place through its selector.
/// A correction with no correlated training data falls back to appending.
AbsorbOutcome absorb_feedback(const Policy &policy, const Vec3 &x, const Feedback &feedback);

/// Δx' = clip(Δx + f_stable, ±delta_lim);
/// K_s' = clip(K_s, [k_floor(Σ), k_max]) with the floor rising linearly from
/// k_min at Σ = 0 to k_uncertain at the prior variance.
ControlCommand modulate(const Policy &policy, const Vec3 &dx, const Vec3 &ks, const Vec3 &f_stable,
                        double sigma);

double stiffness_floor(const Policy &policy, double sigma);

void to_json(json &j, const PolicyConfig &c);
void from_json(const json &j, PolicyConfig &c);
/// {"schema_version": 1, "delta_lim", "alpha", "sigma_threshold",
///  "feedback_gain", "config": {...}, "gp_dx": [3 snapshots], "gp_ks": [3 snapshots]}
json policy_to_json(const Policy &policy);
Policy policy_from_json(const json &j);

/// Demonstration CSV: header "t,x,y,z", one recorded pose per row.
std::vector<TimedPose> read_demo_csv(std::istream &is);
void write_demo_csv(std::ostream &os, const std::vector<TimedPose> &trajectory);

} // namespace pressfit::policy
