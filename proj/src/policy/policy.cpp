#include "pressfit/policy/policy.hpp"

#include <algorithm>
#include <cmath>

namespace pressfit::policy {

namespace {

constexpr int kSchemaVersion = 1;

Vec3 clip(const Vec3 &v, double lo, double hi) { return v.cwiseMax(lo).cwiseMin(hi); }

gp::Kernel fit_dx_kernel(const Eigen::Matrix3Xd &inputs, const Eigen::Matrix3Xd &outputs,
                         const PolicyConfig &config) {
  Eigen::Index axis = 0;
  const Eigen::Vector3d spread = (outputs.colwise() - outputs.rowwise().mean()).rowwise().squaredNorm();
  spread.maxCoeff(&axis);
  const Eigen::VectorXd y = outputs.row(axis).transpose();
  const double scale = std::max(y.squaredNorm() / static_cast<double>(y.size()), 1e-12);

  gp::Kernel start;
  start.signal_variance = scale;
  start.length_scales = Vec3::Constant(config.initial_length_scale);
  start.noise_variance = scale * std::sqrt(config.noise_ratio_min * config.noise_ratio_max);
  if (inputs.cols() < 2) return start;

  gp::FitOptions options;
  options.signal_variance_min = 1e-2 * scale;
  options.signal_variance_max = 1e2 * scale;
  options.length_scale_min = config.length_scale_min;
  options.length_scale_max = config.length_scale_max;
  options.noise_variance_min = config.noise_ratio_min * scale;
  options.noise_variance_max = config.noise_ratio_max * scale;
  options.restarts = config.fit_restarts;
  options.seed = config.seed;
  return gp::fit_hyperparameters(gp::GpModel(start, inputs, y), options);
}

} // namespace

Demonstration record_demonstration(const std::vector<TimedPose> &trajectory, const PolicyConfig &config) {
  if (trajectory.size() < 2) throw Error("TooShort", "a demonstration needs at least two poses");
  Demonstration demo;
  for (std::size_t i = 1; i < trajectory.size(); ++i) {
    if (!(trajectory[i].time > trajectory[i - 1].time)) {
      throw Error("InvalidDemonstration", "demonstration times must strictly increase");
    }
    const Vec3 &prev = trajectory[i - 1].pose.position;
    const Vec3 step = trajectory[i].pose.position - prev;
    demo.samples.push_back({prev, clip(step, -config.delta_lim, config.delta_lim), config.demo_stiffness});
  }
  demo.dt = (trajectory.back().time - trajectory.front().time) / static_cast<double>(trajectory.size() - 1);
  return demo;
}

Policy train(const Demonstration &demo, const PolicyConfig &config) {
  demo.validate();
  const Eigen::Index n = static_cast<Eigen::Index>(demo.samples.size());
  Eigen::Matrix3Xd inputs(3, n), dx(3, n), ks(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    inputs.col(i) = demo.samples[i].state;
    dx.col(i) = demo.samples[i].attractor_distance;
    ks.col(i) = demo.samples[i].stiffness;
  }

  const gp::Kernel dx_kernel = fit_dx_kernel(inputs, dx, config);
  gp::Kernel ks_kernel = dx_kernel;
  ks_kernel.signal_variance = std::max(ks.squaredNorm() / static_cast<double>(ks.size()), 1e-12);
  ks_kernel.noise_variance = ks_kernel.signal_variance * dx_kernel.noise_variance / dx_kernel.signal_variance;

  Policy p;
  p.config = config;
  p.delta_lim = config.delta_lim;
  p.feedback_gain = config.feedback_gain;
  for (int d = 0; d < 3; ++d) {
    p.gp_dx[d] = gp::GpModel(dx_kernel, inputs, dx.row(d).transpose());
    p.gp_ks[d] = gp::GpModel(ks_kernel, inputs, ks.row(d).transpose());
  }
  const double lateral = dx_kernel.length_scales[1];
  p.alpha = config.stabilization_kappa * lateral * lateral / (2.0 * dx_kernel.signal_variance);
  p.sigma_threshold = config.sigma_threshold_ratio * dx_kernel.signal_variance;
  return p;
}

Query query(const Policy &policy, const Vec3 &x) {
  Query q;
  for (int d = 0; d < 3; ++d) {
    const gp::Prediction dx = policy.gp_dx[d].posterior(x);
    q.dx[d] = dx.mean;
    q.sigma = std::max(q.sigma, dx.variance);
    q.ks[d] = policy.gp_ks[d].posterior(x).mean;
  }
  return q;
}

Vec3 stabilization(const Policy &policy, const Vec3 &x) {
  int gate = 0;
  double best = -1.0;
  for (int d = 0; d < 3; ++d) {
    const double v = policy.gp_dx[d].posterior(x).variance;
    if (v > best) {
      best = v;
      gate = d;
    }
  }
  return -policy.alpha * policy.gp_dx[gate].variance_gradient(x);
}

Increment interpret_feedback(const Policy &policy, const Feedback &feedback, const Vec3 &dx,
                             const Vec3 &ks) {
  Increment inc;
  inc.dx = policy.feedback_gain * feedback.offsets;
  for (int d = 0; d < 3; ++d) {
    if (feedback.offsets[d] == 0.0) continue;
    inc.ks[d] = ks[d] * std::abs(dx[d] + inc.dx[d]) / policy.delta_lim - ks[d];
  }
  return inc;
}

AbsorbOutcome absorb_feedback(const Policy &policy, const Vec3 &x, const Feedback &feedback) {
  AbsorbOutcome out{policy, false};
  if (feedback.is_zero()) return out;

  const Query q = query(policy, x);
  const Increment inc = interpret_feedback(policy, feedback, q.dx, q.ks);

  const auto append_all = [&] {
    const Vec3 ks = clip(q.ks + inc.ks, 0.0, policy.config.k_max);
    for (int d = 0; d < 3; ++d) {
      out.policy.gp_dx[d] = policy.gp_dx[d].append(x, q.dx[d] + inc.dx[d]);
      out.policy.gp_ks[d] = policy.gp_ks[d].append(x, ks[d]);
    }
    out.appended = true;
  };

  if (q.sigma >= policy.sigma_threshold) {
    append_all();
    return out;
  }
  for (int d = 0; d < 3; ++d) {
    const gp::CorrectionOutcome cdx = policy.gp_dx[d].apply_correction(x, inc.dx[d]);
    const gp::CorrectionOutcome cks = policy.gp_ks[d].apply_correction(x, inc.ks[d]);
    if (!cdx.applied || !cks.applied) {
      out.policy = policy;
      append_all();
      return out;
    }
    out.policy.gp_dx[d] = cdx.model;
    out.policy.gp_ks[d] = cks.model;
  }
  return out;
}

double stiffness_floor(const Policy &policy, double sigma) {
  const PolicyConfig &c = policy.config;
  const double ratio = std::clamp(sigma / policy.prior_sigma(), 0.0, 1.0);
  return c.k_min + (c.k_uncertain - c.k_min) * ratio;
}

ControlCommand modulate(const Policy &policy, const Vec3 &dx, const Vec3 &ks, const Vec3 &f_stable,
                        double sigma) {
  ControlCommand cmd;
  cmd.attractor_distance = clip(dx + f_stable, -policy.delta_lim, policy.delta_lim);
  cmd.stiffness = clip(ks, stiffness_floor(policy, sigma), policy.config.k_max);
  return cmd;
}

void to_json(json &j, const PolicyConfig &c) {
  j = json{{"delta_lim", c.delta_lim},
           {"k_max", c.k_max},
           {"k_min", c.k_min},
           {"k_uncertain", c.k_uncertain},
           {"feedback_gain", c.feedback_gain},
           {"feedback_cap", c.feedback_cap},
           {"sigma_threshold_ratio", c.sigma_threshold_ratio},
           {"stabilization_kappa", c.stabilization_kappa},
           {"demo_stiffness", vec_to_json(c.demo_stiffness)},
           {"length_scale_min", c.length_scale_min},
           {"length_scale_max", c.length_scale_max},
           {"initial_length_scale", c.initial_length_scale},
           {"noise_ratio_min", c.noise_ratio_min},
           {"noise_ratio_max", c.noise_ratio_max},
           {"fit_restarts", c.fit_restarts},
           {"seed", c.seed}};
}

void from_json(const json &j, PolicyConfig &c) {
  c = PolicyConfig{};
  const auto read = [&](const char *key, auto &field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  read("delta_lim", c.delta_lim);
  read("k_max", c.k_max);
  read("k_min", c.k_min);
  read("k_uncertain", c.k_uncertain);
  read("feedback_gain", c.feedback_gain);
  read("feedback_cap", c.feedback_cap);
  read("sigma_threshold_ratio", c.sigma_threshold_ratio);
  read("stabilization_kappa", c.stabilization_kappa);
  if (j.contains("demo_stiffness")) c.demo_stiffness = vec3_from_json(j.at("demo_stiffness"));
  read("length_scale_min", c.length_scale_min);
  read("length_scale_max", c.length_scale_max);
  read("initial_length_scale", c.initial_length_scale);
  read("noise_ratio_min", c.noise_ratio_min);
  read("noise_ratio_max", c.noise_ratio_max);
  read("fit_restarts", c.fit_restarts);
  read("seed", c.seed);
}

json policy_to_json(const Policy &policy) {
  json dx = json::array(), ks = json::array();
  for (int d = 0; d < 3; ++d) {
    dx.push_back(gp::to_json(policy.gp_dx[d]));
    ks.push_back(gp::to_json(policy.gp_ks[d]));
  }
  return json{{"schema_version", kSchemaVersion},
              {"delta_lim", policy.delta_lim},
              {"alpha", policy.alpha},
              {"sigma_threshold", policy.sigma_threshold},
              {"feedback_gain", policy.feedback_gain},
              {"config", policy.config},
              {"gp_dx", dx},
              {"gp_ks", ks}};
}

Policy policy_from_json(const json &j) {
  if (j.value("schema_version", 0) != kSchemaVersion) {
    throw Error("MalformedFile", "unsupported policy schema version");
  }
  Policy p;
  p.delta_lim = j.at("delta_lim").get<double>();
  p.alpha = j.at("alpha").get<double>();
  p.sigma_threshold = j.at("sigma_threshold").get<double>();
  p.feedback_gain = j.at("feedback_gain").get<double>();
  p.config = j.at("config").get<PolicyConfig>();
  if (j.at("gp_dx").size() != 3 || j.at("gp_ks").size() != 3) {
    throw Error("MalformedFile", "policy needs three GPs per group");
  }
  for (int d = 0; d < 3; ++d) {
    p.gp_dx[d] = gp::model_from_json(j.at("gp_dx").at(d));
    p.gp_ks[d] = gp::model_from_json(j.at("gp_ks").at(d));
  }
  return p;
}

std::vector<TimedPose> read_demo_csv(std::istream &is) { return read_trajectory_csv(is); }

void write_demo_csv(std::ostream &os, const std::vector<TimedPose> &trajectory) {
  write_trajectory_csv(os, trajectory);
}

} // namespace pressfit::policy
