#pragma once

#include "pressfit/classifier/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace pressfit::testing {

struct GradCheck {
  std::size_t checked = 0;
  double worst_relative = 0.0;
};

inline classifier::ClassifierConfig tiny_classifier_config() {
  classifier::ClassifierConfig c;
  c.blocks = 2;
  c.bottleneck = 2;
  c.kernel_widths = {3, 5};
  c.filters = 2;
  c.seed = 11;
  return c;
}

// Central differences on a sampled subset of weights. The relative error is
// |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline GradCheck gradient_check(const classifier::ClassifierModel &model, const classifier::WrenchWindow &w,
                                ContactSide label, double fraction, double h, std::uint64_t seed,
                                double floor = 1e-6) {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.theta().size());
  model.loss_and_gradient(w, label, grad);
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution pick(fraction);
  classifier::ClassifierModel probe = model;
  GradCheck out;
  Eigen::VectorXd scratch = Eigen::VectorXd::Zero(model.theta().size());
  for (Eigen::Index i = 0; i < model.theta().size(); ++i) {
    if (!pick(rng)) continue;
    Eigen::VectorXd theta = model.theta();
    theta[i] += h;
    probe.set_theta(theta);
    const double up = probe.loss_and_gradient(w, label, scratch);
    theta[i] -= 2.0 * h;
    probe.set_theta(theta);
    const double down = probe.loss_and_gradient(w, label, scratch);
    const double numeric = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(grad[i]), std::abs(numeric), floor});
    out.worst_relative = std::max(out.worst_relative, std::abs(grad[i] - numeric) / scale);
    ++out.checked;
  }
  return out;
}

} // namespace pressfit::testing
