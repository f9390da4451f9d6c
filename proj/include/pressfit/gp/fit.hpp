#pragma once

#include "pressfit/gp/gp_model.hpp"
#include "pressfit/gp/lbfgs.hpp"

#include <cstdint>

namespace pressfit::gp {

/// Box bounds and restart schedule for marginal-likelihood fitting. All
/// bounds are on the parameters themselves (not their logs).
struct FitOptions {
  double signal_variance_min = 1e-6;
  double signal_variance_max = 1e3;
  double length_scale_min = 1e-3;
  double length_scale_max = 1e2;
  double noise_variance_min = 1e-8;
  double noise_variance_max = 1e1;
  int restarts = 4;
  std::uint64_t seed = 0;
  LbfgsOptions lbfgs{};
};

/// Maximizes the log marginal likelihood of the model's data over
/// log(signal variance), log(length scales) and log(noise variance).
///
/// Restart 0 begins at the model's current kernel; later restarts are drawn
/// uniformly in log space inside the bounds from a generator seeded with
/// `options.seed`. The returned kernel never has a lower likelihood than the
/// starting kernel.
///
/// Input dimensions along which every training input is identical carry no
/// information about their length scale; those scales are held at the
/// starting kernel's value.
///
/// When every output is identical the optimizer is skipped: the signal
/// variance is set to the mean squared output clamped to the bounds and the
/// starting length scales and noise are kept.
///
/// Throws Error{"TooFewPoints"} for fewer than two training points.
Kernel fit_hyperparameters(const GpModel &model, const FitOptions &options = {});

} // namespace pressfit::gp
