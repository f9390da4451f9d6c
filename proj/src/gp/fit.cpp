#include "pressfit/gp/fit.hpp"

#include <cmath>
#include <random>

namespace pressfit::gp {

namespace {

using Params = Eigen::Matrix<double, 5, 1>;

Params to_log_params(const Kernel &k) {
  Params p;
  p << std::log(k.signal_variance), k.length_scales.array().log().matrix(), std::log(k.noise_variance);
  return p;
}

Kernel from_log_params(const Params &p) {
  Kernel k;
  k.signal_variance = std::exp(p[0]);
  k.length_scales = p.segment<3>(1).array().exp().matrix();
  k.noise_variance = std::exp(p[4]);
  return k;
}

} // namespace

Kernel fit_hyperparameters(const GpModel &model, const FitOptions &options) {
  if (model.size() < 2) throw Error("TooFewPoints", "hyperparameter fitting needs at least two points");

  const Kernel start = model.kernel();
  const Eigen::VectorXd &y = model.outputs();
  const Eigen::Matrix3Xd &x = model.inputs();

  if ((y.array() == y[0]).all()) {
    Kernel k = start;
    k.signal_variance = std::clamp(y.squaredNorm() / static_cast<double>(y.size()),
                                   options.signal_variance_min, options.signal_variance_max);
    return k;
  }

  Params lo, hi;
  lo << std::log(options.signal_variance_min), Eigen::Vector3d::Constant(std::log(options.length_scale_min)),
      std::log(options.noise_variance_min);
  hi << std::log(options.signal_variance_max), Eigen::Vector3d::Constant(std::log(options.length_scale_max)),
      std::log(options.noise_variance_max);

  const Params start_params = to_log_params(start);
  // Unidentifiable length scales are pinned by collapsing their box.
  for (int d = 0; d < 3; ++d) {
    if ((x.row(d).array() == x(d, 0)).all()) lo[1 + d] = hi[1 + d] = start_params[1 + d];
  }

  const Objective negative_lml = [&](const Eigen::VectorXd &p, Eigen::VectorXd &grad) {
    Params g;
    const double v = log_marginal_likelihood(from_log_params(p), x, y, &g);
    grad = -g;
    return -v;
  };

  const double start_lml = log_marginal_likelihood(start, x, y);
  Kernel best = start;
  double best_lml = std::isfinite(start_lml) ? start_lml : -std::numeric_limits<double>::infinity();

  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int r = 0; r < std::max(1, options.restarts); ++r) {
    Eigen::VectorXd p0 = start_params;
    if (r > 0) {
      for (int i = 0; i < 5; ++i) p0[i] = lo[i] + unit(rng) * (hi[i] - lo[i]);
    }
    const LbfgsResult res = lbfgs_minimize(negative_lml, p0, lo, hi, options.lbfgs);
    if (!std::isfinite(res.value)) continue;
    const Kernel k = from_log_params(res.x);
    const double lml = -res.value;
    if (lml > best_lml) {
      best_lml = lml;
      best = k;
    }
  }
  return best;
}

} // namespace pressfit::gp
