#include "pressfit/gp/lbfgs.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace pressfit::gp {

namespace {

Eigen::VectorXd project(const Eigen::VectorXd &x, const Eigen::VectorXd &lo, const Eigen::VectorXd &hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

// Variables pinned at a bound with the gradient pushing outward are inactive.
Eigen::VectorXd free_mask(const Eigen::VectorXd &x, const Eigen::VectorXd &g, const Eigen::VectorXd &lo,
                          const Eigen::VectorXd &hi) {
  Eigen::VectorXd m = Eigen::VectorXd::Ones(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if ((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)) m[i] = 0.0;
  }
  return m;
}

} // namespace

LbfgsResult lbfgs_minimize(const Objective &f, Eigen::VectorXd x0, const Eigen::VectorXd &lower,
                           const Eigen::VectorXd &upper, const LbfgsOptions &options) {
  const auto eval = [&](const Eigen::VectorXd &x, Eigen::VectorXd &g) {
    g.setZero(x.size());
    const double v = f(x, g);
    if (!std::isfinite(v) || !g.allFinite()) {
      g.setZero();
      return std::numeric_limits<double>::infinity();
    }
    return v;
  };

  Eigen::VectorXd x = project(x0, lower, upper);
  Eigen::VectorXd g(x.size());
  double fx = eval(x, g);

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  LbfgsResult result{x, fx, 0};
  if (!std::isfinite(fx)) return result;

  for (int it = 0; it < options.max_iterations; ++it) {
    result.iterations = it + 1;
    const Eigen::VectorXd mask = free_mask(x, g, lower, upper);
    const Eigen::VectorXd gf = g.cwiseProduct(mask);
    if (gf.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) break;

    // Two-loop recursion on the free subspace.
    Eigen::VectorXd q = gf;
    std::vector<double> alphas(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      const double rho = 1.0 / y_hist[i].dot(s_hist[i]);
      alphas[i] = rho * s_hist[i].dot(q);
      q -= alphas[i] * y_hist[i].cwiseProduct(mask);
    }
    double gamma = 1.0;
    if (!s_hist.empty()) gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    Eigen::VectorXd r = gamma * q;
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double rho = 1.0 / y_hist[i].dot(s_hist[i]);
      const double beta = rho * y_hist[i].dot(r);
      r += (alphas[i] - beta) * s_hist[i].cwiseProduct(mask);
    }
    Eigen::VectorXd dir = -r.cwiseProduct(mask);
    if (dir.dot(gf) >= 0.0) {
      dir = -gf;
      s_hist.clear();
      y_hist.clear();
    }

    // Backtracking Armijo search along the projected path.
    double step = 1.0;
    if (s_hist.empty()) step = std::min(1.0, 1.0 / std::max(1e-12, gf.lpNorm<Eigen::Infinity>()));
    Eigen::VectorXd x_new, g_new(x.size());
    double f_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = project(x + step * dir, lower, upper);
      f_new = eval(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= fx + 1e-4 * g.dot(x_new - x)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = g_new - g;
    const double f_old = fx;
    x = x_new;
    g = g_new;
    fx = f_new;
    if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      if (static_cast<int>(s_hist.size()) > options.history) {
        s_hist.pop_front();
        y_hist.pop_front();
      }
    }
    if (std::abs(f_old - fx) <= options.function_tolerance * std::max(1.0, std::abs(fx))) break;
  }
  result.x = x;
  result.value = fx;
  return result;
}

} // namespace pressfit::gp
