#pragma once

#include "pressfit/core/types.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <json.hpp>

#include <vector>

namespace pressfit::gp {

/// Squared-exponential kernel with one length scale per input dimension:
///   k(a, b) = signal_variance * exp(-0.5 * sum_d ((a_d - b_d) / l_d)^2)
/// noise_variance is added to the Gram diagonal together with a jitter of
/// 1e-8 * signal_variance.
struct Kernel {
  double signal_variance = 1.0;
  Vec3 length_scales = Vec3::Constant(0.1);
  double noise_variance = 1e-4;

  double operator()(const Vec3 &a, const Vec3 &b) const;
  double jitter() const { return 1e-8 * signal_variance; }
  /// Throws Error{"InvalidKernel"}.
  void validate() const;
  bool operator==(const Kernel &o) const {
    return signal_variance == o.signal_variance && length_scales == o.length_scales &&
           noise_variance == o.noise_variance;
  }
};

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

class GpModel;

/// Result of apply_correction. When the query is uncorrelated with every
/// training input (|A| < 1e-12) the model is returned unchanged with
/// applied == false and the caller should append the sample instead.
struct CorrectionOutcome;

/// Exact GP regression with zero prior mean. Value type: mutating operations
/// return a new model whose factorization matches its data.
class GpModel {
public:
  GpModel() = default;
  explicit GpModel(Kernel kernel);
  GpModel(Kernel kernel, Eigen::Matrix3Xd inputs, Eigen::VectorXd outputs);

  Prediction posterior(const Vec3 &x) const;

  /// A(xi, x) = k_*(xi, x)^T (K + s_n^2 I)^-1, the row mapping outputs to the mean at x.
  Eigen::VectorXd selector(const Vec3 &x) const;

  /// Gradient of the posterior variance with respect to the query point.
  Vec3 variance_gradient(const Vec3 &x) const;

  CorrectionOutcome apply_correction(const Vec3 &x, double eps) const;
  GpModel append(const Vec3 &x, double y) const;
  GpModel with_kernel(const Kernel &kernel) const;
  GpModel with_outputs(Eigen::VectorXd outputs) const;

  double log_marginal_likelihood() const;

  const Kernel &kernel() const { return kernel_; }
  const Eigen::Matrix3Xd &inputs() const { return inputs_; }
  const Eigen::VectorXd &outputs() const { return outputs_; }
  Eigen::Index size() const { return inputs_.cols(); }
  bool empty() const { return inputs_.cols() == 0; }

private:
  void factorize();
  Eigen::VectorXd cross_covariance(const Vec3 &x) const;

  Kernel kernel_{};
  Eigen::Matrix3Xd inputs_ = Eigen::Matrix3Xd(3, 0);
  Eigen::VectorXd outputs_ = Eigen::VectorXd(0);
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
};

struct CorrectionOutcome {
  GpModel model;
  bool applied = false;
};

/// Gram matrix K(xi, xi) + (noise + jitter) I.
Eigen::MatrixXd gram_matrix(const Kernel &kernel, const Eigen::Matrix3Xd &inputs);

/// Log marginal likelihood of outputs under the kernel. If gradient is
/// non-null it receives d(LML)/d(log theta) for theta = [s_f^2, l_x, l_y, l_z, s_n^2].
double log_marginal_likelihood(const Kernel &kernel, const Eigen::Matrix3Xd &inputs,
                               const Eigen::VectorXd &outputs,
                               Eigen::Matrix<double, 5, 1> *gradient = nullptr);

nlohmann::json to_json(const Kernel &kernel);
Kernel kernel_from_json(const nlohmann::json &j);

/// Snapshot: {"schema_version": 1, "kernel": {...}, "inputs": [[x,y,z]...], "outputs": [...]}
nlohmann::json to_json(const GpModel &model);
GpModel model_from_json(const nlohmann::json &j);

} // namespace pressfit::gp
