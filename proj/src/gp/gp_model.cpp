#include "pressfit/gp/gp_model.hpp"

#include "pressfit/core/serialization.hpp"

#include <cmath>
#include <numbers>

namespace pressfit::gp {

namespace {

constexpr int kSchemaVersion = 1;

double scaled_sq_dist(const Vec3 &a, const Vec3 &b, const Vec3 &ls) {
  return ((a - b).array() / ls.array()).square().sum();
}

} // namespace

double Kernel::operator()(const Vec3 &a, const Vec3 &b) const {
  return signal_variance * std::exp(-0.5 * scaled_sq_dist(a, b, length_scales));
}

void Kernel::validate() const {
  const bool ok = std::isfinite(signal_variance) && signal_variance >= 0.0 &&
                  length_scales.allFinite() && (length_scales.array() > 0.0).all() &&
                  std::isfinite(noise_variance) && noise_variance > 0.0;
  if (!ok) throw Error("InvalidKernel", "kernel parameters must be positive and finite");
}

Eigen::MatrixXd gram_matrix(const Kernel &kernel, const Eigen::Matrix3Xd &inputs) {
  const Eigen::Index n = inputs.cols();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = kernel.signal_variance + kernel.noise_variance + kernel.jitter();
    for (Eigen::Index j = 0; j < i; ++j) {
      k(i, j) = k(j, i) = kernel(inputs.col(i), inputs.col(j));
    }
  }
  return k;
}

GpModel::GpModel(Kernel kernel) : kernel_(kernel) { kernel_.validate(); }

GpModel::GpModel(Kernel kernel, Eigen::Matrix3Xd inputs, Eigen::VectorXd outputs)
    : kernel_(kernel), inputs_(std::move(inputs)), outputs_(std::move(outputs)) {
  kernel_.validate();
  if (inputs_.cols() != outputs_.size()) {
    throw Error("InvalidModel", "inputs and outputs differ in length");
  }
  if (!inputs_.allFinite() || !outputs_.allFinite()) {
    throw Error("InvalidModel", "training data must be finite");
  }
  factorize();
}

void GpModel::factorize() {
  if (empty()) {
    llt_ = Eigen::LLT<Eigen::MatrixXd>();
    alpha_.resize(0);
    return;
  }
  llt_.compute(gram_matrix(kernel_, inputs_));
  if (llt_.info() != Eigen::Success) {
    throw Error("InvalidModel", "Gram matrix is not positive definite");
  }
  alpha_ = llt_.solve(outputs_);
}

Eigen::VectorXd GpModel::cross_covariance(const Vec3 &x) const {
  Eigen::VectorXd k(inputs_.cols());
  for (Eigen::Index i = 0; i < inputs_.cols(); ++i) k[i] = kernel_(inputs_.col(i), x);
  return k;
}

Prediction GpModel::posterior(const Vec3 &x) const {
  if (empty()) return {0.0, kernel_.signal_variance};
  const Eigen::VectorXd ks = cross_covariance(x);
  const double mean = ks.dot(alpha_);
  const Eigen::VectorXd v = llt_.matrixL().solve(ks);
  const double var = kernel_.signal_variance - v.squaredNorm();
  return {mean, std::max(var, 0.0)};
}

Eigen::VectorXd GpModel::selector(const Vec3 &x) const {
  if (empty()) return Eigen::VectorXd(0);
  return llt_.solve(cross_covariance(x));
}

Vec3 GpModel::variance_gradient(const Vec3 &x) const {
  if (empty()) return Vec3::Zero();
  const Eigen::VectorXd ks = cross_covariance(x);
  const Eigen::VectorXd v = llt_.solve(ks);
  Vec3 grad = Vec3::Zero();
  for (Eigen::Index i = 0; i < inputs_.cols(); ++i) {
    const Vec3 diff = x - inputs_.col(i);
    grad += (2.0 * v[i] * ks[i]) * diff;
  }
  return grad.cwiseQuotient(kernel_.length_scales.cwiseProduct(kernel_.length_scales));
}

CorrectionOutcome GpModel::apply_correction(const Vec3 &x, double eps) const {
  if (empty()) return {*this, false};
  const Eigen::VectorXd a = selector(x);
  const double norm_sq = a.squaredNorm();
  if (std::sqrt(norm_sq) < 1e-12) return {*this, false};
  if (eps == 0.0) return {*this, true};
  // Pseudoinverse of the 1xN row A is A^T / (A A^T).
  GpModel out = *this;
  out.outputs_ = outputs_ + a * (eps / norm_sq);
  out.alpha_ = out.llt_.solve(out.outputs_);
  return {std::move(out), true};
}

GpModel GpModel::append(const Vec3 &x, double y) const {
  if (!x.allFinite() || !std::isfinite(y)) throw Error("InvalidModel", "appended sample must be finite");
  Eigen::Matrix3Xd in(3, inputs_.cols() + 1);
  in.leftCols(inputs_.cols()) = inputs_;
  in.col(inputs_.cols()) = x;
  Eigen::VectorXd out(outputs_.size() + 1);
  out.head(outputs_.size()) = outputs_;
  out[outputs_.size()] = y;
  return GpModel(kernel_, std::move(in), std::move(out));
}

GpModel GpModel::with_kernel(const Kernel &kernel) const { return GpModel(kernel, inputs_, outputs_); }

GpModel GpModel::with_outputs(Eigen::VectorXd outputs) const {
  if (outputs.size() != outputs_.size()) throw Error("InvalidModel", "output count mismatch");
  GpModel out = *this;
  out.outputs_ = std::move(outputs);
  if (!empty()) out.alpha_ = out.llt_.solve(out.outputs_);
  return out;
}

double GpModel::log_marginal_likelihood() const {
  return gp::log_marginal_likelihood(kernel_, inputs_, outputs_);
}

double log_marginal_likelihood(const Kernel &kernel, const Eigen::Matrix3Xd &inputs,
                               const Eigen::VectorXd &outputs,
                               Eigen::Matrix<double, 5, 1> *gradient) {
  const Eigen::Index n = inputs.cols();
  if (n == 0) {
    if (gradient) gradient->setZero();
    return 0.0;
  }
  const Eigen::MatrixXd c = gram_matrix(kernel, inputs);
  const Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() != Eigen::Success) {
    if (gradient) gradient->setZero();
    return -std::numeric_limits<double>::infinity();
  }
  const Eigen::VectorXd alpha = llt.solve(outputs);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double lml = -0.5 * outputs.dot(alpha) - 0.5 * log_det -
                     0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  if (gradient) {
    const Eigen::MatrixXd w =
        alpha * alpha.transpose() - llt.solve(Eigen::MatrixXd::Identity(n, n));
    // Signal part of the covariance (jitter scales with the signal variance too).
    Eigen::MatrixXd kf = c;
    kf.diagonal().array() -= kernel.noise_variance;
    (*gradient)[0] = 0.5 * (w.cwiseProduct(kf)).sum();
    for (int d = 0; d < 3; ++d) {
      const double l2 = kernel.length_scales[d] * kernel.length_scales[d];
      double g = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < i; ++j) {
          const double diff = inputs(d, i) - inputs(d, j);
          g += 2.0 * w(i, j) * kf(i, j) * diff * diff / l2;
        }
      }
      (*gradient)[1 + d] = 0.5 * g;
    }
    (*gradient)[4] = 0.5 * kernel.noise_variance * w.trace();
  }
  return lml;
}

nlohmann::json to_json(const Kernel &kernel) {
  return {{"signal_variance", kernel.signal_variance},
          {"length_scales", vec_to_json(kernel.length_scales)},
          {"noise_variance", kernel.noise_variance}};
}

Kernel kernel_from_json(const nlohmann::json &j) {
  Kernel k;
  k.signal_variance = j.at("signal_variance").get<double>();
  k.length_scales = vec3_from_json(j.at("length_scales"));
  k.noise_variance = j.at("noise_variance").get<double>();
  k.validate();
  return k;
}

nlohmann::json to_json(const GpModel &model) {
  nlohmann::json in = nlohmann::json::array();
  for (Eigen::Index i = 0; i < model.size(); ++i) in.push_back(vec_to_json(model.inputs().col(i)));
  return {{"schema_version", kSchemaVersion},
          {"kernel", to_json(model.kernel())},
          {"inputs", in},
          {"outputs", vec_to_json(model.outputs())}};
}

GpModel model_from_json(const nlohmann::json &j) {
  if (j.value("schema_version", 0) != kSchemaVersion) {
    throw Error("MalformedFile", "unsupported GP snapshot schema version");
  }
  const auto &in = j.at("inputs");
  const auto &out = j.at("outputs");
  Eigen::Matrix3Xd inputs(3, static_cast<Eigen::Index>(in.size()));
  Eigen::VectorXd outputs(static_cast<Eigen::Index>(out.size()));
  for (std::size_t i = 0; i < in.size(); ++i) inputs.col(static_cast<Eigen::Index>(i)) = vec3_from_json(in[i]);
  for (std::size_t i = 0; i < out.size(); ++i) outputs[static_cast<Eigen::Index>(i)] = out[i].get<double>();
  return GpModel(kernel_from_json(j.at("kernel")), std::move(inputs), std::move(outputs));
}

} // namespace pressfit::gp
