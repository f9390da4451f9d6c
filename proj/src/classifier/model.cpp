#include "pressfit/classifier/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

namespace pressfit::classifier {

namespace {

constexpr int kModelVersion = 1;

using Eigen::Index;
using Eigen::MatrixXd;
using ConstMap = Eigen::Map<const MatrixXd>;
using Map = Eigen::Map<MatrixXd>;

// Column t of the result stacks the `width` taps around t for every channel:
// row c * width + k holds z(c, t + k - width / 2), zero outside the signal.
MatrixXd im2col(const MatrixXd &z, int width) {
  const Index n = z.cols();
  const int pad = width / 2;
  MatrixXd u = MatrixXd::Zero(z.rows() * width, n);
  for (Index c = 0; c < z.rows(); ++c) {
    for (int k = 0; k < width; ++k) {
      const Index shift = k - pad;
      const Index t0 = std::max<Index>(0, -shift);
      const Index t1 = std::min<Index>(n, n - shift);
      if (t1 <= t0) continue;
      u.row(c * width + k).segment(t0, t1 - t0) = z.row(c).segment(t0 + shift, t1 - t0);
    }
  }
  return u;
}

void col2im_add(const MatrixXd &du, int width, MatrixXd &dz) {
  const Index n = dz.cols();
  const int pad = width / 2;
  for (Index c = 0; c < dz.rows(); ++c) {
    for (int k = 0; k < width; ++k) {
      const Index shift = k - pad;
      const Index t0 = std::max<Index>(0, -shift);
      const Index t1 = std::min<Index>(n, n - shift);
      if (t1 <= t0) continue;
      dz.row(c).segment(t0 + shift, t1 - t0) += du.row(c * width + k).segment(t0, t1 - t0);
    }
  }
}

int label_index(ContactSide side) { return side == ContactSide::left ? 0 : 1; }

} // namespace

void ClassifierConfig::validate() const {
  const bool ok = blocks >= 1 && bottleneck >= 1 && filters >= 1 && !kernel_widths.empty() &&
                  std::all_of(kernel_widths.begin(), kernel_widths.end(), [](int w) { return w >= 1 && w % 2 == 1; }) &&
                  learning_rate > 0.0 && beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 &&
                  adam_epsilon > 0.0 && max_epochs >= 1 && batch_size >= 1 && patience >= 1 && min_delta >= 0.0 &&
                  target_loss >= 0.0;
  if (!ok) throw Error("InvalidConfig", "classifier config out of range (kernel widths must be odd)");
}

struct ClassifierModel::Cache {
  struct BlockCache {
    MatrixXd input;
    MatrixXd z;
    std::vector<MatrixXd> cols;
    MatrixXd pooled;
    Eigen::MatrixXi argmax;
    MatrixXd pre;
  };
  std::vector<BlockCache> blocks;
  Eigen::VectorXd gap;
  Eigen::Vector2d prob;
};

ClassifierModel::ClassifierModel(const ClassifierConfig &config) : config_(config) {
  config_.validate();
  Index offset = 0;
  const auto make = [&](int in, int out, int width) {
    Conv c{in, out, width, offset, offset + static_cast<Index>(out) * in * width};
    offset = c.b_offset + out;
    return c;
  };
  int channels = 6;
  for (int b = 0; b < config_.blocks; ++b) {
    Block blk;
    int z = channels;
    blk.has_bottleneck = channels > 1;
    if (blk.has_bottleneck) {
      blk.bottleneck = make(channels, config_.bottleneck, 1);
      z = config_.bottleneck;
    }
    for (int w : config_.kernel_widths) blk.branches.push_back(make(z, config_.filters, w));
    blk.pool = make(channels, config_.filters, 1);
    blocks_.push_back(std::move(blk));
    channels = config_.block_channels();
  }
  head_w_ = offset;
  head_b_ = offset + 2 * channels;
  theta_ = Eigen::VectorXd::Zero(head_b_ + 2);

  std::mt19937_64 rng(config_.seed);
  const auto fill = [&](Index first, Index count, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Index i = 0; i < count; ++i) theta_[first + i] = u(rng);
  };
  const auto init = [&](const Conv &c) {
    fill(c.w_offset, c.b_offset - c.w_offset, std::sqrt(6.0 / (c.in * c.width)));
  };
  for (const Block &blk : blocks_) {
    if (blk.has_bottleneck) init(blk.bottleneck);
    for (const Conv &c : blk.branches) init(c);
    init(blk.pool);
  }
  fill(head_w_, 2 * channels, std::sqrt(6.0 / (channels + 2)));
}

void ClassifierModel::set_theta(const Eigen::VectorXd &theta) {
  if (theta.size() != theta_.size()) throw Error("InvalidModel", "parameter vector size mismatch");
  theta_ = theta;
}

void ClassifierModel::set_normalization(const Vec6 &mean, const Vec6 &sd) {
  if (!mean.allFinite() || !sd.allFinite() || (sd.array() <= 0.0).any()) {
    throw Error("InvalidModel", "normalization statistics must be finite with positive std");
  }
  mean_ = mean;
  std_ = sd;
}

MatrixXd ClassifierModel::standardize(const WrenchWindow &window) const {
  if (window.cols() == 0) throw Error("EmptyWindow", "wrench window has no samples");
  return ((window.colwise() - mean_).array().colwise() / std_.array()).matrix();
}

Eigen::Vector2d ClassifierModel::forward(const MatrixXd &x, Cache *cache) const {
  if (theta_.size() == 0) throw Error("InvalidModel", "classifier has no weights");
  const double *p = theta_.data();
  const auto weights = [&](const Conv &c) { return ConstMap(p + c.w_offset, c.out, c.in * c.width); };
  const auto bias = [&](const Conv &c) { return Eigen::Map<const Eigen::VectorXd>(p + c.b_offset, c.out); };
  const Index n = x.cols();
  const int f = config_.filters;

  MatrixXd h = x;
  if (cache) cache->blocks.resize(blocks_.size());
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const Block &blk = blocks_[b];
    MatrixXd z = h;
    if (blk.has_bottleneck) z = (weights(blk.bottleneck) * h).colwise() + bias(blk.bottleneck);

    MatrixXd pre(config_.block_channels(), n);
    std::vector<MatrixXd> cols;
    for (std::size_t k = 0; k < blk.branches.size(); ++k) {
      const Conv &c = blk.branches[k];
      MatrixXd u = im2col(z, c.width);
      pre.middleRows(static_cast<Index>(k) * f, f) = (weights(c) * u).colwise() + bias(c);
      if (cache) cols.push_back(std::move(u));
    }

    MatrixXd pooled(h.rows(), n);
    Eigen::MatrixXi argmax(h.rows(), n);
    for (Index c = 0; c < h.rows(); ++c) {
      for (Index t = 0; t < n; ++t) {
        Index best = t;
        if (t > 0 && h(c, t - 1) > h(c, best)) best = t - 1;
        if (t + 1 < n && h(c, t + 1) > h(c, best)) best = t + 1;
        pooled(c, t) = h(c, best);
        argmax(c, t) = static_cast<int>(best);
      }
    }
    pre.bottomRows(f) = (weights(blk.pool) * pooled).colwise() + bias(blk.pool);

    if (cache) {
      auto &bc = cache->blocks[b];
      bc.input = std::move(h);
      bc.z = std::move(z);
      bc.cols = std::move(cols);
      bc.pooled = std::move(pooled);
      bc.argmax = std::move(argmax);
      bc.pre = pre;
    }
    h = pre.cwiseMax(0.0);
  }

  const Eigen::VectorXd gap = h.rowwise().mean();
  const ConstMap hw(p + head_w_, 2, h.rows());
  const Eigen::Vector2d logits = hw * gap + Eigen::Map<const Eigen::Vector2d>(p + head_b_);
  const double m = logits.maxCoeff();
  Eigen::Vector2d prob = (logits.array() - m).exp().matrix();
  prob /= prob.sum();
  if (cache) {
    cache->gap = gap;
    cache->prob = prob;
  }
  return prob;
}

Eigen::Vector2d ClassifierModel::probabilities(const WrenchWindow &window) const {
  return forward(standardize(window), nullptr);
}

double ClassifierModel::loss_and_gradient(const WrenchWindow &window, ContactSide label,
                                          Eigen::VectorXd &grad) const {
  if (grad.size() != theta_.size()) throw Error("InvalidArgument", "gradient must be sized like theta");
  Cache cache;
  const MatrixXd x = standardize(window);
  forward(x, &cache);
  const int y = label_index(label);
  const double loss = -std::log(std::max(cache.prob[y], std::numeric_limits<double>::min()));

  const double *p = theta_.data();
  double *g = grad.data();
  const auto weights = [&](const Conv &c) { return ConstMap(p + c.w_offset, c.out, c.in * c.width); };
  const auto accumulate = [&](const Conv &c, const MatrixXd &dy, const MatrixXd &input) {
    Map(g + c.w_offset, c.out, c.in * c.width).noalias() += dy * input.transpose();
    Eigen::Map<Eigen::VectorXd>(g + c.b_offset, c.out) += dy.rowwise().sum();
  };

  Eigen::Vector2d dlogits = cache.prob;
  dlogits[y] -= 1.0;
  const Index channels = cache.gap.size();
  Map(g + head_w_, 2, channels).noalias() += dlogits * cache.gap.transpose();
  Eigen::Map<Eigen::Vector2d>(g + head_b_) += dlogits;
  const Eigen::VectorXd dgap = ConstMap(p + head_w_, 2, channels).transpose() * dlogits;

  const Index n = x.cols();
  const int f = config_.filters;
  MatrixXd dout = (dgap / static_cast<double>(n)).replicate(1, n);
  for (std::size_t b = blocks_.size(); b-- > 0;) {
    const Block &blk = blocks_[b];
    const auto &bc = cache.blocks[b];
    const MatrixXd dpre = (bc.pre.array() > 0.0).select(dout, 0.0);

    MatrixXd dz = MatrixXd::Zero(bc.z.rows(), n);
    for (std::size_t k = 0; k < blk.branches.size(); ++k) {
      const Conv &c = blk.branches[k];
      const MatrixXd dy = dpre.middleRows(static_cast<Index>(k) * f, f);
      accumulate(c, dy, bc.cols[k]);
      col2im_add(weights(c).transpose() * dy, c.width, dz);
    }

    const MatrixXd dyp = dpre.bottomRows(f);
    accumulate(blk.pool, dyp, bc.pooled);
    const MatrixXd dpooled = weights(blk.pool).transpose() * dyp;
    MatrixXd dh = MatrixXd::Zero(bc.input.rows(), n);
    for (Index c = 0; c < dh.rows(); ++c) {
      for (Index t = 0; t < n; ++t) dh(c, bc.argmax(c, t)) += dpooled(c, t);
    }

    if (blk.has_bottleneck) {
      accumulate(blk.bottleneck, dz, bc.input);
      dh.noalias() += weights(blk.bottleneck).transpose() * dz;
    } else {
      dh += dz;
    }
    dout = std::move(dh);
  }
  return loss;
}

Prediction predict(const ClassifierModel &model, const WrenchWindow &window) {
  const Eigen::Vector2d prob = model.probabilities(window);
  Prediction out;
  out.side = prob[1] > prob[0] ? ContactSide::right : ContactSide::left;
  out.confidence = prob.maxCoeff();
  return out;
}

void LabeledDataset::validate() const {
  if (windows.size() != labels.size()) throw Error("InvalidDataset", "windows and labels differ in length");
  for (const auto &w : windows) {
    if (w.cols() == 0 || !w.allFinite()) throw Error("InvalidDataset", "windows must be non-empty and finite");
  }
}

std::size_t LabeledDataset::min_length() const {
  std::size_t n = windows.empty() ? 0 : std::numeric_limits<std::size_t>::max();
  for (const auto &w : windows) n = std::min(n, static_cast<std::size_t>(w.cols()));
  return n;
}

Split split_dataset(const LabeledDataset &data) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(data.split_seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::lround(0.8 * static_cast<double>(order.size())));
  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return s;
}

std::pair<Vec6, Vec6> channel_statistics(const LabeledDataset &data, const std::vector<std::size_t> &indices,
                                         std::size_t n) {
  Vec6 sum = Vec6::Zero(), sq = Vec6::Zero();
  double count = 0.0;
  for (std::size_t i : indices) {
    const auto w = data.windows.at(i).leftCols(static_cast<Index>(n));
    sum += w.rowwise().sum();
    count += static_cast<double>(w.cols());
  }
  if (count == 0.0) return {Vec6::Zero(), Vec6::Ones()};
  const Vec6 mean = sum / count;
  for (std::size_t i : indices) {
    const auto w = data.windows.at(i).leftCols(static_cast<Index>(n));
    sq += (w.colwise() - mean).array().square().rowwise().sum().matrix();
  }
  Vec6 sd = (sq / count).cwiseSqrt();
  for (Index c = 0; c < 6; ++c) {
    if (sd[c] < 1e-8) sd[c] = 1.0;
  }
  return {mean, sd};
}

double accuracy(const ClassifierModel &model, const LabeledDataset &data, const std::vector<std::size_t> &indices,
                std::size_t n) {
  if (indices.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i : indices) {
    const WrenchWindow w = data.windows.at(i).leftCols(static_cast<Index>(n));
    if (predict(model, w).side == data.labels.at(i)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(indices.size());
}

TrainResult train_classifier(const LabeledDataset &data, double window_seconds, const ClassifierConfig &config) {
  data.validate();
  config.validate();
  if (data.size() < 20) throw Error("InvalidDataset", "training needs at least 20 windows");
  const auto n = static_cast<std::size_t>(samples_for(window_seconds));
  if (n > data.min_length()) throw Error("DurationTooLong", "requested history exceeds the recorded windows");

  TrainResult result;
  result.split = split_dataset(data);
  const auto &train = result.split.train;
  const bool has_left = std::any_of(train.begin(), train.end(), [&](auto i) { return data.labels[i] == ContactSide::left; });
  const bool has_right = std::any_of(train.begin(), train.end(), [&](auto i) { return data.labels[i] == ContactSide::right; });
  if (!has_left || !has_right) throw Error("ClassMissing", "training split lacks one contact side");

  ClassifierModel model(config);
  const auto [mean, sd] = channel_statistics(data, train, n);
  model.set_normalization(mean, sd);
  model.window_seconds = window_seconds;

  std::vector<WrenchWindow> windows(data.size());
  for (std::size_t i : train) windows[i] = data.windows[i].leftCols(static_cast<Index>(n));

  const Index dim = model.theta().size();
  Eigen::VectorXd theta = model.theta();
  Eigen::VectorXd m = Eigen::VectorXd::Zero(dim), v = Eigen::VectorXd::Zero(dim), grad(dim);
  std::mt19937_64 rng(config.seed + 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order = train;
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  long step = 0;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      grad.setZero();
      for (std::size_t k = start; k < stop; ++k) {
        epoch_loss += model.loss_and_gradient(windows[order[k]], data.labels[order[k]], grad);
      }
      grad /= static_cast<double>(stop - start);
      ++step;
      m = config.beta1 * m + (1.0 - config.beta1) * grad;
      v = config.beta2 * v + (1.0 - config.beta2) * grad.cwiseProduct(grad);
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      theta.array() -= config.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + config.adam_epsilon);
      model.set_theta(theta);
    }
    epoch_loss /= static_cast<double>(order.size());
    result.loss_history.push_back(epoch_loss);
    result.epochs = epoch + 1;
    if (epoch_loss < config.target_loss) break;
    if (epoch_loss < best - config.min_delta) {
      best = epoch_loss;
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  result.test_accuracy = accuracy(model, data, result.split.test, n);
  result.model = std::move(model);
  return result;
}

std::vector<double> default_sweep_durations() { return {10.0, 5.0, 2.0, 1.0, 0.5, 0.2, 0.1, 0.05}; }

std::vector<SweepRow> history_length_sweep(const LabeledDataset &data, const std::vector<double> &durations,
                                           const ClassifierConfig &config) {
  for (double d : durations) {
    if (!(d > 0.0)) throw Error("InvalidArgument", "durations must be positive");
    if (static_cast<std::size_t>(samples_for(d)) > data.min_length()) {
      throw Error("DurationTooLong", "duration " + format_double(d) + " s exceeds the recorded windows");
    }
  }
  std::vector<SweepRow> rows;
  for (double d : durations) {
    const TrainResult r = train_classifier(data, d, config);
    rows.push_back({d, samples_for(d), r.test_accuracy, r.epochs});
  }
  return rows;
}

void write_sweep_csv(std::ostream &out, const std::vector<SweepRow> &rows) {
  out << "duration_s,history_length,accuracy_pct,epochs\n";
  for (const auto &r : rows) {
    out << format_double(r.duration) << ',' << r.history_length << ',' << format_double(100.0 * r.accuracy) << ','
        << r.epochs << '\n';
  }
}

void to_json(json &j, const ClassifierConfig &c) {
  j = json{{"blocks", c.blocks},
           {"bottleneck", c.bottleneck},
           {"kernel_widths", c.kernel_widths},
           {"filters", c.filters},
           {"learning_rate", c.learning_rate},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"adam_epsilon", c.adam_epsilon},
           {"max_epochs", c.max_epochs},
           {"batch_size", c.batch_size},
           {"patience", c.patience},
           {"min_delta", c.min_delta},
           {"target_loss", c.target_loss},
           {"seed", c.seed}};
}

void from_json(const json &j, ClassifierConfig &c) {
  c = ClassifierConfig{};
  const auto read = [&](const char *key, auto &field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  read("blocks", c.blocks);
  read("bottleneck", c.bottleneck);
  read("kernel_widths", c.kernel_widths);
  read("filters", c.filters);
  read("learning_rate", c.learning_rate);
  read("beta1", c.beta1);
  read("beta2", c.beta2);
  read("adam_epsilon", c.adam_epsilon);
  read("max_epochs", c.max_epochs);
  read("batch_size", c.batch_size);
  read("patience", c.patience);
  read("min_delta", c.min_delta);
  read("target_loss", c.target_loss);
  read("seed", c.seed);
}

json model_to_json(const ClassifierModel &model) {
  const auto &t = model.theta();
  return json{{"version", kModelVersion},
              {"config", model.config()},
              {"window_seconds", model.window_seconds},
              {"channel_mean", std::vector<double>(model.channel_mean().data(), model.channel_mean().data() + 6)},
              {"channel_std", std::vector<double>(model.channel_std().data(), model.channel_std().data() + 6)},
              {"theta", std::vector<double>(t.data(), t.data() + t.size())}};
}

ClassifierModel model_from_json(const json &j) {
  try {
    if (j.value("version", 0) != kModelVersion) throw Error("MalformedFile", "unsupported classifier model version");
    ClassifierModel model(j.at("config").get<ClassifierConfig>());
    const auto mean = j.at("channel_mean").get<std::vector<double>>();
    const auto sd = j.at("channel_std").get<std::vector<double>>();
    const auto theta = j.at("theta").get<std::vector<double>>();
    if (mean.size() != 6 || sd.size() != 6) throw Error("MalformedFile", "normalization needs six channels");
    model.set_normalization(Eigen::Map<const Vec6>(mean.data()), Eigen::Map<const Vec6>(sd.data()));
    model.set_theta(Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Index>(theta.size())));
    model.window_seconds = j.at("window_seconds").get<double>();
    return model;
  } catch (const json::exception &e) {
    throw Error("MalformedFile", std::string("classifier model: ") + e.what());
  } catch (const Error &e) {
    if (e.kind() == "MalformedFile") throw;
    throw Error("MalformedFile", std::string("classifier model: ") + e.what());
  }
}

} // namespace pressfit::classifier
