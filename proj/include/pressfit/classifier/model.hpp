#pragma once

#include "pressfit/classifier/window.hpp"
#include "pressfit/core/serialization.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace pressfit::classifier {

struct ClassifierConfig {
  int blocks = 2;
  int bottleneck = 8;                  // 1x1 reduction applied when the block input has > 1 channel
  std::vector<int> kernel_widths{9, 19, 39};
  int filters = 8;                     // per branch; block output = filters * (widths + 1)
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int max_epochs = 200;
  int batch_size = 16;
  int patience = 10;                   // epochs without training-loss improvement before stopping
  double min_delta = 1e-4;
  double target_loss = 1e-3;           // stop once the epoch loss falls below this
  std::uint64_t seed = 0;

  /// Throws Error{"InvalidConfig"}.
  void validate() const;
  int block_channels() const { return filters * static_cast<int>(kernel_widths.size() + 1); }
  bool operator==(const ClassifierConfig &) const = default;
};

/// Inception-style network: per-channel standardization, `blocks` inception
/// blocks (bottleneck, parallel same-padded convolutions, max-pool + 1x1
/// branch, ReLU), global average pooling over time and a 2-way softmax head.
/// All weights live in one flat vector; `theta` layout follows the config.
class ClassifierModel {
public:
  ClassifierModel() = default;
  /// He-uniform weights from config.seed, identity normalization.
  explicit ClassifierModel(const ClassifierConfig &config);

  const ClassifierConfig &config() const { return config_; }
  const Eigen::VectorXd &theta() const { return theta_; }
  void set_theta(const Eigen::VectorXd &theta);
  std::size_t parameter_count() const { return static_cast<std::size_t>(theta_.size()); }

  const Vec6 &channel_mean() const { return mean_; }
  const Vec6 &channel_std() const { return std_; }
  void set_normalization(const Vec6 &mean, const Vec6 &sd);

  /// Class probabilities (left, right). Throws Error{"EmptyWindow"}.
  Eigen::Vector2d probabilities(const WrenchWindow &window) const;

  /// Cross-entropy of one window and its gradient with respect to theta
  /// (accumulated into `grad`, which must be sized like theta).
  double loss_and_gradient(const WrenchWindow &window, ContactSide label, Eigen::VectorXd &grad) const;

  /// Training window duration the model was fitted for (seconds).
  double window_seconds = 0.0;

  struct Conv {
    int in = 0, out = 0, width = 1;
    Eigen::Index w_offset = 0, b_offset = 0;
  };
  struct Block {
    bool has_bottleneck = false;
    Conv bottleneck;
    std::vector<Conv> branches;
    Conv pool;
  };

private:
  struct Cache;
  Eigen::MatrixXd standardize(const WrenchWindow &window) const;
  Eigen::Vector2d forward(const Eigen::MatrixXd &x, Cache *cache) const;

  ClassifierConfig config_;
  std::vector<Block> blocks_;
  Eigen::Index head_w_ = 0, head_b_ = 0;
  Eigen::VectorXd theta_;
  Vec6 mean_ = Vec6::Zero();
  Vec6 std_ = Vec6::Ones();
};

struct Prediction {
  ContactSide side = ContactSide::left;
  double confidence = 0.0;
};

/// Argmax of the class probabilities. Throws Error{"EmptyWindow"}.
Prediction predict(const ClassifierModel &model, const WrenchWindow &window);

struct LabeledDataset {
  std::vector<WrenchWindow> windows;
  std::vector<ContactSide> labels;
  std::uint64_t split_seed = 0;

  /// Throws Error{"InvalidDataset"} on length mismatch or non-finite data.
  void validate() const;
  std::size_t size() const { return windows.size(); }
  /// Shortest window length in samples.
  std::size_t min_length() const;
};

/// 80/20 split by split_seed: first the training indices, then the test indices.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};
Split split_dataset(const LabeledDataset &data);

/// Per-channel mean and std over every sample of the given windows,
/// truncated to their first `n` columns. Std below 1e-8 is reported as 1.
std::pair<Vec6, Vec6> channel_statistics(const LabeledDataset &data, const std::vector<std::size_t> &indices,
                                         std::size_t n);

struct TrainResult {
  ClassifierModel model;
  double test_accuracy = 0.0;
  int epochs = 0;
  std::vector<double> loss_history;
  Split split;
};

/// Trains on the first round(window_seconds * 29) samples of each window.
/// Throws Error{"InvalidDataset"} (< 20 windows), Error{"ClassMissing"},
/// Error{"DurationTooLong"}.
TrainResult train_classifier(const LabeledDataset &data, double window_seconds,
                             const ClassifierConfig &config = {});

/// Fraction of `indices` whose prediction on the first n samples matches the label.
double accuracy(const ClassifierModel &model, const LabeledDataset &data, const std::vector<std::size_t> &indices,
                std::size_t n);

struct SweepRow {
  double duration = 0.0;
  int history_length = 0;
  double accuracy = 0.0;
  int epochs = 0;
};

/// One classifier per duration. Throws Error{"DurationTooLong"} before training
/// if any duration exceeds the dataset's shortest window.
std::vector<SweepRow> history_length_sweep(const LabeledDataset &data, const std::vector<double> &durations,
                                           const ClassifierConfig &config = {});

/// Columns: duration_s,history_length,accuracy_pct,epochs.
void write_sweep_csv(std::ostream &out, const std::vector<SweepRow> &rows);

/// Default history durations in seconds, longest first.
std::vector<double> default_sweep_durations();

json model_to_json(const ClassifierModel &model);
/// Throws Error{"MalformedFile"} on a missing or unsupported version.
ClassifierModel model_from_json(const json &j);

void to_json(json &j, const ClassifierConfig &c);
void from_json(const json &j, ClassifierConfig &c);

} // namespace pressfit::classifier
