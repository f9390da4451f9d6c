#include <doctest.h>

#include "support/gradcheck.hpp"

#include "pressfit/classifier/dataset.hpp"

#include <filesystem>
#include <random>
#include <set>
#include <sstream>

using namespace pressfit;
using namespace pressfit::classifier;
namespace fs = std::filesystem;

namespace {

WrenchWindow random_window(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  WrenchWindow w(6, n);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = g(rng);
  return w;
}

// fy carries the class: +1 for right, -1 for left, plus noise.
LabeledDataset toy_dataset(int count, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.3);
  LabeledDataset d;
  d.split_seed = seed;
  for (int i = 0; i < count; ++i) {
    const ContactSide side = i % 2 ? ContactSide::right : ContactSide::left;
    WrenchWindow w(6, n);
    for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = g(rng);
    w.row(1).array() += side == ContactSide::right ? 1.0 : -1.0;
    d.windows.push_back(w);
    d.labels.push_back(side);
  }
  return d;
}

ClassifierConfig quick_config() {
  ClassifierConfig c;
  c.max_epochs = 30;
  return c;
}

const GeneratedDataset &sim_dataset() {
  static const GeneratedDataset d = [] {
    DatasetConfig cfg;
    cfg.window_seconds = 1.0;
    return generate_dataset(sim::spawn_scenario("training"), cfg);
  }();
  return d;
}

const TrainResult &sim_model() {
  static const TrainResult r = train_classifier(sim_dataset().data, 0.5);
  return r;
}

} // namespace

TEST_CASE("window helpers") {
  CHECK(samples_for(10.0) == 290);
  CHECK(samples_for(0.05) == 1);
  CHECK(samples_for(0.0) == 1);
  CHECK(samples_for(0.1) == 3);

  std::vector<TimedWrench> log;
  for (int i = 0; i < 5; ++i) log.push_back({i / 29.0, Wrench{Vec3(i, -i, 0), Vec3(0, 0, i)}});
  const WrenchWindow mid = make_window(log, 1, 3);
  CHECK(mid.cols() == 3);
  CHECK(mid(0, 0) == 1.0);
  CHECK(mid(5, 2) == 3.0);
  CHECK(latest_window(log, 2)(0, 1) == 4.0);
  CHECK(latest_window(log, 99).cols() == 5);

  const WrenchWindow w = random_window(7, 1);
  const WrenchWindow m = mirror_window(w);
  CHECK(m.row(1) == -w.row(1));
  CHECK(m.row(3) == -w.row(3));
  CHECK(m.row(5) == -w.row(5));
  CHECK(m.row(0) == w.row(0));
  CHECK(mirror_window(m) == w);
}

TEST_CASE("config validation and layout") {
  ClassifierConfig c;
  CHECK(c.block_channels() == 32);
  c.kernel_widths = {};
  CHECK_THROWS_AS(c.validate(), Error);
  c = ClassifierConfig{};
  c.kernel_widths = {4};
  CHECK_THROWS_AS(c.validate(), Error);
  c = ClassifierConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  ClassifierConfig round = ClassifierConfig{};
  round.seed = 5;
  CHECK(json(round).get<ClassifierConfig>() == round);
}

TEST_CASE("probabilities are a distribution at every supported length") {
  const ClassifierModel model{ClassifierConfig{}};
  for (int n : {1, 3, 29, 290}) {
    const Eigen::Vector2d p = model.probabilities(random_window(n, static_cast<std::uint64_t>(n)));
    CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p.minCoeff() >= 0.0);
    const Prediction pred = predict(model, random_window(n, 2));
    CHECK(pred.confidence >= 0.5);
  }
  try {
    model.probabilities(WrenchWindow(6, 0));
    FAIL("expected EmptyWindow");
  } catch (const Error &e) {
    CHECK(e.kind() == "EmptyWindow");
  }
}

TEST_CASE("analytic gradients match central differences") {
  const ClassifierModel model(testing::tiny_classifier_config());
  for (int n : {1, 4, 12}) {
    for (ContactSide side : {ContactSide::left, ContactSide::right}) {
      const testing::GradCheck g =
          testing::gradient_check(model, random_window(n, 100 + n), side, 1.0, 1e-4, 3, 1e-5);
      CHECK(g.checked == model.parameter_count());
      CHECK(g.worst_relative < 1e-3);
    }
  }
  SUBCASE("full-size model, sampled weights") {
    const ClassifierModel big{ClassifierConfig{}};
    const testing::GradCheck g = testing::gradient_check(big, random_window(15, 9), ContactSide::right, 0.01, 1e-4, 4, 1e-5);
    CHECK(g.checked > 50);
    CHECK(g.worst_relative < 1e-3);
  }
}

TEST_CASE("a separable toy problem is learned within five epochs") {
  ClassifierConfig c;
  c.max_epochs = 5;
  const TrainResult r = train_classifier(toy_dataset(40, 15, 3), 0.5, c);
  CHECK(r.epochs <= 5);
  CHECK(r.test_accuracy == 1.0);
  CHECK(r.loss_history.back() < r.loss_history.front());
}

TEST_CASE("training is deterministic") {
  const LabeledDataset d = toy_dataset(30, 15, 4);
  const TrainResult a = train_classifier(d, 0.5, quick_config());
  const TrainResult b = train_classifier(d, 0.5, quick_config());
  CHECK(a.model.theta() == b.model.theta());
  CHECK(a.loss_history == b.loss_history);
}

TEST_CASE("split and normalization use only the training windows") {
  const LabeledDataset d = toy_dataset(50, 10, 5);
  const Split s = split_dataset(d);
  CHECK(s.train.size() == 40);
  CHECK(s.test.size() == 10);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  for (std::size_t i : s.test) CHECK(all.insert(i).second);
  CHECK(all.size() == d.size());

  const TrainResult r = train_classifier(d, 0.2, quick_config());
  const auto [mean, sd] = channel_statistics(d, r.split.train, 6);
  CHECK(r.model.channel_mean() == mean);
  CHECK(r.model.channel_std() == sd);
  const auto [all_mean, all_sd] = channel_statistics(d, s.test, 6);
  CHECK_FALSE(r.model.channel_mean() == all_mean);

  LabeledDataset flat = d;
  for (auto &w : flat.windows) w.row(2).setConstant(3.0);
  CHECK(channel_statistics(flat, s.train, 10).second[2] == 1.0);
}

TEST_CASE("training errors") {
  const auto kind = [](auto &&f) {
    try {
      f();
    } catch (const Error &e) {
      return e.kind();
    }
    return std::string("none");
  };
  LabeledDataset one_class = toy_dataset(30, 10, 6);
  std::fill(one_class.labels.begin(), one_class.labels.end(), ContactSide::left);
  CHECK(kind([&] { train_classifier(one_class, 0.2); }) == "ClassMissing");
  CHECK(kind([&] { train_classifier(toy_dataset(10, 10, 7), 0.2); }) == "InvalidDataset");
  CHECK(kind([&] { train_classifier(toy_dataset(30, 10, 7), 1.0); }) == "DurationTooLong");
  CHECK(kind([&] { history_length_sweep(toy_dataset(30, 10, 7), {0.1, 5.0}); }) == "DurationTooLong");
  LabeledDataset ragged = toy_dataset(30, 10, 8);
  ragged.labels.pop_back();
  CHECK(kind([&] { ragged.validate(); }) == "InvalidDataset");
}

TEST_CASE("model json round trip") {
  const TrainResult r = train_classifier(toy_dataset(30, 15, 9), 0.5, quick_config());
  const json j = model_to_json(r.model);
  const ClassifierModel back = model_from_json(json::parse(j.dump()));
  CHECK(back.theta() == r.model.theta());
  CHECK(back.channel_mean() == r.model.channel_mean());
  CHECK(back.window_seconds == r.model.window_seconds);
  const WrenchWindow w = random_window(15, 10);
  CHECK(back.probabilities(w) == r.model.probabilities(w));

  json bad = j;
  bad["version"] = 99;
  CHECK_THROWS_AS(model_from_json(bad), Error);
  bad = j;
  bad["theta"].erase(0);
  CHECK_THROWS_AS(model_from_json(bad), Error);
}

TEST_CASE("sweep csv") {
  std::ostringstream out;
  write_sweep_csv(out, {{0.5, 15, 1.0, 12}, {0.05, 1, 0.9375, 40}});
  CHECK(out.str() == "duration_s,history_length,accuracy_pct,epochs\n0.5,15,100,12\n0.05,1,93.75,40\n");
  CHECK(default_sweep_durations() == std::vector<double>{10, 5, 2, 1, 0.5, 0.2, 0.1, 0.05});
}

TEST_CASE("trial plans alternate sides within the configured ranges") {
  DatasetConfig cfg;
  const auto plans = plan_trials(cfg);
  REQUIRE(plans.size() == 80);
  for (std::size_t i = 0; i < plans.size(); ++i) {
    CHECK(expected_side(plans[i]) == (i % 2 ? ContactSide::right : ContactSide::left));
    CHECK(std::abs(plans[i].lateral_offset) >= cfg.offset_min);
    CHECK(std::abs(plans[i].lateral_offset) <= cfg.offset_max);
    CHECK(plans[i].noise_std >= cfg.noise_min);
    CHECK(plans[i].noise_std <= cfg.noise_max);
  }
  CHECK(expected_side(mirror_plan(plans[0])) == flip(expected_side(plans[0])));
  cfg.offset_min = 0.0;
  CHECK_THROWS_AS(plan_trials(cfg), Error);
}

TEST_CASE("noise-free mirrored trials give mirrored windows") {
  DatasetConfig cfg;
  cfg.window_seconds = 2.0;
  const sim::Scenario scenario = sim::spawn_scenario("training");
  for (TrialPlan plan : plan_trials(cfg)) {
    plan.noise_std = 0.0;
    const auto a = run_trial(scenario, plan, cfg);
    const auto b = run_trial(scenario, mirror_plan(plan), cfg);
    REQUIRE(a);
    REQUIRE(b);
    CHECK(b->label == flip(a->label));
    CHECK((mirror_window(a->window) - b->window).cwiseAbs().maxCoeff() < 1e-9);
    if (plan.start_dx > 0.002) break;
  }
}

TEST_CASE("generated dataset and its files") {
  const GeneratedDataset &d = sim_dataset();
  CHECK(d.data.size() + static_cast<std::size_t>(d.discarded) == 80);
  CHECK(d.data.size() >= 76);
  CHECK(d.data.min_length() == 29);
  for (std::size_t i = 0; i < d.data.size(); ++i) {
    CHECK(d.data.labels[i] == expected_side(d.plans[i]));
    CHECK(d.data.windows[i].col(0).head<3>().norm() >= 1.0);
  }

  const fs::path dir = fs::temp_directory_path() / "pressfit_test_dataset";
  fs::remove_all(dir);
  DatasetConfig cfg;
  cfg.window_seconds = 1.0;
  save_dataset(dir.string(), d, cfg);
  const GeneratedDataset back = load_dataset(dir.string());
  CHECK(back.data.windows == d.data.windows);
  CHECK(back.data.labels == d.data.labels);
  CHECK(back.discarded == d.discarded);
  CHECK(back.plans.size() == d.plans.size());
  CHECK(back.plans[3].noise_seed == d.plans[3].noise_seed);
  fs::remove(dir / "window_000.csv");
  CHECK_THROWS_AS(load_dataset(dir.string()), Error);
  fs::remove_all(dir);
}

TEST_CASE("sim-trained classifier is accurate and mirror consistent") {
  const TrainResult &r = sim_model();
  CHECK(r.test_accuracy >= 0.95);
  const LabeledDataset &d = sim_dataset().data;
  const std::size_t n = static_cast<std::size_t>(samples_for(0.5));
  std::size_t consistent = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const WrenchWindow w = d.windows[i].leftCols(static_cast<Eigen::Index>(n));
    consistent += predict(r.model, mirror_window(w)).side == flip(predict(r.model, w).side);
  }
  CHECK(static_cast<double>(consistent) / static_cast<double>(d.size()) >= 0.95);

  const LabeledDataset mirrored = augment_with_mirror(d);
  CHECK(mirrored.size() == 2 * d.size());
  CHECK(mirrored.labels[d.size()] == flip(d.labels[0]));
}
