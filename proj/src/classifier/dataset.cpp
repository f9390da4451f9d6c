#include "pressfit/classifier/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

namespace pressfit::classifier {

namespace {

constexpr int kDatasetVersion = 1;

std::string window_file(std::size_t i) {
  char name[32];
  std::snprintf(name, sizeof(name), "window_%03zu.csv", i);
  return name;
}

void write_window_csv(const std::string &path, const WrenchWindow &w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("IoError", "cannot write " + path);
  out << "fx,fy,fz,tx,ty,tz\n";
  for (Eigen::Index t = 0; t < w.cols(); ++t) {
    for (Eigen::Index r = 0; r < 6; ++r) out << (r ? "," : "") << format_double(w(r, t));
    out << '\n';
  }
  if (!out) throw Error("IoError", "cannot write " + path);
}

WrenchWindow read_window_csv(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("IoError", "cannot read " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("fx,fy,fz,tx,ty,tz", 0) != 0) {
    throw Error("MalformedFile", path + ": expected header fx,fy,fz,tx,ty,tz");
  }
  std::vector<Vec6> cols;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::stringstream ss(line);
    Vec6 v;
    std::string cell;
    for (int r = 0; r < 6; ++r) {
      if (!std::getline(ss, cell, ',')) throw Error("MalformedFile", path + ": expected 6 columns");
      try {
        v[r] = std::stod(cell);
      } catch (const std::exception &) {
        throw Error("MalformedFile", path + ": bad number '" + cell + "'");
      }
    }
    cols.push_back(v);
  }
  WrenchWindow w(6, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t t = 0; t < cols.size(); ++t) w.col(static_cast<Eigen::Index>(t)) = cols[t];
  return w;
}

} // namespace

void DatasetConfig::validate() const {
  const bool ok = trials >= 1 && offset_min > 0.0 && offset_max >= offset_min && lead_min > 0.0 &&
                  lead_max >= lead_min && noise_min >= 0.0 && noise_max >= noise_min && start_jitter >= 0.0 &&
                  onset_force > 0.0 && window_seconds > 0.0 && max_approach_ticks > 0 && substeps > 0 &&
                  stiffness > 0.0;
  if (!ok) throw Error("InvalidConfig", "dataset config out of range");
}

std::vector<TrialPlan> plan_trials(const DatasetConfig &config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> offset(config.offset_min, config.offset_max);
  std::uniform_real_distribution<double> lead(config.lead_min, config.lead_max);
  std::uniform_real_distribution<double> noise(config.noise_min, config.noise_max);
  std::uniform_real_distribution<double> jitter(-config.start_jitter, config.start_jitter);
  std::vector<TrialPlan> plans;
  for (int i = 0; i < config.trials; ++i) {
    TrialPlan p;
    p.lateral_offset = (i % 2 == 0 ? -1.0 : 1.0) * offset(rng);
    p.lead = lead(rng);
    p.noise_std = noise(rng);
    p.start_dx = jitter(rng);
    p.noise_seed = rng();
    plans.push_back(p);
  }
  return plans;
}

TrialPlan mirror_plan(const TrialPlan &plan) {
  TrialPlan m = plan;
  m.lateral_offset = -plan.lateral_offset;
  return m;
}

ContactSide expected_side(const TrialPlan &plan) {
  return plan.lateral_offset > 0.0 ? ContactSide::right : ContactSide::left;
}

std::optional<TrialWindow> run_trial(const sim::Scenario &scenario, const TrialPlan &plan,
                                     const DatasetConfig &config) {
  sim::WorldConfig world = scenario.world;
  world.sensor_noise_std = plan.noise_std;
  std::mt19937_64 rng(plan.noise_seed);
  const double aim_y = scenario.goal.position.y() + plan.lateral_offset;

  sim::SimState s;
  s.ee_pose = scenario.start;
  s.ee_pose.position.x() += plan.start_dx;
  s.ee_pose.position.y() = aim_y;
  s.attractor = s.ee_pose;
  s.stiffness = Vec3::Constant(config.stiffness);

  const auto tick = [&] {
    s.attractor.position = Vec3(s.ee_pose.position.x() + plan.lead, aim_y, s.ee_pose.position.z());
    for (int i = 0; i < config.substeps; ++i) s = sim::step(s, world, &rng);
  };

  long onset = -1;
  for (long t = 0; t < config.max_approach_ticks; ++t) {
    tick();
    if (s.wrench.force.norm() >= config.onset_force) {
      onset = t;
      break;
    }
  }
  if (onset < 0) return std::nullopt;

  const int n = samples_for(config.window_seconds);
  TrialWindow out;
  out.plan = plan;
  out.label = expected_side(plan);
  out.window.resize(6, n);
  out.window.col(0) << s.wrench.force, s.wrench.torque;
  for (int i = 1; i < n; ++i) {
    tick();
    out.window.col(i) << s.wrench.force, s.wrench.torque;
  }
  return out;
}

GeneratedDataset generate_dataset(const sim::Scenario &scenario, const DatasetConfig &config,
                                  const std::function<void(const std::string &)> &warn) {
  GeneratedDataset out;
  out.data.split_seed = config.seed;
  const std::vector<TrialPlan> plans = plan_trials(config);
  for (std::size_t i = 0; i < plans.size(); ++i) {
    auto trial = run_trial(scenario, plans[i], config);
    if (!trial) {
      ++out.discarded;
      if (warn) warn("NoCollision: trial " + std::to_string(i) + " discarded");
      continue;
    }
    out.data.windows.push_back(std::move(trial->window));
    out.data.labels.push_back(trial->label);
    out.plans.push_back(trial->plan);
  }
  return out;
}

LabeledDataset augment_with_mirror(const LabeledDataset &data) {
  LabeledDataset out = data;
  for (std::size_t i = 0; i < data.size(); ++i) {
    out.windows.push_back(mirror_window(data.windows[i]));
    out.labels.push_back(flip(data.labels[i]));
  }
  return out;
}

void save_dataset(const std::string &dir, const GeneratedDataset &dataset, const DatasetConfig &config) {
  dataset.data.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("IoError", "cannot create " + dir + ": " + ec.message());
  json windows = json::array();
  for (std::size_t i = 0; i < dataset.data.size(); ++i) {
    const std::string file = window_file(i);
    write_window_csv(dir + "/" + file, dataset.data.windows[i]);
    json entry{{"file", file},
               {"label", std::string(to_string(dataset.data.labels[i]))},
               {"duration", static_cast<double>(dataset.data.windows[i].cols()) / kSampleRate}};
    if (i < dataset.plans.size()) entry["plan"] = dataset.plans[i];
    windows.push_back(std::move(entry));
  }
  write_json_file(dir + "/manifest.json", json{{"version", kDatasetVersion},
                                               {"sample_rate", kSampleRate},
                                               {"split_seed", dataset.data.split_seed},
                                               {"discarded", dataset.discarded},
                                               {"config", config},
                                               {"windows", windows}});
}

GeneratedDataset load_dataset(const std::string &dir) {
  const json manifest = read_json_file(dir + "/manifest.json");
  GeneratedDataset out;
  try {
    if (manifest.value("version", 0) != kDatasetVersion) throw Error("MalformedFile", "unsupported dataset version");
    out.data.split_seed = manifest.at("split_seed").get<std::uint64_t>();
    out.discarded = manifest.value("discarded", 0);
    for (const json &entry : manifest.at("windows")) {
      out.data.windows.push_back(read_window_csv(dir + "/" + entry.at("file").get<std::string>()));
      out.data.labels.push_back(contact_side_from_string(entry.at("label").get<std::string>()));
      if (entry.contains("plan")) out.plans.push_back(entry.at("plan").get<TrialPlan>());
    }
  } catch (const json::exception &e) {
    throw Error("MalformedFile", dir + "/manifest.json: " + e.what());
  }
  out.data.validate();
  return out;
}

void to_json(json &j, const DatasetConfig &c) {
  j = json{{"trials", c.trials},
           {"seed", c.seed},
           {"offset_min", c.offset_min},
           {"offset_max", c.offset_max},
           {"lead_min", c.lead_min},
           {"lead_max", c.lead_max},
           {"noise_min", c.noise_min},
           {"noise_max", c.noise_max},
           {"start_jitter", c.start_jitter},
           {"onset_force", c.onset_force},
           {"window_seconds", c.window_seconds},
           {"max_approach_ticks", c.max_approach_ticks},
           {"substeps", c.substeps},
           {"stiffness", c.stiffness}};
}

void from_json(const json &j, DatasetConfig &c) {
  c = DatasetConfig{};
  const auto read = [&](const char *key, auto &field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  read("trials", c.trials);
  read("seed", c.seed);
  read("offset_min", c.offset_min);
  read("offset_max", c.offset_max);
  read("lead_min", c.lead_min);
  read("lead_max", c.lead_max);
  read("noise_min", c.noise_min);
  read("noise_max", c.noise_max);
  read("start_jitter", c.start_jitter);
  read("onset_force", c.onset_force);
  read("window_seconds", c.window_seconds);
  read("max_approach_ticks", c.max_approach_ticks);
  read("substeps", c.substeps);
  read("stiffness", c.stiffness);
}

void to_json(json &j, const TrialPlan &p) {
  j = json{{"lateral_offset", p.lateral_offset},
           {"lead", p.lead},
           {"noise_std", p.noise_std},
           {"start_dx", p.start_dx},
           {"noise_seed", p.noise_seed}};
}

void from_json(const json &j, TrialPlan &p) {
  p.lateral_offset = j.at("lateral_offset").get<double>();
  p.lead = j.at("lead").get<double>();
  p.noise_std = j.at("noise_std").get<double>();
  p.start_dx = j.at("start_dx").get<double>();
  p.noise_seed = j.at("noise_seed").get<std::uint64_t>();
}

} // namespace pressfit::classifier
