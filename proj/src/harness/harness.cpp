#include "pressfit/harness/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>
#include <thread>

namespace pressfit::harness {

namespace fs = std::filesystem;

namespace {

constexpr int kScriptVersion = 1;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string &s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string record_stem(const std::string &dir, runtime::Mode mode, const std::string &preset, int trial) {
  char name[32];
  std::snprintf(name, sizeof(name), "trial_%02d", trial);
  return (fs::path(dir) / "records" / std::string(runtime::to_string(mode)) / preset / name).string();
}

struct TrialOutcome {
  RunRecord record;
  std::vector<std::string> violations;
};

std::vector<std::string> check_invariants(const runtime::Episode &ep, const sim::Scenario &scenario,
                                          runtime::Mode mode, const runtime::MonitorConfig &monitor) {
  std::vector<std::string> out;
  if (mode == runtime::Mode::ilosa) {
    const bool dirty = !ep.record.collisions.empty() ||
                       std::any_of(ep.ticks.begin(), ep.ticks.end(), [](const runtime::TickTrace &t) {
                         return t.event == runtime::TickEvent::collision_detected ||
                                t.event == runtime::TickEvent::recovering;
                       });
    if (dirty) out.push_back("ilosa run contains collision or recovery events");
  }
  for (std::size_t i = 0; i < ep.ticks.size(); ++i) {
    if (ep.ticks[i].event != runtime::TickEvent::recovering) continue;
    const bool preceded = i > 0 && ep.ticks[i - 1].event == runtime::TickEvent::collision_detected &&
                          ep.ticks[i - 1].predicted.has_value();
    if (!preceded) out.push_back("recovery at tick " + std::to_string(i) + " without a labeled detection");
  }
  if (runtime::replay_success(ep.record, scenario, mode, monitor) != ep.record.success) {
    out.push_back("success flag disagrees with the final logged tick");
  }
  return out;
}

void write_text(const fs::path &path, const std::string &text) { write_text_file(path.string(), text); }

} // namespace

std::vector<TimedPose> demo_trajectory(const DemoProfile &profile) {
  if (profile.intervals < 1 || !(profile.dt > 0.0) || !(profile.time_constant > 0.0)) {
    throw Error("InvalidConfig", "demo profile needs intervals >= 1 and positive dt and time constant");
  }
  std::vector<TimedPose> out;
  for (int i = 0; i <= profile.intervals; ++i) {
    const double t = profile.dt * i;
    const double s = 1.0 - std::exp(-t / profile.time_constant);
    Pose p(profile.start + s * (profile.goal - profile.start));
    p.orientation = sim::ee_orientation();
    out.push_back({t, p});
  }
  return out;
}

void TeacherScript::validate() const {
  if (version != kScriptVersion) throw Error("MalformedFile", "unsupported teacher script version");
  if (ticks < 0) throw Error("MalformedFile", "teacher script ticks must be non-negative");
  long prev = -1;
  for (const auto &e : entries) {
    if (e.tick <= prev || e.tick >= ticks) {
      throw Error("MalformedFile", "teacher script entries must be strictly increasing and below ticks");
    }
    if (!e.offsets.allFinite() || e.offsets.cwiseAbs().maxCoeff() > 1.0) {
      throw Error("MalformedFile", "teacher script offsets must lie in [-1, 1]");
    }
    prev = e.tick;
  }
}

void to_json(json &j, const TeacherScript &s) {
  json entries = json::array();
  for (const auto &e : s.entries) entries.push_back({{"tick", e.tick}, {"offsets", vec_to_json(e.offsets)}});
  j = json{{"version", s.version}, {"preset", s.preset}, {"ticks", s.ticks}, {"entries", entries}};
}

void from_json(const json &j, TeacherScript &s) {
  try {
    s = TeacherScript{};
    s.version = j.at("version").get<int>();
    s.preset = j.value("preset", std::string("training"));
    s.ticks = j.at("ticks").get<long>();
    for (const auto &e : j.at("entries")) s.entries.push_back({e.at("tick").get<long>(), vec3_from_json(e.at("offsets"))});
  } catch (const json::exception &e) {
    throw Error("MalformedFile", std::string("teacher script: ") + e.what());
  }
  s.validate();
}

TeacherScript load_teacher_script(const std::string &path) { return read_json_file(path).get<TeacherScript>(); }

ScriptedTeacher::ScriptedTeacher(TeacherScript script) : script_(std::move(script)) { script_.validate(); }

std::optional<Feedback> ScriptedTeacher::feedback_at(long tick) const {
  if (tick < 0 || tick >= script_.ticks) {
    throw Error("ScriptExhausted", "teacher script ends at tick " + std::to_string(script_.ticks));
  }
  const auto it = std::lower_bound(script_.entries.begin(), script_.entries.end(), tick,
                                   [](const ScriptEntry &e, long t) { return e.tick < t; });
  if (it == script_.entries.end() || it->tick != tick) return std::nullopt;
  return Feedback::capped(it->offsets, FeedbackSource::human);
}

policy::Policy scripted_teacher(const policy::Policy &policy, const TeacherScript &script,
                                const runtime::MonitorConfig &monitor) {
  const ScriptedTeacher teacher(script);
  if (script.ticks == 0) return policy;
  sim::Scenario scenario = sim::spawn_scenario(script.preset);
  scenario.world.sensor_noise_std = 0.0;
  runtime::EpisodeOptions options;
  options.mode = runtime::Mode::ilosa;
  options.monitor = monitor;
  options.monitor.max_ticks = script.ticks;
  options.keep_ticks = false;
  options.stop_on_success = false;
  runtime::EpisodeHooks hooks;
  hooks.teacher = [&](long tick, const runtime::TickTrace &) { return teacher.feedback_at(tick); };
  return runtime::run_episode(policy, scenario, options, {}, hooks).final_policy;
}

policy::Policy train_policy(const TrainingSpec &spec) {
  const Demonstration demo = policy::record_demonstration(demo_trajectory(spec.demo), spec.policy);
  return scripted_teacher(policy::train(demo, spec.policy), spec.script);
}

classifier::TrainResult train_contact_classifier(const ClassifierTrainingSpec &spec) {
  const auto generated = classifier::generate_dataset(sim::spawn_scenario(spec.preset), spec.dataset);
  return classifier::train_classifier(generated.data, spec.window_seconds, spec.model);
}

void save_artifacts(const std::string &dir, const Artifacts &artifacts) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("IoError", "cannot create " + dir + ": " + ec.message());
  write_json_file((fs::path(dir) / "policy.json").string(), policy::policy_to_json(artifacts.policy));
  write_json_file((fs::path(dir) / "classifier.json").string(), classifier::model_to_json(artifacts.classifier));
}

Artifacts load_artifacts(const std::string &dir) {
  const fs::path policy_path = fs::path(dir) / "policy.json";
  const fs::path model_path = fs::path(dir) / "classifier.json";
  for (const auto &p : {policy_path, model_path}) {
    if (dir.empty() || !fs::exists(p)) throw Error("MissingArtifacts", "missing " + p.string());
  }
  return {policy::policy_from_json(read_json_file(policy_path.string())),
          classifier::model_from_json(read_json_file(model_path.string()))};
}

runtime::ContactPredictor make_predictor(const classifier::ClassifierModel &model) {
  return [&model](const classifier::WrenchWindow &w) { return classifier::predict(model, w); };
}

void ExperimentSpec::validate() const {
  if (trials_per_cell < 1) throw Error("InvalidConfig", "trials_per_cell must be at least 1");
  if (presets.empty() || modes.empty()) throw Error("InvalidConfig", "experiment needs presets and modes");
  if (noise_min < 0.0 || noise_max < noise_min || start_jitter < 0.0 || workers < 0) {
    throw Error("InvalidConfig", "noise range, jitter and workers must be non-negative");
  }
  const auto known = sim::preset_names();
  for (const auto &p : presets) {
    if (std::find(known.begin(), known.end(), p) == known.end()) throw Error("InvalidConfig", "unknown preset " + p);
  }
  monitor.validate();
}

void to_json(json &j, const ExperimentSpec &s) {
  json modes = json::array();
  for (auto m : s.modes) modes.push_back(std::string(runtime::to_string(m)));
  j = json{{"name", s.name},
           {"modes", modes},
           {"presets", s.presets},
           {"trials_per_cell", s.trials_per_cell},
           {"master_seed", s.master_seed},
           {"output_dir", s.output_dir},
           {"artifacts_dir", s.artifacts_dir},
           {"monitor", s.monitor},
           {"start_jitter", s.start_jitter},
           {"noise_min", s.noise_min},
           {"noise_max", s.noise_max},
           {"save_records", s.save_records}};
}

void from_json(const json &j, ExperimentSpec &s) {
  s = ExperimentSpec{};
  try {
    s.name = j.value("name", s.name);
    if (j.contains("modes")) {
      s.modes.clear();
      for (const auto &m : j.at("modes")) s.modes.push_back(runtime::mode_from_string(m.get<std::string>()));
    }
    if (j.contains("presets")) s.presets = j.at("presets").get<std::vector<std::string>>();
    s.trials_per_cell = j.value("trials_per_cell", s.trials_per_cell);
    s.master_seed = j.value("master_seed", s.master_seed);
    s.output_dir = j.value("output_dir", s.output_dir);
    s.artifacts_dir = j.value("artifacts_dir", s.artifacts_dir);
    if (j.contains("monitor")) s.monitor = j.at("monitor").get<runtime::MonitorConfig>();
    s.start_jitter = j.value("start_jitter", s.start_jitter);
    s.noise_min = j.value("noise_min", s.noise_min);
    s.noise_max = j.value("noise_max", s.noise_max);
    s.save_records = j.value("save_records", s.save_records);
    s.workers = j.value("workers", s.workers);
  } catch (const json::exception &e) {
    throw Error("MalformedFile", std::string("experiment spec: ") + e.what());
  }
}

const CellResult *ExperimentReport::cell(runtime::Mode mode, const std::string &preset) const {
  for (const auto &c : cells) {
    if (c.mode == mode && c.preset == preset) return &c;
  }
  return nullptr;
}

std::uint64_t trial_seed(std::uint64_t master_seed, const std::string &preset, int trial) {
  return splitmix64(splitmix64(master_seed ^ fnv1a(preset)) + static_cast<std::uint64_t>(trial));
}

ExperimentReport run_experiment(const ExperimentSpec &spec, const Artifacts &artifacts) {
  spec.validate();
  const runtime::ContactPredictor predictor = make_predictor(artifacts.classifier);

  struct Job {
    std::size_t cell;
    runtime::Mode mode;
    std::string preset;
    int trial;
  };
  ExperimentReport report;
  report.name = spec.name;
  report.master_seed = spec.master_seed;
  report.trials_per_cell = spec.trials_per_cell;
  std::vector<Job> jobs;
  for (auto mode : spec.modes) {
    for (const auto &preset : spec.presets) {
      report.cells.push_back({mode, preset, spec.trials_per_cell, 0, 0});
      for (int k = 0; k < spec.trials_per_cell; ++k) jobs.push_back({report.cells.size() - 1, mode, preset, k});
    }
  }

  std::vector<TrialOutcome> outcomes(jobs.size());
  std::vector<std::string> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const Job &job = jobs[i];
      try {
        const std::uint64_t seed = trial_seed(spec.master_seed, job.preset, job.trial);
        std::mt19937_64 rng(seed);
        sim::Scenario scenario = sim::spawn_scenario(job.preset);
        scenario.world.sensor_noise_std = std::uniform_real_distribution<double>(spec.noise_min, spec.noise_max)(rng);
        runtime::EpisodeOptions options;
        options.mode = job.mode;
        options.monitor = spec.monitor;
        options.seed = rng();
        options.start_jitter = spec.start_jitter;
        runtime::Episode ep = runtime::run_episode(artifacts.policy, scenario, options, predictor);
        outcomes[i].violations = check_invariants(ep, scenario, job.mode, spec.monitor);
        outcomes[i].record = std::move(ep.record);
      } catch (const std::exception &e) {
        errors[i] = e.what();
      }
    }
  };
  const int n_workers = std::max(1, spec.workers > 0 ? spec.workers : static_cast<int>(std::thread::hardware_concurrency()));
  std::vector<std::thread> pool;
  for (int w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto &t : pool) t.join();
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (!errors[i].empty()) {
      throw Error("TrialFailed", jobs[i].preset + " trial " + std::to_string(jobs[i].trial) + ": " + errors[i]);
    }
  }

  for (std::size_t i = 0; i < jobs.size(); ++i) {
    CellResult &cell = report.cells[jobs[i].cell];
    cell.successes += outcomes[i].record.success ? 1 : 0;
    cell.collisions += static_cast<long>(outcomes[i].record.collisions.size());
    for (const auto &v : outcomes[i].violations) {
      report.violations.push_back(std::string(runtime::to_string(jobs[i].mode)) + "/" + jobs[i].preset + "/" +
                                  std::to_string(jobs[i].trial) + ": " + v);
    }
  }

  if (!spec.output_dir.empty()) {
    std::error_code ec;
    fs::create_directories(spec.output_dir, ec);
    if (ec) throw Error("IoError", "cannot create " + spec.output_dir + ": " + ec.message());
    write_json_file((fs::path(spec.output_dir) / "experiment.json").string(), spec);
    write_text(fs::path(spec.output_dir) / "report.csv", report_csv(report));
    write_text(fs::path(spec.output_dir) / "report.txt", report_table(report, spec.monitor));
    if (spec.save_records) {
      for (std::size_t i = 0; i < jobs.size(); ++i) {
        const std::string stem = record_stem(spec.output_dir, jobs[i].mode, jobs[i].preset, jobs[i].trial);
        fs::create_directories(fs::path(stem).parent_path(), ec);
        if (ec) throw Error("IoError", "cannot create " + fs::path(stem).parent_path().string());
        runtime::save_run_record(stem, outcomes[i].record);
      }
    }
  }
  return report;
}

ExperimentReport run_experiment(const ExperimentSpec &spec) {
  return run_experiment(spec, load_artifacts(spec.artifacts_dir));
}

std::string report_csv(const ExperimentReport &report) {
  std::ostringstream out;
  out << "mode,preset,trials,success,collisions\n";
  for (const auto &c : report.cells) {
    out << runtime::to_string(c.mode) << ',' << c.preset << ',' << c.trials << ',' << c.successes << ','
        << c.collisions << '\n';
  }
  return out.str();
}

std::string report_table(const ExperimentReport &report, const runtime::MonitorConfig &monitor) {
  std::vector<runtime::Mode> modes;
  std::vector<std::string> presets;
  for (const auto &c : report.cells) {
    if (std::find(modes.begin(), modes.end(), c.mode) == modes.end()) modes.push_back(c.mode);
    if (std::find(presets.begin(), presets.end(), c.preset) == presets.end()) presets.push_back(c.preset);
  }
  std::ostringstream out;
  out << report.name << " (master seed " << report.master_seed << ", " << report.trials_per_cell
      << " trials per cell)\n";
  out << "success: accifr = within " << format_double(monitor.d_th) << " m of the seat with press force >= "
      << format_double(monitor.f_th) << " N; ilosa = distance only\n\n";
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%-20s", "preset");
  out << buf;
  for (auto m : modes) {
    std::snprintf(buf, sizeof(buf), " | %8s %10s", std::string(runtime::to_string(m)).c_str(), "collisions");
    out << buf;
  }
  out << '\n' << std::string(20 + modes.size() * 22, '-') << '\n';
  for (const auto &p : presets) {
    std::snprintf(buf, sizeof(buf), "%-20s", p.c_str());
    out << buf;
    for (auto m : modes) {
      const CellResult *c = report.cell(m, p);
      const std::string score = c ? std::to_string(c->successes) + "/" + std::to_string(c->trials) : "-";
      std::snprintf(buf, sizeof(buf), " | %8s %10ld", score.c_str(), c ? c->collisions : 0L);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

ExperimentReport report_from_records(const std::string &output_dir) {
  const fs::path spec_path = fs::path(output_dir) / "experiment.json";
  if (!fs::exists(spec_path)) throw Error("MissingArtifacts", "missing " + spec_path.string());
  const ExperimentSpec spec = read_json_file(spec_path.string()).get<ExperimentSpec>();
  ExperimentReport report;
  report.name = spec.name;
  report.master_seed = spec.master_seed;
  report.trials_per_cell = spec.trials_per_cell;
  for (auto mode : spec.modes) {
    for (const auto &preset : spec.presets) {
      CellResult cell{mode, preset, spec.trials_per_cell, 0, 0};
      for (int k = 0; k < spec.trials_per_cell; ++k) {
        const std::string path = record_stem(output_dir, mode, preset, k) + ".json";
        if (!fs::exists(path)) throw Error("MissingArtifacts", "missing record " + path);
        const RunRecord rec = read_json_file(path).get<RunRecord>();
        cell.successes += rec.success ? 1 : 0;
        cell.collisions += static_cast<long>(rec.collisions.size());
      }
      report.cells.push_back(cell);
    }
  }
  return report;
}

std::vector<std::string> battery_presets(const std::string &battery) {
  std::string prefix;
  if (battery == "start") prefix = "start_variation_";
  else if (battery == "goal") prefix = "goal_";
  else if (battery == "grasp") prefix = "grasp_";
  else throw Error("InvalidConfig", "unknown battery '" + battery + "' (start, goal, grasp)");
  std::vector<std::string> out;
  for (int i = 1; i <= 5; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

} // namespace pressfit::harness
