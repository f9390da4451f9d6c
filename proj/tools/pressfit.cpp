#include "pressfit/harness/harness.hpp"
#include "pressfit/server/session.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

using namespace pressfit;

namespace {

// Defaults read from a JSON file with optional sections
// {"policy", "monitor", "classifier", "dataset", "window_seconds"}.
struct Config {
  policy::PolicyConfig policy;
  runtime::MonitorConfig monitor;
  classifier::ClassifierConfig classifier;
  classifier::DatasetConfig dataset;
  double window_seconds = 0.5;
};

Config load_config(std::string path) {
  if (path.empty()) {
    const char *env = std::getenv("PRESSFIT_CONFIG");
    if (env != nullptr) path = env;
  }
  Config c;
  if (path.empty()) return c;
  const json j = read_json_file(path);
  try {
    if (j.contains("policy")) c.policy = j.at("policy").get<policy::PolicyConfig>();
    if (j.contains("monitor")) c.monitor = j.at("monitor").get<runtime::MonitorConfig>();
    if (j.contains("classifier")) c.classifier = j.at("classifier").get<classifier::ClassifierConfig>();
    if (j.contains("dataset")) c.dataset = j.at("dataset").get<classifier::DatasetConfig>();
    c.window_seconds = j.value("window_seconds", c.window_seconds);
  } catch (const json::exception &e) {
    throw Error("MalformedFile", path + ": " + e.what());
  }
  c.monitor.validate();
  c.classifier.validate();
  c.dataset.validate();
  return c;
}

classifier::GeneratedDataset obtain_dataset(const std::string &dir, const std::string &preset,
                                            const classifier::DatasetConfig &cfg) {
  if (!dir.empty()) return classifier::load_dataset(dir);
  auto data = classifier::generate_dataset(sim::spawn_scenario(preset), cfg,
                                           [](const std::string &w) { std::cerr << "warning: " << w << '\n'; });
  std::cerr << "generated " << data.data.size() << " windows (" << data.discarded << " discarded)\n";
  return data;
}

std::atomic<bool> interrupted{false};

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Press-fit policy learning lab"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file (default: $PRESSFIT_CONFIG)");

  // train
  auto *train = app.add_subcommand("train", "Fit the policy from a demonstration and a teacher script");
  std::string train_out, script_path, demo_path;
  train->add_option("--out", train_out, "Artifacts directory (writes policy.json)")->required();
  train->add_option("--script", script_path, "Teacher script JSON (default: no corrections)");
  train->add_option("--demo", demo_path, "Demonstration CSV t,x,y,z (default: built-in profile)");

  // classify-train
  auto *ctrain = app.add_subcommand("classify-train", "Train the contact-side classifier");
  std::string ctrain_out, dataset_dir, save_dataset_dir, dataset_preset = "training";
  std::optional<double> window;
  std::optional<int> trials;
  std::optional<std::uint64_t> dataset_seed;
  ctrain->add_option("--out", ctrain_out, "Artifacts directory (writes classifier.json)")->required();
  ctrain->add_option("--dataset", dataset_dir, "Load a dataset directory instead of generating one");
  ctrain->add_option("--save-dataset", save_dataset_dir, "Write the generated dataset here");
  ctrain->add_option("--preset", dataset_preset, "World used to generate collisions");
  ctrain->add_option("--window", window, "History length in seconds");
  ctrain->add_option("--trials", trials, "Generated collision trials");
  ctrain->add_option("--seed", dataset_seed, "Dataset and split seed");

  // sweep
  auto *sweep = app.add_subcommand("sweep", "Held-out accuracy per history length");
  std::string sweep_dataset, sweep_csv, sweep_preset = "training";
  std::vector<double> durations = classifier::default_sweep_durations();
  std::optional<int> sweep_trials;
  std::optional<std::uint64_t> sweep_seed;
  sweep->add_option("--dataset", sweep_dataset, "Dataset directory (default: generate)");
  sweep->add_option("--preset", sweep_preset, "World used to generate collisions");
  sweep->add_option("--durations", durations, "History lengths in seconds");
  sweep->add_option("--trials", sweep_trials, "Generated collision trials");
  sweep->add_option("--seed", sweep_seed, "Dataset and split seed");
  sweep->add_option("--out", sweep_csv, "CSV output file");

  // run
  auto *run = app.add_subcommand("run", "Run an experiment battery");
  std::string spec_path, artifacts_dir, battery, mode = "both", run_out;
  std::vector<std::string> presets;
  std::optional<int> run_trials, workers;
  std::optional<std::uint64_t> run_seed;
  bool no_records = false;
  run->add_option("--spec", spec_path, "Experiment spec JSON");
  run->add_option("--artifacts", artifacts_dir, "Directory with policy.json and classifier.json");
  run->add_option("--battery", battery, "start, goal or grasp")->check(CLI::IsMember({"start", "goal", "grasp"}));
  run->add_option("--preset", presets, "Preset name (repeatable)");
  run->add_option("--mode", mode, "ilosa, accifr or both")->check(CLI::IsMember({"ilosa", "accifr", "both"}));
  run->add_option("--trials", run_trials, "Trials per cell");
  run->add_option("--seed", run_seed, "Master seed");
  run->add_option("--out", run_out, "Output directory for reports and run records");
  run->add_option("--workers", workers, "Worker threads (0: all cores)");
  run->add_flag("--no-records", no_records, "Skip per-trial run records");

  // report
  auto *report = app.add_subcommand("report", "Rebuild a report from saved run records");
  std::string report_dir;
  bool report_csv = false;
  report->add_option("--dir", report_dir, "Experiment output directory")->required();
  report->add_flag("--csv", report_csv, "Print CSV instead of the table");

  // serve
  auto *serve = app.add_subcommand("serve", "Teaching session over WebSocket");
  server::TeachServer::Options serve_opts;
  serve->add_option("--host", serve_opts.host, "Listen address");
  serve->add_option("--port", serve_opts.port, "Listen port");
  serve->add_option("--artifacts", serve_opts.session.artifacts_dir, "Artifacts directory");
  serve->add_option("--static", serve_opts.static_dir, "Directory served for plain HTTP GETs");
  serve->add_option("--tick-period", serve_opts.session.tick_period, "Wall seconds per control tick");

  CLI11_PARSE(app, argc, argv);

  try {
    const Config cfg = load_config(config_path);

    if (*train) {
      harness::TrainingSpec spec;
      spec.policy = cfg.policy;
      if (!script_path.empty()) spec.script = harness::load_teacher_script(script_path);
      policy::Policy p;
      if (demo_path.empty()) {
        p = harness::train_policy(spec);
      } else {
        std::ifstream in(demo_path);
        if (!in) throw Error("IoError", "cannot read " + demo_path);
        const Demonstration demo = policy::record_demonstration(policy::read_demo_csv(in), spec.policy);
        p = harness::scripted_teacher(policy::train(demo, spec.policy), spec.script, cfg.monitor);
      }
      std::filesystem::create_directories(train_out);
      write_json_file(train_out + "/policy.json", policy::policy_to_json(p));
      const auto &k = p.gp_dx[0].kernel();
      std::printf("policy: %ld samples, length scales %.4g %.4g %.4g m, wrote %s/policy.json\n",
                  static_cast<long>(p.gp_dx[0].size()), k.length_scales[0], k.length_scales[1], k.length_scales[2],
                  train_out.c_str());
    } else if (*ctrain) {
      classifier::DatasetConfig dcfg = cfg.dataset;
      if (trials) dcfg.trials = *trials;
      if (dataset_seed) dcfg.seed = *dataset_seed;
      const auto data = obtain_dataset(dataset_dir, dataset_preset, dcfg);
      if (!save_dataset_dir.empty()) classifier::save_dataset(save_dataset_dir, data, dcfg);
      const auto result = classifier::train_classifier(data.data, window.value_or(cfg.window_seconds), cfg.classifier);
      std::filesystem::create_directories(ctrain_out);
      write_json_file(ctrain_out + "/classifier.json", classifier::model_to_json(result.model));
      std::printf("classifier: %.1f%% held-out accuracy after %d epochs, wrote %s/classifier.json\n",
                  100.0 * result.test_accuracy, result.epochs, ctrain_out.c_str());
    } else if (*sweep) {
      classifier::DatasetConfig dcfg = cfg.dataset;
      if (sweep_trials) dcfg.trials = *sweep_trials;
      if (sweep_seed) dcfg.seed = *sweep_seed;
      const auto data = obtain_dataset(sweep_dataset, sweep_preset, dcfg);
      const auto rows = classifier::history_length_sweep(data.data, durations, cfg.classifier);
      classifier::write_sweep_csv(std::cout, rows);
      if (!sweep_csv.empty()) {
        std::ofstream out(sweep_csv);
        if (!out) throw Error("IoError", "cannot write " + sweep_csv);
        classifier::write_sweep_csv(out, rows);
      }
    } else if (*run) {
      harness::ExperimentSpec spec;
      if (!spec_path.empty()) spec = read_json_file(spec_path).get<harness::ExperimentSpec>();
      else spec.monitor = cfg.monitor;
      if (!battery.empty()) {
        spec.name = battery;
        spec.presets = harness::battery_presets(battery);
      }
      if (!presets.empty()) spec.presets = presets;
      if (mode == "ilosa") spec.modes = {runtime::Mode::ilosa};
      if (mode == "accifr") spec.modes = {runtime::Mode::accifr};
      if (run_trials) spec.trials_per_cell = *run_trials;
      if (run_seed) spec.master_seed = *run_seed;
      if (!run_out.empty()) spec.output_dir = run_out;
      if (!artifacts_dir.empty()) spec.artifacts_dir = artifacts_dir;
      if (workers) spec.workers = *workers;
      if (no_records) spec.save_records = false;
      const auto result = harness::run_experiment(spec);
      std::cout << harness::report_table(result, spec.monitor);
      for (const auto &v : result.violations) std::cerr << "invariant violated: " << v << '\n';
      if (!result.violations.empty()) return 1;
    } else if (*report) {
      const auto result = harness::report_from_records(report_dir);
      std::cout << (report_csv ? harness::report_csv(result) : harness::report_table(result));
    } else if (*serve) {
      serve_opts.session.monitor = cfg.monitor;
      serve_opts.session.policy = cfg.policy;
      server::TeachServer srv(serve_opts);
      srv.start();
      std::signal(SIGINT, [](int) { interrupted = true; });
      std::signal(SIGTERM, [](int) { interrupted = true; });
      std::fprintf(stderr, "listening on ws://%s:%d/\n", serve_opts.host.c_str(), srv.port());
      while (!interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      srv.stop();
    }
  } catch (const Error &e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << '\n';
    return 2;
  }
  return 0;
}
