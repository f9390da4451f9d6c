#pragma once

#include "pressfit/harness/harness.hpp"

#include <string>

namespace pressfit::testing {

inline std::string fixture(const std::string &name) { return std::string(PRESSFIT_FIXTURES_DIR) + "/" + name; }

// Policy trained with the fixture teacher script plus the default 0.5 s
// contact classifier, built once per test binary.
inline const harness::Artifacts &shared_artifacts() {
  static const harness::Artifacts artifacts = [] {
    harness::TrainingSpec spec;
    spec.script = harness::load_teacher_script(fixture("teacher_script.json"));
    return harness::Artifacts{harness::train_policy(spec), harness::train_contact_classifier({}).model};
  }();
  return artifacts;
}

} // namespace pressfit::testing
