#pragma once

// Experiment drivers behind the command-line tool. Each driver consumes a
// validated JSON config, runs one repetition per seed, writes per-repetition
// CSV files plus an aggregate JSON and a manifest, and is bitwise
// reproducible: identical (config, seeds) produce identical bytes.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace cfml {

extern const std::vector<std::string> kExperimentIds;

// Merges `user_config` over the experiment's defaults, rejecting unknown keys
// (reported with their full path), wrong types, and out-of-range values.
nlohmann::json validate_config(const std::string& experiment,
                               const nlohmann::json& user_config);

// Default configuration (documents the schema).
nlohmann::json default_config(const std::string& experiment);

struct RunRequest {
  std::string experiment;
  nlohmann::json user_config;            // pre-validation
  std::string out_dir;
  std::vector<std::uint64_t> seed_override;  // empty: use config seeds
  bool smoke = false;
};

// Runs the experiment end to end; throws on any failure. Returns the list of
// files written (relative to out_dir), which is also recorded in the
// manifest.
std::vector<std::string> run_experiment(const RunRequest& req);

}  // namespace cfml
