#pragma once

#include <ostream>
#include <string>

#include "data.hpp"
#include "network.hpp"
#include "train.hpp"

namespace scnn {

// One config file drives a whole run: [model], [train], and [data] sections
// with keys named after the corresponding struct fields.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SynthSpec data;
};

// Strict INI: unknown sections or keys are usage errors with line numbers,
// as are malformed values.
RunConfig load_run_config(const std::string& path);

// `section.key=value` from the command line; wins over file values.
void apply_override(RunConfig& cfg, const std::string& assignment);

// Full snapshot with every key explicit; reloading it reproduces the run.
void write_resolved_config(const RunConfig& cfg, std::ostream& out);

}  // namespace scnn
