#pragma once

// JSON configuration for the three commands, run manifests and checkpoints.
// Every field has a default; unknown keys are rejected. A manifest written by
// a previous run is accepted wherever a config is.

#include "jcl/nn.hpp"
#include "jcl/theory.hpp"
#include "jcl/trainer.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace jcl::config {

struct BoundsConfig {
  std::size_t instances = 1000;
  std::size_t hypotheses_per_instance = 3;
  std::size_t max_points = 8;
  std::size_t max_hypotheses = 32;
  std::string values = "mixed";  // binary | grid | mixed
  int grid_steps = 4;
  std::uint64_t seed = 20240601;

  theory::BoundSuiteOptions suite_options(unsigned threads) const;
};

struct InfoConfig {
  std::size_t js_instances = 500;
  std::size_t js_components = 4;
  std::size_t js_alphabet = 6;
  std::size_t dpi_chains = 1000;
  std::size_t dpi_max_alphabet = 5;
  std::size_t infonce_joints = 20;
  std::size_t infonce_alphabet = 4;
  std::size_t infonce_trials = 200;
  std::vector<std::size_t> infonce_k = {1, 8, 64};
  // Added to the JS side of the identity check; nonzero only for fault injection.
  double js_perturbation = 0.0;
  std::uint64_t seed = 20240601;
};

using trainer::TrainConfig;

// Parse from JSON text. Throws ConfigError on malformed input, unknown keys or
// out-of-range values.
BoundsConfig parse_bounds_config(const std::string& text);
InfoConfig parse_info_config(const std::string& text);
TrainConfig parse_train_config(const std::string& text);

// Fully materialized JSON (two-space indent, stable key order).
std::string to_json(const BoundsConfig& cfg);
std::string to_json(const InfoConfig& cfg);
std::string to_json(const TrainConfig& cfg);

struct RunManifest {
  std::string command;
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::string version;
  std::string resolved_config;  // JSON text from to_json
};

std::string manifest_json(const RunManifest& manifest);

// Flat name -> row-major array map plus the architecture and running statistics.
std::string checkpoint_json(const nn::MlpState& state);

// Write to path.tmp and rename over path.
void write_file_atomic(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

}  // namespace jcl::config
