#pragma once

#include <memory>
#include <string>

#include "json.hpp"
#include "merloco/control.hpp"
#include "merloco/morphology.hpp"
#include "merloco/simulator.hpp"
#include "merloco/terrain.hpp"

// Human-readable configuration documents (JSON key/value trees). All angles
// are radians, all lengths cm. Unknown keys are rejected with ConfigError.
namespace merloco {

struct TerrainConfig {
  enum class Kind { Flat, Generate, File };
  Kind kind = Kind::Flat;
  uint64_t seed = 1;
  double mean = 6.0;
  double std_dev = 2.0;
  double increment = 1.0;
  int cols = 16;
  int rows = 8;
  double block_size = 10.0;
  std::string path;

  Stepfield build() const;
};

struct ControllerConfig {
  std::string kind = "open_loop";  // open_loop | siso | stop_and_wait | table_mimo
  double siso_gain = kSisoDefaultGain;
  double siso_desired_duty = 0.5;
  std::string table_path;
};

struct TrialConfig {
  int n_cycles = 3;
  int steps_per_cycle = kDefaultStepsPerCycle;
  uint64_t seed = 0;
};

struct SimulationConfig {
  RobotMorphology morphology;
  GaitProgram gait = default_gait(RobotMorphology{});
  TerrainConfig terrain;
  ContactModeConfig contact;
  ControllerConfig controller;
  TrialConfig trial;
};

SimulationConfig parse_config(const nlohmann::json& doc);
SimulationConfig load_config(const std::string& path);
nlohmann::json config_to_json(const SimulationConfig& cfg);

std::unique_ptr<Controller> build_controller(const ControllerConfig& cfg,
                                             const RobotMorphology& morph);

}  // namespace merloco
