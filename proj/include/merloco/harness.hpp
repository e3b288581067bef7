#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "merloco/config.hpp"

// Experiment recipes, deterministic emission (CSV/JSON/SVG) and run
// manifests for bit-exact replay.
namespace merloco {

// Column-oriented numeric table; the emission unit for every recipe.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  void add_row(std::initializer_list<double> values) { rows.emplace_back(values); }
  nlohmann::json to_json() const;
};

Table table_from_json(const nlohmann::json& j);

// Deterministic emission: identical data produces identical bytes.
void write_csv(const Table& table, const std::string& path);
Table read_csv(const std::string& path);
// Static polyline rendering of y columns against the x column.
void write_svg(const Table& table, size_t x_column, const std::vector<size_t>& y_columns,
               const std::string& path, const std::string& title = "");

uint64_t fnv1a_file(const std::string& path);

// Per-cycle series of one trial as CSV (stride, duty, gait trace, slip
// totals per cycle).
void write_trial_csv(const TrialRecord& record, const std::string& path);

// Seed for one ensemble cell: splitmix64 over the master seed and cell
// index.
uint64_t derive_seed(uint64_t master_seed, uint64_t cell_index);

struct ExperimentSpec {
  std::string recipe;
  SimulationConfig config;
  uint64_t master_seed = 12345;
  int seeds = 30;  // ensemble size per cell
  std::string out_dir = "out";
  std::string format = "csv";  // csv | json | svg (csv always written)
  int jobs = 1;

  // Optional sweep axes; recipes fall back to their defaults when empty.
  std::vector<double> amplitude_grid;
  std::vector<int> n_list;
  std::vector<double> ap_list;

  nlohmann::json to_json() const;
};

ExperimentSpec experiment_from_json(const nlohmann::json& j);

struct RunManifest {
  std::string tool_version;
  std::string recipe;
  std::string spec_hash;  // FNV-1a of the resolved spec document
  std::string timestamp;
  nlohmann::json spec;
  std::vector<std::pair<std::string, std::string>> files;  // name, content hash

  void save(const std::string& path) const;
  static RunManifest load(const std::string& path);
};

inline constexpr const char* kToolVersion = "0.1.0";

// Each recipe writes its CSV outputs plus manifest.json into spec.out_dir
// and returns the manifest.
RunManifest recipe_amplitude_sweep(const ExperimentSpec& spec);
RunManifest recipe_leg_saturation(const ExperimentSpec& spec);
RunManifest recipe_robustness_tradeoff(const ExperimentSpec& spec);
RunManifest recipe_vertical_wave(const ExperimentSpec& spec);
RunManifest recipe_siso(const ExperimentSpec& spec);
RunManifest recipe_cleg(const ExperimentSpec& spec);
RunManifest recipe_bound_check(const ExperimentSpec& spec);
RunManifest recipe_heightfield(const ExperimentSpec& spec);

RunManifest run_recipe(const std::string& name, const ExperimentSpec& spec);

// Re-runs the recipe recorded in a manifest into out_dir and verifies all
// regenerated files hash-match the manifest. Returns false on mismatch.
bool replay(const std::string& manifest_path, const std::string& out_dir);

// Deterministic parallel map: results are assembled by index regardless of
// scheduling.
void parallel_for(int count, int jobs, const std::function<void(int)>& fn);

}  // namespace merloco
