#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "merloco/config.hpp"
#include "merloco/harness.hpp"
#include "merloco/simulator.hpp"

using namespace merloco;

TEST_CASE("config parsing applies defaults and rejects unknown keys") {
  const SimulationConfig cfg = parse_config(nlohmann::json::object());
  CHECK(cfg.morphology.n_pairs == 6);
  CHECK(cfg.gait.shoulder_amplitude == doctest::Approx(M_PI / 12.0));
  CHECK(cfg.gait.clearance > 0.0);

  CHECK_THROWS_AS(parse_config({{"morphologyy", {}}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"morphology", {{"legs", 4}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"gait", {{"amplitude", 1.0}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"terrain", {{"kind", "lava"}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"controller", {{"kind", "mimo"}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"controller", {{"siso", {{"p", 1.0}}}}}}), ConfigError);

  const SimulationConfig s = parse_config(
      {{"controller",
        {{"kind", "siso"}, {"siso", {{"gain", 2.5}, {"desired_duty", 0.45}}}}}});
  CHECK(s.controller.kind == "siso");
  CHECK(s.controller.siso_gain == doctest::Approx(2.5));
  CHECK(s.controller.siso_desired_duty == doctest::Approx(0.45));

  // Bad values surface as config errors too.
  CHECK_THROWS_AS(parse_config({{"morphology", {{"n_pairs", 1}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"gait", {{"desired_duty", 0.9}}}}), ConfigError);
}

TEST_CASE("config round-trips through json") {
  SimulationConfig cfg = parse_config(nlohmann::json::object());
  cfg.gait.body_amplitude = 0.66;
  cfg.controller.kind = "stop_and_wait";
  const SimulationConfig back = parse_config(config_to_json(cfg));
  CHECK(back.gait.body_amplitude == doctest::Approx(0.66));
  CHECK(back.controller.kind == "stop_and_wait");
  CHECK(back.morphology.module_spacing == cfg.morphology.module_spacing);
}

TEST_CASE("csv emission is deterministic and handles empty tables") {
  Table t;
  t.columns = {"a", "b"};
  write_csv(t, "/tmp/merloco_empty.csv");
  std::ifstream in("/tmp/merloco_empty.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "a,b");
  CHECK_FALSE(std::getline(in, line));

  t.add_row({1.0, 2.5});
  t.add_row({0.1234567890123, -7});
  write_csv(t, "/tmp/merloco_t1.csv");
  write_csv(t, "/tmp/merloco_t2.csv");
  CHECK(fnv1a_file("/tmp/merloco_t1.csv") == fnv1a_file("/tmp/merloco_t2.csv"));

  const Table back = read_csv("/tmp/merloco_t1.csv");
  CHECK(back.columns == t.columns);
  REQUIRE(back.rows.size() == 2);
  CHECK(back.rows[1][0] == doctest::Approx(t.rows[1][0]).epsilon(1e-9));

  const Table jt = table_from_json(t.to_json());
  CHECK(jt.columns == t.columns);
  CHECK(jt.rows == t.rows);
}

TEST_CASE("seed derivation is stable and spreads") {
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  CHECK(derive_seed(12345, 7) == derive_seed(12345, 7));
}

TEST_CASE("a recipe writes a manifest that replays bit-exact") {
  ExperimentSpec spec;
  spec.out_dir = "/tmp/merloco_recipe_test";
  spec.n_list = {4, 6};
  spec.jobs = 2;
  std::filesystem::remove_all(spec.out_dir);
  const RunManifest m = recipe_leg_saturation(spec);
  CHECK(m.files.size() == 1);
  CHECK(std::filesystem::exists("/tmp/merloco_recipe_test/leg_saturation.csv"));
  CHECK(std::filesystem::exists("/tmp/merloco_recipe_test/manifest.json"));

  CHECK(replay("/tmp/merloco_recipe_test/manifest.json", "/tmp/merloco_recipe_replay"));
  CHECK(fnv1a_file("/tmp/merloco_recipe_test/leg_saturation.csv") ==
        fnv1a_file("/tmp/merloco_recipe_replay/leg_saturation.csv"));
}

TEST_CASE("svg and json emission modes") {
  ExperimentSpec spec;
  spec.out_dir = "/tmp/merloco_svg_test";
  spec.n_list = {6};
  spec.format = "svg";
  std::filesystem::remove_all(spec.out_dir);
  recipe_leg_saturation(spec);
  CHECK(std::filesystem::exists("/tmp/merloco_svg_test/leg_saturation.svg"));

  spec.format = "json";
  spec.out_dir = "/tmp/merloco_json_test";
  std::filesystem::remove_all(spec.out_dir);
  recipe_leg_saturation(spec);
  const Table t =
      table_from_json(nlohmann::json::parse(std::ifstream("/tmp/merloco_json_test/leg_saturation.json")));
  CHECK(t.columns.size() == 7);
  CHECK(t.rows.size() == 1);
}

TEST_CASE("trial records export their per-cycle series") {
  const RobotMorphology m;
  GaitProgram g = default_gait(m);
  g.body_amplitude = 0.7;
  const auto ctrl = make_open_loop();
  const TrialRecord rec =
      run_trial(m, g, flat_terrain(), *ctrl, 3, 128, 0, {}, Pose2{0, 40, 0, 0});

  write_trial_csv(rec, "/tmp/merloco_trial.csv");
  const Table t = read_csv("/tmp/merloco_trial.csv");
  REQUIRE(t.rows.size() == 3);
  CHECK(t.rows[2][1] == doctest::Approx(rec.cycles[2].stride_cm));

  // JSON round-trips to an equal in-memory record.
  const TrialRecord back = trial_record_from_json(rec.to_json());
  CHECK(back.to_json().dump() == rec.to_json().dump());
}

TEST_CASE("heightfield recipe persists reloadable fields") {
  ExperimentSpec spec;
  spec.out_dir = "/tmp/merloco_hf_test";
  std::filesystem::remove_all(spec.out_dir);
  recipe_heightfield(spec);
  const HeightField hf = load_height_field("/tmp/merloco_hf_test/height_x.txt");
  CHECK(hf.grid.n == 61);
  const ConnectionField cf =
      load_connection_field("/tmp/merloco_hf_test/connection_field.txt");
  CHECK(cf.values.size() == 62u * 62u);
}
