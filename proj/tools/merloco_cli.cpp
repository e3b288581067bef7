// Command-line front end: terrain generation, shape-space fields, the
// experiment recipes and manifest replay.
//
// Exit codes: 0 success, 2 configuration error, 3 numeric failure.
#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "merloco/config.hpp"
#include "merloco/harness.hpp"
#include "merloco/terrain.hpp"

using namespace merloco;

int main(int argc, char** argv) {
  CLI::App app{"Gait design and quasi-static locomotion toolkit for multi-legged "
               "elongate robots"};
  app.require_subcommand(1);

  std::string config_path;
  ExperimentSpec spec;
  app.add_option("--config", config_path, "configuration file (JSON)");
  app.add_option("--seed", spec.master_seed, "master seed for ensembles");
  app.add_option("--out", spec.out_dir, "output directory");
  app.add_option("--jobs", spec.jobs, "worker threads for ensemble cells");
  app.add_option("--format", spec.format, "emission format: csv | json | svg")
      ->check(CLI::IsMember({"csv", "json", "svg"}));
  app.add_option("--seeds", spec.seeds, "ensemble size per cell");

  // gen-terrain
  auto* gen = app.add_subcommand("gen-terrain", "generate a stepfield");
  gen->fallthrough();
  uint64_t g_seed = 1;
  double g_mean = 6.0, g_std = 2.0, g_increment = 1.0;
  int g_cols = 16, g_rows = 8;
  std::string g_out = "stepfield.txt";
  gen->add_option("--seed", g_seed, "generator seed");
  gen->add_option("--mean", g_mean, "height mean, cm");
  gen->add_option("--std", g_std, "height standard deviation, cm");
  gen->add_option("--increment", g_increment, "height quantization, cm");
  gen->add_option("--cols", g_cols, "blocks along the travel axis");
  gen->add_option("--rows", g_rows, "blocks across");
  gen->add_option("--out", g_out, "output file");

  // recipes
  const std::vector<std::string> recipes = {"heightfield", "sweep-amplitude", "sweep-legs",
                                            "tradeoff",    "vwave-cdf",       "siso",
                                            "cleg",        "bound-check"};
  for (const auto& r : recipes) app.add_subcommand(r)->fallthrough();

  // replay
  auto* rep = app.add_subcommand("replay", "re-run a manifest and verify outputs");
  rep->fallthrough();
  std::string manifest_path;
  rep->add_option("manifest", manifest_path, "manifest.json produced by a recipe")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (!config_path.empty()) spec.config = load_config(config_path);

    if (gen->parsed()) {
      const Stepfield field =
          generate_stepfield(g_seed, g_mean, g_std, g_increment, g_cols, g_rows);
      save_stepfield(field, g_out);
      std::printf("wrote %s (rugosity %.4f)\n", g_out.c_str(), rugosity(field));
      return 0;
    }
    if (rep->parsed()) {
      if (replay(manifest_path, spec.out_dir)) {
        std::printf("replay OK: outputs match %s\n", manifest_path.c_str());
        return 0;
      }
      std::fprintf(stderr, "replay MISMATCH against %s\n", manifest_path.c_str());
      return 3;
    }
    for (const auto& r : recipes) {
      if (app.get_subcommand(r)->parsed()) {
        const RunManifest m = run_recipe(r, spec);
        std::printf("recipe %s -> %s (%zu files)\n", r.c_str(), spec.out_dir.c_str(),
                    m.files.size());
        return 0;
      }
    }
    std::fprintf(stderr, "no subcommand executed\n");
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
