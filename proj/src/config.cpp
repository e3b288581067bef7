#include "merloco/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace merloco {

namespace {

void check_keys(const nlohmann::json& obj, const std::set<std::string>& allowed,
                const std::string& context) {
  if (!obj.is_object()) throw ConfigError(context + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError(context + ": unknown key '" + key + "'");
  }
}

template <typename T>
T get_or(const nlohmann::json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

Stepfield TerrainConfig::build() const {
  switch (kind) {
    case Kind::Flat:
      return flat_terrain(cols, rows, block_size);
    case Kind::Generate:
      return generate_stepfield(seed, mean, std_dev, increment, cols, rows, block_size);
    case Kind::File:
      return load_stepfield(path);
  }
  throw ConfigError("terrain: invalid kind");
}

SimulationConfig parse_config(const nlohmann::json& doc) {
  check_keys(doc, {"morphology", "gait", "terrain", "contact", "controller", "trial"},
             "config");
  SimulationConfig cfg;

  if (doc.contains("morphology")) {
    const auto& m = doc.at("morphology");
    check_keys(m, {"n_pairs", "leg_length", "module_spacing", "shoulder_amplitude", "foot"},
               "morphology");
    cfg.morphology.n_pairs = get_or(m, "n_pairs", cfg.morphology.n_pairs);
    cfg.morphology.leg_length = get_or(m, "leg_length", cfg.morphology.leg_length);
    cfg.morphology.module_spacing = get_or(m, "module_spacing", cfg.morphology.module_spacing);
    cfg.morphology.shoulder_amplitude =
        get_or(m, "shoulder_amplitude", cfg.morphology.shoulder_amplitude);
    if (m.contains("foot")) {
      const auto& f = m.at("foot");
      check_keys(f, {"kind", "arc_length", "width"}, "morphology.foot");
      const std::string kind = get_or<std::string>(f, "kind", "point");
      if (kind == "point") {
        cfg.morphology.foot = FootGeometry::point();
      } else if (kind == "c_arc") {
        cfg.morphology.foot = FootGeometry::c_arc(get_or(f, "arc_length", 12.0),
                                                  get_or(f, "width", 3.0));
      } else {
        throw ConfigError("morphology.foot: kind must be 'point' or 'c_arc'");
      }
    }
  }
  cfg.morphology.validate();

  cfg.gait = default_gait(cfg.morphology);
  if (doc.contains("gait")) {
    const auto& g = doc.at("gait");
    check_keys(g,
               {"spatial_period", "body_amplitude", "vertical_amplitude",
                "shoulder_amplitude", "period", "desired_duty", "clearance"},
               "gait");
    cfg.gait.spatial_period = get_or(g, "spatial_period", cfg.gait.spatial_period);
    cfg.gait.body_amplitude = get_or(g, "body_amplitude", cfg.gait.body_amplitude);
    cfg.gait.vertical_amplitude = get_or(g, "vertical_amplitude", cfg.gait.vertical_amplitude);
    cfg.gait.shoulder_amplitude = get_or(g, "shoulder_amplitude", cfg.gait.shoulder_amplitude);
    cfg.gait.period = get_or(g, "period", cfg.gait.period);
    cfg.gait.desired_duty = get_or(g, "desired_duty", cfg.gait.desired_duty);
    cfg.gait.clearance = get_or(g, "clearance", cfg.gait.clearance);
  }
  cfg.gait.validate();

  if (doc.contains("terrain")) {
    const auto& t = doc.at("terrain");
    check_keys(t,
               {"kind", "seed", "mean", "std", "increment", "cols", "rows", "block_size",
                "path"},
               "terrain");
    const std::string kind = get_or<std::string>(t, "kind", "flat");
    if (kind == "flat")
      cfg.terrain.kind = TerrainConfig::Kind::Flat;
    else if (kind == "generate")
      cfg.terrain.kind = TerrainConfig::Kind::Generate;
    else if (kind == "file")
      cfg.terrain.kind = TerrainConfig::Kind::File;
    else
      throw ConfigError("terrain: kind must be 'flat', 'generate' or 'file'");
    cfg.terrain.seed = get_or(t, "seed", cfg.terrain.seed);
    cfg.terrain.mean = get_or(t, "mean", cfg.terrain.mean);
    cfg.terrain.std_dev = get_or(t, "std", cfg.terrain.std_dev);
    cfg.terrain.increment = get_or(t, "increment", cfg.terrain.increment);
    cfg.terrain.cols = get_or(t, "cols", cfg.terrain.cols);
    cfg.terrain.rows = get_or(t, "rows", cfg.terrain.rows);
    cfg.terrain.block_size = get_or(t, "block_size", cfg.terrain.block_size);
    cfg.terrain.path = get_or<std::string>(t, "path", cfg.terrain.path);
    if (cfg.terrain.kind == TerrainConfig::Kind::File && cfg.terrain.path.empty())
      throw ConfigError("terrain: kind 'file' requires 'path'");
  }

  if (doc.contains("contact")) {
    const auto& c = doc.at("contact");
    check_keys(c, {"mode", "reach_window", "retry_reach_factor", "channel_loss"}, "contact");
    const std::string mode = get_or<std::string>(c, "mode", "geometric");
    if (mode == "geometric")
      cfg.contact.mode = ContactMode::Geometric;
    else if (mode == "channel")
      cfg.contact.mode = ContactMode::Channel;
    else
      throw ConfigError("contact: mode must be 'geometric' or 'channel'");
    cfg.contact.reach_window = get_or(c, "reach_window", cfg.contact.reach_window);
    cfg.contact.retry_reach_factor =
        get_or(c, "retry_reach_factor", cfg.contact.retry_reach_factor);
    if (c.contains("channel_loss")) {
      const auto& cl = c.at("channel_loss");
      check_keys(cl, {"rugosity", "p_loss"}, "contact.channel_loss");
      cfg.contact.channel_loss.rugosity = get_or(cl, "rugosity", std::vector<double>{});
      cfg.contact.channel_loss.p_loss = get_or(cl, "p_loss", std::vector<double>{});
      if (cfg.contact.channel_loss.rugosity.size() != cfg.contact.channel_loss.p_loss.size())
        throw ConfigError("contact.channel_loss: rugosity and p_loss lengths differ");
      for (double p : cfg.contact.channel_loss.p_loss)
        if (p < 0.0 || p > 1.0) throw ConfigError("contact.channel_loss: p outside [0, 1]");
    }
  }

  if (doc.contains("controller")) {
    const auto& c = doc.at("controller");
    check_keys(c, {"kind", "siso", "table_mimo"}, "controller");
    cfg.controller.kind = get_or<std::string>(c, "kind", cfg.controller.kind);
    if (cfg.controller.kind != "open_loop" && cfg.controller.kind != "siso" &&
        cfg.controller.kind != "stop_and_wait" && cfg.controller.kind != "table_mimo")
      throw ConfigError("controller: kind must be open_loop | siso | stop_and_wait | "
                        "table_mimo");
    if (c.contains("siso")) {
      const auto& s = c.at("siso");
      check_keys(s, {"gain", "desired_duty"}, "controller.siso");
      cfg.controller.siso_gain = get_or(s, "gain", cfg.controller.siso_gain);
      cfg.controller.siso_desired_duty =
          get_or(s, "desired_duty", cfg.controller.siso_desired_duty);
    }
    if (c.contains("table_mimo")) {
      const auto& t = c.at("table_mimo");
      check_keys(t, {"path"}, "controller.table_mimo");
      cfg.controller.table_path = get_or<std::string>(t, "path", cfg.controller.table_path);
    }
    if (cfg.controller.kind == "table_mimo" && cfg.controller.table_path.empty())
      throw ConfigError("controller: table_mimo requires table_mimo.path");
  }

  if (doc.contains("trial")) {
    const auto& t = doc.at("trial");
    check_keys(t, {"n_cycles", "steps_per_cycle", "seed"}, "trial");
    cfg.trial.n_cycles = get_or(t, "n_cycles", cfg.trial.n_cycles);
    cfg.trial.steps_per_cycle = get_or(t, "steps_per_cycle", cfg.trial.steps_per_cycle);
    cfg.trial.seed = get_or(t, "seed", cfg.trial.seed);
  }
  return cfg;
}

SimulationConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return parse_config(doc);
}

nlohmann::json config_to_json(const SimulationConfig& cfg) {
  nlohmann::json foot{{"kind", cfg.morphology.foot.kind == FootGeometry::Kind::Point
                                   ? "point"
                                   : "c_arc"}};
  if (cfg.morphology.foot.kind == FootGeometry::Kind::CArc) {
    foot["arc_length"] = cfg.morphology.foot.arc_length;
    foot["width"] = cfg.morphology.foot.width;
  }
  nlohmann::json terrain{{"kind", cfg.terrain.kind == TerrainConfig::Kind::Flat ? "flat"
                                  : cfg.terrain.kind == TerrainConfig::Kind::Generate
                                      ? "generate"
                                      : "file"},
                         {"seed", cfg.terrain.seed},
                         {"mean", cfg.terrain.mean},
                         {"std", cfg.terrain.std_dev},
                         {"increment", cfg.terrain.increment},
                         {"cols", cfg.terrain.cols},
                         {"rows", cfg.terrain.rows},
                         {"block_size", cfg.terrain.block_size}};
  if (!cfg.terrain.path.empty()) terrain["path"] = cfg.terrain.path;

  nlohmann::json contact{{"mode", cfg.contact.mode == ContactMode::Geometric ? "geometric"
                                                                             : "channel"},
                         {"reach_window", cfg.contact.reach_window},
                         {"retry_reach_factor", cfg.contact.retry_reach_factor}};
  if (!cfg.contact.channel_loss.rugosity.empty())
    contact["channel_loss"] = {{"rugosity", cfg.contact.channel_loss.rugosity},
                               {"p_loss", cfg.contact.channel_loss.p_loss}};

  nlohmann::json controller{{"kind", cfg.controller.kind},
                            {"siso",
                             {{"gain", cfg.controller.siso_gain},
                              {"desired_duty", cfg.controller.siso_desired_duty}}}};
  if (!cfg.controller.table_path.empty())
    controller["table_mimo"] = {{"path", cfg.controller.table_path}};

  return nlohmann::json{
      {"morphology",
       {{"n_pairs", cfg.morphology.n_pairs},
        {"leg_length", cfg.morphology.leg_length},
        {"module_spacing", cfg.morphology.module_spacing},
        {"shoulder_amplitude", cfg.morphology.shoulder_amplitude},
        {"foot", foot}}},
      {"gait",
       {{"spatial_period", cfg.gait.spatial_period},
        {"body_amplitude", cfg.gait.body_amplitude},
        {"vertical_amplitude", cfg.gait.vertical_amplitude},
        {"shoulder_amplitude", cfg.gait.shoulder_amplitude},
        {"period", cfg.gait.period},
        {"desired_duty", cfg.gait.desired_duty},
        {"clearance", cfg.gait.clearance}}},
      {"terrain", terrain},
      {"contact", contact},
      {"controller", controller},
      {"trial",
       {{"n_cycles", cfg.trial.n_cycles},
        {"steps_per_cycle", cfg.trial.steps_per_cycle},
        {"seed", cfg.trial.seed}}}};
}

std::unique_ptr<Controller> build_controller(const ControllerConfig& cfg,
                                             const RobotMorphology& morph) {
  if (cfg.kind == "open_loop") return make_open_loop();
  if (cfg.kind == "stop_and_wait") return make_stop_and_wait();
  const double cap = compute_A_SC(morph, default_gait(morph));
  if (cfg.kind == "siso") return make_siso(cfg.siso_gain, cfg.siso_desired_duty, cap);
  if (cfg.kind == "table_mimo") return make_table_mimo(cfg.table_path, cap);
  throw ConfigError("controller: unknown kind '" + cfg.kind + "'");
}

}  // namespace merloco
