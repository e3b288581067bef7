#include "merloco/harness.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <mutex>
#include <thread>

#include "merloco/geomech.hpp"
#include "merloco/simulator.hpp"

namespace merloco {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

// Start-pose jitter emulating random trial placement on the runway. The
// lateral offset stays small so the body's sweep remains on the field.
Pose2 jittered_start(const Stepfield& field, uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  const double u1 = static_cast<double>(rng() >> 11) * 0x1p-53;
  const double u2 = static_cast<double>(rng() >> 11) * 0x1p-53;
  const double lateral = std::min(2.0, field.width_y() / 25.0);
  return Pose2{5.0 * u1, field.width_y() / 2.0 + lateral * (2.0 * u2 - 1.0), 0.0, 0.0};
}

struct Stats {
  double mean = 0.0;
  double sd = 0.0;
  int n = 0;
};

Stats stats_of(const std::vector<double>& v) {
  Stats s;
  s.n = static_cast<int>(v.size());
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= v.size();
  for (double x : v) s.sd += (x - s.mean) * (x - s.mean);
  s.sd = std::sqrt(s.sd / v.size());
  return s;
}

double mean_cycle_stride(const TrialRecord& rec) {
  double total = 0.0;
  for (const auto& c : rec.cycles) total += c.stride_cm;
  return rec.cycles.empty() ? 0.0 : total / rec.cycles.size();
}

// Amplitude selection for one morphology/gait family: (A_SC, A_b*, A_b).
struct Selection {
  double a_sc = 0.0;
  double a_star = 0.0;
  double a_b = 0.0;
};

Selection select_for(const RobotMorphology& morph, const GaitProgram& gait) {
  Selection s;
  s.a_sc = compute_A_SC(morph, gait);
  const HeightField hf = height_function(morph, gait, 'x', GridSpec{});
  s.a_star = optimal_amplitude(hf);
  s.a_b = select_amplitude(s.a_sc, s.a_star);
  return s;
}

Vec3 gm_stride(const RobotMorphology& morph, const GaitProgram& gait, double amplitude,
               int samples = 129) {
  if (amplitude <= 0.0) return Vec3::Zero();
  std::vector<ShapePoint> path;
  path.reserve(static_cast<size_t>(samples) + 1);
  for (int k = 0; k <= samples; ++k) {
    const double t = 2.0 * M_PI * k / samples;
    path.push_back({amplitude * std::sin(t), amplitude * std::cos(t)});
  }
  GaitProgram g = gait;
  g.body_amplitude = amplitude;
  return stride_line_integral(morph, g, path);
}

std::filesystem::path ensure_out_dir(const ExperimentSpec& spec) {
  std::filesystem::path dir(spec.out_dir);
  std::filesystem::create_directories(dir);
  return dir;
}

class ManifestBuilder {
 public:
  ManifestBuilder(const ExperimentSpec& spec, std::string recipe)
      : spec_(spec), dir_(ensure_out_dir(spec)) {
    manifest_.recipe = std::move(recipe);
    manifest_.tool_version = kToolVersion;
    manifest_.spec = spec.to_json();
    manifest_.spec.at("recipe") = manifest_.recipe;
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(
                      std::hash<std::string>{}(manifest_.spec.dump())));
    manifest_.spec_hash = hash;
    char stamp[64];
    const std::time_t now = std::time(nullptr);
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    manifest_.timestamp = stamp;
  }

  void emit_table(const Table& table, const std::string& name, size_t x_col = 0,
                  std::vector<size_t> y_cols = {}) {
    const std::string csv = name + ".csv";
    write_csv(table, (dir_ / csv).string());
    record(csv);
    if (spec_.format == "json") {
      const std::string jname = name + ".json";
      std::ofstream out(dir_ / jname);
      out << table.to_json().dump(2) << "\n";
      record(jname);
    }
    if (spec_.format == "svg" && !table.rows.empty()) {
      if (y_cols.empty())
        for (size_t c = 1; c < table.columns.size(); ++c) y_cols.push_back(c);
      const std::string sname = name + ".svg";
      write_svg(table, x_col, y_cols, (dir_ / sname).string(), name);
      record(sname);
    }
  }

  void record(const std::string& name) {
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(fnv1a_file((dir_ / name).string())));
    manifest_.files.emplace_back(name, hash);
  }

  RunManifest finish() {
    manifest_.save((dir_ / "manifest.json").string());
    return manifest_;
  }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  ExperimentSpec spec_;
  std::filesystem::path dir_;
  RunManifest manifest_;
};

Stepfield terrain_for_seed(const TerrainConfig& base, uint64_t seed) {
  TerrainConfig t = base;
  t.seed = seed;
  return t.build();
}

TerrainConfig rugose_017() {
  TerrainConfig t;
  t.kind = TerrainConfig::Kind::Generate;
  t.mean = 6.0;
  t.std_dev = 2.0;
  t.increment = 1.0;
  t.cols = 16;
  t.rows = 8;
  return t;
}

TerrainConfig rugose_032() {
  TerrainConfig t;
  t.kind = TerrainConfig::Kind::Generate;
  t.mean = 6.25;
  t.std_dev = 4.0;
  t.increment = 2.5;
  t.cols = 30;
  t.rows = 5;
  return t;
}

}  // namespace

nlohmann::json Table::to_json() const {
  nlohmann::json j;
  j["columns"] = columns;
  j["rows"] = rows;
  return j;
}

Table table_from_json(const nlohmann::json& j) {
  Table t;
  t.columns = j.at("columns").get<std::vector<std::string>>();
  t.rows = j.at("rows").get<std::vector<std::vector<double>>>();
  return t;
}

void write_csv(const Table& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (size_t c = 0; c < table.columns.size(); ++c) {
    if (c) out << ',';
    out << table.columns[c];
  }
  out << '\n';
  for (const auto& row : table.rows) {
    for (size_t c = 0; c < row.size(); ++c) {
      if (c) out << ',';
      out << fmt(row[c]);
    }
    out << '\n';
  }
}

Table read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  Table t;
  std::string line;
  if (!std::getline(in, line)) return t;
  std::istringstream header(line);
  std::string cell;
  while (std::getline(header, cell, ',')) t.columns.push_back(cell);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_svg(const Table& table, size_t x_column, const std::vector<size_t>& y_columns,
               const std::string& path, const std::string& title) {
  constexpr int kW = 640, kH = 420, kMargin = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& row : table.rows) {
    xmin = std::min(xmin, row[x_column]);
    xmax = std::max(xmax, row[x_column]);
    for (size_t c : y_columns) {
      if (c >= row.size()) continue;
      if (std::isfinite(row[c])) {
        ymin = std::min(ymin, row[c]);
        ymax = std::max(ymax, row[c]);
      }
    }
  }
  if (!(xmax > xmin)) xmax = xmin + 1.0;
  if (!(ymax > ymin)) ymax = ymin + 1.0;
  const auto px = [&](double x) {
    return kMargin + (x - xmin) / (xmax - xmin) * (kW - 2 * kMargin);
  };
  const auto py = [&](double y) {
    return kH - kMargin - (y - ymin) / (ymax - ymin) * (kH - 2 * kMargin);
  };
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" viewBox=\"0 0 " << kW << ' ' << kH << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kW / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
      << title << "</text>\n";
  out << "<line x1=\"" << kMargin << "\" y1=\"" << kH - kMargin << "\" x2=\"" << kW - kMargin
      << "\" y2=\"" << kH - kMargin << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\"" << kMargin
      << "\" y2=\"" << kH - kMargin << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 12
      << "\" text-anchor=\"middle\" font-size=\"12\">" << table.columns[x_column]
      << "</text>\n";
  for (size_t yi = 0; yi < y_columns.size(); ++yi) {
    const size_t c = y_columns[yi];
    out << "<polyline fill=\"none\" stroke=\"" << kColors[yi % 8] << "\" points=\"";
    for (const auto& row : table.rows) {
      if (c >= row.size() || !std::isfinite(row[c])) continue;
      out << fmt(px(row[x_column])) << ',' << fmt(py(row[c])) << ' ';
    }
    out << "\"/>\n";
    out << "<text x=\"" << kW - kMargin + 4 << "\" y=\"" << 40 + 16 * yi
        << "\" font-size=\"11\" fill=\"" << kColors[yi % 8] << "\">" << table.columns[c]
        << "</text>\n";
  }
  out << "</svg>\n";
}

uint64_t fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot hash " + path);
  uint64_t h = 1469598103934665603ull;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
    if (!in) break;
  }
  return h;
}

void write_trial_csv(const TrialRecord& record, const std::string& path) {
  Table t;
  t.columns = {"cycle",     "stride_cm", "stride_bl", "duty",
               "A_p",       "A_b",       "A_leg",     "slip_fwd_cm",
               "slip_back_cm"};
  for (size_t c = 0; c < record.cycles.size(); ++c) {
    const CycleRecord& cr = record.cycles[c];
    double d1 = 0.0, d2 = 0.0;
    for (const SlipBudget& b : cr.budgets) {
      d1 += b.d1;
      d2 += b.d2;
    }
    t.add_row({static_cast<double>(c), cr.stride_cm, cr.stride_bl, cr.duty,
               cr.vertical_amplitude, cr.body_amplitude, cr.shoulder_amplitude, d1, d2});
  }
  write_csv(t, path);
}

uint64_t derive_seed(uint64_t master_seed, uint64_t cell_index) {
  uint64_t z = master_seed + 0x9e3779b97f4a7c15ull * (cell_index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

nlohmann::json ExperimentSpec::to_json() const {
  return nlohmann::json{{"recipe", recipe},
                        {"config", config_to_json(config)},
                        {"master_seed", master_seed},
                        {"seeds", seeds},
                        {"out_dir", out_dir},
                        {"format", format},
                        {"jobs", jobs},
                        {"amplitude_grid", amplitude_grid},
                        {"n_list", n_list},
                        {"ap_list", ap_list}};
}

ExperimentSpec experiment_from_json(const nlohmann::json& j) {
  ExperimentSpec s;
  s.recipe = j.at("recipe").get<std::string>();
  s.config = parse_config(j.at("config"));
  s.master_seed = j.at("master_seed").get<uint64_t>();
  s.seeds = j.at("seeds").get<int>();
  s.out_dir = j.at("out_dir").get<std::string>();
  s.format = j.at("format").get<std::string>();
  s.jobs = j.at("jobs").get<int>();
  s.amplitude_grid = j.at("amplitude_grid").get<std::vector<double>>();
  s.n_list = j.at("n_list").get<std::vector<int>>();
  s.ap_list = j.at("ap_list").get<std::vector<double>>();
  return s;
}

void RunManifest::save(const std::string& path) const {
  nlohmann::json j{{"tool_version", tool_version},
                   {"recipe", recipe},
                   {"spec_hash", spec_hash},
                   {"timestamp", timestamp},
                   {"spec", spec}};
  nlohmann::json files_json = nlohmann::json::array();
  for (const auto& [name, hash] : files)
    files_json.push_back({{"name", name}, {"hash", hash}});
  j["files"] = files_json;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

RunManifest RunManifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read manifest " + path);
  nlohmann::json j;
  in >> j;
  RunManifest m;
  m.tool_version = j.at("tool_version").get<std::string>();
  m.recipe = j.at("recipe").get<std::string>();
  m.spec_hash = j.at("spec_hash").get<std::string>();
  m.timestamp = j.at("timestamp").get<std::string>();
  m.spec = j.at("spec");
  for (const auto& f : j.at("files"))
    m.files.emplace_back(f.at("name").get<std::string>(), f.at("hash").get<std::string>());
  return m;
}

void parallel_for(int count, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, jobs);
  if (jobs == 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  const int workers = std::min(jobs, count);
  pool.reserve(static_cast<size_t>(workers));
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Recipes

RunManifest recipe_amplitude_sweep(const ExperimentSpec& spec) {
  ManifestBuilder mb(spec, "sweep-amplitude");
  const RobotMorphology& morph = spec.config.morphology;
  GaitProgram gait = spec.config.gait;

  const Selection sel = select_for(morph, gait);
  std::vector<double> grid = spec.amplitude_grid;
  if (grid.empty())
    for (double a = 0.0; a <= sel.a_sc + 0.25 + 1e-9; a += 0.025) grid.push_back(a);

  const Stepfield flat = flat_terrain();
  const auto open_loop = make_open_loop();
  std::vector<std::array<double, 2>> results(grid.size());
  parallel_for(static_cast<int>(grid.size()), spec.jobs, [&](int i) {
    const double ab = grid[static_cast<size_t>(i)];
    GaitProgram g = gait;
    g.body_amplitude = ab;
    const double gm = gm_stride(morph, gait, ab)[0];
    const TrialRecord rec = run_trial(morph, g, flat, *open_loop, 3,
                                      spec.config.trial.steps_per_cycle,
                                      derive_seed(spec.master_seed, i), spec.config.contact,
                                      Pose2{0.0, 40.0, 0.0, 0.0});
    results[static_cast<size_t>(i)] = {gm, mean_cycle_stride(rec)};
  });

  Table t;
  t.columns = {"A_b", "gm_stride_cm", "sim_stride_cm", "A_SC", "A_b_star"};
  for (size_t i = 0; i < grid.size(); ++i)
    t.add_row({grid[i], results[i][0], results[i][1], sel.a_sc, sel.a_star});
  mb.emit_table(t, "amplitude_sweep", 0, {1, 2});
  return mb.finish();
}

RunManifest recipe_leg_saturation(const ExperimentSpec& spec) {
  ManifestBuilder mb(spec, "sweep-legs");
  std::vector<int> n_list = spec.n_list;
  if (n_list.empty()) n_list = {3, 4, 5, 6, 7, 8, 9, 10};

  const Stepfield flat = flat_terrain();
  const auto open_loop = make_open_loop();
  std::vector<std::array<double, 6>> rows(n_list.size());
  parallel_for(static_cast<int>(n_list.size()), spec.jobs, [&](int i) {
    RobotMorphology morph = spec.config.morphology;
    morph.n_pairs = n_list[static_cast<size_t>(i)];
    GaitProgram gait = spec.config.gait;
    const Selection sel = select_for(morph, gait);
    GaitProgram g = gait;
    g.body_amplitude = sel.a_b;
    const double gm = gm_stride(morph, gait, sel.a_b)[0];
    const TrialRecord rec = run_trial(morph, g, flat, *open_loop, 3,
                                      spec.config.trial.steps_per_cycle,
                                      derive_seed(spec.master_seed, i), spec.config.contact,
                                      Pose2{0.0, 40.0, 0.0, 0.0});
    rows[static_cast<size_t>(i)] = {sel.a_sc,
                                    sel.a_star,
                                    sel.a_b,
                                    gm,
                                    mean_cycle_stride(rec),
                                    stride_upper_bound(morph.leg_length)};
  });

  Table t;
  t.columns = {"N",     "A_SC",          "A_b_star",      "A_b",
               "gm_cm", "sim_stride_cm", "bound_4l_cm"};
  for (size_t i = 0; i < n_list.size(); ++i)
    t.add_row({static_cast<double>(n_list[i]), rows[i][0], rows[i][1], rows[i][2],
               rows[i][3], rows[i][4], rows[i][5]});
  mb.emit_table(t, "leg_saturation", 0, {4, 5, 6});
  return mb.finish();
}

namespace {

// Time to 60 cm over an ensemble; censored trials are excluded from the
// mean and counted.
struct T60Cell {
  Stats stats;
  int censored = 0;
};

T60Cell t60_ensemble(const RobotMorphology& morph, const GaitProgram& gait,
                     const TerrainConfig& terrain_cfg, const ContactModeConfig& contact,
                     int seeds, uint64_t master, uint64_t cell, int jobs) {
  const int budget_cycles = 24;
  const auto open_loop = make_open_loop();
  std::vector<double> values(static_cast<size_t>(seeds),
                             std::numeric_limits<double>::quiet_NaN());
  parallel_for(seeds, jobs, [&](int s) {
    const uint64_t seed = derive_seed(master, cell * 1000 + s);
    const Stepfield field = terrain_cfg.kind == TerrainConfig::Kind::Flat
                                ? flat_terrain()
                                : terrain_for_seed(terrain_cfg, seed);
    const Pose2 start = seeds == 1 ? Pose2{0.0, field.width_y() / 2.0, 0.0, 0.0}
                                   : jittered_start(field, seed);
    const TrialRecord rec = run_trial(morph, gait, field, *open_loop, budget_cycles, 128,
                                      seed, contact, start);
    const auto t = time_to_distance(rec, 60.0);
    if (t) values[static_cast<size_t>(s)] = *t;
  });
  T60Cell cell_out;
  std::vector<double> reached;
  for (double v : values) {
    if (std::isnan(v))
      ++cell_out.censored;
    else
      reached.push_back(v);
  }
  cell_out.stats = stats_of(reached);
  return cell_out;
}

}  // namespace

RunManifest recipe_robustness_tradeoff(const ExperimentSpec& spec) {
  ManifestBuilder mb(spec, "tradeoff");
  const int seeds = std::max(10, spec.seeds);

  // Axis 1: leg count under synchronized coding (S_n = N/2).
  std::vector<int> n_list = spec.n_list;
  if (n_list.empty()) n_list = {3, 4, 5, 6, 7, 8};
  Table legs;
  legs.columns = {"N",          "flat_mean_cycles", "flat_std",  "flat_censored",
                  "rough_mean", "rough_std",        "rough_censored"};
  for (size_t i = 0; i < n_list.size(); ++i) {
    RobotMorphology morph = spec.config.morphology;
    morph.n_pairs = n_list[i];
    GaitProgram gait = spec.config.gait;
    gait.spatial_period = n_list[i] / 2.0;
    const Selection sel = select_for(morph, gait);
    gait.body_amplitude = sel.a_b;
    const T60Cell flat = t60_ensemble(morph, gait, TerrainConfig{}, spec.config.contact, 1,
                                      spec.master_seed, 2 * i, spec.jobs);
    const T60Cell rough = t60_ensemble(morph, gait, rugose_017(), spec.config.contact,
                                       seeds, spec.master_seed, 2 * i + 1, spec.jobs);
    legs.add_row({static_cast<double>(n_list[i]), flat.stats.mean, flat.stats.sd,
                  static_cast<double>(flat.censored), rough.stats.mean, rough.stats.sd,
                  static_cast<double>(rough.censored)});
  }
  mb.emit_table(legs, "tradeoff_legs", 0, {1, 4});

  // Axis 2: spatial period at the configured morphology.
  const std::vector<double> sn_list = {0.6, 1.0, 1.5, 2.0, 3.0};
  Table periods;
  periods.columns = {"S_n",        "flat_mean_cycles", "flat_std", "flat_censored",
                     "rough_mean", "rough_std",        "rough_censored"};
  for (size_t i = 0; i < sn_list.size(); ++i) {
    RobotMorphology morph = spec.config.morphology;
    GaitProgram gait = spec.config.gait;
    gait.spatial_period = sn_list[i];
    const Selection sel = select_for(morph, gait);
    gait.body_amplitude = sel.a_b;
    const T60Cell flat = t60_ensemble(morph, gait, TerrainConfig{}, spec.config.contact, 1,
                                      spec.master_seed, 100 + 2 * i, spec.jobs);
    const T60Cell rough = t60_ensemble(morph, gait, rugose_017(), spec.config.contact,
                                       seeds, spec.master_seed, 101 + 2 * i, spec.jobs);
    periods.add_row({sn_list[i], flat.stats.mean, flat.stats.sd,
                     static_cast<double>(flat.censored), rough.stats.mean, rough.stats.sd,
                     static_cast<double>(rough.censored)});
  }
  mb.emit_table(periods, "tradeoff_period", 0, {1, 4});
  return mb.finish();
}

RunManifest recipe_vertical_wave(const ExperimentSpec& spec) {
  ManifestBuilder mb(spec, "vwave-cdf");
  std::vector<double> ap_list = spec.ap_list;
  if (ap_list.empty()) ap_list = {0.0, M_PI / 18.0, M_PI / 9.0, 2.0 * M_PI / 9.0};
  const int seeds = spec.seeds;
  const int cycles = 10;

  RobotMorphology morph = spec.config.morphology;
  GaitProgram gait = spec.config.gait;
  if (gait.body_amplitude <= 0.0) gait.body_amplitude = select_for(morph, gait).a_b;

  const auto open_loop = make_open_loop();
  const TerrainConfig rough = rugose_017();

  Table summary;
  summary.columns = {"A_p",     "intended_duty", "measured_duty", "flat_stride_cm",
                     "mean_cm", "std_cm",        "cov",           "var_normalized"};
  Table cdf;
  cdf.columns = {"A_p", "sample_index", "v_normalized", "cdf"};

  for (size_t ai = 0; ai < ap_list.size(); ++ai) {
    GaitProgram g = gait;
    g.vertical_amplitude = ap_list[ai];
    const Stepfield flat = flat_terrain();
    const TrialRecord flat_rec = run_trial(morph, g, flat, *open_loop, 3, 128,
                                           derive_seed(spec.master_seed, 900 + ai),
                                           spec.config.contact, Pose2{0, 40, 0, 0});
    const double v_open = mean_cycle_stride(flat_rec);

    std::vector<double> strides(static_cast<size_t>(seeds));
    std::vector<double> duties(static_cast<size_t>(seeds));
    parallel_for(seeds, spec.jobs, [&](int s) {
      // Terrains are paired across the A_p arms so the sweep compares like
      // against like.
      const uint64_t seed = derive_seed(spec.master_seed, 5000 + s);
      const Stepfield field = terrain_for_seed(rough, seed);
      const TrialRecord rec = run_trial(morph, g, field, *open_loop, cycles, 128, seed,
                                        spec.config.contact, jittered_start(field, seed));
      strides[static_cast<size_t>(s)] = mean_cycle_stride(rec);
      duties[static_cast<size_t>(s)] = measured_duty(rec);
    });
    const Stats st = stats_of(strides);
    const VelocityCdf vc = velocity_cdf(strides, std::max(v_open, 1e-9));
    summary.add_row({ap_list[ai], intended_duty_fraction(morph, g), stats_of(duties).mean,
                     v_open, st.mean, st.sd, st.mean > 0 ? st.sd / st.mean : 0.0,
                     vc.variance()});
    for (size_t k = 0; k < vc.normalized.size(); ++k)
      cdf.add_row({ap_list[ai], static_cast<double>(k), vc.normalized[k],
                   static_cast<double>(k + 1) / vc.normalized.size()});
  }
  mb.emit_table(summary, "vwave_summary", 0, {4, 6});
  mb.emit_table(cdf, "vwave_cdf", 2, {3});
  return mb.finish();
}

RunManifest recipe_siso(const ExperimentSpec& spec) {
  ManifestBuilder mb(spec, "siso");
  const int seeds = spec.seeds;
  const int cycles = 10;

  RobotMorphology morph = spec.config.morphology;
  GaitProgram gait = spec.config.gait;
  if (gait.body_amplitude <= 0.0) gait.body_amplitude = select_for(morph, gait).a_b;

  const TerrainConfig rough = rugose_032();
  struct Arm {
    std::string name;
    double fixed_ap;
    bool adaptive;
  };
  const std::vector<Arm> arms = {{"open_ap0", 0.0, false},
                                 {"open_ap2pi9", 2.0 * M_PI / 9.0, false},
                                 {"adaptive", 0.0, true}};

  std::vector<std::vector<std::vector<double>>> profiles(
      arms.size(), std::vector<std::vector<double>>(static_cast<size_t>(seeds)));
  std::vector<std::vector<double>> trace_ap(static_cast<size_t>(seeds));
  std::vector<std::vector<double>> trace_duty(static_cast<size_t>(seeds));

  for (size_t a = 0; a < arms.size(); ++a) {
    const auto controller = arms[a].adaptive
                                ? make_siso(spec.config.controller.siso_gain,
                                            spec.config.controller.siso_desired_duty,
                                            compute_A_SC(morph, gait))
                                : make_open_loop();
    parallel_for(seeds, spec.jobs, [&](int s) {
      // Arms share terrains and start poses, as physical trials would.
      const uint64_t seed = derive_seed(spec.master_seed, 5000 + s);
      const Stepfield field = terrain_for_seed(rough, seed);
      GaitProgram g = gait;
      g.vertical_amplitude = arms[a].fixed_ap;
      const TrialRecord rec = run_trial(morph, g, field, *controller, cycles, 128, seed,
                                        spec.config.contact, jittered_start(field, seed));
      std::vector<double>& prof = profiles[a][static_cast<size_t>(s)];
      double x = 0.0;
      prof.push_back(0.0);
      for (const auto& c : rec.cycles) {
        x += c.stride_cm;
        prof.push_back(x);
      }
      if (arms[a].adaptive) {
        for (const auto& c : rec.cycles) {
          trace_ap[static_cast<size_t>(s)].push_back(c.vertical_amplitude);
          trace_duty[static_cast<size_t>(s)].push_back(c.duty);
        }
      }
    });
  }

  Table prof;
  prof.columns = {"cycle",     "ap0_mean_cm",      "ap0_std",     "fixed_mean_cm",
                  "fixed_std", "adaptive_mean_cm", "adaptive_std"};
  for (int c = 0; c <= cycles; ++c) {
    std::array<Stats, 3> st;
    for (size_t a = 0; a < arms.size(); ++a) {
      std::vector<double> at_c;
      for (const auto& p : profiles[a]) at_c.push_back(p[static_cast<size_t>(c)]);
      st[a] = stats_of(at_c);
    }
    prof.add_row({static_cast<double>(c), st[0].mean, st[0].sd, st[1].mean, st[1].sd,
                  st[2].mean, st[2].sd});
  }
  mb.emit_table(prof, "siso_profiles", 0, {1, 3, 5});

  Table trace;
  trace.columns = {"cycle", "duty_mean", "A_p_mean", "duty_seed0", "A_p_seed0"};
  for (int c = 0; c < cycles; ++c) {
    std::vector<double> aps, duties;
    for (int s = 0; s < seeds; ++s) {
      aps.push_back(trace_ap[static_cast<size_t>(s)][static_cast<size_t>(c)]);
      duties.push_back(trace_duty[static_cast<size_t>(s)][static_cast<size_t>(c)]);
    }
    trace.add_row({static_cast<double>(c), stats_of(duties).mean, stats_of(aps).mean,
                   trace_duty[0][static_cast<size_t>(c)],
                   trace_ap[0][static_cast<size_t>(c)]});
  }
  mb.emit_table(trace, "siso_trace", 0, {1, 2});
  return mb.finish();
}

RunManifest recipe_cleg(const ExperimentSpec& spec) {
  ManifestBuilder mb(spec, "cleg");
  const int seeds = spec.seeds;

  GaitProgram gait = spec.config.gait;
  RobotMorphology point = spec.config.morphology;
  point.foot = FootGeometry::point();
  RobotMorphology cleg = spec.config.morphology;
  if (cleg.foot.kind != FootGeometry::Kind::CArc) cleg.foot = FootGeometry::c_arc(12.0, 3.0);
  if (gait.body_amplitude <= 0.0) gait.body_amplitude = select_for(point, gait).a_b;

  struct Level {
    const char* label;
    double rg_nominal;
    TerrainConfig cfg;
  };
  const std::vector<Level> levels = {{"flat", 0.0, TerrainConfig{}},
                                     {"rg017", 0.17, rugose_017()},
                                     {"rg032", 0.32, rugose_032()}};
  const auto open_loop = make_open_loop();

  Table t;
  t.columns = {"rugosity", "cleg_mean_cm", "cleg_std", "point_mean_cm", "point_std"};
  for (size_t li = 0; li < levels.size(); ++li) {
    std::array<Stats, 2> st;
    const std::array<const RobotMorphology*, 2> morphs = {&cleg, &point};
    for (size_t mi = 0; mi < 2; ++mi) {
      const int n = levels[li].cfg.kind == TerrainConfig::Kind::Flat ? 1 : seeds;
      std::vector<double> strides(static_cast<size_t>(n));
      parallel_for(n, spec.jobs, [&](int s) {
        // Foot designs run on identical terrains and starts.
        const uint64_t seed = derive_seed(spec.master_seed, li * 1000 + s);
        const Stepfield field = levels[li].cfg.kind == TerrainConfig::Kind::Flat
                                    ? flat_terrain()
                                    : terrain_for_seed(levels[li].cfg, seed);
        const Pose2 start = n == 1 ? Pose2{0.0, field.width_y() / 2.0, 0.0, 0.0}
                                   : jittered_start(field, seed);
        const TrialRecord rec = run_trial(*morphs[mi], gait, field, *open_loop, 3, 128,
                                          seed, spec.config.contact, start);
        strides[static_cast<size_t>(s)] = mean_cycle_stride(rec);
      });
      st[mi] = stats_of(strides);
    }
    t.add_row({levels[li].rg_nominal, st[0].mean, st[0].sd, st[1].mean, st[1].sd});
  }
  mb.emit_table(t, "cleg", 0, {1, 3});
  return mb.finish();
}

RunManifest recipe_bound_check(const ExperimentSpec& spec) {
  ManifestBuilder mb(spec, "bound-check");
  const int n_gaits = 50;
  const Stepfield flat = flat_terrain();
  const auto open_loop = make_open_loop();

  Table t;
  t.columns = {"N",   "S_n",       "A_leg",    "A_p",         "duty",
               "A_b", "stride_cm", "bound_cm", "within_bound"};
  std::vector<std::array<double, 9>> rows(n_gaits);
  parallel_for(n_gaits, spec.jobs, [&](int i) {
    std::mt19937_64 rng(derive_seed(spec.master_seed, i));
    const auto uni = [&](double lo, double hi) {
      return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1p-53);
    };
    RobotMorphology morph = spec.config.morphology;
    morph.n_pairs = 3 + static_cast<int>(uni(0.0, 8.0));
    GaitProgram gait = default_gait(morph);
    gait.spatial_period = 0.5 + 0.5 * static_cast<int>(uni(0.0, 4.0));
    gait.shoulder_amplitude = uni(M_PI / 16.0, M_PI / 6.0);
    gait.vertical_amplitude = uni(0.0, M_PI / 9.0);
    gait.desired_duty = uni(0.35, 0.5);
    const Selection sel = select_for(morph, gait);
    gait.body_amplitude = sel.a_b * uni(0.3, 1.0);

    const TrialRecord rec = run_trial(morph, gait, flat, *open_loop, 3, 128,
                                      derive_seed(spec.master_seed, 500 + i),
                                      spec.config.contact, Pose2{0, 40, 0, 0});
    double worst = 0.0;
    for (const auto& c : rec.cycles) worst = std::max(worst, c.stride_cm);
    const double bound = stride_upper_bound(morph.leg_length);
    rows[static_cast<size_t>(i)] = {static_cast<double>(morph.n_pairs),
                                    gait.spatial_period,
                                    gait.shoulder_amplitude,
                                    gait.vertical_amplitude,
                                    gait.desired_duty,
                                    gait.body_amplitude,
                                    worst,
                                    bound,
                                    worst <= bound * 1.01 ? 1.0 : 0.0};
  });
  for (const auto& r : rows)
    t.add_row({r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8]});

  // Reference row: the N = 7 selected gait.
  {
    RobotMorphology morph = spec.config.morphology;
    morph.n_pairs = 7;
    GaitProgram gait = spec.config.gait;
    const Selection sel = select_for(morph, gait);
    gait.body_amplitude = sel.a_b;
    const TrialRecord rec = run_trial(morph, gait, flat, *open_loop, 3, 128,
                                      derive_seed(spec.master_seed, 999),
                                      spec.config.contact, Pose2{0, 40, 0, 0});
    const double bound = stride_upper_bound(morph.leg_length);
    const double stride = mean_cycle_stride(rec);
    t.add_row({7.0, gait.spatial_period, gait.shoulder_amplitude, gait.vertical_amplitude,
               gait.desired_duty, gait.body_amplitude, stride, bound,
               stride <= bound * 1.01 ? 1.0 : 0.0});
  }
  mb.emit_table(t, "bound_check", 5, {6, 7});
  return mb.finish();
}

RunManifest recipe_heightfield(const ExperimentSpec& spec) {
  ManifestBuilder mb(spec, "heightfield");
  const RobotMorphology& morph = spec.config.morphology;
  const GaitProgram& gait = spec.config.gait;

  const ConnectionField cf = compute_connection_field(morph, gait, GridSpec{});
  save_connection_field(cf, (mb.dir() / "connection_field.txt").string());
  mb.record("connection_field.txt");
  for (char comp : {'x', 'y', 't'}) {
    const HeightField hf = height_function(cf, comp);
    const std::string name = std::string("height_") + comp + ".txt";
    save_height_field(hf, (mb.dir() / name).string());
    mb.record(name);
  }
  return mb.finish();
}

RunManifest run_recipe(const std::string& name, const ExperimentSpec& spec) {
  ExperimentSpec s = spec;
  s.recipe = name;
  if (name == "sweep-amplitude") return recipe_amplitude_sweep(s);
  if (name == "sweep-legs") return recipe_leg_saturation(s);
  if (name == "tradeoff") return recipe_robustness_tradeoff(s);
  if (name == "vwave-cdf") return recipe_vertical_wave(s);
  if (name == "siso") return recipe_siso(s);
  if (name == "cleg") return recipe_cleg(s);
  if (name == "bound-check") return recipe_bound_check(s);
  if (name == "heightfield") return recipe_heightfield(s);
  throw ConfigError("unknown recipe: " + name);
}

bool replay(const std::string& manifest_path, const std::string& out_dir) {
  const RunManifest original = RunManifest::load(manifest_path);
  ExperimentSpec spec = experiment_from_json(original.spec);
  spec.out_dir = out_dir;
  const RunManifest fresh = run_recipe(original.recipe, spec);

  if (original.files.size() != fresh.files.size()) return false;
  for (size_t i = 0; i < original.files.size(); ++i) {
    if (original.files[i].first != fresh.files[i].first ||
        original.files[i].second != fresh.files[i].second)
      return false;
  }
  return true;
}

}  // namespace merloco
