#include "merloco/terrain.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

namespace merloco {

namespace detail {

double standard_normal(std::mt19937_64& rng) {
  // 53-bit uniforms in (0, 1]; u1 > 0 keeps the log finite.
  const double u1 = (static_cast<double>(rng() >> 11) + 1.0) * 0x1p-53;
  const double u2 = static_cast<double>(rng() >> 11) * 0x1p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace detail

static double quantize_height(double h, double increment, double lower, double upper) {
  // Nearest multiple, ties rounding up, clamped to multiples inside the
  // truncation bounds.
  const long k_max = static_cast<long>(std::floor(upper / increment + 1e-9));
  const long k_min = static_cast<long>(std::ceil(lower / increment - 1e-9));
  long k = static_cast<long>(std::floor(h / increment + 0.5));
  k = std::max(k_min, std::min(k_max, k));
  return static_cast<double>(k) * increment;
}

Stepfield generate_stepfield(uint64_t seed, double mean, double std_dev, double increment,
                             int n_cols, int n_rows, double block_size) {
  if (!(increment > 0.0)) throw ConfigError("stepfield: increment must be > 0");
  if (std_dev < 0.0) throw ConfigError("stepfield: std must be >= 0");
  if (mean < 0.0 || mean > 12.0) throw ConfigError("stepfield: mean must be in [0, 12]");
  if (n_cols < 1 || n_rows < 1) throw ConfigError("stepfield: block counts must be >= 1");
  if (!(block_size > 0.0)) throw ConfigError("stepfield: block_size must be > 0");

  Stepfield field;
  field.block_size = block_size;
  field.n_cols = n_cols;
  field.n_rows = n_rows;
  field.provenance = {seed, mean, std_dev, increment, 0.0, 12.0};
  field.heights.resize(static_cast<size_t>(n_cols) * n_rows);

  std::mt19937_64 rng(seed);
  for (double& h : field.heights) {
    double raw = mean;
    if (std_dev > 0.0) {
      do {
        raw = mean + std_dev * detail::standard_normal(rng);
      } while (raw < 0.0 || raw > 12.0);
    }
    h = quantize_height(raw, increment, 0.0, 12.0);
  }
  return field;
}

double rugosity(const Stepfield& field) {
  const size_t n = field.heights.size();
  if (n < 2) throw std::invalid_argument("rugosity: needs at least 2 blocks");
  double mean = 0.0;
  for (double h : field.heights) mean += h;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double h : field.heights) var += (h - mean) * (h - mean);
  var /= static_cast<double>(n);
  return std::sqrt(var) / field.block_size;
}

double height_at(const Stepfield& field, double x, double y) {
  const double ix = std::floor(x / field.block_size);
  const double iy = std::floor(y / field.block_size);
  if (ix < 0 || iy < 0 || ix >= field.n_cols || iy >= field.n_rows) return 0.0;
  return field.block(static_cast<int>(ix), static_cast<int>(iy));
}

Stepfield flat_terrain(int n_cols, int n_rows, double block_size) {
  Stepfield field;
  field.block_size = block_size;
  field.n_cols = n_cols;
  field.n_rows = n_rows;
  field.heights.assign(static_cast<size_t>(n_cols) * n_rows, 0.0);
  field.provenance = {0, 0.0, 0.0, 1.0, 0.0, 12.0};
  return field;
}

static std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void save_stepfield(const Stepfield& field, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  nlohmann::json meta{{"block_size", field.block_size},
                      {"n_cols", field.n_cols},
                      {"n_rows", field.n_rows},
                      {"seed", field.provenance.seed},
                      {"mean", field.provenance.mean},
                      {"std", field.provenance.std_dev},
                      {"increment", field.provenance.increment},
                      {"lower", field.provenance.lower},
                      {"upper", field.provenance.upper}};
  out << "# merloco-stepfield " << meta.dump() << "\n";
  for (int iy = 0; iy < field.n_rows; ++iy) {
    for (int ix = 0; ix < field.n_cols; ++ix) {
      if (ix > 0) out << ' ';
      out << fmt_double(field.block(ix, iy));
    }
    out << "\n";
  }
}

Stepfield load_stepfield(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# merloco-stepfield ", 0) != 0)
    throw std::runtime_error("bad stepfield header in " + path);
  const nlohmann::json meta = nlohmann::json::parse(line.substr(20));

  Stepfield field;
  field.block_size = meta.at("block_size").get<double>();
  field.n_cols = meta.at("n_cols").get<int>();
  field.n_rows = meta.at("n_rows").get<int>();
  field.provenance.seed = meta.at("seed").get<uint64_t>();
  field.provenance.mean = meta.at("mean").get<double>();
  field.provenance.std_dev = meta.at("std").get<double>();
  field.provenance.increment = meta.at("increment").get<double>();
  field.provenance.lower = meta.at("lower").get<double>();
  field.provenance.upper = meta.at("upper").get<double>();

  const size_t count = static_cast<size_t>(field.n_cols) * field.n_rows;
  field.heights.reserve(count);
  double h = 0.0;
  while (in >> h) field.heights.push_back(h);
  if (field.heights.size() != count)
    throw std::runtime_error("truncated stepfield file: " + path);
  return field;
}

}  // namespace merloco
