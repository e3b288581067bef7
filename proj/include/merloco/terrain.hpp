#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "merloco/types.hpp"

// Procedural stepfield terrain: a grid of square blocks with truncated-
// normal random heights, plus rugosity metrics and height queries.
namespace merloco {

struct StepfieldProvenance {
  uint64_t seed = 0;
  double mean = 0.0;       // cm
  double std_dev = 0.0;    // cm
  double increment = 1.0;  // cm, height quantization
  double lower = 0.0;      // truncation bounds, cm
  double upper = 12.0;
};

// Block (ix, iy) covers x in [ix*s, (ix+1)*s), y in [iy*s, (iy+1)*s).
// Queries outside the field return the flat apron height 0.
struct Stepfield {
  double block_size = 10.0;  // cm
  int n_cols = 0;            // blocks along x (travel axis)
  int n_rows = 0;            // blocks along y
  std::vector<double> heights;  // row-major [iy * n_cols + ix], cm
  StepfieldProvenance provenance;

  double block(int ix, int iy) const {
    return heights[static_cast<size_t>(iy) * n_cols + ix];
  }
  double width_x() const { return n_cols * block_size; }
  double width_y() const { return n_rows * block_size; }
};

// Heights drawn independently from normal(mean, std) truncated to
// [0, 12] cm by rejection, then rounded to the nearest increment multiple
// (ties up, clamped to multiples inside the bounds). Deterministic and
// platform-independent for a fixed seed.
Stepfield generate_stepfield(uint64_t seed, double mean, double std_dev, double increment,
                             int n_cols, int n_rows, double block_size = 10.0);

// Population standard deviation of block heights, normalized by the block
// side length. Throws std::invalid_argument with fewer than 2 blocks.
double rugosity(const Stepfield& field);

double height_at(const Stepfield& field, double x, double y);

Stepfield flat_terrain(int n_cols = 30, int n_rows = 8, double block_size = 10.0);

// Text grid persistence (JSON header + row-major heights); reload is
// bit-exact.
void save_stepfield(const Stepfield& field, const std::string& path);
Stepfield load_stepfield(const std::string& path);

namespace detail {
// Standard normal deviate via Box-Muller on explicit 53-bit uniforms, so
// sequences are identical across platforms.
double standard_normal(std::mt19937_64& rng);
}  // namespace detail

}  // namespace merloco
