#include "merloco/morphology.hpp"

#include <algorithm>
#include <cmath>

namespace merloco {

FootGeometry FootGeometry::c_arc(double arc_length, double width) {
  FootGeometry f;
  f.kind = Kind::CArc;
  f.arc_length = arc_length;
  f.width = width;
  return f;
}

void RobotMorphology::validate() const {
  if (n_pairs < 2) throw ConfigError("morphology: n_pairs must be >= 2");
  if (!(leg_length > 0.0)) throw ConfigError("morphology: leg_length must be > 0");
  if (!(module_spacing > 0.0)) throw ConfigError("morphology: module_spacing must be > 0");
  if (!(shoulder_amplitude > 0.0 && shoulder_amplitude < M_PI / 2.0))
    throw ConfigError("morphology: shoulder_amplitude must be in (0, pi/2)");
  if (!(leg_clearance >= 0.0)) throw ConfigError("morphology: leg_clearance must be >= 0");
  if (foot.kind == FootGeometry::Kind::CArc) {
    if (!(foot.arc_length > 0.0)) throw ConfigError("morphology: C-arc arc_length must be > 0");
    if (!(foot.width > 0.0)) throw ConfigError("morphology: C-arc width must be > 0");
  }
}

void GaitProgram::validate() const {
  if (!(body_amplitude >= 0.0)) throw ConfigError("gait: body_amplitude must be >= 0");
  if (!(vertical_amplitude >= 0.0 && vertical_amplitude <= M_PI / 3.0))
    throw ConfigError("gait: vertical_amplitude must be in [0, pi/3]");
  if (!(spatial_period > 0.0)) throw ConfigError("gait: spatial_period must be > 0");
  if (!(desired_duty > 0.0 && desired_duty <= 0.5))
    throw ConfigError("gait: desired_duty must be in (0, 0.5]");
  if (!(shoulder_amplitude >= 0.0 && shoulder_amplitude < M_PI / 2.0))
    throw ConfigError("gait: shoulder_amplitude must be in [0, pi/2)");
  if (!(clearance >= 0.0)) throw ConfigError("gait: clearance must be >= 0");
  if (!(period > 0.0)) throw ConfigError("gait: period must be > 0");
  if (!(heading_window > 0.0)) throw ConfigError("gait: heading_window must be > 0");
}

GaitProgram default_gait(const RobotMorphology& morph) {
  GaitProgram g;
  g.shoulder_amplitude = morph.shoulder_amplitude;
  g.clearance = 0.62 * morph.leg_length * std::sin(morph.shoulder_amplitude);
  return g;
}

std::pair<double, double> shape_basis(int i, int n_pairs, double spatial_period) {
  if (i < 0 || i >= n_pairs - 1) throw std::out_of_range("shape_basis: joint index out of range");
  if (!(spatial_period > 0.0)) throw ConfigError("shape_basis: spatial_period must be > 0");
  const double arg = 2.0 * M_PI * spatial_period * static_cast<double>(i) / n_pairs;
  return {std::sin(arg), std::cos(arg)};
}

std::vector<double> yaw_angles(const ShapePoint& w, int n_pairs, double spatial_period) {
  std::vector<double> alpha(static_cast<size_t>(n_pairs - 1));
  for (int i = 0; i < n_pairs - 1; ++i) {
    const auto [b1, b2] = shape_basis(i, n_pairs, spatial_period);
    alpha[static_cast<size_t>(i)] = w.w1 * b1 + w.w2 * b2;
  }
  return alpha;
}

std::vector<double> pitch_angles(double phase, double vertical_amplitude,
                                 int n_pairs, double spatial_period) {
  std::vector<double> alpha(static_cast<size_t>(n_pairs - 1));
  for (int i = 0; i < n_pairs - 1; ++i) {
    const double arg = 2.0 * M_PI * spatial_period * static_cast<double>(i) / n_pairs +
                       kLegWaveSign * phase;
    alpha[static_cast<size_t>(i)] = vertical_amplitude * std::cos(2.0 * arg);
  }
  return alpha;
}

std::vector<double> hip_drops(const RobotMorphology& morph, const GaitProgram& gait,
                              double phase) {
  const int n = morph.n_pairs;
  std::vector<double> drops(static_cast<size_t>(n), 0.0);
  const double scale = kHipLiftScaleFactor * morph.module_spacing * gait.vertical_amplitude;
  for (int i = 0; i < n; ++i) {
    const double u = 2.0 * M_PI * gait.spatial_period * static_cast<double>(i) / n +
                     kLegWaveSign * phase;
    drops[static_cast<size_t>(i)] = scale * 0.5 * (1.0 + std::cos(2.0 * u));
  }
  return drops;
}

namespace detail {
bool in_stance_window(int pair, int side, int n_pairs, double spatial_period,
                      double desired_duty, double phase) {
  // Stance occupies a window of fraction d of the cycle, centered on
  // mid-retraction (shoulder angle zero, sweeping backward; the center
  // depends on which way the leg wave travels). The right side runs in
  // anti-phase.
  double arg = 2.0 * M_PI * spatial_period * static_cast<double>(pair) / n_pairs +
               kLegWaveSign * phase;
  if (side == 1) arg += M_PI;
  const double center = kLegWaveSign > 0 ? M_PI / 2.0 : 3.0 * M_PI / 2.0;
  const double dist = std::fabs(wrap_phase(arg) - center);
  const double circ = std::min(dist, 2.0 * M_PI - dist);
  return circ < M_PI * desired_duty;
}
double stance_progress(int pair, int side, int n_pairs, double spatial_period,
                       double desired_duty, double phase) {
  double arg = 2.0 * M_PI * spatial_period * static_cast<double>(pair) / n_pairs +
               kLegWaveSign * phase;
  if (side == 1) arg += M_PI;
  const double center = kLegWaveSign > 0 ? M_PI / 2.0 : 3.0 * M_PI / 2.0;
  double offset = wrap_phase(arg) - center;
  if (offset > M_PI) offset -= 2.0 * M_PI;
  if (offset < -M_PI) offset += 2.0 * M_PI;
  // kLegWaveSign < 0 runs the window backward in arg.
  const double s = 0.5 + kLegWaveSign * offset / (2.0 * M_PI * desired_duty);
  return std::clamp(s, 0.0, 1.0);
}

}  // namespace detail

double engagement_load(double progress, double ramp_fraction) {
  if (ramp_fraction <= 0.0) return 1.0;
  const double up = progress / ramp_fraction;
  const double down = (1.0 - progress) / ramp_fraction;
  return std::clamp(std::min(up, down), 0.0, 1.0);
}

Posture posture_at(const RobotMorphology& morph, const GaitProgram& gait, double phase) {
  ShapePoint w{gait.body_amplitude * std::sin(phase), gait.body_amplitude * std::cos(phase)};
  Posture p;
  p.phase = phase;
  p.yaw_angles = yaw_angles(w, morph.n_pairs, gait.spatial_period);
  p.pitch_angles = pitch_angles(phase, gait.vertical_amplitude, morph.n_pairs,
                                gait.spatial_period);
  p.shoulder_angles.resize(static_cast<size_t>(morph.n_legs()));
  p.intended_stance.resize(static_cast<size_t>(morph.n_legs()));

  const std::vector<double> drops = hip_drops(morph, gait, phase);

  // Module headings relative to the mean: a pair skewed beyond the leg
  // workspace window jams, its stance legs turning into passive drag
  // anchors (stance is kept, the sweep stalls).
  std::vector<double> eta(static_cast<size_t>(morph.n_pairs), 0.0);
  double eta_mean = 0.0;
  for (int i = 1; i < morph.n_pairs; ++i) {
    eta[static_cast<size_t>(i)] =
        eta[static_cast<size_t>(i - 1)] + p.yaw_angles[static_cast<size_t>(i - 1)];
    eta_mean += eta[static_cast<size_t>(i)];
  }
  eta_mean /= morph.n_pairs;
  p.workspace_jam.resize(static_cast<size_t>(morph.n_pairs));

  for (int i = 0; i < morph.n_pairs; ++i) {
    const double arg = 2.0 * M_PI * gait.spatial_period * static_cast<double>(i) / morph.n_pairs +
                       kLegWaveSign * phase;
    const double left = gait.shoulder_amplitude * std::cos(arg);
    p.shoulder_angles[static_cast<size_t>(2 * i)] = left;
    p.shoulder_angles[static_cast<size_t>(2 * i + 1)] = -left;
    const bool hip_ok = drops[static_cast<size_t>(i)] <= gait.clearance;
    p.workspace_jam[static_cast<size_t>(i)] =
        std::fabs(eta[static_cast<size_t>(i)] - eta_mean) > gait.heading_window ? 1 : 0;
    for (int side = 0; side < 2; ++side) {
      const bool window = detail::in_stance_window(i, side, morph.n_pairs,
                                                   gait.spatial_period,
                                                   gait.desired_duty, phase);
      p.intended_stance[static_cast<size_t>(2 * i + side)] = window && hip_ok;
    }
  }
  return p;
}

double intended_duty_fraction(const RobotMorphology& morph, const GaitProgram& gait,
                              int phase_samples) {
  double duty = 0.0;
  for (int k = 0; k < phase_samples; ++k) {
    const Posture p = posture_at(morph, gait, 2.0 * M_PI * k / phase_samples);
    for (uint8_t b : p.intended_stance) duty += b ? 1.0 : 0.0;
  }
  return duty / (static_cast<double>(phase_samples) * morph.n_legs());
}

Posture posture_from_shape(const RobotMorphology& morph, const GaitProgram& gait,
                           const ShapePoint& w) {
  constexpr double kOriginEps = 1e-12;
  const double phase = w.norm() < kOriginEps ? 0.0 : std::atan2(w.w1, w.w2);
  GaitProgram g = gait;
  g.body_amplitude = w.norm();
  Posture p = posture_at(morph, g, phase);
  // Yaw comes from w exactly; posture_at reconstructs it from (|w|, phase),
  // which is identical up to roundoff, but keep the direct evaluation.
  p.yaw_angles = yaw_angles(w, morph.n_pairs, gait.spatial_period);
  return p;
}

KinematicFrame forward_kinematics(const RobotMorphology& morph, const Posture& posture,
                                  const Pose2& base) {
  const int n = morph.n_pairs;
  KinematicFrame f;
  f.axles.resize(static_cast<size_t>(n));
  f.headings.resize(static_cast<size_t>(n));
  f.feet.resize(static_cast<size_t>(2 * n));

  // Module orientations: yaw joint i and pitch joint i rotate module i+1
  // relative to module i; the connecting link is hinged at its midpoint.
  double h = base.theta;
  double q = 0.0;
  Vec3 axle(base.x, base.y, base.z_ref);
  f.axles[0] = axle;
  f.headings[0] = h;
  for (int i = 1; i < n; ++i) {
    const double h_next = h + posture.yaw_angles[static_cast<size_t>(i - 1)];
    const double q_next = q + posture.pitch_angles[static_cast<size_t>(i - 1)];
    const Vec3 dir_prev(std::cos(h) * std::cos(q), std::sin(h) * std::cos(q), -std::sin(q));
    const Vec3 dir_next(std::cos(h_next) * std::cos(q_next),
                        std::sin(h_next) * std::cos(q_next), -std::sin(q_next));
    axle -= 0.5 * morph.module_spacing * (dir_prev + dir_next);
    h = h_next;
    q = q_next;
    f.axles[static_cast<size_t>(i)] = axle;
    f.headings[static_cast<size_t>(i)] = h;
  }

  const double l = morph.leg_length;
  for (int i = 0; i < n; ++i) {
    const double hi = f.headings[static_cast<size_t>(i)];
    const double c = std::cos(hi), s = std::sin(hi);
    for (int side = 0; side < 2; ++side) {
      const double sh = posture.shoulder_angles[static_cast<size_t>(2 * i + side)];
      // Positive shoulder angle protracts the foot toward the head.
      const double fx = l * std::sin(sh);
      const double fy = (side == 0 ? l : -l) * std::cos(sh);
      Vec3 foot = f.axles[static_cast<size_t>(i)];
      foot.x() += c * fx - s * fy;
      foot.y() += s * fx + c * fy;
      f.feet[static_cast<size_t>(2 * i + side)] = foot;
    }
  }
  return f;
}

// Planar distance between two segments.
static double segment_distance(const Vec2& a0, const Vec2& a1, const Vec2& b0,
                               const Vec2& b1) {
  const auto point_seg = [](const Vec2& p, const Vec2& s0, const Vec2& s1) {
    const Vec2 d = s1 - s0;
    const double len2 = d.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((p - s0).dot(d) / len2, 0.0, 1.0) : 0.0;
    return (p - (s0 + t * d)).norm();
  };
  const auto orient = [](const Vec2& p, const Vec2& q, const Vec2& r) {
    return (q.x() - p.x()) * (r.y() - p.y()) - (q.y() - p.y()) * (r.x() - p.x());
  };
  const bool cross = orient(a0, a1, b0) * orient(a0, a1, b1) < 0.0 &&
                     orient(b0, b1, a0) * orient(b0, b1, a1) < 0.0;
  if (cross) return 0.0;
  return std::min(std::min(point_seg(b0, a0, a1), point_seg(b1, a0, a1)),
                  std::min(point_seg(a0, b0, b1), point_seg(a1, b0, b1)));
}

bool self_collision(const RobotMorphology& morph, const Posture& posture) {
  const KinematicFrame f = forward_kinematics(morph, posture, Pose2{});
  const double kThreshold = morph.leg_clearance;  // cm
  // Adjacent same-side legs collide as whole hip-to-foot segments; feet
  // brushing past a neighboring leg shaft jams just like feet touching.
  for (int side = 0; side < 2; ++side) {
    for (int i = 0; i + 1 < morph.n_pairs; ++i) {
      const Vec3& hip_a = f.axles[static_cast<size_t>(i)];
      const Vec3& hip_b = f.axles[static_cast<size_t>(i + 1)];
      const Vec3& foot_a = f.feet[static_cast<size_t>(2 * i + side)];
      const Vec3& foot_b = f.feet[static_cast<size_t>(2 * (i + 1) + side)];
      const double dist = segment_distance(
          Vec2(hip_a.x(), hip_a.y()), Vec2(foot_a.x(), foot_a.y()),
          Vec2(hip_b.x(), hip_b.y()), Vec2(foot_b.x(), foot_b.y()));
      if (dist < kThreshold) return true;
    }
  }
  return false;
}

static bool collides_at_amplitude(const RobotMorphology& morph, const GaitProgram& gait,
                                  double amplitude, int phase_samples) {
  GaitProgram g = gait;
  g.body_amplitude = amplitude;
  for (int k = 0; k < phase_samples; ++k) {
    const double phase = 2.0 * M_PI * k / phase_samples;
    if (self_collision(morph, posture_at(morph, g, phase))) return true;
  }
  return false;
}

double compute_A_SC(const RobotMorphology& morph, const GaitProgram& gait) {
  constexpr int kPhaseSamples = 256;
  constexpr double kChartBound = M_PI;
  constexpr double kScanStep = 0.02;

  if (collides_at_amplitude(morph, gait, 0.0, kPhaseSamples)) return 0.0;

  // Coarse upward scan finds the first colliding amplitude, so the result
  // is collision-free for all amplitudes below it (to scan resolution).
  double lo = 0.0, hi = kChartBound;
  bool found = false;
  for (double a = kScanStep; a <= kChartBound + 1e-12; a += kScanStep) {
    if (collides_at_amplitude(morph, gait, std::min(a, kChartBound), kPhaseSamples)) {
      hi = std::min(a, kChartBound);
      found = true;
      break;
    }
    lo = std::min(a, kChartBound);
  }
  if (!found) return kChartBound;

  while (hi - lo > 1e-3) {
    const double mid = 0.5 * (lo + hi);
    if (collides_at_amplitude(morph, gait, mid, kPhaseSamples))
      hi = mid;
    else
      lo = mid;
  }
  return lo;
}

}  // namespace merloco
