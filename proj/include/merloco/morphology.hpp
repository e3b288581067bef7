#pragma once

#include <utility>
#include <vector>

#include "merloco/types.hpp"

// Robot geometry and the gait encoding for multi-legged elongate robots:
// a body made of N bipedal modules chained by yaw+pitch joints, with the
// lateral body wave, the vertical (pitch) wave, and per-leg shoulder
// sweeps all driven from a common gait phase.
//
// Leg indexing: leg_id = 2*pair + side, side 0 = left (+y), 1 = right.
namespace merloco {

inline constexpr double kDefaultHeadingWindow = 1.0;  // rad

// The leg and pitch waves travel with the yaw wave (head to tail); their
// phase enters with the opposite sign of the yaw wave's.
inline constexpr double kLegWaveSign = -1.0;

struct FootGeometry {
  enum class Kind { Point, CArc };
  Kind kind = Kind::Point;
  double arc_length = 0.0;  // cm, C-arc only
  double width = 0.0;       // cm, C-arc only

  static FootGeometry point() { return {}; }
  static FootGeometry c_arc(double arc_length, double width);
};

struct RobotMorphology {
  int n_pairs = 6;                   // N, number of leg pairs
  double leg_length = 8.4;           // l, cm
  double module_spacing = 13.0;      // cm between consecutive axles
  double shoulder_amplitude = M_PI / 12.0;  // A_leg, rad (hardware default)
  // Interference envelope of a whole leg assembly (bracket, shaft, foot):
  // adjacent legs closer than this jam.
  double leg_clearance = 5.0;        // cm
  FootGeometry foot;

  int n_legs() const { return 2 * n_pairs; }
  double body_length() const { return n_pairs * module_spacing; }
  void validate() const;  // throws ConfigError
};

// Coding-scheme parameters mapping gait phase to posture and intended
// contact. shoulder_amplitude here is the commanded value for the cycle;
// it defaults to the morphology's hardware value.
struct GaitProgram {
  double spatial_period = 1.0;      // S_n, wave periods along the body
  double body_amplitude = 0.0;      // A_b, rad
  double vertical_amplitude = 0.0;  // A_p, rad in [0, pi/3]
  double shoulder_amplitude = M_PI / 12.0;  // A_leg, rad
  double period = 2.0 * M_PI;       // T, abstract cycle time
  double desired_duty = 0.5;        // d in (0, 0.5]
  double clearance = 0.0;           // c0, cm; hip-drop threshold for stance
  // Leg workspace limit: a pair keeps intended contact only while its
  // module heading stays within this window of the mean heading.
  double heading_window = kDefaultHeadingWindow;

  void validate() const;  // throws ConfigError
};

// Gait with defaults tied to the morphology: shoulder amplitude copied
// from the hardware, clearance c0 = 0.75 * l * sin(A_leg).
GaitProgram default_gait(const RobotMorphology& morph);

// Full-body posture at one instant.
struct Posture {
  double phase = 0.0;
  std::vector<double> yaw_angles;        // N-1
  std::vector<double> pitch_angles;      // N-1
  std::vector<double> shoulder_angles;   // 2N, leg_id order
  std::vector<uint8_t> intended_stance;  // 2N, leg_id order
  std::vector<uint8_t> workspace_jam;    // N, per pair: sweep stalled
};

// Axle and foot placements in the world frame. Feet carry the hip-plane z
// of their axle; contact tests treat them as vertical probes.
struct KinematicFrame {
  std::vector<Vec3> axles;       // N
  std::vector<double> headings;  // N, world yaw of each module
  std::vector<Vec3> feet;        // 2N, leg_id order
};

// beta_1, beta_2 evaluated at joint i. Throws std::out_of_range unless
// 0 <= i < N-1.
std::pair<double, double> shape_basis(int i, int n_pairs, double spatial_period);

// Yaw joint angles alpha(i) = w1*beta1(i) + w2*beta2(i).
std::vector<double> yaw_angles(const ShapePoint& w, int n_pairs, double spatial_period);

// Pitch joint angles alpha_p(i) = A_p * cos(2*(2*pi*S_n*i/N + phase)).
// The vertical wave runs at exactly twice the yaw-wave frequency.
std::vector<double> pitch_angles(double phase, double vertical_amplitude,
                                 int n_pairs, double spatial_period);

// Per-pair hip lift induced by the vertical wave, normalized so the lowest
// hip sits at zero. The wave trough is centered on each leg's power stroke
// (lift peaks at the contact-window edges), which is what makes the
// vertical wave trim contact windows symmetrically. Used by the stance
// rule and the simulator ride height.
std::vector<double> hip_drops(const RobotMorphology& morph, const GaitProgram& gait,
                              double phase);

// Vertical-wave lift amplitude per radian of pitch amplitude.
inline constexpr double kHipLiftScaleFactor = 1.0 / 3.0;  // of module spacing

Posture posture_at(const RobotMorphology& morph, const GaitProgram& gait, double phase);

// Mean intended contact fraction over one cycle (the duty factor the gait
// program itself prescribes).
double intended_duty_fraction(const RobotMorphology& morph, const GaitProgram& gait,
                              int phase_samples = 256);

// Same posture parametrized by a shape-space point: yaw angles come from w
// directly, everything phase-driven uses phase = atan2(w1, w2). At the
// origin the phase is taken as 0.
Posture posture_from_shape(const RobotMorphology& morph, const GaitProgram& gait,
                           const ShapePoint& w);

KinematicFrame forward_kinematics(const RobotMorphology& morph, const Posture& posture,
                                  const Pose2& base);

// True iff any two feet of consecutive pairs on the same side come closer
// than 1 cm in the plane (strict inequality).
bool self_collision(const RobotMorphology& morph, const Posture& posture);

// Largest body amplitude that stays collision-free at every sampled phase
// (256 samples) for all amplitudes below it; bisection to 1e-3 rad, capped
// at the chart bound pi. Returns 0 for degenerate morphologies that
// collide even when straight.
double compute_A_SC(const RobotMorphology& morph, const GaitProgram& gait);

namespace detail {
// Retraction-phase stance test for one leg, before the hip-drop gate.
bool in_stance_window(int pair, int side, int n_pairs, double spatial_period,
                      double desired_duty, double phase);
// Position within the leg's stance window, 0 at touchdown to 1 at liftoff;
// clamped outside the window.
double stance_progress(int pair, int side, int n_pairs, double spatial_period,
                       double desired_duty, double phase);
}  // namespace detail

// Ground load transfers onto a leg over the first and last fraction of its
// contact window (engagement ramp); the plateau in between carries full
// load. A grounded foot never drops below the floor share.
inline constexpr double kEngagementRampFraction = 0.18;
inline constexpr double kEngagementLoadFloor = 0.2;

// Trapezoidal load share of one leg at a given stance progress.
double engagement_load(double progress, double ramp_fraction = kEngagementRampFraction);

}  // namespace merloco
