#pragma once

#include <optional>
#include <random>

#include "json.hpp"
#include "merloco/control.hpp"
#include "merloco/geomech.hpp"
#include "merloco/morphology.hpp"
#include "merloco/terrain.hpp"

// Time-stepped quasi-static locomotion over a stepfield: realized contacts
// (geometric reach test or an abstract erasure channel), force-balance
// integration of the body pose, and per-cycle statistics.
namespace merloco {

enum class ContactMode { Geometric, Channel };

// Empirical contact-loss probability as a function of terrain rugosity;
// piecewise linear, clamped at the table ends.
struct PLossTable {
  std::vector<double> rugosity;
  std::vector<double> p_loss;

  double lookup(double rg) const;
};

struct ContactModeConfig {
  ContactMode mode = ContactMode::Geometric;
  // Vertical capture range of a leg: terrain within +/- reach_window of the
  // body-plane reference at the axle can be engaged. Must not be smaller
  // than the gait clearance c0 or flat ground would drop contacts.
  double reach_window = 0.0;  // cm; <= 0 selects kReachWindowFactor * leg_length
  double retry_reach_factor = 0.2;  // extra reach per leg length for stop-and-wait
  // Blocks rising more than this above a swing foot's reference plane
  // obstruct the protraction sweep; the vertical wave lifts swing hips
  // over them. <= 0 selects the effective reach.
  double swing_clearance = 0.0;  // cm
  PLossTable channel_loss;

  double effective_reach(const RobotMorphology& morph) const;
  double effective_swing_clearance(const RobotMorphology& morph) const;
};

// Load share carried by an obstructed swing foot jammed against a block.
inline constexpr double kObstructionLoad = 0.7;

// Default swing clearance as a multiple of the effective reach.
inline constexpr double kSwingClearanceFactor = 1.2;

// Vertical span a C-arc foot can roll through, added to its windows.
inline double arc_vertical_span(const FootGeometry& foot) {
  return foot.kind == FootGeometry::Kind::CArc ? foot.arc_length / M_PI : 0.0;
}

// Default capture range as a fraction of leg length, chosen so stepfields
// produce substantial but not total contact loss.
inline constexpr double kReachWindowFactor = 0.4;

struct SimState {
  Pose2 pose;          // world pose of the head axle
  double phase = 0.0;  // in [0, 2*pi)
  uint64_t step_index = 0;
  uint64_t solver_stalls = 0;  // steps frozen on an unbalanceable contact set
  double distance = 0.0;  // cumulative world-x displacement, cm
  std::vector<uint8_t> realized_stance;  // last resolved step, leg-major
  std::vector<uint8_t> obstructed;       // swing feet jammed on blocks
  BodyVelocity last_xi;
  std::vector<double> last_thrust;  // Coulomb-normalized forward force per foot
  // Cycle-scoped bookkeeping.
  std::vector<uint8_t> channel_erased;
  std::vector<uint8_t> retry_used;
  std::vector<uint8_t> retry_active;
  std::vector<double> slip_d1, slip_d2;  // cumulative per foot, cm
};

SimState make_initial_state(const RobotMorphology& morph, const Pose2& start);

// Realized contacts for one posture. Geometric mode tests terrain height at
// the foot (any of >= 9 footprint samples for C-arc feet) against the
// body-plane reference window; Channel mode erases each intended contact
// independently with probability channel_loss(rugosity).
std::vector<uint8_t> resolve_contacts(const RobotMorphology& morph, const GaitProgram& gait,
                                      const Posture& posture, const Pose2& pose,
                                      const Stepfield& terrain, const ContactModeConfig& cfg,
                                      std::mt19937_64& rng);

// One quasi-static integration step of size dphase <= 2*pi/64. With all
// feet airborne the pose is frozen for the step.
SimState step(const SimState& state, const RobotMorphology& morph, const GaitProgram& gait,
              const Stepfield& terrain, const ContactModeConfig& cfg, double dphase,
              std::mt19937_64& rng, bool contact_retry = false);

struct CycleRecord {
  double stride_cm = 0.0;  // world-x displacement over the cycle
  double stride_bl = 0.0;
  double duty = 0.0;       // mean realized contact fraction
  double vertical_amplitude = 0.0;  // gait during this cycle
  double body_amplitude = 0.0;
  double shoulder_amplitude = 0.0;
  std::vector<uint8_t> intended;  // n_legs x steps, leg-major
  std::vector<uint8_t> realized;
  // What binary foot sensors report: a realized bac or an obstructed swing
  // touch both close the contact.
  std::vector<uint8_t> sensed;
  std::vector<double> thrust;     // per-foot Coulomb-normalized forward force
  std::vector<SlipBudget> budgets;  // per foot, this cycle
};

struct TrialRecord {
  uint64_t seed = 0;
  int steps_per_cycle = 0;
  int n_legs = 0;
  double body_length = 0.0;  // cm, N * module_spacing
  double dphase = 0.0;
  std::vector<CycleRecord> cycles;
  std::vector<double> step_x;  // world x at every step boundary (size steps*cycles + 1)

  double total_forward() const { return step_x.empty() ? 0.0 : step_x.back() - step_x.front(); }
  nlohmann::json to_json() const;
};

TrialRecord trial_record_from_json(const nlohmann::json& j);

inline constexpr int kDefaultStepsPerCycle = 128;

// Deterministic rollout; the controller is consulted once at the end of
// every period and its decision applies to the next cycle.
TrialRecord run_trial(const RobotMorphology& morph, const GaitProgram& gait,
                      const Stepfield& terrain, const Controller& controller, int n_cycles,
                      int steps_per_cycle = kDefaultStepsPerCycle, uint64_t seed = 0,
                      const ContactModeConfig& cfg = {}, const Pose2& start = {});

// Fractional cycles to cross the distance D along world x, linearly
// interpolated between steps; nullopt when the trial never reaches it.
std::optional<double> time_to_distance(const TrialRecord& record, double distance_cm = 60.0);

// Empirical step CDF of cycle-average velocities normalized by v_open.
struct VelocityCdf {
  std::vector<double> normalized;  // sorted ascending
  int sample_count = 0;

  double cdf_at(double q) const;
  double mean() const;
  double variance() const;
};

VelocityCdf velocity_cdf(const std::vector<double>& samples, double v_open);

// Per-cycle thrust view of one trial cycle.
struct ThrustProfile {
  int n_legs = 0;
  int steps = 0;
  double dphase = 0.0;
  const std::vector<double>* thrust = nullptr;
  const std::vector<uint8_t>* realized = nullptr;
};

ThrustProfile thrust_profile(const TrialRecord& record, int cycle);

// Time-variance of the normalized thrust within realized contact, averaged
// over legs (and cycles for the record overload). Throws
// std::invalid_argument when no contact was realized at all.
double thrust_variance(const ThrustProfile& profile);
double thrust_variance(const TrialRecord& record);

// Mean realized duty over a whole trial.
double measured_duty(const TrialRecord& record);

// Fraction of intended contact steps that failed to realize.
double contact_loss_fraction(const TrialRecord& record);

// Empirical loss-vs-rugosity table from geometric-mode rollouts; each
// ensemble holds the stepfields of one rugosity level (>= 10 of them) and
// the fit is made monotone non-decreasing. Throws std::invalid_argument on
// insufficient samples.
PLossTable calibrate_channel(const RobotMorphology& morph, const GaitProgram& gait,
                             const std::vector<std::vector<Stepfield>>& ensembles,
                             const ContactModeConfig& geometric_cfg, int n_cycles = 3,
                             int steps_per_cycle = kDefaultStepsPerCycle,
                             uint64_t seed = 0);

}  // namespace merloco
