#pragma once

#include <memory>
#include <string>
#include <vector>

#include "merloco/morphology.hpp"
#include "merloco/types.hpp"

// Cycle-level feedback: contact sensing, the SISO vertical-wave controller,
// the per-contact stop-and-wait repair baseline, and a pluggable decision
// interface for externally supplied policies.
namespace merloco {

// Intended vs. realized contact matrices over one period, leg-major
// [leg * steps + step].
struct SensorFrame {
  int n_legs = 0;
  int steps = 0;
  std::vector<uint8_t> intended;
  std::vector<uint8_t> realized;

  bool bit(const std::vector<uint8_t>& m, int leg, int step) const {
    return m[static_cast<size_t>(leg) * steps + step] != 0;
  }
};

// Mean of the realized contact matrix: the terrain-disturbed duty factor.
// Throws std::invalid_argument on an empty frame.
double measure_duty(const SensorFrame& frame);

inline constexpr double kSisoDefaultGain = 3.2;       // rad
inline constexpr double kVerticalAmplitudeMax = M_PI / 3.0;

// A_p = clamp(p * (d - d_hat), 0, pi/3), applied once per period.
double siso_update(double desired_duty, double measured_duty, double gain = kSisoDefaultGain);

// Legs whose intended contact window produced no realized contact at all
// in the frame; each gets one re-engagement attempt in the next window.
std::vector<uint8_t> stop_and_wait(const SensorFrame& frame);

// Gait parameters commanded for the next cycle.
struct ControllerDecision {
  double vertical_amplitude = 0.0;
  double body_amplitude = 0.0;
  double shoulder_amplitude = 0.0;
};

class Controller {
 public:
  virtual ~Controller() = default;
  virtual ControllerDecision decide(const SensorFrame& frame, const GaitProgram& gait,
                                    const RobotMorphology& morph) const = 0;
  // When set the simulator grants each lost contact one extended-reach
  // retry within its cycle.
  virtual bool wants_contact_retry() const { return false; }
  virtual std::string name() const = 0;

 protected:
  // Decisions must stay inside the gait invariants; body amplitude is
  // additionally capped by the collision limit when one is configured.
  ControllerDecision clamp(ControllerDecision d, double body_amplitude_cap) const;
};

std::unique_ptr<Controller> make_open_loop();
std::unique_ptr<Controller> make_siso(double gain = kSisoDefaultGain, double desired_duty = 0.5,
                                      double body_amplitude_cap = M_PI);
std::unique_ptr<Controller> make_stop_and_wait();
// CSV decision table: header A_b,A_leg,A_p,duty,A_b_next,A_leg_next,A_p_next;
// lookup is nearest row in normalized input space. Throws ConfigError on a
// malformed table.
std::unique_ptr<Controller> make_table_mimo(const std::string& csv_path,
                                            double body_amplitude_cap = M_PI);

}  // namespace merloco
