#include "merloco/control.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace merloco {

double measure_duty(const SensorFrame& frame) {
  if (frame.n_legs <= 0 || frame.steps <= 0 || frame.realized.empty())
    throw std::invalid_argument("measure_duty: empty frame");
  double sum = 0.0;
  for (uint8_t b : frame.realized) sum += b ? 1.0 : 0.0;
  return sum / static_cast<double>(frame.realized.size());
}

double siso_update(double desired_duty, double measured_duty, double gain) {
  const double raw = gain * (desired_duty - measured_duty);
  return std::clamp(raw, 0.0, kVerticalAmplitudeMax);
}

std::vector<uint8_t> stop_and_wait(const SensorFrame& frame) {
  std::vector<uint8_t> retry(static_cast<size_t>(frame.n_legs), 0);
  for (int leg = 0; leg < frame.n_legs; ++leg) {
    bool any_intended = false, any_realized = false;
    for (int s = 0; s < frame.steps; ++s) {
      any_intended = any_intended || frame.bit(frame.intended, leg, s);
      any_realized = any_realized || frame.bit(frame.realized, leg, s);
    }
    retry[static_cast<size_t>(leg)] = (any_intended && !any_realized) ? 1 : 0;
  }
  return retry;
}

ControllerDecision Controller::clamp(ControllerDecision d, double body_amplitude_cap) const {
  d.vertical_amplitude = std::clamp(d.vertical_amplitude, 0.0, kVerticalAmplitudeMax);
  d.body_amplitude = std::clamp(d.body_amplitude, 0.0, body_amplitude_cap);
  d.shoulder_amplitude = std::clamp(d.shoulder_amplitude, 0.0, M_PI / 2.0 - 1e-6);
  return d;
}

namespace {

class OpenLoopController final : public Controller {
 public:
  ControllerDecision decide(const SensorFrame&, const GaitProgram& gait,
                            const RobotMorphology&) const override {
    return {gait.vertical_amplitude, gait.body_amplitude, gait.shoulder_amplitude};
  }
  std::string name() const override { return "open_loop"; }
};

class SisoController final : public Controller {
 public:
  SisoController(double gain, double desired_duty, double cap)
      : gain_(gain), desired_duty_(desired_duty), cap_(cap) {}

  ControllerDecision decide(const SensorFrame& frame, const GaitProgram& gait,
                            const RobotMorphology&) const override {
    // The vertical wave itself shortens the intended duty, so the error is
    // referenced to the duty the frame's own window prescribed; otherwise
    // the loop would read its own modulation as contact loss and run away.
    double intended_mean = 0.0;
    for (uint8_t b : frame.intended) intended_mean += b ? 1.0 : 0.0;
    intended_mean /= std::max<size_t>(1, frame.intended.size());
    const double reference = std::min(desired_duty_, intended_mean);
    double next = siso_update(reference, measure_duty(frame), gain_);
    // Servo slew: the amplitude moves at most pi/9 per period.
    constexpr double kSlew = M_PI / 18.0;
    next = std::clamp(next, gait.vertical_amplitude - kSlew,
                      gait.vertical_amplitude + kSlew);
    ControllerDecision d{next, gait.body_amplitude, gait.shoulder_amplitude};
    return clamp(d, cap_);
  }
  std::string name() const override { return "siso"; }

 private:
  double gain_;
  double desired_duty_;
  double cap_;
};

class StopAndWaitController final : public Controller {
 public:
  ControllerDecision decide(const SensorFrame&, const GaitProgram& gait,
                            const RobotMorphology&) const override {
    return {gait.vertical_amplitude, gait.body_amplitude, gait.shoulder_amplitude};
  }
  bool wants_contact_retry() const override { return true; }
  std::string name() const override { return "stop_and_wait"; }
};

struct TableRow {
  double a_b, a_leg, a_p, duty;
  double a_b_next, a_leg_next, a_p_next;
};

class TableMimoController final : public Controller {
 public:
  TableMimoController(std::vector<TableRow> rows, double cap)
      : rows_(std::move(rows)), cap_(cap) {}

  ControllerDecision decide(const SensorFrame& frame, const GaitProgram& gait,
                            const RobotMorphology&) const override {
    const double duty = measure_duty(frame);
    const TableRow* best = nullptr;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (const TableRow& row : rows_) {
      // Angles share a scale; duty is normalized to its [0, 0.5] range.
      const double da = row.a_b - gait.body_amplitude;
      const double dl = row.a_leg - gait.shoulder_amplitude;
      const double dp = row.a_p - gait.vertical_amplitude;
      const double dd = 2.0 * (row.duty - duty);
      const double d2 = da * da + dl * dl + dp * dp + dd * dd;
      if (d2 < best_d2) {
        best_d2 = d2;
        best = &row;
      }
    }
    ControllerDecision d{best->a_p_next, best->a_b_next, best->a_leg_next};
    return clamp(d, cap_);
  }
  std::string name() const override { return "table_mimo"; }

 private:
  std::vector<TableRow> rows_;
  double cap_;
};

}  // namespace

std::unique_ptr<Controller> make_open_loop() { return std::make_unique<OpenLoopController>(); }

std::unique_ptr<Controller> make_siso(double gain, double desired_duty,
                                      double body_amplitude_cap) {
  return std::make_unique<SisoController>(gain, desired_duty, body_amplitude_cap);
}

std::unique_ptr<Controller> make_stop_and_wait() {
  return std::make_unique<StopAndWaitController>();
}

std::unique_ptr<Controller> make_table_mimo(const std::string& csv_path,
                                            double body_amplitude_cap) {
  std::ifstream in(csv_path);
  if (!in) throw ConfigError("table_mimo: cannot read " + csv_path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("table_mimo: empty table " + csv_path);
  if (line != "A_b,A_leg,A_p,duty,A_b_next,A_leg_next,A_p_next")
    throw ConfigError("table_mimo: unexpected header in " + csv_path);

  std::vector<TableRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    TableRow row{};
    char comma = ',';
    if (!(ss >> row.a_b >> comma >> row.a_leg >> comma >> row.a_p >> comma >> row.duty >>
          comma >> row.a_b_next >> comma >> row.a_leg_next >> comma >> row.a_p_next))
      throw ConfigError("table_mimo: malformed row " + std::to_string(line_no) + " in " +
                        csv_path);
    rows.push_back(row);
  }
  if (rows.empty()) throw ConfigError("table_mimo: table has no rows: " + csv_path);
  return std::make_unique<TableMimoController>(std::move(rows), body_amplitude_cap);
}

}  // namespace merloco
