#include <cstdio>
#include <fstream>
#include <random>

#include "doctest.h"
#include "merloco/control.hpp"
#include "merloco/simulator.hpp"
#include "merloco/terrain.hpp"

using namespace merloco;

namespace {

SensorFrame make_frame(int n_legs, int steps, double intended_fill, double keep) {
  SensorFrame f;
  f.n_legs = n_legs;
  f.steps = steps;
  f.intended.assign(static_cast<size_t>(n_legs) * steps, 0);
  f.realized.assign(static_cast<size_t>(n_legs) * steps, 0);
  std::mt19937_64 rng(5);
  size_t count = 0;
  for (size_t i = 0; i < f.intended.size(); ++i) {
    const bool in = (static_cast<double>(rng() >> 11) * 0x1p-53) < intended_fill;
    f.intended[i] = in;
    if (in) {
      f.realized[i] = (static_cast<double>(count % 100) / 100.0) < keep;
      ++count;
    }
  }
  return f;
}

}  // namespace

TEST_CASE("measured duty") {
  SensorFrame f = make_frame(12, 64, 0.5, 1.0);
  f.realized = f.intended;
  const double full = measure_duty(f);
  CHECK(full == doctest::Approx(0.5).epsilon(0.1));

  std::fill(f.realized.begin(), f.realized.end(), 0);
  CHECK(measure_duty(f) == doctest::Approx(0.0));

  // Erasing every other intended contact halves the duty.
  f = make_frame(12, 64, 0.5, 0.5);
  CHECK(measure_duty(f) == doctest::Approx(full / 2.0).epsilon(0.1));

  SensorFrame empty;
  CHECK_THROWS_AS(measure_duty(empty), std::invalid_argument);
}

TEST_CASE("siso update formula") {
  CHECK(siso_update(0.5, 0.5) == doctest::Approx(0.0));
  CHECK(siso_update(0.5, 0.4) == doctest::Approx(0.32));
  CHECK(siso_update(0.5, 0.1) == doctest::Approx(M_PI / 3.0));
  CHECK(siso_update(0.3, 0.5) == doctest::Approx(0.0));  // clamped below

  // Monotone non-increasing in the measurement, slope -p inside the band.
  double prev = 1e9;
  for (double dhat = 0.0; dhat <= 0.5; dhat += 0.01) {
    const double v = siso_update(0.5, dhat);
    CHECK(v <= prev + 1e-12);
    prev = v;
  }
  const double a = siso_update(0.5, 0.30), b = siso_update(0.5, 0.35);
  CHECK((a - b) / 0.05 == doctest::Approx(3.2));
}

TEST_CASE("stop and wait retry flags") {
  SensorFrame f = make_frame(6, 32, 0.5, 1.0);
  f.realized = f.intended;
  auto retries = stop_and_wait(f);
  for (uint8_t r : retries) CHECK(r == 0);

  // Erase one leg entirely.
  for (int s = 0; s < f.steps; ++s) f.realized[static_cast<size_t>(2) * f.steps + s] = 0;
  retries = stop_and_wait(f);
  int total = 0;
  for (uint8_t r : retries) total += r;
  CHECK(total == 1);
  CHECK(retries[2] == 1);
}

TEST_CASE("controller decisions respect gait bounds") {
  const RobotMorphology morph;
  GaitProgram gait = default_gait(morph);
  gait.body_amplitude = 0.75;
  const auto siso = make_siso(3.2, 0.5, 0.8);
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    SensorFrame f = make_frame(12, 32, 0.5,
                               static_cast<double>(rng() >> 11) * 0x1p-53);
    GaitProgram g = gait;
    g.vertical_amplitude =
        M_PI / 3.0 * (static_cast<double>(rng() >> 11) * 0x1p-53);
    const ControllerDecision d = siso->decide(f, g, morph);
    CHECK(d.vertical_amplitude >= 0.0);
    CHECK(d.vertical_amplitude <= M_PI / 3.0 + 1e-12);
    CHECK(d.body_amplitude <= 0.8 + 1e-12);
    GaitProgram next = g;
    next.vertical_amplitude = d.vertical_amplitude;
    next.body_amplitude = d.body_amplitude;
    next.shoulder_amplitude = d.shoulder_amplitude;
    CHECK_NOTHROW(next.validate());
  }
}

TEST_CASE("open loop and table controllers") {
  const RobotMorphology morph;
  GaitProgram gait = default_gait(morph);
  gait.body_amplitude = 0.6;
  gait.vertical_amplitude = 0.2;
  const SensorFrame f = make_frame(12, 32, 0.5, 0.9);

  const auto open = make_open_loop();
  const ControllerDecision d = open->decide(f, gait, morph);
  CHECK(d.vertical_amplitude == doctest::Approx(gait.vertical_amplitude));
  CHECK(d.body_amplitude == doctest::Approx(gait.body_amplitude));
  CHECK(d.shoulder_amplitude == doctest::Approx(gait.shoulder_amplitude));

  // An identity decision table reproduces the open-loop behavior on grid
  // points.
  const std::string path = "/tmp/merloco_test_table.csv";
  {
    std::ofstream out(path);
    out << "A_b,A_leg,A_p,duty,A_b_next,A_leg_next,A_p_next\n";
    for (double ab : {0.4, 0.6}) {
      for (double ap : {0.0, 0.2}) {
        for (double duty : {0.2, 0.4}) {
          out << ab << ',' << gait.shoulder_amplitude << ',' << ap << ',' << duty << ','
              << ab << ',' << gait.shoulder_amplitude << ',' << ap << "\n";
        }
      }
    }
  }
  const auto table = make_table_mimo(path, 1.0);
  const ControllerDecision td = table->decide(f, gait, morph);
  CHECK(td.body_amplitude == doctest::Approx(0.6));
  CHECK(td.vertical_amplitude == doctest::Approx(0.2));

  // Malformed tables are rejected.
  {
    std::ofstream out(path);
    out << "A_b,A_leg\n1,2\n";
  }
  CHECK_THROWS_AS(make_table_mimo(path, 1.0), ConfigError);
  CHECK_THROWS_AS(make_table_mimo("/nonexistent/table.csv", 1.0), ConfigError);
}

TEST_CASE("siso converges to zero vertical wave without losses") {
  const RobotMorphology morph;
  GaitProgram gait = default_gait(morph);
  gait.body_amplitude = 0.75;
  gait.vertical_amplitude = 0.3;
  const auto siso = make_siso();
  const TrialRecord rec = run_trial(morph, gait, flat_terrain(), *siso, 4, 128, 0, {},
                                    Pose2{0, 40, 0, 0});
  CHECK(rec.cycles[2].vertical_amplitude == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(rec.cycles[3].vertical_amplitude == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("stop and wait recovers contacts on rough ground") {
  const RobotMorphology morph;
  GaitProgram gait = default_gait(morph);
  gait.body_amplitude = 0.751;
  const auto open = make_open_loop();
  const auto snw = make_stop_and_wait();

  double open_mean = 0.0, snw_mean = 0.0;
  const int seeds = 15;
  for (int s = 0; s < seeds; ++s) {
    const Stepfield field = generate_stepfield(700 + s, 6.0, 2.0, 1.0, 16, 8);
    const TrialRecord a =
        run_trial(morph, gait, field, *open, 3, 128, 31 + s, {}, Pose2{0, 40, 0, 0});
    const TrialRecord b =
        run_trial(morph, gait, field, *snw, 3, 128, 31 + s, {}, Pose2{0, 40, 0, 0});
    open_mean += a.total_forward();
    snw_mean += b.total_forward();
    // Retries only ever add contacts.
    double la = contact_loss_fraction(a), lb = contact_loss_fraction(b);
    CHECK(lb <= la + 1e-12);
  }
  CHECK(snw_mean >= open_mean);
}
