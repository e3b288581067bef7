#include <cmath>
#include <random>

#include "doctest.h"
#include "merloco/morphology.hpp"

using namespace merloco;

namespace {
RobotMorphology default_morph() { return RobotMorphology{}; }
}  // namespace

TEST_CASE("shape basis values") {
  auto [b1, b2] = shape_basis(0, 6, 1.0);
  CHECK(b1 == doctest::Approx(0.0));
  CHECK(b2 == doctest::Approx(1.0));
  std::tie(b1, b2) = shape_basis(3, 6, 1.0);
  CHECK(b1 == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(b2 == doctest::Approx(-1.0));
  std::tie(b1, b2) = shape_basis(2, 12, 3.0);
  CHECK(b1 == doctest::Approx(std::sin(M_PI)).epsilon(1e-12));
  CHECK(b2 == doctest::Approx(-1.0));
  CHECK_THROWS_AS(shape_basis(5, 6, 1.0), std::out_of_range);
  CHECK_THROWS_AS(shape_basis(-1, 6, 1.0), std::out_of_range);
}

TEST_CASE("yaw angles basics and traveling wave") {
  const auto zeros = yaw_angles({0.0, 0.0}, 6, 1.0);
  for (double a : zeros) CHECK(a == 0.0);

  const double amp = 0.4;
  const auto alpha = yaw_angles({0.0, amp}, 6, 1.0);
  CHECK(alpha[3] == doctest::Approx(-amp));

  // w = A(sin t, cos t) sweeps alpha(i, t) = A cos(2 pi S_n i / N - t).
  std::mt19937_64 rng(7);
  for (int k = 0; k < 100; ++k) {
    const double t = 2.0 * M_PI * (rng() % 1000) / 1000.0;
    const int i = static_cast<int>(rng() % 5);
    const auto a = yaw_angles({amp * std::sin(t), amp * std::cos(t)}, 6, 1.0);
    const double expect = amp * std::cos(2.0 * M_PI * i / 6.0 - t);
    CHECK(a[static_cast<size_t>(i)] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("yaw angles are linear in w") {
  std::mt19937_64 rng(11);
  auto uni = [&](double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1p-53);
  };
  for (int k = 0; k < 50; ++k) {
    const ShapePoint w{uni(-1, 1), uni(-1, 1)};
    const ShapePoint v{uni(-1, 1), uni(-1, 1)};
    const double a = uni(-2, 2), b = uni(-2, 2);
    const auto lhs = yaw_angles({a * w.w1 + b * v.w1, a * w.w2 + b * v.w2}, 8, 1.5);
    const auto rw = yaw_angles(w, 8, 1.5);
    const auto rv = yaw_angles(v, 8, 1.5);
    for (size_t i = 0; i < lhs.size(); ++i)
      CHECK(lhs[i] == doctest::Approx(a * rw[i] + b * rv[i]).epsilon(1e-12));
  }
}

TEST_CASE("pitch angles") {
  const auto zeros = pitch_angles(0.3, 0.0, 6, 1.0);
  for (double a : zeros) CHECK(a == 0.0);

  const double ap = 2.0 * M_PI / 9.0;
  CHECK(pitch_angles(0.0, ap, 6, 1.0)[0] == doctest::Approx(ap));
  CHECK(pitch_angles(M_PI / 4.0, 0.7, 6, 1.0)[0] == doctest::Approx(0.0).epsilon(1e-12));

  // Twice the yaw-wave frequency: the pitch argument advances twice as
  // fast along the body.
  const auto p = pitch_angles(0.2, 0.5, 12, 1.0);
  for (size_t i = 0; i < p.size(); ++i) {
    const double arg = 2.0 * M_PI * i / 12.0 + kLegWaveSign * 0.2;
    CHECK(p[i] == doctest::Approx(0.5 * std::cos(2.0 * arg)).epsilon(1e-12));
  }
}

TEST_CASE("posture stance structure at A_p = 0") {
  const RobotMorphology m = default_morph();
  const GaitProgram g = default_gait(m);

  const int steps = 1024;
  std::vector<int> counts(static_cast<size_t>(m.n_legs()), 0);
  int both_down = 0;
  for (int k = 0; k < steps; ++k) {
    const Posture p = posture_at(m, g, 2.0 * M_PI * k / steps);
    for (int leg = 0; leg < m.n_legs(); ++leg)
      counts[static_cast<size_t>(leg)] += p.intended_stance[static_cast<size_t>(leg)];
    for (int pair = 0; pair < m.n_pairs; ++pair)
      both_down += p.intended_stance[static_cast<size_t>(2 * pair)] &&
                   p.intended_stance[static_cast<size_t>(2 * pair + 1)];
  }
  for (int c : counts)
    CHECK(std::fabs(c / static_cast<double>(steps) - 0.5) <= 1.0 / steps + 1e-12);
  CHECK(both_down == 0);
}

TEST_CASE("posture phase + pi swaps sides") {
  const RobotMorphology m = default_morph();
  const GaitProgram g = default_gait(m);
  for (double phase : {0.0, 0.7, 2.1}) {
    const Posture a = posture_at(m, g, phase);
    const Posture b = posture_at(m, g, phase + M_PI);
    for (int pair = 0; pair < m.n_pairs; ++pair) {
      CHECK(static_cast<int>(a.intended_stance[static_cast<size_t>(2 * pair)]) ==
            static_cast<int>(b.intended_stance[static_cast<size_t>(2 * pair + 1)]));
    }
  }
}

TEST_CASE("posture is 2 pi periodic") {
  const RobotMorphology m = default_morph();
  GaitProgram g = default_gait(m);
  g.body_amplitude = 0.5;
  g.vertical_amplitude = 0.3;
  const Posture a = posture_at(m, g, 1.234);
  const Posture b = posture_at(m, g, 1.234 + 2.0 * M_PI);
  for (size_t i = 0; i < a.yaw_angles.size(); ++i)
    CHECK(a.yaw_angles[i] == doctest::Approx(b.yaw_angles[i]).epsilon(1e-9));
  for (size_t i = 0; i < a.intended_stance.size(); ++i)
    CHECK(a.intended_stance[i] == b.intended_stance[i]);
}

TEST_CASE("intended duty decreases with the vertical wave") {
  const RobotMorphology m = default_morph();
  GaitProgram g = default_gait(m);

  double prev = 1.0;
  for (double ap = 0.0; ap <= M_PI / 3.0 + 1e-9; ap += 0.02) {
    g.vertical_amplitude = ap;
    const double duty = intended_duty_fraction(m, g, 256);
    CHECK(duty <= prev + 1e-9);
    prev = duty;
  }
  g.vertical_amplitude = 2.0 * M_PI / 9.0;
  CHECK(intended_duty_fraction(m, g) < 0.5);
  g.vertical_amplitude = 0.0;
  CHECK(intended_duty_fraction(m, g) == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("forward kinematics straight body") {
  const RobotMorphology m = default_morph();
  const GaitProgram g = default_gait(m);
  Posture p = posture_at(m, g, 0.0);
  std::fill(p.yaw_angles.begin(), p.yaw_angles.end(), 0.0);
  std::fill(p.pitch_angles.begin(), p.pitch_angles.end(), 0.0);
  std::fill(p.shoulder_angles.begin(), p.shoulder_angles.end(), 0.0);

  const KinematicFrame f = forward_kinematics(m, p, Pose2{});
  for (int i = 0; i < m.n_pairs; ++i) {
    CHECK(f.axles[static_cast<size_t>(i)].x() ==
          doctest::Approx(-i * m.module_spacing).epsilon(1e-12));
    CHECK(f.axles[static_cast<size_t>(i)].y() == doctest::Approx(0.0));
    CHECK(f.feet[static_cast<size_t>(2 * i)].y() == doctest::Approx(m.leg_length));
    CHECK(f.feet[static_cast<size_t>(2 * i + 1)].y() == doctest::Approx(-m.leg_length));
  }
}

TEST_CASE("forward kinematics mirror symmetry") {
  const RobotMorphology m = default_morph();
  GaitProgram g = default_gait(m);
  g.body_amplitude = 0.6;
  const Posture p = posture_at(m, g, 0.9);
  Posture q = p;
  for (auto& a : q.yaw_angles) a = -a;
  for (int pair = 0; pair < m.n_pairs; ++pair)
    std::swap(q.shoulder_angles[static_cast<size_t>(2 * pair)],
              q.shoulder_angles[static_cast<size_t>(2 * pair + 1)]);

  const KinematicFrame fa = forward_kinematics(m, p, Pose2{});
  const KinematicFrame fb = forward_kinematics(m, q, Pose2{});
  for (int i = 0; i < m.n_pairs; ++i) {
    CHECK(fa.axles[static_cast<size_t>(i)].y() ==
          doctest::Approx(-fb.axles[static_cast<size_t>(i)].y()).epsilon(1e-9));
    CHECK(fa.feet[static_cast<size_t>(2 * i)].y() ==
          doctest::Approx(-fb.feet[static_cast<size_t>(2 * i + 1)].y()).epsilon(1e-9));
  }
}

TEST_CASE("forward kinematics two-link oracle") {
  RobotMorphology m = default_morph();
  m.n_pairs = 2;
  const GaitProgram g = default_gait(m);
  Posture p = posture_at(m, g, 0.0);
  const double theta = 0.7;
  p.yaw_angles[0] = theta;
  p.pitch_angles[0] = 0.0;
  std::fill(p.shoulder_angles.begin(), p.shoulder_angles.end(), 0.0);

  const KinematicFrame f = forward_kinematics(m, p, Pose2{});
  // Midpoint-hinged link: the step direction averages the two module
  // headings.
  const double s = m.module_spacing;
  const double ax = -0.5 * s * (1.0 + std::cos(theta));
  const double ay = -0.5 * s * std::sin(theta);
  CHECK(f.axles[1].x() == doctest::Approx(ax).epsilon(1e-12));
  CHECK(f.axles[1].y() == doctest::Approx(ay).epsilon(1e-12));
  // Second pair's left foot is lateral in the rotated module frame.
  CHECK(f.feet[2].x() == doctest::Approx(ax - m.leg_length * std::sin(theta)).epsilon(1e-12));
  CHECK(f.feet[2].y() == doctest::Approx(ay + m.leg_length * std::cos(theta)).epsilon(1e-12));
}

TEST_CASE("self collision basics") {
  const RobotMorphology m = default_morph();
  const GaitProgram g = default_gait(m);
  GaitProgram straight = g;
  straight.body_amplitude = 0.0;
  CHECK_FALSE(self_collision(m, posture_at(m, straight, 0.0)));

  // Collision is invariant under a left-right mirror of the posture.
  GaitProgram big = g;
  big.body_amplitude = 1.3;
  for (double phase : {0.0, 0.5, 1.1, 2.9}) {
    const Posture p = posture_at(m, big, phase);
    Posture q = p;
    for (auto& a : q.yaw_angles) a = -a;
    for (int pair = 0; pair < m.n_pairs; ++pair)
      std::swap(q.shoulder_angles[static_cast<size_t>(2 * pair)],
                q.shoulder_angles[static_cast<size_t>(2 * pair + 1)]);
    CHECK(self_collision(m, p) == self_collision(m, q));
  }
}

TEST_CASE("A_SC bisection and structure") {
  const RobotMorphology m = default_morph();
  const GaitProgram g = default_gait(m);

  const double a_sc = compute_A_SC(m, g);
  // Regression anchor for the default 6-pair morphology.
  CHECK(a_sc == doctest::Approx(0.7513).epsilon(0.01));

  // Just above the limit some phase collides; at the limit none does.
  GaitProgram above = g;
  above.body_amplitude = a_sc + 0.03;
  bool any = false;
  for (int k = 0; k < 256; ++k)
    any = any || self_collision(m, posture_at(m, above, 2.0 * M_PI * k / 256));
  CHECK(any);
  GaitProgram at = g;
  at.body_amplitude = a_sc - 1e-3;
  for (int k = 0; k < 256; ++k)
    CHECK_FALSE(self_collision(m, posture_at(m, at, 2.0 * M_PI * k / 256)));

  // Determinism.
  CHECK(compute_A_SC(m, g) == a_sc);

  // Monotone in N.
  double prev = 0.0;
  for (int n : {3, 5, 7, 9}) {
    RobotMorphology mm = m;
    mm.n_pairs = n;
    const double v = compute_A_SC(mm, default_gait(mm));
    CHECK(v >= prev - 1e-9);
    prev = v;
  }

  // Shorter legs never reduce the collision-free amplitude.
  double prev_l = 0.0;
  for (double l : {8.4, 6.0, 4.0, 1.0}) {
    RobotMorphology mm = m;
    mm.leg_length = l;
    GaitProgram gg = default_gait(mm);
    const double v = compute_A_SC(mm, gg);
    CHECK(v >= prev_l - 1e-9);
    prev_l = v;
  }

  // Vanishing legs can only collide once the backbone itself folds, far
  // beyond any operating amplitude.
  RobotMorphology tiny = m;
  tiny.leg_length = 1e-6;
  CHECK(compute_A_SC(tiny, default_gait(tiny)) > 2.0);
}

TEST_CASE("engagement load shape") {
  CHECK(engagement_load(0.0) == doctest::Approx(0.0));
  CHECK(engagement_load(0.5) == doctest::Approx(1.0));
  CHECK(engagement_load(1.0) == doctest::Approx(0.0));
  CHECK(engagement_load(0.09) == doctest::Approx(0.5));
}
