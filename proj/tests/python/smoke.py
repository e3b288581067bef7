"""Smoke tests for the Python module."""

import math

import merloco as ml


def test_encoding():
    b1, b2 = ml.shape_basis(0, 6, 1.0)
    assert abs(b1) < 1e-12 and abs(b2 - 1.0) < 1e-12

    m = ml.RobotMorphology()
    g = ml.default_gait(m)
    assert abs(ml.intended_duty_fraction(m, g) - 0.5) < 0.01

    g.vertical_amplitude = math.pi / 9
    assert ml.intended_duty_fraction(m, g) < 0.45


def test_geomech():
    m = ml.RobotMorphology()
    g = ml.default_gait(m)
    g.body_amplitude = 0.75

    xi = ml.solve_body_velocity(m, g, ml.ShapePoint(0.2, 0.6), (0.5, -0.1))
    assert math.isfinite(xi.xi_x)

    hf = ml.height_function(m, g, "x")
    assert hf.values.shape == (61, 61)
    a_star = ml.optimal_amplitude(hf)
    a_sc = ml.compute_A_SC(m, g)
    assert 0.3 < ml.select_amplitude(a_sc, a_star) < 1.2

    path = [(0.5 * math.sin(2 * math.pi * k / 128), 0.5 * math.cos(2 * math.pi * k / 128))
            for k in range(129)]
    dx, dy, dth = ml.stride_line_integral(m, g, path)
    surface = ml.stride_surface_integral(hf, 0.5)
    assert abs(dx - surface) / abs(dx) < 0.05


def test_terrain():
    f = ml.generate_stepfield(7, 6.0, 2.0, 1.0, 16, 8)
    assert abs(ml.rugosity(f) - 0.17) < 0.08
    assert ml.height_at(f, -1.0, 0.0) == 0.0
    g = ml.generate_stepfield(7, 6.0, 2.0, 1.0, 16, 8)
    assert list(f.heights) == list(g.heights)


def test_trial():
    m = ml.RobotMorphology()
    g = ml.default_gait(m)
    g.body_amplitude = 0.75

    rec = ml.run_trial(m, g, ml.flat_terrain(), start=ml.Pose2(0, 40, 0))
    stride = rec.cycles[-1].stride_cm
    assert 25.0 < stride <= ml.stride_upper_bound(m.leg_length) * 1.01
    assert abs(ml.measured_duty(rec) - 0.5) < 0.01

    rough = ml.generate_stepfield(3, 6.25, 4.0, 2.5, 30, 5)
    r1 = ml.run_trial(m, g, rough, seed=5, start=ml.Pose2(0, 25, 0))
    r2 = ml.run_trial(m, g, rough, seed=5, start=ml.Pose2(0, 25, 0))
    assert r1.to_json() == r2.to_json()
    assert ml.contact_loss_fraction(r1) > 0.0

    adaptive = ml.run_trial(m, g, rough, controller="siso", n_cycles=4, seed=5,
                            start=ml.Pose2(0, 25, 0))
    assert len(adaptive.cycles) == 4


def test_control():
    assert abs(ml.siso_update(0.5, 0.5)) < 1e-12
    assert abs(ml.siso_update(0.5, 0.4) - 0.32) < 1e-12
    assert abs(ml.siso_update(0.5, 0.1) - math.pi / 3) < 1e-12


def main():
    test_encoding()
    test_geomech()
    test_terrain()
    test_trial()
    test_control()
    print("python smoke: all checks passed")


if __name__ == "__main__":
    main()
