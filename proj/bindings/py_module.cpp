// Python bindings for the core operations: morphology/gait encoding,
// geometric mechanics, terrain generation and trial simulation.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "merloco/config.hpp"
#include "merloco/control.hpp"
#include "merloco/geomech.hpp"
#include "merloco/harness.hpp"
#include "merloco/morphology.hpp"
#include "merloco/simulator.hpp"
#include "merloco/terrain.hpp"

namespace py = pybind11;
using namespace merloco;

namespace {

py::array_t<double> field_values(const HeightField& f) {
  py::array_t<double> a({f.grid.n, f.grid.n});
  auto r = a.mutable_unchecked<2>();
  for (int c2 = 0; c2 < f.grid.n; ++c2)
    for (int c1 = 0; c1 < f.grid.n; ++c1) r(c2, c1) = f.value(c1, c2);
  return a;
}

py::array_t<bool> field_mask(const HeightField& f) {
  py::array_t<bool> a({f.grid.n, f.grid.n});
  auto r = a.mutable_unchecked<2>();
  for (int c2 = 0; c2 < f.grid.n; ++c2)
    for (int c1 = 0; c1 < f.grid.n; ++c1) r(c2, c1) = f.masked(c1, c2);
  return a;
}

}  // namespace

PYBIND11_MODULE(_merloco, m) {
  m.doc() = "Gait design and quasi-static locomotion for multi-legged elongate robots";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<AllFeetAirborne>(m, "AllFeetAirborne");
  py::register_exception<SolverError>(m, "SolverError");

  py::class_<FootGeometry>(m, "FootGeometry")
      .def_static("point", &FootGeometry::point)
      .def_static("c_arc", &FootGeometry::c_arc, py::arg("arc_length"), py::arg("width"))
      .def_property_readonly("is_c_arc",
                             [](const FootGeometry& f) {
                               return f.kind == FootGeometry::Kind::CArc;
                             })
      .def_readonly("arc_length", &FootGeometry::arc_length)
      .def_readonly("width", &FootGeometry::width);

  py::class_<RobotMorphology>(m, "RobotMorphology")
      .def(py::init<>())
      .def_readwrite("n_pairs", &RobotMorphology::n_pairs)
      .def_readwrite("leg_length", &RobotMorphology::leg_length)
      .def_readwrite("module_spacing", &RobotMorphology::module_spacing)
      .def_readwrite("shoulder_amplitude", &RobotMorphology::shoulder_amplitude)
      .def_readwrite("leg_clearance", &RobotMorphology::leg_clearance)
      .def_readwrite("foot", &RobotMorphology::foot)
      .def_property_readonly("n_legs", &RobotMorphology::n_legs)
      .def_property_readonly("body_length", &RobotMorphology::body_length)
      .def("validate", &RobotMorphology::validate);

  py::class_<GaitProgram>(m, "GaitProgram")
      .def(py::init<>())
      .def_readwrite("spatial_period", &GaitProgram::spatial_period)
      .def_readwrite("body_amplitude", &GaitProgram::body_amplitude)
      .def_readwrite("vertical_amplitude", &GaitProgram::vertical_amplitude)
      .def_readwrite("shoulder_amplitude", &GaitProgram::shoulder_amplitude)
      .def_readwrite("period", &GaitProgram::period)
      .def_readwrite("desired_duty", &GaitProgram::desired_duty)
      .def_readwrite("clearance", &GaitProgram::clearance)
      .def_readwrite("heading_window", &GaitProgram::heading_window)
      .def("validate", &GaitProgram::validate);

  m.def("default_gait", &default_gait, py::arg("morphology"));

  py::class_<ShapePoint>(m, "ShapePoint")
      .def(py::init([](double w1, double w2) {
             return ShapePoint{w1, w2};
           }),
           py::arg("w1"), py::arg("w2"))
      .def_readwrite("w1", &ShapePoint::w1)
      .def_readwrite("w2", &ShapePoint::w2);

  py::class_<BodyVelocity>(m, "BodyVelocity")
      .def_readonly("xi_x", &BodyVelocity::xi_x)
      .def_readonly("xi_y", &BodyVelocity::xi_y)
      .def_readonly("xi_theta", &BodyVelocity::xi_theta);

  py::class_<Posture>(m, "Posture")
      .def_readonly("phase", &Posture::phase)
      .def_readonly("yaw_angles", &Posture::yaw_angles)
      .def_readonly("pitch_angles", &Posture::pitch_angles)
      .def_readonly("shoulder_angles", &Posture::shoulder_angles)
      .def_readonly("intended_stance", &Posture::intended_stance);

  m.def("shape_basis", &shape_basis, py::arg("joint"), py::arg("n_pairs"),
        py::arg("spatial_period"));
  m.def("yaw_angles", &yaw_angles, py::arg("w"), py::arg("n_pairs"),
        py::arg("spatial_period"));
  m.def("pitch_angles", &pitch_angles, py::arg("phase"), py::arg("vertical_amplitude"),
        py::arg("n_pairs"), py::arg("spatial_period"));
  m.def("posture_at", &posture_at, py::arg("morphology"), py::arg("gait"), py::arg("phase"));
  m.def("intended_duty_fraction", &intended_duty_fraction, py::arg("morphology"),
        py::arg("gait"), py::arg("phase_samples") = 256);
  m.def("self_collision", &self_collision, py::arg("morphology"), py::arg("posture"));
  m.def("compute_A_SC", &compute_A_SC, py::arg("morphology"), py::arg("gait"));

  m.def(
      "solve_body_velocity",
      [](const RobotMorphology& morph, const GaitProgram& gait, const ShapePoint& w,
         std::pair<double, double> wdot) {
        return solve_body_velocity(morph, gait, w, Vec2(wdot.first, wdot.second));
      },
      py::arg("morphology"), py::arg("gait"), py::arg("w"), py::arg("wdot"));
  m.def(
      "local_connection",
      [](const RobotMorphology& morph, const GaitProgram& gait, const ShapePoint& w) {
        const Mat32 a = local_connection(morph, gait, w);
        py::array_t<double> out({3, 2});
        auto r = out.mutable_unchecked<2>();
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 2; ++j) r(i, j) = a(i, j);
        return out;
      },
      py::arg("morphology"), py::arg("gait"), py::arg("w"));

  py::class_<GridSpec>(m, "GridSpec")
      .def(py::init<>())
      .def_readwrite("n", &GridSpec::n)
      .def_readwrite("half_extent", &GridSpec::half_extent)
      .def("spacing", &GridSpec::spacing);

  py::class_<HeightField>(m, "HeightField")
      .def_readonly("grid", &HeightField::grid)
      .def_property_readonly("component",
                             [](const HeightField& f) { return std::string(1, f.component); })
      .def_property_readonly("values", &field_values)
      .def_property_readonly("mask", &field_mask);

  m.def("height_function",
        py::overload_cast<const RobotMorphology&, const GaitProgram&, char,
                          const GridSpec&>(&height_function),
        py::arg("morphology"), py::arg("gait"), py::arg("component"),
        py::arg("grid") = GridSpec{});
  m.def(
      "stride_line_integral",
      [](const RobotMorphology& morph, const GaitProgram& gait,
         const std::vector<std::pair<double, double>>& path) {
        std::vector<ShapePoint> pts;
        pts.reserve(path.size());
        for (const auto& [w1, w2] : path) pts.push_back({w1, w2});
        const Vec3 d = stride_line_integral(morph, gait, pts);
        return std::make_tuple(d[0], d[1], d[2]);
      },
      py::arg("morphology"), py::arg("gait"), py::arg("path"));
  m.def("stride_surface_integral", &stride_surface_integral, py::arg("field"),
        py::arg("amplitude"));
  m.def("optimal_amplitude", &optimal_amplitude, py::arg("field"));
  m.def("select_amplitude", &select_amplitude, py::arg("a_sc"), py::arg("a_b_star"));
  m.def("stride_upper_bound", &stride_upper_bound, py::arg("leg_length"));
  m.def("save_height_field", &save_height_field, py::arg("field"), py::arg("path"));
  m.def("load_height_field", &load_height_field, py::arg("path"));

  py::class_<Stepfield>(m, "Stepfield")
      .def_readonly("block_size", &Stepfield::block_size)
      .def_readonly("n_cols", &Stepfield::n_cols)
      .def_readonly("n_rows", &Stepfield::n_rows)
      .def_readonly("heights", &Stepfield::heights)
      .def_property_readonly("width_x", &Stepfield::width_x)
      .def_property_readonly("width_y", &Stepfield::width_y);

  m.def("generate_stepfield", &generate_stepfield, py::arg("seed"), py::arg("mean"),
        py::arg("std_dev"), py::arg("increment"), py::arg("n_cols"), py::arg("n_rows"),
        py::arg("block_size") = 10.0);
  m.def("rugosity", &rugosity, py::arg("field"));
  m.def("height_at", &height_at, py::arg("field"), py::arg("x"), py::arg("y"));
  m.def("flat_terrain", &flat_terrain, py::arg("n_cols") = 30, py::arg("n_rows") = 8,
        py::arg("block_size") = 10.0);
  m.def("save_stepfield", &save_stepfield, py::arg("field"), py::arg("path"));
  m.def("load_stepfield", &load_stepfield, py::arg("path"));

  py::class_<Pose2>(m, "Pose2")
      .def(py::init([](double x, double y, double theta) {
             return Pose2{x, y, theta, 0.0};
           }),
           py::arg("x") = 0.0, py::arg("y") = 0.0, py::arg("theta") = 0.0)
      .def_readwrite("x", &Pose2::x)
      .def_readwrite("y", &Pose2::y)
      .def_readwrite("theta", &Pose2::theta);

  py::enum_<ContactMode>(m, "ContactMode")
      .value("Geometric", ContactMode::Geometric)
      .value("Channel", ContactMode::Channel);

  py::class_<ContactModeConfig>(m, "ContactModeConfig")
      .def(py::init<>())
      .def_readwrite("mode", &ContactModeConfig::mode)
      .def_readwrite("reach_window", &ContactModeConfig::reach_window)
      .def_readwrite("retry_reach_factor", &ContactModeConfig::retry_reach_factor)
      .def_readwrite("swing_clearance", &ContactModeConfig::swing_clearance);

  py::class_<CycleRecord>(m, "CycleRecord")
      .def_readonly("stride_cm", &CycleRecord::stride_cm)
      .def_readonly("stride_bl", &CycleRecord::stride_bl)
      .def_readonly("duty", &CycleRecord::duty)
      .def_readonly("vertical_amplitude", &CycleRecord::vertical_amplitude)
      .def_readonly("body_amplitude", &CycleRecord::body_amplitude)
      .def_readonly("intended", &CycleRecord::intended)
      .def_readonly("realized", &CycleRecord::realized)
      .def_readonly("sensed", &CycleRecord::sensed)
      .def_readonly("thrust", &CycleRecord::thrust);

  py::class_<TrialRecord>(m, "TrialRecord")
      .def_readonly("seed", &TrialRecord::seed)
      .def_readonly("steps_per_cycle", &TrialRecord::steps_per_cycle)
      .def_readonly("n_legs", &TrialRecord::n_legs)
      .def_readonly("body_length", &TrialRecord::body_length)
      .def_readonly("cycles", &TrialRecord::cycles)
      .def_readonly("step_x", &TrialRecord::step_x)
      .def("total_forward", &TrialRecord::total_forward)
      .def("to_json", [](const TrialRecord& r) { return r.to_json().dump(); });

  m.def(
      "run_trial",
      [](const RobotMorphology& morph, const GaitProgram& gait, const Stepfield& terrain,
         const std::string& controller, int n_cycles, int steps_per_cycle, uint64_t seed,
         const ContactModeConfig& cfg, const Pose2& start, double siso_gain,
         double siso_desired_duty) {
        std::unique_ptr<Controller> ctrl;
        if (controller == "open_loop")
          ctrl = make_open_loop();
        else if (controller == "siso")
          ctrl = make_siso(siso_gain, siso_desired_duty, compute_A_SC(morph, gait));
        else if (controller == "stop_and_wait")
          ctrl = make_stop_and_wait();
        else
          throw ConfigError("unknown controller: " + controller);
        return run_trial(morph, gait, terrain, *ctrl, n_cycles, steps_per_cycle, seed, cfg,
                         start);
      },
      py::arg("morphology"), py::arg("gait"), py::arg("terrain"),
      py::arg("controller") = "open_loop", py::arg("n_cycles") = 3,
      py::arg("steps_per_cycle") = kDefaultStepsPerCycle, py::arg("seed") = 0,
      py::arg("contact") = ContactModeConfig{}, py::arg("start") = Pose2{},
      py::arg("siso_gain") = kSisoDefaultGain, py::arg("siso_desired_duty") = 0.5);

  m.def(
      "time_to_distance",
      [](const TrialRecord& rec, double d) -> py::object {
        const auto t = time_to_distance(rec, d);
        if (!t) return py::none();
        return py::float_(*t);
      },
      py::arg("record"), py::arg("distance_cm") = 60.0);
  m.def("thrust_variance",
        py::overload_cast<const TrialRecord&>(&thrust_variance), py::arg("record"));
  m.def("measured_duty", &measured_duty, py::arg("record"));
  m.def("contact_loss_fraction", &contact_loss_fraction, py::arg("record"));
  m.def("measure_duty",
        [](const std::vector<uint8_t>& intended, const std::vector<uint8_t>& realized,
           int n_legs, int steps) {
          return measure_duty(SensorFrame{n_legs, steps, intended, realized});
        },
        py::arg("intended"), py::arg("realized"), py::arg("n_legs"), py::arg("steps"));
  m.def("siso_update", &siso_update, py::arg("desired_duty"), py::arg("measured_duty"),
        py::arg("gain") = kSisoDefaultGain);
  m.def("derive_seed", &derive_seed, py::arg("master_seed"), py::arg("cell_index"));

  m.attr("__version__") = kToolVersion;
}
