#pragma once

#include <optional>
#include <string>
#include <vector>

#include "merloco/morphology.hpp"
#include "merloco/types.hpp"

// Quasi-static force balance under regularized isotropic Coulomb friction,
// and the shape-space machinery built on top of it: local connections,
// height functions, stride integrals and amplitude selection.
//
// All forces are normalized so the total normal load is 1 and the friction
// coefficient is 1; quasi-static Coulomb kinematics are invariant to that
// scale.
namespace merloco {

// Friction regularization: the Coulomb force direction is undefined at
// zero slip, so forces are scaled by |v|/(|v|+eps).
inline constexpr double kSlipRegularization = 1e-6;  // cm / phase-rad

// Uniform shape-space grid: n x n cells spanning [-half_extent, half_extent]^2.
// Connection samples live on the (n+1)^2 cell-corner nodes, curl values at
// cell centers.
struct GridSpec {
  int n = 61;
  double half_extent = M_PI / 2.0;

  double spacing() const { return 2.0 * half_extent / n; }
  double node_coord(int k) const { return -half_extent + k * spacing(); }
  double center_coord(int k) const { return -half_extent + (k + 0.5) * spacing(); }
};

// Curl of one local-connection row over the shape space. mask flags cells
// whose corner nodes straddle a stance-set switch (or where the balance is
// undefined); masked cells still carry finite values and participate in
// surface integrals so that circulation telescopes exactly.
struct HeightField {
  GridSpec grid;
  char component = 'x';        // 'x', 'y' or 't' (theta)
  std::vector<double> values;  // n*n, row-major [c2 * n + c1]
  std::vector<uint8_t> mask;   // n*n

  double value(int c1, int c2) const { return values[static_cast<size_t>(c2) * grid.n + c1]; }
  bool masked(int c1, int c2) const { return mask[static_cast<size_t>(c2) * grid.n + c1] != 0; }
};

// Local connection samples on the grid nodes, for field inspection and
// serialization. node_ok is false where the stance set is empty.
struct ConnectionField {
  GridSpec grid;
  std::vector<Mat32> values;    // (n+1)^2, row-major [k2 * (n+1) + k1]
  std::vector<uint8_t> node_ok;
  std::vector<uint64_t> stance_sig;  // contact-regime signature per node
  std::vector<uint64_t> center_sig;  // same signature at cell centers (n^2)

  const Mat32& value(int k1, int k2) const {
    return values[static_cast<size_t>(k2) * (grid.n + 1) + k1];
  }
};

struct SlipBudget {
  double d1 = 0.0;  // total forward slip distance per cycle, cm
  double d2 = 0.0;  // total backward slip distance, cm
};

// Per-foot slip time series over an integer number of cycles.
struct FootSlipSeries {
  std::vector<double> forward_velocity;  // cm / phase-rad, body-frame x
  std::vector<uint8_t> in_stance;
  double dphase = 0.0;
};

// World-frame planar velocity of a stance foot induced by body velocity xi
// and shape velocity wdot, expressed in the body frame. Throws
// std::domain_error if the foot is not in stance at w.
Vec2 foot_slip_velocity(const RobotMorphology& morph, const GaitProgram& gait,
                        const ShapePoint& w, const Vec2& wdot,
                        const BodyVelocity& xi, int leg_id);

// Regularized Coulomb ground reaction force for a given slip velocity.
Vec2 grf(const Vec2& slip, double mu_normal);

// Net force and moment over the stance set at (w, wdot, xi); the normal
// load is split uniformly across stance feet and moments are taken about
// the mean stance-foot position. Throws AllFeetAirborne on an empty
// stance set. stance_override, when given, replaces the intended stance.
Vec3 force_balance_residual(const RobotMorphology& morph, const GaitProgram& gait,
                            const ShapePoint& w, const Vec2& wdot, const BodyVelocity& xi,
                            const std::vector<uint8_t>* stance_override = nullptr);

// Body velocity solving the force balance to residual norm < 1e-8 (damped
// Newton with analytic Jacobian and a sticking-foot endgame).
BodyVelocity solve_body_velocity(const RobotMorphology& morph, const GaitProgram& gait,
                                 const ShapePoint& w, const Vec2& wdot,
                                 const std::vector<uint8_t>* stance_override = nullptr);

// Same balance with per-foot normal loads (normalized internally to total
// 1); the simulator uses this with engagement-ramped load shares.
BodyVelocity solve_body_velocity_loaded(const RobotMorphology& morph,
                                        const GaitProgram& gait, const ShapePoint& w,
                                        const Vec2& wdot,
                                        const std::vector<uint8_t>& stance,
                                        const std::vector<double>& loads);

// First-order local connection at w: column j is the body velocity at unit
// shape velocity e_j. The true map is homogeneous but not linear; this is
// its unit-ball linearization.
Mat32 local_connection(const RobotMorphology& morph, const GaitProgram& gait,
                       const ShapePoint& w);

ConnectionField compute_connection_field(const RobotMorphology& morph,
                                         const GaitProgram& gait, const GridSpec& grid);

// Curl of one connection row, cell-centered, via the circulation of the
// trapezoid line integral around each cell (a compact central-difference
// stencil). Summing value * cell_area over any cell region therefore
// reproduces the trapezoid line integral around that region exactly.
HeightField height_function(const RobotMorphology& morph, const GaitProgram& gait,
                            char component, const GridSpec& grid);
HeightField height_function(const ConnectionField& field, char component);

// Trapezoidal line integral of the local connection along a closed
// phase-sampled path. Throws std::invalid_argument for open paths.
Vec3 stride_line_integral(const RobotMorphology& morph, const GaitProgram& gait,
                          const std::vector<ShapePoint>& path);

// Sum of curl * cell area over cells whose center lies strictly inside the
// circle of radius amplitude. Throws std::domain_error if the circle
// exceeds the grid.
double stride_surface_integral(const HeightField& field, double amplitude);

// Radius (0.01 rad resolution) maximizing the enclosed surface integral,
// ignoring self-collision; ties resolve to the smallest radius.
double optimal_amplitude(const HeightField& field);

// Largest collision-free stride amplitude: min(A_SC, A_b*).
double select_amplitude(double a_sc, double a_b_star);

// Non-slip geometric bound on flat-ground stride: 4 * leg_length.
double stride_upper_bound(double leg_length);

// Integrated forward/backward slip distances over a series spanning at
// least one full cycle. Throws std::invalid_argument otherwise.
SlipBudget slip_budget(const FootSlipSeries& series);

// Columnar text serialization (w1, w2, value..., mask) with a JSON header;
// reload is bit-exact.
void save_height_field(const HeightField& field, const std::string& path);
HeightField load_height_field(const std::string& path);
void save_connection_field(const ConnectionField& field, const std::string& path);
ConnectionField load_connection_field(const std::string& path);

namespace detail {
// Planar body-frame foot positions and their shape derivatives at w.
struct FootKinematics {
  Vec2 pos;       // body frame, cm
  Vec2 d_dw1;
  Vec2 d_dw2;
};

// Planar chain expressed in the mean body frame: origin at the mean axle
// position, x axis along the mean module heading. Individual modules snake
// around this frame, so body velocities measured here integrate to world
// displacement without the head's oscillation polluting them.
struct CenteredChain {
  std::vector<Vec2> axles;              // N
  std::vector<double> headings;         // N, relative to the mean heading
  std::vector<FootKinematics> feet;     // 2N, leg_id order
  std::vector<uint8_t> jammed;          // N, per pair: sweep stalled
};

CenteredChain centered_chain(const RobotMorphology& morph, const GaitProgram& gait,
                             const ShapePoint& w);
std::vector<FootKinematics> planar_foot_kinematics(const RobotMorphology& morph,
                                                   const GaitProgram& gait,
                                                   const ShapePoint& w);
uint64_t stance_signature(const std::vector<uint8_t>& stance);
}  // namespace detail

}  // namespace merloco
