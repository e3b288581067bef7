#include "merloco/geomech.hpp"

#include <algorithm>
#include <array>
#include <utility>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace merloco {

namespace detail {

uint64_t stance_signature(const std::vector<uint8_t>& stance) {
  uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (uint8_t b : stance) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

CenteredChain centered_chain(const RobotMorphology& morph, const GaitProgram& gait,
                             const ShapePoint& w) {
  const int n = morph.n_pairs;
  const double s = morph.module_spacing;
  const double l = morph.leg_length;
  const double sn = gait.spatial_period;
  const double ap = gait.vertical_amplitude;
  const double aleg = gait.shoulder_amplitude;
  const double wsign = kLegWaveSign;

  constexpr double kOriginEps = 1e-12;
  const double norm2 = w.w1 * w.w1 + w.w2 * w.w2;
  const double phase = norm2 < kOriginEps * kOriginEps ? 0.0 : std::atan2(w.w1, w.w2);
  // Phase gradient of atan2(w1, w2); frozen at the chart origin where the
  // angular coordinate is undefined.
  const Vec2 dph = norm2 < kOriginEps * kOriginEps ? Vec2(0.0, 0.0)
                                                   : Vec2(w.w2 / norm2, -w.w1 / norm2);

  // Head-anchored chain and its shape derivatives.
  std::vector<double> eta(static_cast<size_t>(n), 0.0);
  std::vector<Vec2> deta(static_cast<size_t>(n), Vec2::Zero());
  std::vector<Vec2> axle(static_cast<size_t>(n), Vec2::Zero());
  std::vector<Vec2> daxle1(static_cast<size_t>(n), Vec2::Zero());
  std::vector<Vec2> daxle2(static_cast<size_t>(n), Vec2::Zero());
  {
    double h = 0.0, q = 0.0;
    Vec2 dh(0.0, 0.0), dq(0.0, 0.0);
    for (int i = 1; i < n; ++i) {
      const auto [b1, b2] = shape_basis(i - 1, n, sn);
      const double alpha = w.w1 * b1 + w.w2 * b2;
      const double arg_p =
          2.0 * M_PI * sn * static_cast<double>(i - 1) / n + wsign * phase;
      const double alpha_p = ap * std::cos(2.0 * arg_p);
      const Vec2 dalpha(b1, b2);
      const Vec2 dalpha_p = -2.0 * ap * std::sin(2.0 * arg_p) * wsign * dph;

      const double h_next = h + alpha;
      const double q_next = q + alpha_p;
      const Vec2 dh_next = dh + dalpha;
      const Vec2 dq_next = dq + dalpha_p;

      // Midpoint-hinged link; the planar projection carries the cos(pitch)
      // factor.
      const Vec2 u_prev(std::cos(h), std::sin(h));
      const Vec2 up_prev(-std::sin(h), std::cos(h));
      const Vec2 u_next(std::cos(h_next), std::sin(h_next));
      const Vec2 up_next(-std::sin(h_next), std::cos(h_next));
      const double cq = std::cos(q), cq_next = std::cos(q_next);
      const double sq = std::sin(q), sq_next = std::sin(q_next);

      axle[static_cast<size_t>(i)] =
          axle[static_cast<size_t>(i - 1)] - 0.5 * s * (u_prev * cq + u_next * cq_next);
      const Vec2 dstep1 = up_prev * (cq * dh.x()) - u_prev * (sq * dq.x()) +
                          up_next * (cq_next * dh_next.x()) -
                          u_next * (sq_next * dq_next.x());
      const Vec2 dstep2 = up_prev * (cq * dh.y()) - u_prev * (sq * dq.y()) +
                          up_next * (cq_next * dh_next.y()) -
                          u_next * (sq_next * dq_next.y());
      daxle1[static_cast<size_t>(i)] = daxle1[static_cast<size_t>(i - 1)] - 0.5 * s * dstep1;
      daxle2[static_cast<size_t>(i)] = daxle2[static_cast<size_t>(i - 1)] - 0.5 * s * dstep2;

      h = h_next;
      q = q_next;
      dh = dh_next;
      dq = dq_next;
      eta[static_cast<size_t>(i)] = h;
      deta[static_cast<size_t>(i)] = dh;
    }
  }

  // Mean heading and mean axle define the body frame.
  double phi = 0.0;
  Vec2 dphi = Vec2::Zero();
  Vec2 abar = Vec2::Zero();
  Vec2 dabar1 = Vec2::Zero(), dabar2 = Vec2::Zero();
  for (int i = 0; i < n; ++i) {
    phi += eta[static_cast<size_t>(i)];
    dphi += deta[static_cast<size_t>(i)];
    abar += axle[static_cast<size_t>(i)];
    dabar1 += daxle1[static_cast<size_t>(i)];
    dabar2 += daxle2[static_cast<size_t>(i)];
  }
  phi /= n;
  dphi /= n;
  abar /= n;
  dabar1 /= n;
  dabar2 /= n;

  const double c = std::cos(phi), si = std::sin(phi);
  // r = R(-phi) p, dr = R(-phi) (dp - dphi * perp(p)) with p relative to
  // the mean axle.
  const auto center_point = [&](const Vec2& u, const Vec2& du1, const Vec2& du2, Vec2& r,
                                Vec2& dr1, Vec2& dr2) {
    const Vec2 pvec = u - abar;
    const Vec2 perp(-pvec.y(), pvec.x());
    const Vec2 dp1 = du1 - dabar1;
    const Vec2 dp2 = du2 - dabar2;
    r = Vec2(c * pvec.x() + si * pvec.y(), -si * pvec.x() + c * pvec.y());
    const Vec2 e1 = dp1 - dphi.x() * perp;
    const Vec2 e2 = dp2 - dphi.y() * perp;
    dr1 = Vec2(c * e1.x() + si * e1.y(), -si * e1.x() + c * e1.y());
    dr2 = Vec2(c * e2.x() + si * e2.y(), -si * e2.x() + c * e2.y());
  };

  CenteredChain chain;
  chain.axles.resize(static_cast<size_t>(n));
  chain.headings.resize(static_cast<size_t>(n));
  chain.feet.resize(static_cast<size_t>(2 * n));
  chain.jammed.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    chain.jammed[static_cast<size_t>(i)] =
        std::fabs(eta[static_cast<size_t>(i)] - phi) > gait.heading_window ? 1 : 0;
    chain.headings[static_cast<size_t>(i)] = eta[static_cast<size_t>(i)] - phi;
    Vec2 dr1, dr2;
    center_point(axle[static_cast<size_t>(i)], daxle1[static_cast<size_t>(i)],
                 daxle2[static_cast<size_t>(i)], chain.axles[static_cast<size_t>(i)], dr1,
                 dr2);

    const double ph_leg = 2.0 * M_PI * sn * static_cast<double>(i) / n + wsign * phase;
    const double sh = aleg * std::cos(ph_leg);
    const Vec2 dsh = -aleg * std::sin(ph_leg) * wsign * dph;
    const double hi = eta[static_cast<size_t>(i)];
    const double ch = std::cos(hi), shh = std::sin(hi);
    for (int side = 0; side < 2; ++side) {
      const double sigma = side == 0 ? 1.0 : -1.0;
      const double sh_s = sigma * sh;
      const Vec2 dsh_s = sigma * dsh;
      const double vx = l * std::sin(sh_s);
      const double vy = sigma * l * std::cos(sh_s);
      const double dvx = l * std::cos(sh_s);  // d/d sh_s
      const double dvy = -sigma * l * std::sin(sh_s);
      // Head-anchored foot, then center.
      const Vec2 foot(axle[static_cast<size_t>(i)].x() + ch * vx - shh * vy,
                      axle[static_cast<size_t>(i)].y() + shh * vx + ch * vy);
      const Vec2 rot_term(-shh * vx - ch * vy, ch * vx - shh * vy);
      const Vec2 sh_term(ch * dvx - shh * dvy, shh * dvx + ch * dvy);
      const Vec2 dfoot1 = daxle1[static_cast<size_t>(i)] +
                          rot_term * deta[static_cast<size_t>(i)].x() +
                          sh_term * dsh_s.x();
      const Vec2 dfoot2 = daxle2[static_cast<size_t>(i)] +
                          rot_term * deta[static_cast<size_t>(i)].y() +
                          sh_term * dsh_s.y();
      FootKinematics fk;
      center_point(foot, dfoot1, dfoot2, fk.pos, fk.d_dw1, fk.d_dw2);
      if (chain.jammed[static_cast<size_t>(i)]) {
        // Jammed pair: the foot is pinned to the body and contributes only
        // rigid-body drag, no sweep thrust.
        fk.d_dw1.setZero();
        fk.d_dw2.setZero();
      }
      chain.feet[static_cast<size_t>(2 * i + side)] = fk;
    }
  }
  return chain;
}

std::vector<FootKinematics> planar_foot_kinematics(const RobotMorphology& morph,
                                                   const GaitProgram& gait,
                                                   const ShapePoint& w) {
  return centered_chain(morph, gait, w).feet;
}

}  // namespace detail

namespace {

struct BalanceProblem {
  std::vector<Vec2> pos;        // stance feet, body frame
  std::vector<Vec2> shape_vel;  // J_i * wdot
  std::vector<double> mu;       // per-foot Coulomb magnitude, sums to 1
  Vec2 torque_ref{0.0, 0.0};
};

BalanceProblem build_balance_problem(const RobotMorphology& morph, const GaitProgram& gait,
                                     const ShapePoint& w, const Vec2& wdot,
                                     const std::vector<uint8_t>* stance_override,
                                     const std::vector<double>* loads = nullptr) {
  const Posture posture = posture_from_shape(morph, gait, w);
  const std::vector<uint8_t>& stance =
      stance_override != nullptr ? *stance_override : posture.intended_stance;
  const auto feet = detail::planar_foot_kinematics(morph, gait, w);

  BalanceProblem p;
  double load_sum = 0.0;
  for (size_t leg = 0; leg < feet.size(); ++leg) {
    if (leg < stance.size() && stance[leg]) {
      p.pos.push_back(feet[leg].pos);
      p.shape_vel.push_back(feet[leg].d_dw1 * wdot.x() + feet[leg].d_dw2 * wdot.y());
      p.torque_ref += feet[leg].pos;
      // Normal load shares follow the engagement ramp of each contact
      // window; the total stays normalized to 1.
      double lw;
      if (loads != nullptr) {
        lw = std::max((*loads)[leg], 1e-6);
      } else {
        const double progress = detail::stance_progress(
            static_cast<int>(leg) / 2, static_cast<int>(leg) % 2, morph.n_pairs,
            gait.spatial_period, gait.desired_duty, posture.phase);
        lw = std::max(engagement_load(progress), kEngagementLoadFloor);
      }
      p.mu.push_back(lw);
      load_sum += lw;
    }
  }
  if (p.pos.empty()) throw AllFeetAirborne();
  p.torque_ref /= static_cast<double>(p.pos.size());
  for (double& m : p.mu) m /= load_sum;
  return p;
}

// Residuals are accumulated in long double: near a sticking foot the force
// has 1/eps sensitivity to the slip velocity, so double-precision
// cancellation noise in v (terms of order |xi|*arm) would alias into an
// apparent residual floor above the solve tolerance.
Vec3 residual_of(const BalanceProblem& p, const Vec3& xi, double eps) {
  long double rx = 0.0L, ry = 0.0L, rt = 0.0L;
  for (size_t i = 0; i < p.pos.size(); ++i) {
    const Vec2& fp = p.pos[i];
    const long double vx = static_cast<long double>(xi[0]) -
                           static_cast<long double>(xi[2]) * fp.y() + p.shape_vel[i].x();
    const long double vy = static_cast<long double>(xi[1]) +
                           static_cast<long double>(xi[2]) * fp.x() + p.shape_vel[i].y();
    const long double speed = sqrtl(vx * vx + vy * vy);
    const long double scale = -static_cast<long double>(p.mu[i]) / (speed + eps);
    const long double fx = scale * vx, fy = scale * vy;
    const Vec2 arm = fp - p.torque_ref;
    rx += fx;
    ry += fy;
    rt += static_cast<long double>(arm.x()) * fy - static_cast<long double>(arm.y()) * fx;
  }
  return Vec3(static_cast<double>(rx), static_cast<double>(ry), static_cast<double>(rt));
}

// Residual with the torque row scaled to force units, and its analytic
// Jacobian in xi.
void scaled_residual_jacobian(const BalanceProblem& p, const Vec3& xi, double eps,
                              double arm_scale, Vec3& r, Eigen::Matrix3d* jac) {
  long double rx = 0.0L, ry = 0.0L, rt = 0.0L;
  if (jac) jac->setZero();
  for (size_t i = 0; i < p.pos.size(); ++i) {
    const Vec2& fp = p.pos[i];
    const long double vxl = static_cast<long double>(xi[0]) -
                            static_cast<long double>(xi[2]) * fp.y() + p.shape_vel[i].x();
    const long double vyl = static_cast<long double>(xi[1]) +
                            static_cast<long double>(xi[2]) * fp.x() + p.shape_vel[i].y();
    const Vec2 v(static_cast<double>(vxl), static_cast<double>(vyl));
    const long double speedl = sqrtl(vxl * vxl + vyl * vyl);
    const long double scalel = -static_cast<long double>(p.mu[i]) / (speedl + eps);
    const double speed = v.norm();
    const double scale = -p.mu[i] / (speed + eps);
    const Vec2 arm = (fp - p.torque_ref) / arm_scale;
    rx += scalel * vxl;
    ry += scalel * vyl;
    rt += static_cast<long double>(arm.x()) * (scalel * vyl) -
          static_cast<long double>(arm.y()) * (scalel * vxl);
    const Vec2 f(static_cast<double>(scalel * vxl), static_cast<double>(scalel * vyl));
    (void)f;
    if (!jac) continue;

    // dF/dv = scale * (I - v v^T / (|v| (|v| + eps)))
    Eigen::Matrix2d dfdv = Eigen::Matrix2d::Identity();
    if (speed > 1e-150) dfdv -= v * v.transpose() / (speed * (speed + eps));
    dfdv *= scale;
    Eigen::Matrix<double, 2, 3> dvdxi;
    dvdxi << 1.0, 0.0, -fp.y(), 0.0, 1.0, fp.x();
    const Eigen::Matrix<double, 2, 3> dfdxi = dfdv * dvdxi;
    jac->row(0) += dfdxi.row(0);
    jac->row(1) += dfdxi.row(1);
    jac->row(2) += arm.x() * dfdxi.row(1) - arm.y() * dfdxi.row(0);
  }
  r[0] = static_cast<double>(rx);
  r[1] = static_cast<double>(ry);
  r[2] = static_cast<double>(rt);
}

// Rigid motion minimizing the summed squared foot velocities. With many
// anchored feet this is close to the Coulomb solution and gives the Newton
// iteration a well-conditioned start.
Vec3 least_squares_start(const BalanceProblem& p) {
  Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
  Vec3 atb = Vec3::Zero();
  for (size_t i = 0; i < p.pos.size(); ++i) {
    Eigen::Matrix<double, 2, 3> a;
    a << 1.0, 0.0, -p.pos[i].y(), 0.0, 1.0, p.pos[i].x();
    ata += a.transpose() * a;
    atb += a.transpose() * (-p.shape_vel[i]);
  }
  ata.diagonal().array() += 1e-9;
  return ata.ldlt().solve(atb);
}

// Damped Newton stage at one regularization level; returns iterations
// used. Pure Newton steps (direct 3x3 LU; normal equations would square
// the stiff stick-transition conditioning away) with nonmonotone
// backtracking, falling back to Levenberg-Marquardt steps built from an
// augmented QR when the Newton direction fails. raw_tol, when positive,
// stops the stage once the unscaled residual is small enough.
int newton_stage(const BalanceProblem& p, Vec3& xi, double eps, double arm_scale, double tol,
                 double raw_tol, int max_iter) {
  const auto raw_norm = [&](const Vec3& r) {
    return std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * arm_scale * r[2] * arm_scale);
  };
  Vec3 r;
  Eigen::Matrix3d jac;
  scaled_residual_jacobian(p, xi, eps, arm_scale, r, &jac);

  Vec3 best_xi = xi;
  double best_norm = r.norm();
  // Nonmonotone acceptance window lets the iterate traverse the narrow
  // curved valleys near stick transitions.
  std::array<double, 5> recent;
  recent.fill(best_norm);
  double lambda = 1e-4;

  int iter = 0;
  for (; iter < max_iter; ++iter) {
    const double rn = r.norm();
    if (rn < tol) break;
    if (raw_tol > 0.0 && raw_norm(r) < raw_tol) break;

    Vec3 dx;
    Eigen::FullPivLU<Eigen::Matrix3d> lu(jac);
    lu.setThreshold(1e-13);
    const bool full_rank = lu.rank() == 3;
    if (full_rank) dx = lu.solve(-r);

    // Nonmonotone full steps help cross curved valleys early on; near the
    // floor they can cycle, so require strict decrease there.
    const bool endgame = rn < 1e-6;
    const double ref = endgame ? rn : *std::max_element(recent.begin(), recent.end());
    bool accepted = false;
    if (full_rank) {
      double alpha = 1.0;
      for (int bt = 0; bt < 40; ++bt) {
        const Vec3 cand = xi + alpha * dx;
        Vec3 rc;
        scaled_residual_jacobian(p, cand, eps, arm_scale, rc, nullptr);
        if (rc.norm() < ref * (1.0 + 1e-12) && (rc.norm() < rn || (bt == 0 && !endgame))) {
          xi = cand;
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
    }
    if (!accepted) {
      // Levenberg-Marquardt step via augmented QR (no normal equations).
      for (int attempt = 0; attempt < 12 && !accepted; ++attempt) {
        Eigen::Matrix<double, 6, 3> a;
        a.topRows<3>() = jac;
        a.bottomRows<3>() =
            std::sqrt(lambda) * jac.colwise().norm().asDiagonal().toDenseMatrix();
        Eigen::Matrix<double, 6, 1> b;
        b.head<3>() = -r;
        b.tail<3>().setZero();
        const Vec3 dx2 = a.colPivHouseholderQr().solve(b);
        Vec3 rc;
        scaled_residual_jacobian(p, xi + dx2, eps, arm_scale, rc, nullptr);
        if (rc.norm() < rn) {
          xi += dx2;
          lambda = std::max(1e-12, lambda / 3.0);
          accepted = true;
        } else {
          lambda = std::min(1e10, lambda * 4.0);
        }
      }
      if (!accepted) break;
    }
    scaled_residual_jacobian(p, xi, eps, arm_scale, r, &jac);
    std::rotate(recent.begin(), recent.begin() + 1, recent.end());
    recent.back() = r.norm();
    if (r.norm() < best_norm) {
      best_norm = r.norm();
      best_xi = xi;
    }
  }
  if (best_norm < r.norm()) xi = best_xi;
  return iter;
}

struct BalanceSolution {
  Vec3 xi = Vec3::Zero();
  double residual_norm = 0.0;
};

// Endgame refinement for solutions with one sticking foot. Near |v| = 0
// the force law rotates over an eps-sized ball, so Newton in xi is
// hopeless; instead parametrize by the stick foot's force F and the one
// remaining rigid-motion freedom s. Given F, the stick relation
// v(xi) = -eps F / (mu_n - |F|) is affine in xi, and every quantity is a
// smooth O(1) function of (F, s). Returns true if xi improved.
bool active_set_polish(const BalanceProblem& p, Vec3& xi, size_t stick,
                       double arm_scale) {
  const double eps = kSlipRegularization;
  const size_t nf = p.pos.size();
  if (stick >= nf || nf < 2) return false;
  const auto foot_vel = [&](const Vec3& x, size_t i) {
    return Vec2(x[0] - x[2] * p.pos[i].y() + p.shape_vel[i].x(),
                x[1] + x[2] * p.pos[i].x() + p.shape_vel[i].y());
  };

  const Vec2 pos = p.pos[stick];
  const double mu_stick = p.mu[stick];
  Eigen::Matrix<double, 2, 3> m;
  m << 1, 0, -pos.y(), 0, 1, pos.x();
  const Vec3 null_dir(pos.y(), -pos.x(), 1.0);
  const Eigen::Matrix2d mmt_inv = (m * m.transpose()).inverse();

  const auto xi_of = [&](const Vec2& f, double s_par) {
    const double fn = f.norm();
    const Vec2 target = -eps / (mu_stick - fn) * f;
    const Vec2 rhs = target - p.shape_vel[stick];
    const Vec3 xp = m.transpose() * (mmt_inv * rhs);
    return Vec3(xp + s_par * null_dir);
  };

  const auto balance = [&](const Vec2& f, double s_par, Vec3* xi_out) {
    const Vec3 x = xi_of(f, s_par);
    if (xi_out) *xi_out = x;
    Vec3 r(f.x(), f.y(), 0.0);
    {
      const Vec2 arm = pos - p.torque_ref;
      r[2] = (arm.x() * f.y() - arm.y() * f.x()) / arm_scale;
    }
    for (size_t i = 0; i < nf; ++i) {
      if (i == stick) continue;
      const Vec2 v = foot_vel(x, i);
      const Vec2 fi = -p.mu[i] / (v.norm() + eps) * v;
      const Vec2 arm = p.pos[i] - p.torque_ref;
      r[0] += fi.x();
      r[1] += fi.y();
      r[2] += (arm.x() * fi.y() - arm.y() * fi.x()) / arm_scale;
    }
    return r;
  };

  // Initialize from the current iterate.
  const Vec2 v0 = foot_vel(xi, stick);
  Vec2 f = -mu_stick / (v0.norm() + eps) * v0;
  if (f.norm() > 0.995 * mu_stick) f *= 0.99 * mu_stick / f.norm();
  double s_par = null_dir.dot(xi - xi_of(f, 0.0)) / null_dir.squaredNorm();

  Vec3 r = balance(f, s_par, nullptr);
  for (int iter = 0; iter < 40; ++iter) {
    if (r.norm() < 1e-12) break;
    Eigen::Matrix3d jac;
    const double hf = 1e-7 * mu_stick;
    const double hs = 1e-7 * (1.0 + std::fabs(s_par));
    jac.col(0) = (balance(f + Vec2(hf, 0), s_par, nullptr) - r) / hf;
    jac.col(1) = (balance(f + Vec2(0, hf), s_par, nullptr) - r) / hf;
    jac.col(2) = (balance(f, s_par + hs, nullptr) - r) / hs;
    const Vec3 dq = jac.fullPivLu().solve(-r);
    double alpha = 1.0;
    bool ok = false;
    for (int bt = 0; bt < 40; ++bt) {
      Vec2 fc = f + alpha * Vec2(dq[0], dq[1]);
      if (fc.norm() > 0.999 * mu_stick) fc *= 0.995 * mu_stick / fc.norm();
      const double sc = s_par + alpha * dq[2];
      const Vec3 rc = balance(fc, sc, nullptr);
      if (rc.norm() < r.norm()) {
        f = fc;
        s_par = sc;
        r = rc;
        ok = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!ok) break;
  }

  Vec3 cand;
  balance(f, s_par, &cand);
  if (residual_of(p, cand, eps).norm() < residual_of(p, xi, eps).norm()) {
    xi = cand;
    return true;
  }
  return false;
}

BalanceSolution solve_problem(const BalanceProblem& p, const Vec2& wdot) {
  constexpr double kRawTol = 1e-8;
  constexpr int kMaxIter = 200;

  double arm_scale = 1.0;
  for (const Vec2& fp : p.pos) arm_scale = std::max(arm_scale, (fp - p.torque_ref).norm());
  // Aim well below the contract tolerance: the extra Newton steps are
  // nearly free and the sharper balance pins xi itself to ~1e-9 relative.
  const double kStopTol = 1e-11;
  const double scaled_tol = 0.5 * kStopTol / (1.0 + arm_scale);

  const Vec3 lsq = least_squares_start(p);
  const auto raw_norm = [&](const Vec3& xi) {
    return residual_of(p, xi, kSlipRegularization).norm();
  };

  BalanceSolution best{lsq, raw_norm(lsq)};
  const auto consider = [&](const Vec3& xi) {
    const double rn = raw_norm(xi);
    if (rn < best.residual_norm) best = {xi, rn};
    return rn < kRawTol;
  };

  int used = 0;
  Vec3 xi = lsq;
  used += newton_stage(p, xi, kSlipRegularization, arm_scale, scaled_tol, 0.98 * kStopTol,
                       60);
  if (consider(xi)) return best;

  Vec3 xi0 = Vec3::Zero();
  used += newton_stage(p, xi0, kSlipRegularization, arm_scale, scaled_tol, 0.98 * kStopTol,
                       30);
  if (consider(xi0)) return best;

  // The Coulomb residual is multimodal: sums of saturated friction
  // directions create spurious local minima. The true solution usually
  // anchors one or two feet, so seed from the rigid motions that zero
  // each foot pair's velocities (plus each single foot with zero spin)
  // and polish the most promising candidates.
  std::vector<std::pair<double, Vec3>> seeds;
  const size_t nf = p.pos.size();
  for (size_t i = 0; i < nf; ++i) {
    const Vec2& pi = p.pos[i];
    seeds.emplace_back(0.0, Vec3(-p.shape_vel[i].x(), -p.shape_vel[i].y(), 0.0));
    for (size_t j = i + 1; j < nf; ++j) {
      const Vec2& pj = p.pos[j];
      Eigen::Matrix<double, 4, 3> a;
      a << 1, 0, -pi.y(), 0, 1, pi.x(), 1, 0, -pj.y(), 0, 1, pj.x();
      Eigen::Matrix<double, 4, 1> b;
      b << -p.shape_vel[i].x(), -p.shape_vel[i].y(), -p.shape_vel[j].x(),
          -p.shape_vel[j].y();
      Eigen::Matrix3d ata = a.transpose() * a;
      ata.diagonal().array() += 1e-9;
      seeds.emplace_back(0.0, ata.ldlt().solve(a.transpose() * b));
    }
  }
  for (auto& s : seeds) s.first = raw_norm(s.second);
  std::sort(seeds.begin(), seeds.end(), [](const auto& a, const auto& b) {
    return a.first < b.first;
  });
  for (size_t k = 0; k < seeds.size() && k < 6 && used < kMaxIter; ++k) {
    Vec3 cand = seeds[k].second;
    used += newton_stage(p, cand, kSlipRegularization, arm_scale, scaled_tol,
                         0.98 * kStopTol, std::min(30, kMaxIter - used));
    if (consider(cand)) return best;
  }

  // Continuation on the friction regularization: coarse levels smooth the
  // stick/slip transition and track the solution into the final eps.
  xi = lsq;
  const double speed_scale = std::max(wdot.norm(), 1e-3);
  for (double eps : {1e-2 * speed_scale, 1e-4 * speed_scale, kSlipRegularization}) {
    if (eps < kSlipRegularization) continue;
    const bool final_stage = eps == kSlipRegularization;
    used += newton_stage(p, xi, eps, arm_scale, final_stage ? scaled_tol : 1e-7,
                         final_stage ? 0.98 * kStopTol : 0.0, std::max(20, kMaxIter - used));
    if (used >= kMaxIter + 60) break;
  }
  if (consider(xi)) return best;

  // Sticking-feet endgame: the plateau typically sits within a factor of
  // a few of the tolerance with a foot at the stick boundary. Try the
  // slowest feet as stick candidates in turn.
  if (best.residual_norm < 1e-4) {
    std::vector<std::pair<double, size_t>> by_speed;
    for (size_t i = 0; i < p.pos.size(); ++i) {
      const Vec2 v(best.xi[0] - best.xi[2] * p.pos[i].y() + p.shape_vel[i].x(),
                   best.xi[1] + best.xi[2] * p.pos[i].x() + p.shape_vel[i].y());
      by_speed.emplace_back(v.norm(), i);
    }
    std::sort(by_speed.begin(), by_speed.end());
    for (size_t k = 0; k < by_speed.size() && k < 3; ++k) {
      if (by_speed[k].first > 1e-2) break;
      Vec3 cand = best.xi;
      if (active_set_polish(p, cand, by_speed[k].second, arm_scale) && consider(cand))
        return best;
    }
  }

  // Last polish from the best iterate seen, with fresh budget.
  xi = best.xi;
  newton_stage(p, xi, kSlipRegularization, arm_scale, 0.1 * scaled_tol, 0.98 * kStopTol,
               100);
  consider(xi);
  return best;
}

int component_row(char component) {
  switch (component) {
    case 'x': return 0;
    case 'y': return 1;
    case 't': return 2;
    default: throw std::invalid_argument("height field component must be 'x', 'y' or 't'");
  }
}

}  // namespace

Vec2 foot_slip_velocity(const RobotMorphology& morph, const GaitProgram& gait,
                        const ShapePoint& w, const Vec2& wdot,
                        const BodyVelocity& xi, int leg_id) {
  if (leg_id < 0 || leg_id >= morph.n_legs())
    throw std::out_of_range("foot_slip_velocity: leg id out of range");
  const Posture posture = posture_from_shape(morph, gait, w);
  if (!posture.intended_stance[static_cast<size_t>(leg_id)])
    throw std::domain_error("foot_slip_velocity: foot is not in stance");
  const auto feet = detail::planar_foot_kinematics(morph, gait, w);
  const auto& fk = feet[static_cast<size_t>(leg_id)];
  return Vec2(xi.xi_x - xi.xi_theta * fk.pos.y(), xi.xi_y + xi.xi_theta * fk.pos.x()) +
         fk.d_dw1 * wdot.x() + fk.d_dw2 * wdot.y();
}

Vec2 grf(const Vec2& slip, double mu_normal) {
  if (!(mu_normal > 0.0)) throw std::invalid_argument("grf: force scale must be > 0");
  const double speed = slip.norm();
  return -mu_normal / (speed + kSlipRegularization) * slip;
}

Vec3 force_balance_residual(const RobotMorphology& morph, const GaitProgram& gait,
                            const ShapePoint& w, const Vec2& wdot, const BodyVelocity& xi,
                            const std::vector<uint8_t>* stance_override) {
  const BalanceProblem p = build_balance_problem(morph, gait, w, wdot, stance_override);
  return residual_of(p, xi.vec(), kSlipRegularization);
}

BodyVelocity solve_body_velocity_loaded(const RobotMorphology& morph,
                                        const GaitProgram& gait, const ShapePoint& w,
                                        const Vec2& wdot,
                                        const std::vector<uint8_t>& stance,
                                        const std::vector<double>& loads) {
  const BalanceProblem p = build_balance_problem(morph, gait, w, wdot, &stance, &loads);
  if (wdot.x() == 0.0 && wdot.y() == 0.0) return BodyVelocity{};
  const BalanceSolution sol = solve_problem(p, wdot);
  if (sol.residual_norm >= 1e-3) {
    std::ostringstream msg;
    msg << "force balance did not converge: |r|=" << sol.residual_norm << " at w=(" << w.w1
        << "," << w.w2 << ") wdot=(" << wdot.x() << "," << wdot.y() << ") stance="
        << p.pos.size();
    if (std::getenv("MERLOCO_DEBUG_SOLVE")) {
      std::ostringstream d;
      d << " stance=[";
      for (auto b : stance) d << int(b);
      d << "] loads=[";
      for (auto l : loads) d << l << ",";
      d << "] ap=" << gait.vertical_amplitude << " ab=" << gait.body_amplitude
        << " c0=" << gait.clearance << " duty=" << gait.desired_duty
        << " aleg=" << gait.shoulder_amplitude << " sn=" << gait.spatial_period
        << " N=" << morph.n_pairs;
      msg << d.str();
    }
    throw SolverError(msg.str());
  }
  return BodyVelocity{sol.xi[0], sol.xi[1], sol.xi[2]};
}

BodyVelocity solve_body_velocity(const RobotMorphology& morph, const GaitProgram& gait,
                                 const ShapePoint& w, const Vec2& wdot,
                                 const std::vector<uint8_t>* stance_override) {
  const BalanceProblem p = build_balance_problem(morph, gait, w, wdot, stance_override);
  if (wdot.x() == 0.0 && wdot.y() == 0.0) return BodyVelocity{};
  const BalanceSolution sol = solve_problem(p, wdot);
  // Degenerate stance sets (3 or fewer feet saturating their friction
  // cones) can make an exact balance unattainable; a residual this small
  // is a negligible net force in a quasi-static model, so keep the best
  // minimizer. Larger plateaus indicate a genuine failure.
  if (sol.residual_norm >= 1e-3) {
    std::ostringstream msg;
    msg << "force balance did not converge: |r|=" << sol.residual_norm << " at w=(" << w.w1
        << "," << w.w2 << ") wdot=(" << wdot.x() << "," << wdot.y() << ") stance="
        << p.pos.size();
    throw SolverError(msg.str());
  }
  return BodyVelocity{sol.xi[0], sol.xi[1], sol.xi[2]};
}

Mat32 local_connection(const RobotMorphology& morph, const GaitProgram& gait,
                       const ShapePoint& w) {
  Mat32 a;
  const BodyVelocity c1 = solve_body_velocity(morph, gait, w, Vec2(1.0, 0.0));
  const BodyVelocity c2 = solve_body_velocity(morph, gait, w, Vec2(0.0, 1.0));
  a.col(0) = c1.vec();
  a.col(1) = c2.vec();
  return a;
}

namespace {
uint64_t contact_regime_signature(const RobotMorphology& morph, const GaitProgram& gait,
                                  const ShapePoint& w) {
  const Posture posture = posture_from_shape(morph, gait, w);
  std::vector<uint8_t> sig_bits = posture.intended_stance;
  sig_bits.insert(sig_bits.end(), posture.workspace_jam.begin(),
                  posture.workspace_jam.end());
  // Load-ramp regime per stance leg: the connection is smooth inside a
  // regime but kinks where a leg enters or leaves its ramp.
  for (int leg = 0; leg < morph.n_legs(); ++leg) {
    if (!posture.intended_stance[static_cast<size_t>(leg)]) {
      sig_bits.push_back(3);
      continue;
    }
    const double progress = detail::stance_progress(leg / 2, leg % 2, morph.n_pairs,
                                                    gait.spatial_period,
                                                    gait.desired_duty, posture.phase);
    const double ramp = kEngagementRampFraction;
    sig_bits.push_back(progress < ramp ? 0 : (progress > 1.0 - ramp ? 2 : 1));
  }
  return detail::stance_signature(sig_bits);
}
}  // namespace

ConnectionField compute_connection_field(const RobotMorphology& morph,
                                         const GaitProgram& gait, const GridSpec& grid) {
  ConnectionField field;
  field.grid = grid;
  const int nn = grid.n + 1;
  field.values.assign(static_cast<size_t>(nn) * nn, Mat32::Zero());
  field.node_ok.assign(static_cast<size_t>(nn) * nn, 0);
  field.stance_sig.assign(static_cast<size_t>(nn) * nn, 0);
  field.center_sig.assign(static_cast<size_t>(grid.n) * grid.n, 0);

  for (int c2 = 0; c2 < grid.n; ++c2)
    for (int c1 = 0; c1 < grid.n; ++c1)
      field.center_sig[static_cast<size_t>(c2) * grid.n + c1] = contact_regime_signature(
          morph, gait, {grid.center_coord(c1), grid.center_coord(c2)});

  for (int k2 = 0; k2 < nn; ++k2) {
    for (int k1 = 0; k1 < nn; ++k1) {
      const ShapePoint w{grid.node_coord(k1), grid.node_coord(k2)};
      const size_t idx = static_cast<size_t>(k2) * nn + k1;
      field.stance_sig[idx] = contact_regime_signature(morph, gait, w);
      try {
        field.values[idx] = local_connection(morph, gait, w);
        field.node_ok[idx] = 1;
      } catch (const AllFeetAirborne&) {
      } catch (const SolverError&) {
      }
    }
  }
  return field;
}

HeightField height_function(const ConnectionField& field, char component) {
  const int row = component_row(component);
  const GridSpec& grid = field.grid;
  const int n = grid.n;
  const int nn = n + 1;
  const double d = grid.spacing();

  HeightField hf;
  hf.grid = grid;
  hf.component = component;
  hf.values.assign(static_cast<size_t>(n) * n, 0.0);
  hf.mask.assign(static_cast<size_t>(n) * n, 0);

  auto a1 = [&](int k1, int k2) { return field.value(k1, k2)(row, 0); };
  auto a2 = [&](int k1, int k2) { return field.value(k1, k2)(row, 1); };

  for (int c2 = 0; c2 < n; ++c2) {
    for (int c1 = 0; c1 < n; ++c1) {
      // Trapezoid circulation around the cell, oriented along the gait
      // traversal w = (sin t, cos t) (clockwise), so enclosed integrals
      // read directly as per-cycle displacement.
      const double circ =
          0.5 * d * (a1(c1, c2) + a1(c1 + 1, c2)) +
          0.5 * d * (a2(c1 + 1, c2) + a2(c1 + 1, c2 + 1)) -
          0.5 * d * (a1(c1 + 1, c2 + 1) + a1(c1, c2 + 1)) -
          0.5 * d * (a2(c1, c2 + 1) + a2(c1, c2));
      const size_t idx = static_cast<size_t>(c2) * n + c1;
      hf.values[idx] = -circ / (d * d);

      const size_t n00 = static_cast<size_t>(c2) * nn + c1;
      const size_t n10 = n00 + 1;
      const size_t n01 = n00 + nn;
      const size_t n11 = n01 + 1;
      const bool ok = field.node_ok[n00] && field.node_ok[n10] && field.node_ok[n01] &&
                      field.node_ok[n11];
      const bool same_stance = field.stance_sig[n00] == field.stance_sig[n10] &&
                               field.stance_sig[n00] == field.stance_sig[n01] &&
                               field.stance_sig[n00] == field.stance_sig[n11] &&
                               (field.center_sig.empty() ||
                                field.stance_sig[n00] == field.center_sig[idx]);
      hf.mask[idx] = (!ok || !same_stance) ? 1 : 0;
    }
  }
  return hf;
}

HeightField height_function(const RobotMorphology& morph, const GaitProgram& gait,
                            char component, const GridSpec& grid) {
  return height_function(compute_connection_field(morph, gait, grid), component);
}

Vec3 stride_line_integral(const RobotMorphology& morph, const GaitProgram& gait,
                          const std::vector<ShapePoint>& path) {
  if (path.size() < 2) throw std::invalid_argument("stride_line_integral: path too short");
  const double dx = path.front().w1 - path.back().w1;
  const double dy = path.front().w2 - path.back().w2;
  if (std::sqrt(dx * dx + dy * dy) > 1e-9)
    throw std::invalid_argument("stride_line_integral: path is not closed");

  Vec3 total = Vec3::Zero();
  std::optional<Mat32> a_prev;
  for (size_t k = 0; k + 1 < path.size(); ++k) {
    const Vec2 dw(path[k + 1].w1 - path[k].w1, path[k + 1].w2 - path[k].w2);
    if (dw.norm() == 0.0) {
      a_prev.reset();
      continue;
    }
    if (!a_prev) a_prev = local_connection(morph, gait, path[k]);
    const Mat32 a_next = local_connection(morph, gait, path[k + 1]);
    total += 0.5 * ((*a_prev) * dw + a_next * dw);
    a_prev = a_next;
  }
  return total;
}

double stride_surface_integral(const HeightField& field, double amplitude) {
  if (!(amplitude >= 0.0)) throw std::domain_error("stride_surface_integral: negative radius");
  if (amplitude > field.grid.half_extent + 1e-12)
    throw std::domain_error("stride_surface_integral: circle exceeds grid");
  const int n = field.grid.n;
  const double cell_area = field.grid.spacing() * field.grid.spacing();
  const double r2 = amplitude * amplitude;
  double total = 0.0;
  for (int c2 = 0; c2 < n; ++c2) {
    const double y = field.grid.center_coord(c2);
    for (int c1 = 0; c1 < n; ++c1) {
      const double x = field.grid.center_coord(c1);
      if (x * x + y * y < r2) total += field.value(c1, c2) * cell_area;
    }
  }
  return total;
}

double optimal_amplitude(const HeightField& field) {
  double best_r = 0.0, best_v = stride_surface_integral(field, 0.0);
  for (double r = 0.01; r <= field.grid.half_extent + 1e-12; r += 0.01) {
    const double v = stride_surface_integral(field, std::min(r, field.grid.half_extent));
    if (v > best_v + 1e-15) {
      best_v = v;
      best_r = r;
    }
  }
  return best_r;
}

double select_amplitude(double a_sc, double a_b_star) {
  if (a_sc < 0.0 || a_b_star < 0.0)
    throw std::invalid_argument("select_amplitude: amplitudes must be >= 0");
  return std::min(a_sc, a_b_star);
}

double stride_upper_bound(double leg_length) {
  if (leg_length < 0.0) throw std::invalid_argument("stride_upper_bound: negative leg length");
  return 4.0 * leg_length;
}

SlipBudget slip_budget(const FootSlipSeries& series) {
  if (series.forward_velocity.size() != series.in_stance.size())
    throw std::invalid_argument("slip_budget: inconsistent series lengths");
  const double span = series.dphase * static_cast<double>(series.forward_velocity.size());
  if (span < 2.0 * M_PI - 1e-9)
    throw std::invalid_argument("slip_budget: series spans less than one cycle");
  SlipBudget b;
  for (size_t k = 0; k < series.forward_velocity.size(); ++k) {
    if (!series.in_stance[k]) continue;
    const double v = series.forward_velocity[k];
    if (v > 0.0)
      b.d1 += v * series.dphase;
    else
      b.d2 -= v * series.dphase;
  }
  return b;
}

// ---------------------------------------------------------------------------
// Serialization: '#' JSON header line, then one row per grid entry. Doubles
// are printed with 17 significant digits so reload is bit-exact.

namespace {
std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace

void save_height_field(const HeightField& field, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  nlohmann::json meta{{"kind", "height"},
                      {"component", std::string(1, field.component)},
                      {"n", field.grid.n},
                      {"half_extent", field.grid.half_extent}};
  out << "# merloco-field " << meta.dump() << "\n";
  for (int c2 = 0; c2 < field.grid.n; ++c2) {
    for (int c1 = 0; c1 < field.grid.n; ++c1) {
      out << fmt_double(field.grid.center_coord(c1)) << ' '
          << fmt_double(field.grid.center_coord(c2)) << ' '
          << fmt_double(field.value(c1, c2)) << ' ' << int(field.masked(c1, c2)) << "\n";
    }
  }
}

HeightField load_height_field(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# merloco-field ", 0) != 0)
    throw std::runtime_error("bad field header in " + path);
  const nlohmann::json meta = nlohmann::json::parse(line.substr(16));
  if (meta.at("kind") != "height") throw std::runtime_error("not a height field: " + path);

  HeightField field;
  field.grid.n = meta.at("n").get<int>();
  field.grid.half_extent = meta.at("half_extent").get<double>();
  field.component = meta.at("component").get<std::string>().at(0);
  const size_t count = static_cast<size_t>(field.grid.n) * field.grid.n;
  field.values.reserve(count);
  field.mask.reserve(count);
  double w1 = 0.0, w2 = 0.0, v = 0.0;
  int m = 0;
  while (in >> w1 >> w2 >> v >> m) {
    field.values.push_back(v);
    field.mask.push_back(static_cast<uint8_t>(m));
  }
  if (field.values.size() != count) throw std::runtime_error("truncated field file: " + path);
  return field;
}

void save_connection_field(const ConnectionField& field, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  nlohmann::json meta{{"kind", "connection"},
                      {"n", field.grid.n},
                      {"half_extent", field.grid.half_extent}};
  out << "# merloco-field " << meta.dump() << "\n";
  const int nn = field.grid.n + 1;
  for (int k2 = 0; k2 < nn; ++k2) {
    for (int k1 = 0; k1 < nn; ++k1) {
      const size_t idx = static_cast<size_t>(k2) * nn + k1;
      const Mat32& a = field.values[idx];
      out << fmt_double(field.grid.node_coord(k1)) << ' '
          << fmt_double(field.grid.node_coord(k2));
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 2; ++c) out << ' ' << fmt_double(a(r, c));
      out << ' ' << int(field.node_ok[idx]) << ' ' << field.stance_sig[idx] << "\n";
    }
  }
}

ConnectionField load_connection_field(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# merloco-field ", 0) != 0)
    throw std::runtime_error("bad field header in " + path);
  const nlohmann::json meta = nlohmann::json::parse(line.substr(16));
  if (meta.at("kind") != "connection")
    throw std::runtime_error("not a connection field: " + path);

  ConnectionField field;
  field.grid.n = meta.at("n").get<int>();
  field.grid.half_extent = meta.at("half_extent").get<double>();
  const size_t count = static_cast<size_t>(field.grid.n + 1) * (field.grid.n + 1);
  double w1 = 0.0, w2 = 0.0;
  Mat32 a;
  int ok = 0;
  uint64_t sig = 0;
  while (in >> w1 >> w2 >> a(0, 0) >> a(0, 1) >> a(1, 0) >> a(1, 1) >> a(2, 0) >> a(2, 1) >>
         ok >> sig) {
    field.values.push_back(a);
    field.node_ok.push_back(static_cast<uint8_t>(ok));
    field.stance_sig.push_back(sig);
  }
  if (field.values.size() != count) throw std::runtime_error("truncated field file: " + path);
  return field;
}

}  // namespace merloco
