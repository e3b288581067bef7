#include "merloco/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace merloco {

double PLossTable::lookup(double rg) const {
  if (rugosity.empty()) return 0.0;
  if (rg <= rugosity.front()) return p_loss.front();
  if (rg >= rugosity.back()) return p_loss.back();
  for (size_t i = 1; i < rugosity.size(); ++i) {
    if (rg <= rugosity[i]) {
      const double t = (rg - rugosity[i - 1]) / (rugosity[i] - rugosity[i - 1]);
      return p_loss[i - 1] + t * (p_loss[i] - p_loss[i - 1]);
    }
  }
  return p_loss.back();
}

double ContactModeConfig::effective_reach(const RobotMorphology& morph) const {
  return reach_window > 0.0 ? reach_window : kReachWindowFactor * morph.leg_length;
}

double ContactModeConfig::effective_swing_clearance(const RobotMorphology& morph) const {
  return swing_clearance > 0.0 ? swing_clearance
                               : kSwingClearanceFactor * effective_reach(morph);
}

SimState make_initial_state(const RobotMorphology& morph, const Pose2& start) {
  SimState s;
  s.pose = start;
  const size_t n = static_cast<size_t>(morph.n_legs());
  s.realized_stance.assign(n, 0);
  s.obstructed.assign(n, 0);
  s.last_thrust.assign(n, 0.0);
  s.channel_erased.assign(n, 0);
  s.retry_used.assign(n, 0);
  s.retry_active.assign(n, 0);
  s.slip_d1.assign(n, 0.0);
  s.slip_d2.assign(n, 0.0);
  return s;
}

namespace {

// World placement of the planar chain from the mean-body-frame pose.
struct WorldChain {
  std::vector<Vec2> axles;       // N
  std::vector<double> headings;  // N
  std::vector<Vec2> feet;        // 2N
};

WorldChain world_chain(const detail::CenteredChain& chain, const Pose2& pose) {
  WorldChain wc;
  const double c = std::cos(pose.theta), s = std::sin(pose.theta);
  wc.axles.reserve(chain.axles.size());
  wc.headings.reserve(chain.headings.size());
  wc.feet.reserve(chain.feet.size());
  for (const Vec2& a : chain.axles)
    wc.axles.emplace_back(pose.x + c * a.x() - s * a.y(), pose.y + s * a.x() + c * a.y());
  for (double h : chain.headings) wc.headings.push_back(pose.theta + h);
  for (const auto& fk : chain.feet)
    wc.feet.emplace_back(pose.x + c * fk.pos.x() - s * fk.pos.y(),
                         pose.y + s * fk.pos.x() + c * fk.pos.y());
  return wc;
}

// Body-plane reference height per axle: mean terrain under the axles plus
// the vertical-wave hip lift, anchored so the lowest hip sits on the plane.
std::vector<double> axle_references(const RobotMorphology& morph, const GaitProgram& gait,
                                    const Posture& posture, const WorldChain& kin,
                                    const Stepfield& terrain) {
  double z_base = 0.0;
  for (const Vec2& a : kin.axles) z_base += height_at(terrain, a.x(), a.y());
  z_base /= static_cast<double>(kin.axles.size());

  std::vector<double> refs = hip_drops(morph, gait, posture.phase);
  for (double& r : refs) r += z_base;
  return refs;
}

bool window_ok(const Stepfield& terrain, double x, double y, double z_ref, double reach) {
  const double h = height_at(terrain, x, y);
  return std::fabs(h - z_ref) <= reach;
}

bool geometric_contact(const RobotMorphology& morph, const WorldChain& kin,
                       const Stepfield& terrain, const std::vector<double>& refs, int leg,
                       double reach) {
  const int pair = leg / 2;
  const Vec2& foot = kin.feet[static_cast<size_t>(leg)];
  const double z_ref = refs[static_cast<size_t>(pair)];
  if (morph.foot.kind == FootGeometry::Kind::Point)
    return window_ok(terrain, foot.x(), foot.y(), z_ref, reach);
  reach += arc_vertical_span(morph.foot);  // the arc rolls to engage

  // C-arc distributed foot: the contact survives if any footprint sample
  // can engage. Samples always include the arc center, so a C-arc never
  // loses a contact a point foot would keep.
  constexpr int kArcSamples = 9;
  const double heading = kin.headings[static_cast<size_t>(pair)];
  const Vec2 along(std::cos(heading), std::sin(heading));
  const Vec2 across(-std::sin(heading), std::cos(heading));
  const int lat_samples = morph.foot.width > 0.0 ? 3 : 1;
  for (int a = 0; a < kArcSamples; ++a) {
    const double u = (kArcSamples == 1)
                         ? 0.0
                         : (-0.5 + static_cast<double>(a) / (kArcSamples - 1)) *
                               morph.foot.arc_length;
    for (int b = 0; b < lat_samples; ++b) {
      const double v = lat_samples == 1
                           ? 0.0
                           : (-0.5 + static_cast<double>(b) / (lat_samples - 1)) *
                                 morph.foot.width;
      const double x = foot.x() + u * along.x() + v * across.x();
      const double y = foot.y() + u * along.y() + v * across.y();
      if (window_ok(terrain, x, y, z_ref, reach)) return true;
    }
  }
  return false;
}

std::vector<uint8_t> resolve_geometric(const RobotMorphology& morph, const GaitProgram& gait,
                                       const Posture& posture, const WorldChain& kin,
                                       const Stepfield& terrain, double reach) {
  std::vector<uint8_t> realized(posture.intended_stance.size(), 0);
  const std::vector<double> refs = axle_references(morph, gait, posture, kin, terrain);
  for (size_t leg = 0; leg < realized.size(); ++leg) {
    if (!posture.intended_stance[leg]) continue;
    realized[leg] = geometric_contact(morph, kin, terrain, refs, static_cast<int>(leg), reach)
                        ? 1
                        : 0;
  }
  return realized;
}

}  // namespace

std::vector<uint8_t> resolve_contacts(const RobotMorphology& morph, const GaitProgram& gait,
                                      const Posture& posture, const Pose2& pose,
                                      const Stepfield& terrain, const ContactModeConfig& cfg,
                                      std::mt19937_64& rng) {
  if (cfg.mode == ContactMode::Channel) {
    const double p = cfg.channel_loss.lookup(rugosity(terrain));
    std::vector<uint8_t> realized(posture.intended_stance.size(), 0);
    for (size_t leg = 0; leg < realized.size(); ++leg) {
      if (!posture.intended_stance[leg]) continue;
      const double u = static_cast<double>(rng() >> 11) * 0x1p-53;
      realized[leg] = u < p ? 0 : 1;
    }
    return realized;
  }
  const ShapePoint w{gait.body_amplitude * std::sin(posture.phase),
                     gait.body_amplitude * std::cos(posture.phase)};
  const WorldChain kin = world_chain(detail::centered_chain(morph, gait, w), pose);
  return resolve_geometric(morph, gait, posture, kin, terrain, cfg.effective_reach(morph));
}

SimState step(const SimState& state, const RobotMorphology& morph, const GaitProgram& gait,
              const Stepfield& terrain, const ContactModeConfig& cfg, double dphase,
              std::mt19937_64& rng, bool contact_retry) {
  if (!(dphase > 0.0 && dphase <= 2.0 * M_PI / 64.0 + 1e-12))
    throw std::invalid_argument("step: dphase must be in (0, 2*pi/64]");

  SimState next = state;
  const int n_legs = morph.n_legs();
  const Posture posture = posture_at(morph, gait, state.phase);
  const ShapePoint w{gait.body_amplitude * std::sin(state.phase),
                     gait.body_amplitude * std::cos(state.phase)};
  const detail::CenteredChain chain = detail::centered_chain(morph, gait, w);

  // Cycle-scoped draws and bookkeeping reset on phase wrap (and at start).
  const bool cycle_start = state.step_index == 0 || state.phase < 0.5 * dphase;
  if (cycle_start) {
    std::fill(next.retry_used.begin(), next.retry_used.end(), 0);
    std::fill(next.retry_active.begin(), next.retry_active.end(), 0);
    if (cfg.mode == ContactMode::Channel) {
      const double p = cfg.channel_loss.lookup(rugosity(terrain));
      for (int leg = 0; leg < n_legs; ++leg) {
        const double u = static_cast<double>(rng() >> 11) * 0x1p-53;
        next.channel_erased[static_cast<size_t>(leg)] = u < p ? 1 : 0;
      }
    }
  }

  const WorldChain kin = world_chain(chain, state.pose);
  std::vector<uint8_t> realized(static_cast<size_t>(n_legs), 0);
  std::vector<uint8_t> obstructed(static_cast<size_t>(n_legs), 0);
  if (cfg.mode == ContactMode::Channel) {
    for (int leg = 0; leg < n_legs; ++leg)
      realized[static_cast<size_t>(leg)] =
          posture.intended_stance[static_cast<size_t>(leg)] &&
          !next.channel_erased[static_cast<size_t>(leg)];
  } else {
    const double reach = cfg.effective_reach(morph);
    const double retry_reach = reach + cfg.retry_reach_factor * morph.leg_length;
    const std::vector<double> refs = axle_references(morph, gait, posture, kin, terrain);
    for (int leg = 0; leg < n_legs; ++leg) {
      if (!posture.intended_stance[static_cast<size_t>(leg)]) {
        next.retry_active[static_cast<size_t>(leg)] = 0;
        continue;
      }
      bool ok = geometric_contact(morph, kin, terrain, refs, leg, reach);
      if (!ok && contact_retry) {
        // Stop-and-wait: one extended-reach re-engagement per leg per
        // cycle; once a retry catches, the extended reach holds for the
        // rest of that contact window.
        if (next.retry_active[static_cast<size_t>(leg)] ||
            !next.retry_used[static_cast<size_t>(leg)]) {
          const bool was_active = next.retry_active[static_cast<size_t>(leg)] != 0;
          const bool caught = geometric_contact(morph, kin, terrain, refs, leg, retry_reach);
          if (!was_active) next.retry_used[static_cast<size_t>(leg)] = 1;
          if (caught) {
            ok = true;
            next.retry_active[static_cast<size_t>(leg)] = 1;
          }
        }
      }
      realized[static_cast<size_t>(leg)] = ok ? 1 : 0;
    }
    // Swing legs striking blocks above their clearance drag against them;
    // C-arcs roll over what their span covers.
    const double swing_clear =
        cfg.effective_swing_clearance(morph) + arc_vertical_span(morph.foot);
    for (int leg = 0; leg < n_legs; ++leg) {
      if (posture.intended_stance[static_cast<size_t>(leg)]) continue;
      const int pair = leg / 2;
      const Vec2& foot = kin.feet[static_cast<size_t>(leg)];
      const double h = height_at(terrain, foot.x(), foot.y());
      if (h - refs[static_cast<size_t>(pair)] > swing_clear)
        obstructed[static_cast<size_t>(leg)] = 1;
    }
  }
  next.realized_stance = realized;
  next.obstructed = obstructed;

  std::vector<uint8_t> in_balance(static_cast<size_t>(n_legs), 0);
  int stance_count = 0;
  for (int leg = 0; leg < n_legs; ++leg) {
    in_balance[static_cast<size_t>(leg)] =
        realized[static_cast<size_t>(leg)] || obstructed[static_cast<size_t>(leg)];
    stance_count += in_balance[static_cast<size_t>(leg)];
  }
  BodyVelocity xi{};
  const Vec2 wdot(gait.body_amplitude * std::cos(state.phase),
                  -gait.body_amplitude * std::sin(state.phase));
  std::fill(next.last_thrust.begin(), next.last_thrust.end(), 0.0);
  if (stance_count > 0) {
    // Ground load transfers gradually at the edges of each contact window;
    // obstructed swing feet bear part of a share against the block.
    std::vector<double> loads(static_cast<size_t>(n_legs), 0.0);
    double load_sum = 0.0;
    for (int leg = 0; leg < n_legs; ++leg) {
      if (obstructed[static_cast<size_t>(leg)]) {
        loads[static_cast<size_t>(leg)] = kObstructionLoad;
      } else if (realized[static_cast<size_t>(leg)]) {
        const double progress = detail::stance_progress(
            leg / 2, leg % 2, morph.n_pairs, gait.spatial_period, gait.desired_duty,
            state.phase);
        loads[static_cast<size_t>(leg)] =
            std::max(engagement_load(progress), kEngagementLoadFloor);
      } else {
        continue;
      }
      load_sum += loads[static_cast<size_t>(leg)];
    }
    // Rare degenerate contact patterns (an effectively 3-point Coulomb
    // balance) admit no zero-net-force solution; the quasi-static model
    // treats such an instant as a stall, like AllFeetAirborne.
    bool stalled = false;
    try {
      xi = solve_body_velocity_loaded(morph, gait, w, wdot, in_balance, loads);
    } catch (const SolverError&) {
      xi = BodyVelocity{};
      stalled = true;
      ++next.solver_stalls;
    }

    // Foot velocities feed the slip budgets and thrust samples; thrust is
    // the forward friction force in units of the total Coulomb budget.
    for (int leg = 0; !stalled && leg < n_legs; ++leg) {
      if (!realized[static_cast<size_t>(leg)]) continue;
      const auto& fk = chain.feet[static_cast<size_t>(leg)];
      const Vec2 v(xi.xi_x - xi.xi_theta * fk.pos.y() + fk.d_dw1.x() * wdot.x() +
                       fk.d_dw2.x() * wdot.y(),
                   xi.xi_y + xi.xi_theta * fk.pos.x() + fk.d_dw1.y() * wdot.x() +
                       fk.d_dw2.y() * wdot.y());
      if (v.x() > 0.0)
        next.slip_d1[static_cast<size_t>(leg)] += v.x() * dphase;
      else
        next.slip_d2[static_cast<size_t>(leg)] -= v.x() * dphase;
      // Thrust in units of that foot's own Coulomb budget mu N_i.
      next.last_thrust[static_cast<size_t>(leg)] =
          -v.x() / (v.norm() + kSlipRegularization);
    }
  }
  next.last_xi = xi;

  const double c = std::cos(state.pose.theta), s = std::sin(state.pose.theta);
  const double dx = (c * xi.xi_x - s * xi.xi_y) * dphase;
  next.pose.x += dx;
  next.pose.y += (s * xi.xi_x + c * xi.xi_y) * dphase;
  next.pose.theta += xi.xi_theta * dphase;
  next.distance += dx;
  next.phase = wrap_phase(state.phase + dphase);
  next.step_index = state.step_index + 1;
  return next;
}

TrialRecord run_trial(const RobotMorphology& morph, const GaitProgram& gait,
                      const Stepfield& terrain, const Controller& controller, int n_cycles,
                      int steps_per_cycle, uint64_t seed, const ContactModeConfig& cfg,
                      const Pose2& start) {
  if (n_cycles < 1) throw std::invalid_argument("run_trial: n_cycles must be >= 1");
  if (steps_per_cycle < 64)
    throw std::invalid_argument("run_trial: steps_per_cycle must be >= 64");
  morph.validate();
  gait.validate();

  const int n_legs = morph.n_legs();
  const double dphase = 2.0 * M_PI / steps_per_cycle;
  std::mt19937_64 rng(seed);

  TrialRecord record;
  record.seed = seed;
  record.steps_per_cycle = steps_per_cycle;
  record.n_legs = n_legs;
  record.body_length = morph.body_length();
  record.dphase = dphase;
  record.step_x.reserve(static_cast<size_t>(n_cycles) * steps_per_cycle + 1);
  record.step_x.push_back(start.x);

  SimState state = make_initial_state(morph, start);
  GaitProgram current = gait;
  const bool retry = controller.wants_contact_retry();

  for (int cycle = 0; cycle < n_cycles; ++cycle) {
    CycleRecord cr;
    cr.vertical_amplitude = current.vertical_amplitude;
    cr.body_amplitude = current.body_amplitude;
    cr.shoulder_amplitude = current.shoulder_amplitude;
    cr.intended.assign(static_cast<size_t>(n_legs) * steps_per_cycle, 0);
    cr.realized.assign(static_cast<size_t>(n_legs) * steps_per_cycle, 0);
    cr.sensed.assign(static_cast<size_t>(n_legs) * steps_per_cycle, 0);
    cr.thrust.assign(static_cast<size_t>(n_legs) * steps_per_cycle, 0.0);
    cr.budgets.assign(static_cast<size_t>(n_legs), SlipBudget{});

    const double x_start = state.pose.x;
    const std::vector<double> d1_start = state.slip_d1;
    const std::vector<double> d2_start = state.slip_d2;

    for (int k = 0; k < steps_per_cycle; ++k) {
      const Posture posture = posture_at(morph, current, state.phase);
      state = step(state, morph, current, terrain, cfg, dphase, rng, retry);
      for (int leg = 0; leg < n_legs; ++leg) {
        const size_t idx = static_cast<size_t>(leg) * steps_per_cycle + k;
        cr.intended[idx] = posture.intended_stance[static_cast<size_t>(leg)];
        cr.realized[idx] = state.realized_stance[static_cast<size_t>(leg)];
        cr.sensed[idx] = state.realized_stance[static_cast<size_t>(leg)];
        cr.thrust[idx] = state.last_thrust[static_cast<size_t>(leg)];
      }
      record.step_x.push_back(state.pose.x);
    }

    cr.stride_cm = state.pose.x - x_start;
    cr.stride_bl = cr.stride_cm / record.body_length;
    for (int leg = 0; leg < n_legs; ++leg) {
      cr.budgets[static_cast<size_t>(leg)].d1 =
          state.slip_d1[static_cast<size_t>(leg)] - d1_start[static_cast<size_t>(leg)];
      cr.budgets[static_cast<size_t>(leg)].d2 =
          state.slip_d2[static_cast<size_t>(leg)] - d2_start[static_cast<size_t>(leg)];
    }

    cr.duty = measure_duty(SensorFrame{n_legs, steps_per_cycle, cr.intended, cr.realized});
    record.cycles.push_back(std::move(cr));

    // The controller reads the sensors over the last two periods; the
    // wider window keeps the once-per-period update from ringing.
    SensorFrame frame;
    frame.n_legs = n_legs;
    const size_t window = record.cycles.size() >= 2 ? 2 : 1;
    frame.steps = static_cast<int>(window) * steps_per_cycle;
    for (size_t leg = 0; leg < static_cast<size_t>(n_legs); ++leg) {
      for (size_t c = record.cycles.size() - window; c < record.cycles.size(); ++c) {
        const auto& rc = record.cycles[c];
        frame.intended.insert(frame.intended.end(),
                              rc.intended.begin() + leg * steps_per_cycle,
                              rc.intended.begin() + (leg + 1) * steps_per_cycle);
        frame.realized.insert(frame.realized.end(),
                              rc.sensed.begin() + leg * steps_per_cycle,
                              rc.sensed.begin() + (leg + 1) * steps_per_cycle);
      }
    }

    const ControllerDecision decision = controller.decide(frame, current, morph);
    current.vertical_amplitude = decision.vertical_amplitude;
    current.body_amplitude = decision.body_amplitude;
    current.shoulder_amplitude = decision.shoulder_amplitude;
    current.validate();
  }
  return record;
}

std::optional<double> time_to_distance(const TrialRecord& record, double distance_cm) {
  if (record.step_x.size() < 2) return std::nullopt;
  const double x0 = record.step_x.front();
  for (size_t k = 1; k < record.step_x.size(); ++k) {
    const double prev = record.step_x[k - 1] - x0;
    const double cur = record.step_x[k] - x0;
    if (cur >= distance_cm) {
      const double frac = cur > prev ? (distance_cm - prev) / (cur - prev) : 1.0;
      return (static_cast<double>(k - 1) + frac) / record.steps_per_cycle;
    }
  }
  return std::nullopt;
}

double VelocityCdf::cdf_at(double q) const {
  const auto it = std::upper_bound(normalized.begin(), normalized.end(), q);
  return static_cast<double>(it - normalized.begin()) / static_cast<double>(sample_count);
}

double VelocityCdf::mean() const {
  return std::accumulate(normalized.begin(), normalized.end(), 0.0) / sample_count;
}

double VelocityCdf::variance() const {
  const double m = mean();
  double v = 0.0;
  for (double x : normalized) v += (x - m) * (x - m);
  return v / sample_count;
}

VelocityCdf velocity_cdf(const std::vector<double>& samples, double v_open) {
  if (samples.size() < 2) throw std::invalid_argument("velocity_cdf: needs >= 2 samples");
  if (!(v_open > 0.0)) throw std::invalid_argument("velocity_cdf: v_open must be > 0");
  VelocityCdf cdf;
  cdf.normalized.reserve(samples.size());
  for (double s : samples) cdf.normalized.push_back(s / v_open);
  std::sort(cdf.normalized.begin(), cdf.normalized.end());
  cdf.sample_count = static_cast<int>(samples.size());
  return cdf;
}

ThrustProfile thrust_profile(const TrialRecord& record, int cycle) {
  const CycleRecord& cr = record.cycles.at(static_cast<size_t>(cycle));
  return {record.n_legs, record.steps_per_cycle, record.dphase, &cr.thrust, &cr.realized};
}

double thrust_variance(const ThrustProfile& profile) {
  double total = 0.0;
  int legs_counted = 0;
  for (int leg = 0; leg < profile.n_legs; ++leg) {
    double sum = 0.0, sum2 = 0.0;
    int n = 0;
    for (int k = 0; k < profile.steps; ++k) {
      const size_t idx = static_cast<size_t>(leg) * profile.steps + k;
      if (!(*profile.realized)[idx]) continue;
      const double f = (*profile.thrust)[idx];
      sum += f;
      sum2 += f * f;
      ++n;
    }
    if (n == 0) continue;
    const double mean = sum / n;
    total += sum2 / n - mean * mean;
    ++legs_counted;
  }
  if (legs_counted == 0)
    throw std::invalid_argument("thrust_variance: no realized contact in profile");
  return total / legs_counted;
}

double thrust_variance(const TrialRecord& record) {
  double total = 0.0;
  int counted = 0;
  for (size_t c = 0; c < record.cycles.size(); ++c) {
    try {
      total += thrust_variance(thrust_profile(record, static_cast<int>(c)));
      ++counted;
    } catch (const std::invalid_argument&) {
    }
  }
  if (counted == 0) throw std::invalid_argument("thrust_variance: no realized contact");
  return total / counted;
}

double measured_duty(const TrialRecord& record) {
  double sum = 0.0;
  size_t n = 0;
  for (const CycleRecord& cr : record.cycles) {
    for (uint8_t b : cr.realized) sum += b ? 1.0 : 0.0;
    n += cr.realized.size();
  }
  return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

double contact_loss_fraction(const TrialRecord& record) {
  double intended = 0.0, lost = 0.0;
  for (const CycleRecord& cr : record.cycles) {
    for (size_t i = 0; i < cr.intended.size(); ++i) {
      if (!cr.intended[i]) continue;
      intended += 1.0;
      if (!cr.realized[i]) lost += 1.0;
    }
  }
  return intended > 0.0 ? lost / intended : 0.0;
}

PLossTable calibrate_channel(const RobotMorphology& morph, const GaitProgram& gait,
                             const std::vector<std::vector<Stepfield>>& ensembles,
                             const ContactModeConfig& geometric_cfg, int n_cycles,
                             int steps_per_cycle, uint64_t seed) {
  if (ensembles.empty()) throw std::invalid_argument("calibrate_channel: no ensembles");
  struct Level {
    double rg, loss;
  };
  std::vector<Level> levels;
  const auto open_loop = make_open_loop();
  uint64_t trial_seed = seed;
  for (const auto& fields : ensembles) {
    if (fields.size() < 10)
      throw std::invalid_argument("calibrate_channel: needs >= 10 seeds per rugosity level");
    double rg_sum = 0.0, intended = 0.0, lost = 0.0;
    for (const Stepfield& field : fields) {
      rg_sum += rugosity(field);
      const Pose2 start{0.0, field.width_y() / 2.0, 0.0, 0.0};
      const TrialRecord rec = run_trial(morph, gait, field, *open_loop, n_cycles,
                                        steps_per_cycle, trial_seed++, geometric_cfg, start);
      for (const CycleRecord& cr : rec.cycles) {
        for (size_t i = 0; i < cr.intended.size(); ++i) {
          if (!cr.intended[i]) continue;
          intended += 1.0;
          if (!cr.realized[i]) lost += 1.0;
        }
      }
    }
    levels.push_back({rg_sum / fields.size(), intended > 0.0 ? lost / intended : 0.0});
  }
  std::sort(levels.begin(), levels.end(), [](const Level& a, const Level& b) {
    return a.rg < b.rg;
  });
  PLossTable table;
  double running = 0.0;
  for (const Level& lv : levels) {
    running = std::max(running, lv.loss);  // monotone non-decreasing fit
    table.rugosity.push_back(lv.rg);
    table.p_loss.push_back(running);
  }
  return table;
}

nlohmann::json TrialRecord::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["steps_per_cycle"] = steps_per_cycle;
  j["n_legs"] = n_legs;
  j["body_length"] = body_length;
  j["dphase"] = dphase;
  j["step_x"] = step_x;
  j["cycles"] = nlohmann::json::array();
  for (const CycleRecord& cr : cycles) {
    nlohmann::json jc;
    jc["stride_cm"] = cr.stride_cm;
    jc["stride_bl"] = cr.stride_bl;
    jc["duty"] = cr.duty;
    jc["vertical_amplitude"] = cr.vertical_amplitude;
    jc["body_amplitude"] = cr.body_amplitude;
    jc["shoulder_amplitude"] = cr.shoulder_amplitude;
    jc["intended"] = cr.intended;
    jc["realized"] = cr.realized;
    jc["sensed"] = cr.sensed;
    jc["thrust"] = cr.thrust;
    nlohmann::json budgets = nlohmann::json::array();
    for (const SlipBudget& b : cr.budgets) budgets.push_back({{"d1", b.d1}, {"d2", b.d2}});
    jc["slip_budgets"] = budgets;
    j["cycles"].push_back(std::move(jc));
  }
  return j;
}

TrialRecord trial_record_from_json(const nlohmann::json& j) {
  TrialRecord r;
  r.seed = j.at("seed").get<uint64_t>();
  r.steps_per_cycle = j.at("steps_per_cycle").get<int>();
  r.n_legs = j.at("n_legs").get<int>();
  r.body_length = j.at("body_length").get<double>();
  r.dphase = j.at("dphase").get<double>();
  r.step_x = j.at("step_x").get<std::vector<double>>();
  for (const auto& jc : j.at("cycles")) {
    CycleRecord cr;
    cr.stride_cm = jc.at("stride_cm").get<double>();
    cr.stride_bl = jc.at("stride_bl").get<double>();
    cr.duty = jc.at("duty").get<double>();
    cr.vertical_amplitude = jc.at("vertical_amplitude").get<double>();
    cr.body_amplitude = jc.at("body_amplitude").get<double>();
    cr.shoulder_amplitude = jc.at("shoulder_amplitude").get<double>();
    cr.intended = jc.at("intended").get<std::vector<uint8_t>>();
    cr.realized = jc.at("realized").get<std::vector<uint8_t>>();
    cr.sensed = jc.at("sensed").get<std::vector<uint8_t>>();
    cr.thrust = jc.at("thrust").get<std::vector<double>>();
    for (const auto& jb : jc.at("slip_budgets"))
      cr.budgets.push_back({jb.at("d1").get<double>(), jb.at("d2").get<double>()});
    r.cycles.push_back(std::move(cr));
  }
  return r;
}

}  // namespace merloco
