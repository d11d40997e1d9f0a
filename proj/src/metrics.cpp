#include "fbgrpo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fbgrpo::metrics {

namespace {

constexpr double kTol = 1e-9;
constexpr double kTtcStep = 0.25;
constexpr double kStoppedSpeed = 0.3;

bool is_binary(double v) { return v == 0.0 || v == 1.0; }
bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

std::array<Vec2, kHorizonSteps> step_velocities(const Scene& scene, const Trajectory& traj) {
  std::array<Vec2, kHorizonSteps> v{};
  Vec2 prev = scene.ego.position;
  for (int k = 0; k < kHorizonSteps; ++k) {
    v[k] = (traj.waypoints[k] - prev) / kStepSeconds;
    prev = traj.waypoints[k];
  }
  return v;
}

std::array<double, kHorizonSteps> box_headings(const Scene& scene, const std::array<Vec2, kHorizonSteps>& v) {
  std::array<double, kHorizonSteps> h{};
  double last = scene.ego.heading;
  for (int k = 0; k < kHorizonSteps; ++k) {
    if (norm(v[k]) > 1e-3) last = heading_of(v[k]);
    h[k] = last;
  }
  return h;
}

// Accelerations and jerks over a velocity sequence, checked against the limits.
bool derivatives_within(std::span<const Vec2> velocities, const MetricConfig& cfg, std::optional<Vec2> prior_accel) {
  std::optional<Vec2> prev_a = prior_accel;
  for (std::size_t k = 1; k < velocities.size(); ++k) {
    const Vec2 a = (velocities[k] - velocities[k - 1]) / kStepSeconds;
    if (norm(a) > cfg.comfort_accel_max + kTol) return false;
    if (prev_a) {
      const Vec2 j = (a - *prev_a) / kStepSeconds;
      if (norm(j) > cfg.comfort_jerk_max + kTol) return false;
    }
    prev_a = a;
  }
  return true;
}

}  // namespace

void MetricConfig::validate() const {
  if (!(ttc_threshold > 0 && comfort_accel_max > 0 && comfort_jerk_max > 0 && lk_max_offset > 0 &&
        ec_max_delta > 0)) {
    throw std::invalid_argument("metric config values must be positive");
  }
}

bool SubScores::valid() const {
  return is_binary(nc) && is_binary(dac) && is_binary(ttc) && is_binary(comfort) && in_unit(ep);
}

bool ExtendedSubScores::valid() const {
  return is_binary(nc) && is_binary(dac) && is_binary(ddc) && is_binary(tlc) && in_unit(ep) && in_unit(ttc) &&
         in_unit(lk) && in_unit(hc) && in_unit(ec);
}

bool is_comfortable(const Scene& scene, const Trajectory& traj, const MetricConfig& cfg) {
  const auto v = step_velocities(scene, traj);
  return derivatives_within(v, cfg, std::nullopt);
}

bool is_history_comfortable(const Scene& scene, const Trajectory& traj, const MetricConfig& cfg) {
  const auto plan_v = step_velocities(scene, traj);
  const Vec2 v_hist_prev = (scene.history[2] - scene.history[1]) / kStepSeconds;
  const Vec2 v_hist = (scene.ego.position - scene.history[2]) / kStepSeconds;
  std::array<Vec2, kHorizonSteps + 1> v{};
  v[0] = v_hist;
  std::copy(plan_v.begin(), plan_v.end(), v.begin() + 1);
  const Vec2 a_hist = (v_hist - v_hist_prev) / kStepSeconds;
  return derivatives_within(v, cfg, a_hist);
}

PlanChecks check_plan(const Scene& scene, const Trajectory& traj, const MetricConfig& cfg) {
  validate_trajectory(traj);
  PlanChecks out;
  const auto v = step_velocities(scene, traj);
  const auto headings = box_headings(scene, v);

  for (int k = 0; k < kHorizonSteps && out.collision_free; ++k) {
    const double t = kStepSeconds * (k + 1);
    const OrientedBox ego{traj.waypoints[k], kEgoHalfExtent, headings[k]};
    for (std::size_t i = 0; i < scene.obstacles.size(); ++i) {
      if (overlaps(ego, scene.obstacles[i].box_at(t))) {
        out.collision_free = false;
        out.collision_step = k;
        out.collision_obstacle = static_cast<int>(i);
        break;
      }
    }
  }

  for (int k = 0; k < kHorizonSteps; ++k) {
    if (std::abs(scene.corridor.project(traj.waypoints[k]).lateral) > scene.corridor.half_width + kTol) {
      out.in_corridor = false;
      out.corridor_step = k;
      break;
    }
  }

  for (int k = 0; k < kHorizonSteps && out.ttc_ok; ++k) {
    const double t = kStepSeconds * (k + 1);
    const bool moving = norm(v[k]) >= kStoppedSpeed;
    for (double tau = 0.0; tau <= cfg.ttc_threshold + kTol && out.ttc_ok; tau += kTtcStep) {
      if (tau > 0.0 && !moving) break;
      const double horizon = std::min(tau, cfg.ttc_threshold);
      const OrientedBox ego{traj.waypoints[k] + v[k] * horizon, kEgoHalfExtent, headings[k]};
      for (const Obstacle& o : scene.obstacles) {
        if (overlaps(ego, o.box_at(t + horizon))) {
          out.ttc_ok = false;
          out.ttc_step = k;
          break;
        }
      }
    }
  }

  out.comfortable = derivatives_within(v, cfg, std::nullopt);
  const double start = scene.corridor.project(scene.ego.position).arc_length;
  out.progress = scene.corridor.project(traj.waypoints.back()).arc_length - start;
  return out;
}

double ego_progress(double progress, double expert_progress) {
  if (expert_progress < 0.5) return 1.0;
  return std::clamp(progress / expert_progress, 0.0, 1.0);
}

SubScores sub_scores(const Scene& scene, const Trajectory& traj, const MetricConfig& cfg, double expert_progress) {
  const PlanChecks c = check_plan(scene, traj, cfg);
  SubScores s;
  s.nc = c.collision_free ? 1.0 : 0.0;
  s.dac = c.in_corridor ? 1.0 : 0.0;
  s.ttc = c.ttc_ok ? 1.0 : 0.0;
  s.comfort = c.comfortable ? 1.0 : 0.0;
  s.ep = ego_progress(c.progress, expert_progress);
  return s;
}

SubScores sub_scores(const Scene& scene, const Trajectory& traj, const MetricConfig& cfg) {
  if (!scene.reference_progress) throw std::invalid_argument("scene has no reference progress; run the expert first");
  return sub_scores(scene, traj, cfg, *scene.reference_progress);
}

double pdms(const SubScores& s) {
  return s.nc * s.dac * ((5.0 * s.ep + 5.0 * s.ttc + 2.0 * s.comfort) / 12.0);
}

double epdms(const ExtendedSubScores& s) {
  return s.nc * s.dac * s.ddc * s.tlc * ((5.0 * s.ep + 2.0 * s.lk + 2.0 * s.hc + 5.0 * s.ttc + 2.0 * s.ec) / 16.0);
}

bool respects_stop_line(const Scene& scene, const Trajectory& traj) {
  const Corridor& cor = scene.corridor;
  if (!cor.stop_line || !cor.stop_line->active) return true;
  if (cor.project(scene.ego.position).arc_length > cor.stop_line->arc_position) return true;
  for (const Vec2& p : traj.waypoints) {
    if (cor.project(p).arc_length > cor.stop_line->arc_position) return false;
  }
  return true;
}

ExtendedSubScores extended_sub_scores(const Scene& scene, const Trajectory& traj,
                                      const std::optional<Trajectory>& prev_traj, const MetricConfig& cfg) {
  const SubScores base = sub_scores(scene, traj, cfg);
  ExtendedSubScores e;
  e.nc = base.nc;
  e.dac = base.dac;
  e.ttc = base.ttc;
  e.ep = base.ep;

  const Corridor& cor = scene.corridor;
  bool ddc = true;
  Vec2 prev = scene.ego.position;
  for (const Vec2& p : traj.waypoints) {
    const Vec2 d = p - prev;
    // A stationary step has no direction to violate.
    if (norm(d) > 1e-6) {
      const Vec2 tangent = cor.project((p + prev) * 0.5).tangent;
      if (dot(d, tangent) <= 0.0) ddc = false;
    }
    prev = p;
  }
  e.ddc = ddc ? 1.0 : 0.0;

  e.tlc = respects_stop_line(scene, traj) ? 1.0 : 0.0;

  double max_offset = 0.0;
  for (const Vec2& p : traj.waypoints) max_offset = std::max(max_offset, std::abs(cor.project(p).lateral));
  e.lk = max_offset <= cfg.lk_max_offset + kTol ? 1.0 : 0.0;

  e.hc = is_history_comfortable(scene, traj, cfg) ? 1.0 : 0.0;

  e.ec = 1.0;
  if (prev_traj) {
    for (int k = 0; k + 1 < kHorizonSteps; ++k) {
      if (norm(traj.waypoints[k] - prev_traj->waypoints[k + 1]) > cfg.ec_max_delta + kTol) e.ec = 0.0;
    }
  }
  return e;
}

PlanningAccuracy planning_accuracy(std::span<const MetaAction> pred, std::span<const MetaAction> gt) {
  if (pred.empty() || pred.size() != gt.size()) {
    throw std::invalid_argument("planning_accuracy needs equal, non-empty prediction and ground-truth lists");
  }
  std::size_t speed = 0, path = 0, joint = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool s = pred[i].longitudinal == gt[i].longitudinal;
    const bool p = pred[i].lateral == gt[i].lateral;
    speed += s;
    path += p;
    joint += s && p;
  }
  const double n = static_cast<double>(pred.size());
  return {static_cast<double>(speed) / n, static_cast<double>(path) / n, static_cast<double>(joint) / n};
}

}  // namespace fbgrpo::metrics
