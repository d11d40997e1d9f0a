#include "fbgrpo/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <tuple>

#include "fbgrpo/parallel.hpp"
#include "fbgrpo/serialization.hpp"

namespace fbgrpo::scenario {

namespace {

constexpr double kGrid = 0.5;           // meters per displacement unit
constexpr int kMaxDxUnits = 24;         // 12 m per step
constexpr int kMaxDyUnits = 6;          // 3 m per step
constexpr std::size_t kBeamWidth = 240;
constexpr std::array<double, 5> kOffsets{0.0, 1.5, -1.5, 3.0, -3.0};
constexpr double kGoalAhead = 50.0;

struct GridState {
  int qx = 0, qy = 0;    // position
  int dx = 0, dy = 0;    // last displacement
  int ax = 0, ay = 0;    // last change of displacement
  double cost = 0.0;
  int parent = -1;
  std::uint64_t key = 0;

  void pack() {
    key = (static_cast<std::uint64_t>(qx + 512) << 40) | (static_cast<std::uint64_t>(qy + 512) << 28) |
          (static_cast<std::uint64_t>(dx + 64) << 16) | (static_cast<std::uint64_t>(dy + 64) << 8) |
          (static_cast<std::uint64_t>(ax + 2) << 4) | static_cast<std::uint64_t>(ay + 2);
  }
};

bool cheaper(const GridState& a, const GridState& b) {
  if (a.cost != b.cost) return a.cost < b.cost;
  return a.key < b.key;
}

// Finds the grid path closest (sum of squared distances) to the desired points
// under per-step limits on displacement changes. The grid limits keep every
// result within the comfort thresholds: |accel| <= 2*sqrt(2), |jerk| <= 4.
Trajectory track_on_grid(const std::array<Vec2, kHorizonSteps>& desired_local, int initial_speed_units,
                         const Pose2& pose) {
  static constexpr std::array<std::pair<int, int>, 5> kJerks{{{0, 0}, {1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
  std::vector<std::vector<GridState>> layers;
  GridState start{0, 0, initial_speed_units, 0, 0, 0, 0.0, -1, 0};
  start.pack();
  layers.push_back({start});

  for (int k = 0; k < kHorizonSteps; ++k) {
    const Vec2 target = desired_local[k] / kGrid;
    const auto& prev = layers.back();
    std::vector<GridState> next;
    next.reserve(prev.size() * kJerks.size());
    for (std::size_t i = 0; i < prev.size(); ++i) {
      const GridState& s = prev[i];
      for (const auto& [jx, jy] : kJerks) {
        GridState n;
        n.ax = s.ax + jx;
        n.ay = s.ay + jy;
        if (std::abs(n.ax) > 1 || std::abs(n.ay) > 1) continue;
        n.dx = s.dx + n.ax;
        n.dy = s.dy + n.ay;
        if (n.dx < 0 || n.dx > kMaxDxUnits || std::abs(n.dy) > kMaxDyUnits) continue;
        n.qx = s.qx + n.dx;
        n.qy = s.qy + n.dy;
        const double ex = n.qx - target.x, ey = n.qy - target.y;
        n.cost = s.cost + ex * ex + ey * ey;
        n.parent = static_cast<int>(i);
        n.pack();
        next.push_back(n);
      }
    }
    std::sort(next.begin(), next.end(), [](const GridState& a, const GridState& b) {
      if (a.key != b.key) return a.key < b.key;
      return a.cost < b.cost;
    });
    next.erase(std::unique(next.begin(), next.end(), [](const GridState& a, const GridState& b) { return a.key == b.key; }),
               next.end());
    if (next.size() > kBeamWidth) {
      std::nth_element(next.begin(), next.begin() + kBeamWidth, next.end(), cheaper);
      next.resize(kBeamWidth);
    }
    std::sort(next.begin(), next.end(), cheaper);
    layers.push_back(std::move(next));
  }

  Trajectory out;
  int idx = 0;
  for (int k = kHorizonSteps; k >= 1; --k) {
    const GridState& s = layers[k][idx];
    out.waypoints[k - 1] = pose.apply(Vec2{s.qx * kGrid, s.qy * kGrid});
    idx = s.parent;
  }
  return out;
}

double smoothstep(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * (3.0 - 2.0 * u);
}

Vec2 left_normal(Vec2 t) { return {-t.y, t.x}; }

// Desired positions for holding a lateral offset while ramping toward a target speed.
std::array<Vec2, kHorizonSteps> desired_points(const Scene& scene, double target_speed, double offset) {
  const Corridor& cor = scene.corridor;
  const CorridorPoint start = cor.project(scene.ego.position);
  std::array<Vec2, kHorizonSteps> pts{};
  double v = scene.ego.speed;
  double s = start.arc_length;
  for (int k = 0; k < kHorizonSteps; ++k) {
    v += std::clamp(target_speed - v, -1.0, 1.0);
    s += v * kStepSeconds;
    const double lateral = start.lateral + (offset - start.lateral) * smoothstep((k + 1) / 4.0);
    pts[k] = cor.point_at(s) + left_normal(cor.tangent_at(s)) * lateral;
  }
  return pts;
}

struct Candidate {
  Trajectory traj;
  double offset = 0.0;
  metrics::PlanChecks checks;
  bool safe = false;
};

double signed_angle(Vec2 from, Vec2 to) { return std::atan2(cross(from, to), dot(from, to)); }

Obstacle vehicle(Vec2 position, Vec2 velocity, double heading) {
  Obstacle o;
  o.kind = ObstacleKind::vehicle;
  o.position = position;
  o.velocity = velocity;
  o.half_extent = {2.25, 1.0};
  o.heading = heading;
  return o;
}

// Stopping distance when shedding 1 m/s per half-second step.
double stopping_distance(double speed) {
  double d = 0.0;
  for (double v = speed - 1.0; v > 0.0; v -= 1.0) d += v * kStepSeconds;
  return d;
}

Scene base_scene(Corridor corridor, double speed, std::uint64_t seed) {
  Scene s;
  s.ego.position = {0.0, 0.0};
  s.ego.heading = 0.0;
  s.ego.speed = speed;
  s.ego.acceleration = 0.0;
  s.corridor = std::move(corridor);
  s.history = constant_speed_history(speed);
  s.seed = seed;
  const double s0 = s.corridor.project(s.ego.position).arc_length;
  s.goal = s.corridor.point_at(s0 + kGoalAhead);
  return s;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

FamilyMix FamilyMix::uniform() {
  FamilyMix m;
  m.weights.fill(1.0 / kFamilyCount);
  return m;
}

FamilyMix FamilyMix::only(Family f) {
  FamilyMix m;
  m.weights[static_cast<std::size_t>(f)] = 1.0;
  return m;
}

void FamilyMix::validate() const {
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("family weights must be non-negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("family weights must sum to 1");
}

std::array<std::size_t, kFamilyCount> FamilyMix::apportion(std::size_t count) const {
  validate();
  std::array<std::size_t, kFamilyCount> out{};
  std::array<double, kFamilyCount> remainder{};
  std::size_t assigned = 0;
  for (int f = 0; f < kFamilyCount; ++f) {
    const double exact = weights[f] * static_cast<double>(count);
    out[f] = static_cast<std::size_t>(std::floor(exact));
    remainder[f] = exact - static_cast<double>(out[f]);
    assigned += out[f];
  }
  while (assigned < count) {
    int best = 0;
    for (int f = 1; f < kFamilyCount; ++f) {
      if (remainder[f] > remainder[best] + 1e-12) best = f;
    }
    ++out[best];
    remainder[best] = -1.0;
    ++assigned;
  }
  return out;
}

Corridor straight_corridor(double half_width, double speed_limit, std::optional<StopLine> stop_line) {
  std::vector<Vec2> pts;
  for (int x = -20; x <= 100; ++x) pts.push_back({static_cast<double>(x), 0.0});
  return make_corridor(std::move(pts), half_width, speed_limit, stop_line);
}

Corridor turn_corridor(bool left, double straight_length, double radius, double half_width, double speed_limit) {
  const double side = left ? 1.0 : -1.0;
  std::vector<Vec2> pts;
  for (double x = -20.0; x < straight_length; x += 1.0) pts.push_back({x, 0.0});
  const int arc_steps = static_cast<int>(std::ceil(radius * std::numbers::pi / 2.0));
  for (int i = 0; i <= arc_steps; ++i) {
    const double th = (std::numbers::pi / 2.0) * i / arc_steps;
    pts.push_back({straight_length + radius * std::sin(th), side * (radius - radius * std::cos(th))});
  }
  const Vec2 end = pts.back();
  for (int i = 1; i <= 60; ++i) pts.push_back({end.x, end.y + side * i});
  return make_corridor(std::move(pts), half_width, speed_limit);
}

std::array<Vec2, kHistorySteps> constant_speed_history(double speed) {
  return {Vec2{-1.5 * speed, 0.0}, Vec2{-1.0 * speed, 0.0}, Vec2{-0.5 * speed, 0.0}};
}

ExpertPlan expert_plan(const Scene& scene, const metrics::MetricConfig& cfg) {
  const Pose2 pose = scene.ego_pose();
  const int speed_units = std::clamp(static_cast<int>(std::lround(scene.ego.speed)), 0, kMaxDxUnits);
  const int max_speed = static_cast<int>(std::floor(scene.corridor.speed_limit + 1e-9));

  std::vector<Candidate> candidates;
  for (int v = 0; v <= max_speed; ++v) {
    for (double off : kOffsets) {
      if (std::abs(off) > scene.corridor.half_width - 0.25) continue;
      auto desired = desired_points(scene, v, off);
      for (Vec2& p : desired) p = pose.to_local(p);
      Candidate c;
      c.offset = off;
      c.traj = track_on_grid(desired, speed_units, pose);
      c.checks = metrics::check_plan(scene, c.traj, cfg);
      c.safe = c.checks.collision_free && c.checks.in_corridor && metrics::respects_stop_line(scene, c.traj);
      candidates.push_back(std::move(c));
    }
  }

  double best_progress = 0.0;
  bool any_safe = false;
  for (const Candidate& c : candidates) {
    if (!c.safe) continue;
    best_progress = any_safe ? std::max(best_progress, c.checks.progress) : c.checks.progress;
    any_safe = true;
  }

  ExpertPlan out;
  if (!any_safe) {
    out.degenerate = true;
    out.trajectory.waypoints.fill(scene.ego.position);
    out.scores = metrics::sub_scores(scene, out.trajectory, cfg, 0.0);
    out.pdms = metrics::pdms(out.scores);
    out.progress = 0.0;
    return out;
  }

  int chosen = -1;
  std::tuple<double, double, double> best_key;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Candidate& c = candidates[i];
    if (!c.safe) continue;
    const double p = metrics::pdms(metrics::sub_scores(scene, c.traj, cfg, best_progress));
    // Progress is compared at grid resolution so tiny differences do not override a smaller offset.
    const std::tuple<double, double, double> key{p, std::floor(c.checks.progress / kGrid), -std::abs(c.offset)};
    if (chosen < 0 || key > best_key) {
      best_key = key;
      chosen = static_cast<int>(i);
    }
  }
  const Candidate& best = candidates[chosen];
  out.trajectory = best.traj;
  out.progress = best.checks.progress;
  out.scores = metrics::sub_scores(scene, best.traj, cfg, out.progress);
  out.pdms = metrics::pdms(out.scores);
  return out;
}

Trajectory keep_speed_plan(const Scene& scene) {
  const Corridor& cor = scene.corridor;
  const double s0 = cor.project(scene.ego.position).arc_length;
  Trajectory t;
  for (int k = 0; k < kHorizonSteps; ++k) t.waypoints[k] = cor.point_at(s0 + scene.ego.speed * kStepSeconds * (k + 1));
  return t;
}

MetaAction label_meta_action(const Trajectory& traj, const Scene& scene) {
  MetaAction m;

  std::array<double, kHorizonSteps + 1> speed{};
  speed[0] = scene.ego.speed;
  Vec2 prev = scene.ego.position;
  for (int k = 0; k < kHorizonSteps; ++k) {
    speed[k + 1] = norm(traj.waypoints[k] - prev) / kStepSeconds;
    prev = traj.waypoints[k];
  }
  std::array<double, kHorizonSteps> accel{};
  for (int k = 0; k < kHorizonSteps; ++k) accel[k] = (speed[k + 1] - speed[k]) / kStepSeconds;
  double dominant = 0.0;
  for (int w = 0; w + kAccelWindow <= kHorizonSteps; ++w) {
    double mean = 0.0;
    for (int i = 0; i < kAccelWindow; ++i) mean += accel[w + i];
    mean /= kAccelWindow;
    if (std::abs(mean) > std::abs(dominant)) dominant = mean;
  }
  if (speed[kHorizonSteps] < kStopSpeed) {
    m.longitudinal = Longitudinal::Stop;
  } else if (dominant > kAccelThreshold) {
    m.longitudinal = Longitudinal::Accelerate;
  } else if (dominant < -kAccelThreshold) {
    m.longitudinal = Longitudinal::Decelerate;
  } else {
    m.longitudinal = Longitudinal::MaintainSpeed;
  }

  const Vec2 ego_dir = unit_from_heading(scene.ego.heading);
  Vec2 final_dir = ego_dir;
  for (int k = kHorizonSteps - 1; k >= 0; --k) {
    const Vec2 from = k == 0 ? scene.ego.position : traj.waypoints[k - 1];
    const Vec2 d = traj.waypoints[k] - from;
    if (norm(d) > 0.05) {
      final_dir = d;
      break;
    }
  }
  const double heading_change = signed_angle(ego_dir, final_dir);
  const CorridorPoint start = scene.corridor.project(scene.ego.position);
  const CorridorPoint end = scene.corridor.project(traj.endpoint());
  const double branch = signed_angle(start.tangent, end.tangent);
  const double turn = kTurnHeadingDeg * std::numbers::pi / 180.0;
  const double offset_change = end.lateral - start.lateral;

  if (std::abs(heading_change) > turn && std::abs(branch) > turn && heading_change * branch > 0.0) {
    m.lateral = heading_change > 0.0 ? Lateral::TurnLeft : Lateral::TurnRight;
  } else if (std::abs(offset_change) > kLaneChangeOffset) {
    m.lateral = offset_change > 0.0 ? Lateral::ChangeLeft : Lateral::ChangeRight;
  } else {
    m.lateral = Lateral::KeepLane;
  }
  return m;
}

Scene sample_scene(Family family, Rng& rng, std::uint64_t seed) {
  switch (family) {
    case Family::straight: {
      const double limit = static_cast<double>(rng.uniform_int(6, 12));
      const double speed = rng.bernoulli(0.3) ? std::max(2.0, limit - static_cast<double>(rng.uniform_int(2, 4))) : limit;
      const double hw = rng.uniform(2.0, 3.5);
      Scene s = base_scene(straight_corridor(hw, limit), speed, seed);
      if (rng.bernoulli(0.5)) {
        const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
        Obstacle parked;
        parked.kind = ObstacleKind::static_object;
        parked.position = {rng.uniform(10.0, 40.0), side * (hw + rng.uniform(1.5, 2.5))};
        parked.half_extent = {2.25, 1.0};
        s.obstacles.push_back(parked);
      }
      return s;
    }
    case Family::lead_vehicle: {
      const double limit = static_cast<double>(rng.uniform_int(8, 12));
      const double speed = limit - static_cast<double>(rng.uniform_int(0, 2));
      const double hw = rng.uniform(2.0, 3.5);
      Scene s = base_scene(straight_corridor(hw, limit), speed, seed);
      const double lead_speed = static_cast<double>(rng.uniform_int(0, static_cast<std::int64_t>(speed) - 2));
      s.obstacles.push_back(vehicle({rng.uniform(12.0, 35.0), 0.0}, {lead_speed, 0.0}, 0.0));
      return s;
    }
    case Family::cut_in: {
      const double speed = static_cast<double>(rng.uniform_int(6, 10));
      const double limit = std::min(12.0, speed + static_cast<double>(rng.uniform_int(0, 2)));
      const double hw = rng.uniform(2.0, 3.0);
      Scene s = base_scene(straight_corridor(hw, limit), speed, seed);
      const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
      const Vec2 pos{rng.uniform(4.0, 14.0), side * rng.uniform(3.0, 3.8)};
      const Vec2 vel{speed - rng.uniform(1.5, 4.0), -side * rng.uniform(0.8, 1.5)};
      s.obstacles.push_back(vehicle(pos, vel, heading_of(vel)));
      return s;
    }
    case Family::crossing_pedestrian: {
      const double limit = static_cast<double>(rng.uniform_int(6, 10));
      const double speed = limit - static_cast<double>(rng.uniform_int(0, 2));
      const double hw = rng.uniform(2.0, 3.5);
      Scene s = base_scene(straight_corridor(hw, limit), speed, seed);
      const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
      Obstacle ped;
      ped.kind = ObstacleKind::pedestrian;
      ped.position = {rng.uniform(12.0, 30.0), side * (hw + rng.uniform(1.0, 3.0))};
      ped.velocity = {0.0, -side * rng.uniform(1.0, 2.0)};
      ped.half_extent = {0.35, 0.35};
      ped.heading = heading_of(ped.velocity);
      s.obstacles.push_back(ped);
      return s;
    }
    case Family::unprotected_turn: {
      const bool left = rng.bernoulli(0.7);
      const double limit = static_cast<double>(rng.uniform_int(4, 5));
      const double speed = limit - static_cast<double>(rng.uniform_int(0, 1));
      const double straight = rng.uniform(4.0, 10.0);
      const double radius = rng.uniform(10.0, 16.0);
      const double hw = rng.uniform(2.5, 3.5);
      Scene s = base_scene(turn_corridor(left, straight, radius, hw, limit), speed, seed);
      s.command = left ? NavCommand::TurnLeft : NavCommand::TurnRight;
      const double exit_arc = 20.0 + straight + radius * std::numbers::pi / 2.0;
      s.goal = s.corridor.point_at(exit_arc + 15.0);
      if (left) {
        const double oncoming = rng.uniform(4.0, 9.0);
        s.obstacles.push_back(
            vehicle({rng.uniform(15.0, 40.0), rng.uniform(3.0, 3.8)}, {-oncoming, 0.0}, std::numbers::pi));
      }
      return s;
    }
    case Family::stop_line: {
      const double speed = static_cast<double>(rng.uniform_int(3, 8));
      const double limit = std::min(12.0, speed + static_cast<double>(rng.uniform_int(0, 2)));
      const double hw = rng.uniform(2.0, 3.5);
      const double lo = std::max(6.0, stopping_distance(speed) + 1.5);
      StopLine line{20.0 + rng.uniform(lo, std::max(lo, 30.0)), rng.bernoulli(0.75)};
      return base_scene(straight_corridor(hw, limit, line), speed, seed);
    }
  }
  throw std::invalid_argument("unknown family");
}

ScenarioRecord make_record(Scene scene, Family family, std::string scenario_id, const metrics::MetricConfig& cfg) {
  const ExpertPlan plan = expert_plan(scene, cfg);
  if (plan.degenerate) throw CorpusGenerationError("expert found no safe plan for " + scenario_id);
  scene.reference_progress = plan.progress;
  ScenarioRecord r;
  r.gt_meta = label_meta_action(plan.trajectory, scene);
  r.scene = std::move(scene);
  r.gt_trajectory = plan.trajectory;
  r.scenario_id = std::move(scenario_id);
  r.family = family;
  return r;
}

std::vector<ScenarioRecord> generate_corpus(std::size_t count, const FamilyMix& mix, std::uint64_t seed,
                                            const ScenarioConfig& cfg) {
  if (count == 0) throw std::invalid_argument("corpus count must be at least 1");
  cfg.metrics.validate();
  const auto counts = mix.apportion(count);
  std::vector<Family> families;
  for (int f = 0; f < kFamilyCount; ++f) families.insert(families.end(), counts[f], kAllFamilies[f]);
  Rng order_rng(derive_seed(seed, {0x5eed0f}));
  for (std::size_t i = families.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(order_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(families[i - 1], families[j]);
  }

  std::vector<ScenarioRecord> records(count);
  parallel_for(count, [&](std::size_t index) {
    const Family family = families[index];
    std::ostringstream id;
    id << "scn_" << std::setw(5) << std::setfill('0') << index;
    for (std::size_t attempt = 0; attempt < cfg.max_attempts; ++attempt) {
      const std::uint64_t scene_seed = derive_seed(seed, {index, attempt});
      Rng rng(scene_seed);
      Scene scene = sample_scene(family, rng, scene_seed);
      const ExpertPlan plan = expert_plan(scene, cfg.metrics);
      if (plan.degenerate) continue;
      Scene scored = scene;
      scored.reference_progress = plan.progress;
      if (metrics::pdms(metrics::sub_scores(scored, plan.trajectory, cfg.metrics)) < kExpertMinPdms) continue;
      const bool hard = family == Family::cut_in ||
                        (family == Family::unprotected_turn && scene.command == NavCommand::TurnLeft);
      if (hard && metrics::pdms(metrics::sub_scores(scored, keep_speed_plan(scene), cfg.metrics)) >= cfg.hardness_pdms) {
        continue;
      }
      records[index] = make_record(std::move(scene), family, id.str(), cfg.metrics);
      return;
    }
    throw CorpusGenerationError("no acceptable " + std::string(to_string(family)) + " scene for " + id.str() +
                                " after " + std::to_string(cfg.max_attempts) + " attempts");
  });
  return records;
}

void write_corpus(const std::filesystem::path& dir, const std::vector<ScenarioRecord>& records, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["format_version"] = kCorpusFormatVersion;
  manifest["seed"] = seed;
  manifest["corpus_hash"] = corpus_hash(records);
  json entries = json::array();
  for (const ScenarioRecord& r : records) {
    entries.push_back({{"scenario_id", r.scenario_id}, {"family", std::string(to_string(r.family))}});
    write_text(dir / (r.scenario_id + ".json"), json(r).dump(1) + "\n");
  }
  manifest["scenarios"] = std::move(entries);
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<ScenarioRecord> read_corpus(const std::filesystem::path& dir) {
  const json manifest = json::parse(read_text(dir / "manifest.json"));
  const std::string version = manifest.at("format_version").get<std::string>();
  if (version != kCorpusFormatVersion) {
    throw std::runtime_error("corpus format " + version + " is not supported (expected " + kCorpusFormatVersion + ")");
  }
  std::vector<ScenarioRecord> records;
  for (const json& e : manifest.at("scenarios")) {
    const std::string id = e.at("scenario_id").get<std::string>();
    records.push_back(json::parse(read_text(dir / (id + ".json"))).get<ScenarioRecord>());
  }
  return records;
}

std::string corpus_hash(const std::vector<ScenarioRecord>& records) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const ScenarioRecord& r : records) {
    for (unsigned char c : json(r).dump()) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

}  // namespace fbgrpo::scenario
