#include "fbgrpo/serialization.hpp"

namespace fbgrpo {

void to_json(json& j, const Vec2& v) { j = json::array({v.x, v.y}); }
void from_json(const json& j, Vec2& v) {
  v.x = j.at(0).get<double>();
  v.y = j.at(1).get<double>();
}

void to_json(json& j, const EgoState& e) {
  j = json{{"position", e.position}, {"heading", e.heading}, {"speed", e.speed}, {"acceleration", e.acceleration}};
}
void from_json(const json& j, EgoState& e) {
  j.at("position").get_to(e.position);
  j.at("heading").get_to(e.heading);
  j.at("speed").get_to(e.speed);
  j.at("acceleration").get_to(e.acceleration);
}

void to_json(json& j, const Obstacle& o) {
  j = json{{"kind", std::string(to_string(o.kind))},
           {"position", o.position},
           {"velocity", o.velocity},
           {"half_extent", o.half_extent},
           {"heading", o.heading}};
}
void from_json(const json& j, Obstacle& o) {
  o.kind = obstacle_kind_from_string(j.at("kind").get<std::string>());
  j.at("position").get_to(o.position);
  j.at("velocity").get_to(o.velocity);
  j.at("half_extent").get_to(o.half_extent);
  j.at("heading").get_to(o.heading);
}

void to_json(json& j, const Corridor& c) {
  j = json{{"centerline", c.centerline},
           {"half_width", c.half_width},
           {"direction_tangents", c.direction_tangents},
           {"speed_limit", c.speed_limit}};
  if (c.stop_line) {
    j["stop_line"] = json{{"arc_position", c.stop_line->arc_position}, {"active", c.stop_line->active}};
  } else {
    j["stop_line"] = nullptr;
  }
}
void from_json(const json& j, Corridor& c) {
  std::optional<StopLine> stop;
  if (j.contains("stop_line") && !j.at("stop_line").is_null()) {
    stop = StopLine{j.at("stop_line").at("arc_position").get<double>(), j.at("stop_line").at("active").get<bool>()};
  }
  c = make_corridor(j.at("centerline").get<std::vector<Vec2>>(), j.at("half_width").get<double>(),
                    j.at("speed_limit").get<double>(), stop);
}

void to_json(json& j, const Scene& s) {
  j = json{{"ego", s.ego},
           {"obstacles", s.obstacles},
           {"corridor", s.corridor},
           {"goal", s.goal},
           {"command", std::string(to_string(s.command))},
           {"history", s.history},
           {"seed", s.seed}};
  if (s.reference_progress) {
    j["reference_progress"] = *s.reference_progress;
  } else {
    j["reference_progress"] = nullptr;
  }
}
void from_json(const json& j, Scene& s) {
  j.at("ego").get_to(s.ego);
  j.at("obstacles").get_to(s.obstacles);
  j.at("corridor").get_to(s.corridor);
  j.at("goal").get_to(s.goal);
  s.command = command_from_string(j.at("command").get<std::string>());
  j.at("history").get_to(s.history);
  j.at("seed").get_to(s.seed);
  if (j.contains("reference_progress") && !j.at("reference_progress").is_null()) {
    s.reference_progress = j.at("reference_progress").get<double>();
  } else {
    s.reference_progress.reset();
  }
}

void to_json(json& j, const Trajectory& t) { j = json{{"waypoints", t.waypoints}}; }
void from_json(const json& j, Trajectory& t) {
  const auto& w = j.at("waypoints");
  if (w.size() != static_cast<std::size_t>(kHorizonSteps)) throw std::invalid_argument("trajectory must have 8 waypoints");
  w.get_to(t.waypoints);
}

void to_json(json& j, const MetaAction& m) {
  j = json{{"longitudinal", std::string(to_string(m.longitudinal))}, {"lateral", std::string(to_string(m.lateral))}};
}
void from_json(const json& j, MetaAction& m) {
  m.longitudinal = longitudinal_from_string(j.at("longitudinal").get<std::string>());
  m.lateral = lateral_from_string(j.at("lateral").get<std::string>());
}

void to_json(json& j, const ScenarioRecord& r) {
  j = json{{"scene", r.scene},
           {"gt_trajectory", r.gt_trajectory},
           {"gt_meta", r.gt_meta},
           {"scenario_id", r.scenario_id},
           {"family", std::string(to_string(r.family))}};
}
void from_json(const json& j, ScenarioRecord& r) {
  j.at("scene").get_to(r.scene);
  j.at("gt_trajectory").get_to(r.gt_trajectory);
  j.at("gt_meta").get_to(r.gt_meta);
  j.at("scenario_id").get_to(r.scenario_id);
  r.family = family_from_string(j.at("family").get<std::string>());
}

}  // namespace fbgrpo
