#pragma once

#include "json.hpp"

#include "fbgrpo/scene.hpp"

// JSON mappings for the scene data model. Field names follow the type definitions.
namespace fbgrpo {

using json = nlohmann::json;

void to_json(json& j, const Vec2& v);
void from_json(const json& j, Vec2& v);
void to_json(json& j, const EgoState& e);
void from_json(const json& j, EgoState& e);
void to_json(json& j, const Obstacle& o);
void from_json(const json& j, Obstacle& o);
void to_json(json& j, const Corridor& c);
void from_json(const json& j, Corridor& c);
void to_json(json& j, const Scene& s);
void from_json(const json& j, Scene& s);
void to_json(json& j, const Trajectory& t);
void from_json(const json& j, Trajectory& t);
void to_json(json& j, const MetaAction& m);
void from_json(const json& j, MetaAction& m);
void to_json(json& j, const ScenarioRecord& r);
void from_json(const json& j, ScenarioRecord& r);

}  // namespace fbgrpo
