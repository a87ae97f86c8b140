#pragma once

#include <nlohmann/json.hpp>

#include "hilo/domain.hpp"

// JSON forms of the domain types. Field names follow the published schema;
// enums are lower_snake_case strings; vectors are arrays of doubles; times are
// seconds.

namespace hilo {

using nlohmann::json;

template <class E>
    requires requires { EnumNames<E>::values; }
void to_json(json& j, E value) {
    j = std::string(to_string(value));
}

template <class E>
    requires requires { EnumNames<E>::values; }
void from_json(const json& j, E& value) {
    value = parse_enum<E>(j.get<std::string>());
}

void to_json(json& j, const RobotProfile& p);
void from_json(const json& j, RobotProfile& p);
void to_json(json& j, const RobotState& r);
void from_json(const json& j, RobotState& r);
void to_json(json& j, const Location& loc);
void from_json(const json& j, Location& loc);
void to_json(json& j, const SceneObject& o);
void from_json(const json& j, SceneObject& o);
void to_json(json& j, const SceneState& s);
void from_json(const json& j, SceneState& s);
void to_json(json& j, const SkillCommand& c);
void from_json(const json& j, SkillCommand& c);
void to_json(json& j, const ActionChunk& c);
void from_json(const json& j, ActionChunk& c);
void to_json(json& j, const UserEvent& e);
void from_json(const json& j, UserEvent& e);
void to_json(json& j, const HighLevelDecision& d);
void from_json(const json& j, HighLevelDecision& d);
void to_json(json& j, const Frame& f);
void from_json(const json& j, Frame& f);
void to_json(json& j, const Segment& s);
void from_json(const json& j, Segment& s);
void to_json(json& j, const Episode& e);
void from_json(const json& j, Episode& e);
void to_json(json& j, const SyntheticInteraction& s);
void from_json(const json& j, SyntheticInteraction& s);
void to_json(json& j, const Predicate& p);
void from_json(const json& j, Predicate& p);
void to_json(json& j, const ItemRequest& r);
void from_json(const json& j, ItemRequest& r);
void to_json(json& j, const Delivery& d);
void from_json(const json& j, Delivery& d);
void to_json(json& j, const GoalSpec& g);
void from_json(const json& j, GoalSpec& g);

inline json time_json(Micros t) { return to_seconds(t); }
inline Micros time_from_json(const json& j) { return seconds(j.get<double>()); }

}  // namespace hilo
