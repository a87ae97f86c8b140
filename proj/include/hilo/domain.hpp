#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "hilo/clock.hpp"

namespace hilo {

// =========================================================================================
// Enumerations and their wire names
// =========================================================================================

enum class RobotName { ur5e, bimanual_arx, mobile_arx };
enum class Arm { single, left, right };
enum class ObjectClass { trash, dish, utensil, ingredient, grocery };
enum class Task { table_bussing, sandwich_making, grocery_shopping };
enum class Direction { left, right, higher, lower, toward_user, away_from_user };
enum class Rotation { cw, ccw };
enum class GripperAction { open, close };
enum class Outcome { success, failure };
enum class ScenarioType { negative_task, situated_correction, specific_constraint, direct_request };
enum class ResponseType { simple_confirmation, clarification, error_handling, none };

template <class E>
struct EnumNames;

#define HILO_ENUM_NAMES(E, ...)                                                   \
    template <>                                                                   \
    struct EnumNames<E> {                                                         \
        static constexpr auto values = std::to_array<std::pair<E, std::string_view>>({__VA_ARGS__}); \
    };

HILO_ENUM_NAMES(RobotName, {RobotName::ur5e, "ur5e"}, {RobotName::bimanual_arx, "bimanual_arx"},
                {RobotName::mobile_arx, "mobile_arx"})
HILO_ENUM_NAMES(Arm, {Arm::single, "single"}, {Arm::left, "left"}, {Arm::right, "right"})
HILO_ENUM_NAMES(ObjectClass, {ObjectClass::trash, "trash"}, {ObjectClass::dish, "dish"},
                {ObjectClass::utensil, "utensil"}, {ObjectClass::ingredient, "ingredient"},
                {ObjectClass::grocery, "grocery"})
HILO_ENUM_NAMES(Task, {Task::table_bussing, "table_bussing"}, {Task::sandwich_making, "sandwich_making"},
                {Task::grocery_shopping, "grocery_shopping"})
HILO_ENUM_NAMES(Direction, {Direction::left, "left"}, {Direction::right, "right"},
                {Direction::higher, "higher"}, {Direction::lower, "lower"},
                {Direction::toward_user, "toward_user"}, {Direction::away_from_user, "away_from_user"})
HILO_ENUM_NAMES(Rotation, {Rotation::cw, "cw"}, {Rotation::ccw, "ccw"})
HILO_ENUM_NAMES(GripperAction, {GripperAction::open, "open"}, {GripperAction::close, "close"})
HILO_ENUM_NAMES(Outcome, {Outcome::success, "success"}, {Outcome::failure, "failure"})
HILO_ENUM_NAMES(ScenarioType, {ScenarioType::negative_task, "negative_task"},
                {ScenarioType::situated_correction, "situated_correction"},
                {ScenarioType::specific_constraint, "specific_constraint"},
                {ScenarioType::direct_request, "direct_request"})
HILO_ENUM_NAMES(ResponseType, {ResponseType::simple_confirmation, "simple_confirmation"},
                {ResponseType::clarification, "clarification"},
                {ResponseType::error_handling, "error_handling"}, {ResponseType::none, "none"})

#undef HILO_ENUM_NAMES

template <class E>
constexpr std::string_view to_string(E value) {
    for (const auto& [v, name] : EnumNames<E>::values) {
        if (v == value) return name;
    }
    return "?";
}

/// Throws std::invalid_argument for names outside the closed set.
template <class E>
E parse_enum(std::string_view name) {
    for (const auto& [v, n] : EnumNames<E>::values) {
        if (n == name) return v;
    }
    throw std::invalid_argument("unknown enum value: " + std::string(name));
}

template <class E>
std::optional<E> try_parse_enum(std::string_view name) {
    for (const auto& [v, n] : EnumNames<E>::values) {
        if (n == name) return v;
    }
    return std::nullopt;
}

// =========================================================================================
// Closed lexicons
// =========================================================================================

inline constexpr std::array<std::string_view, 7> kAttributeLexicon = {
    "sweet", "salty", "drink", "vegetarian", "dairy", "meat", "fragile"};

inline constexpr std::array<std::string_view, 14> kColorPalette = {
    "white", "black", "blue", "red", "green", "yellow", "yellowish",
    "brown", "silver", "clear", "orange", "pink", "purple", "gold"};

bool is_known_attribute(std::string_view a);
bool is_known_color(std::string_view c);

// =========================================================================================
// Robot
// =========================================================================================

struct RobotProfile {
    RobotName name = RobotName::ur5e;
    int config_dim = 7;
    int action_dim = 7;
    int camera_count = 2;

    static RobotProfile of(RobotName name);
    std::vector<Arm> arms() const;

    bool operator==(const RobotProfile&) const = default;
};

struct RobotState {
    RobotProfile profile;
    std::vector<double> q;             // joint + gripper positions, length config_dim
    std::vector<double> gripper_open;  // one fraction per arm, in [0, 1]

    static RobotState at_home(const RobotProfile& profile);
    bool operator==(const RobotState&) const = default;
};

// =========================================================================================
// Scene
// =========================================================================================

struct Surface {
    std::string name;
    bool operator==(const Surface&) const = default;
};
struct Container {
    std::string name;
    bool operator==(const Container&) const = default;
};
struct Gripper {
    Arm arm = Arm::single;
    bool operator==(const Gripper&) const = default;
};
using Location = std::variant<Surface, Container, Gripper>;

std::string describe(const Location& loc);

struct SceneObject {
    std::string id;
    std::string display_name;
    ObjectClass object_class = ObjectClass::trash;
    std::set<std::string> attributes;
    std::set<std::string> color_tags;
    Location location;
    Location origin;      // where the object started; put-back target
    int placed_order = 0; // arrival order at its current container, 0 when not in one

    bool operator==(const SceneObject&) const = default;
};

struct SceneState {
    std::vector<SceneObject> objects;  // sorted by id
    std::vector<std::string> surfaces;
    std::vector<std::string> containers;
    std::map<std::string, std::string> container_at;  // movable container -> surface
    Micros time{0};
    int next_order = 1;

    const SceneObject* find(std::string_view id) const;
    SceneObject* find(std::string_view id);
    const SceneObject* held_by(Arm arm) const;
    std::vector<const SceneObject*> held() const;
    bool has_fixture(std::string_view name) const;
    bool is_surface(std::string_view name) const;
    bool is_container(std::string_view name) const;

    bool operator==(const SceneState&) const = default;
};

/// Empty when every scene invariant holds for the profile.
std::vector<std::string> validate_scene(const SceneState& scene, const RobotProfile& profile);

// =========================================================================================
// Commands, chunks and decisions
// =========================================================================================

struct Pick {
    std::string object;
    bool operator==(const Pick&) const = default;
};
struct Place {
    std::optional<std::string> object;
    std::string destination;
    bool operator==(const Place&) const = default;
};
struct Move {
    Direction direction = Direction::left;
    std::optional<Arm> arm;
    bool operator==(const Move&) const = default;
};
struct Rotate {
    Rotation rotation = Rotation::cw;
    bool operator==(const Rotate&) const = default;
};
struct GripperCommand {
    GripperAction action = GripperAction::open;
    bool operator==(const GripperCommand&) const = default;
};
struct Home {
    bool operator==(const Home&) const = default;
};
struct Done {
    bool operator==(const Done&) const = default;
};

using Skill = std::variant<Pick, Place, Move, Rotate, GripperCommand, Home, Done>;

struct SkillCommand {
    Skill skill;
    std::string raw_text;

    // Equality is over the parsed form; raw_text may be any synonym.
    bool operator==(const SkillCommand& other) const { return skill == other.skill; }

    bool is_terminal() const {
        return std::holds_alternative<Home>(skill) || std::holds_alternative<Done>(skill);
    }
};

std::string_view skill_kind(const Skill& skill);

struct ActionChunk {
    std::int64_t command_id = 0;
    std::vector<std::vector<double>> actions;  // exactly H rows of action_dim
    std::int64_t start_step = 0;
    bool operator==(const ActionChunk&) const = default;
};

struct UserEvent {
    enum class Kind { prompt, interjection, resume };
    Kind kind = Kind::prompt;
    std::string text;
    Micros time{0};
    bool operator==(const UserEvent&) const = default;
};

std::string_view to_string(UserEvent::Kind kind);

struct HighLevelDecision {
    std::string skill_text;
    std::optional<std::string> utterance;
    bool operator==(const HighLevelDecision&) const = default;
};

// =========================================================================================
// Demonstrations and synthetic data
// =========================================================================================

struct Frame {
    Micros t{0};
    SceneState scene;
    RobotState q;
    std::vector<double> action;
    bool operator==(const Frame&) const = default;
};

struct Segment {
    int start_frame = 0;
    int end_frame = 0;  // inclusive
    std::string label;
    bool operator==(const Segment&) const = default;
};

struct Episode {
    std::string id;
    Task task = Task::table_bussing;
    std::vector<Frame> frames;
    std::vector<Segment> segments;
    std::string goal_annotation;
    bool operator==(const Episode&) const = default;
};

/// Empty when segments are ordered, non-overlapping and inside the frame range.
std::vector<std::string> validate_episode(const Episode& episode);

struct SyntheticInteraction {
    std::string episode_id;
    Task task = Task::table_bussing;
    int frame_index = 0;
    std::vector<std::string> prior_skills;
    std::string skill_label;
    ScenarioType scenario_type = ScenarioType::direct_request;
    std::string user_prompt;
    std::optional<std::string> robot_utterance;
    ResponseType response_type = ResponseType::none;
    std::vector<std::string> mentioned_objects;  // slot fills, for grounding checks
    bool operator==(const SyntheticInteraction&) const = default;
};

// =========================================================================================
// Goals
// =========================================================================================

/// Disjunctive selector over object properties. `all` matches everything.
struct Predicate {
    bool all = false;
    std::set<ObjectClass> classes;
    std::set<std::string> names;
    std::set<std::string> attributes;
    std::set<std::string> color_tags;

    bool empty() const {
        return !all && classes.empty() && names.empty() && attributes.empty() && color_tags.empty();
    }
    bool matches(const SceneObject& obj, ObjectClass effective_class) const;
    bool operator==(const Predicate&) const = default;
};

/// Order line: `count` objects named `name`, or carrying `attribute`.
struct ItemRequest {
    std::string name;
    std::string attribute;
    int count = 1;

    bool matches(const SceneObject& obj) const;
    bool operator==(const ItemRequest&) const = default;
};

/// A movable container that must end on a surface (the grocery basket).
struct Delivery {
    std::string container;
    std::string surface;
    bool operator==(const Delivery&) const = default;
};

struct GoalSpec {
    std::map<ObjectClass, std::string> destination_map;
    Predicate include;
    Predicate exclude;
    std::vector<ItemRequest> required_items;
    std::set<std::string> forbidden_attributes;
    bool halt = false;
    bool ordered = false;  // stack must start and end with the bookend item
    std::string bookend;   // "bread" for sandwiches
    std::optional<Delivery> delivery;
    std::set<std::string> excluded_ids;
    std::map<std::string, ObjectClass> class_overrides;

    bool operator==(const GoalSpec&) const = default;
};

}  // namespace hilo
