#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hilo/domain.hpp"

namespace hilo::sim {

// =========================================================================================
// Task catalogs
// =========================================================================================

struct CatalogItem {
    std::string name;
    ObjectClass object_class = ObjectClass::trash;
    std::set<std::string> attributes;
    std::set<std::string> color_tags;
    std::string origin;      // surface the item starts on
    bool extension = false;  // not named in the original task descriptions
};

/// How many items a generated scene draws. `name` with `count` copies, or
/// `count` in [min, max] distinct items from `one_of` (or from the whole class).
struct DrawRule {
    std::string name;
    std::vector<std::string> one_of;
    std::optional<ObjectClass> object_class;
    int min = 1;
    int max = 1;
};

struct TaskCatalog {
    Task task = Task::table_bussing;
    RobotName robot = RobotName::ur5e;
    std::vector<std::string> surfaces;
    std::vector<std::string> containers;
    std::map<std::string, std::string> movable_containers;  // container -> initial surface
    std::map<ObjectClass, std::string> destination_map;
    std::optional<Delivery> delivery;
    bool ordered = false;
    std::string bookend;
    std::vector<CatalogItem> items;
    std::vector<DrawRule> always;
    std::vector<DrawRule> draws;

    const CatalogItem* item(std::string_view name) const;
    RobotProfile profile() const { return RobotProfile::of(robot); }
};

class CatalogError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parses the catalog file. Throws CatalogError on schema or lexicon violations.
std::map<Task, TaskCatalog> load_catalogs(const std::filesystem::path& path);

/// Directory holding the bundled data files. HILO_DATA_DIR overrides the
/// compiled-in location.
std::filesystem::path data_dir();

/// Bundled catalogs, loaded once from data_dir()/catalogs.json.
const TaskCatalog& catalog(Task task);

// =========================================================================================
// Scenes
// =========================================================================================

struct TaskSetup {
    SceneState scene;
    RobotState robot;
    GoalSpec goal;  // the task's unconstrained behaviour
};

TaskSetup load_task(const TaskCatalog& catalog, std::uint64_t seed);
TaskSetup load_task(Task task, std::uint64_t seed);

GoalSpec default_goal(const TaskCatalog& catalog);

class SkillEffectError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Discrete effect of a finished skill. `object_id` is the grounded object for
/// Pick, or the held object a Place refers to (first held when empty).
/// Throws SkillEffectError ("gripper occupied", "gripper empty",
/// "unknown destination", "object not held", "unresolved object").
SceneState apply_skill_effect(const SceneState& scene, const SkillCommand& command,
                              const std::optional<std::string>& object_id, Outcome outcome,
                              std::span<const Arm> arms);

/// Throws SkillEffectError when apply_skill_effect would fail for a success outcome.
void check_preconditions(const SceneState& scene, const SkillCommand& command,
                         const std::optional<std::string>& object_id, std::span<const Arm> arms);

// =========================================================================================
// Goal semantics
// =========================================================================================

ObjectClass effective_class(const SceneObject& obj, const GoalSpec& goal);

/// Explicitly ruled out: excluded id, exclude predicate or forbidden attribute.
bool hard_excluded(const SceneObject& obj, const GoalSpec& goal);

/// Container the goal maps the object's class to, if any.
std::optional<std::string> mapped_destination(const SceneObject& obj, const GoalSpec& goal);

/// Name of the fixture the object belongs at: the mapped container, or its
/// origin surface when it is excluded (put-back target).
std::string destination_for(const SceneObject& obj, const GoalSpec& goal, bool excluded);

bool in_container(const SceneObject& obj, std::string_view container);
bool displaced(const SceneObject& obj);
std::string origin_name(const SceneObject& obj);

/// Snapshot of the goal against a scene. All id lists are in id order.
struct GoalStatus {
    std::vector<std::string> targets;       // objects that count toward progress
    std::vector<std::string> excluded;      // objects the robot must not move
    std::vector<std::string> placed;        // targets at their mapped container
    std::vector<std::string> pending;       // targets neither placed nor held
    std::vector<std::string> pickable;      // objects a pick may go for right now
    std::vector<std::string> displaced_excluded;  // excluded, moved, not in a gripper
    bool delivery_applicable = false;
    bool delivery_done = false;
    bool delivery_pending = false;  // every target placed, container not yet moved

    bool is_target(std::string_view id) const;
    bool is_excluded(std::string_view id) const;
    bool is_pickable(std::string_view id) const;
};

GoalStatus evaluate_goal(const SceneState& scene, const GoalSpec& goal);

/// Objects of a sandwich-style stack in placement order.
std::vector<const SceneObject*> stack_order(const SceneState& scene, std::string_view container);

bool goal_satisfied(const SceneState& scene, const GoalSpec& goal);

/// Empty when the effective selection is consistent with the scene: no target
/// is excluded, every target has a destination fixture, lexicon terms are known.
std::vector<std::string> validate_goal(const GoalSpec& goal, const SceneState& scene);

}  // namespace hilo::sim
