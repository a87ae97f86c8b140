#include "hilo/json_io.hpp"

namespace hilo {

namespace {

template <class T>
void put_optional(json& j, const char* key, const std::optional<T>& v) {
    if (v) j[key] = *v;
}

template <class T>
std::optional<T> get_optional(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->template get<T>();
}

template <class T>
T value_or(const json& j, const char* key, T fallback) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return fallback;
    return it->template get<T>();
}

}  // namespace

void to_json(json& j, const RobotProfile& p) {
    j = json{{"name", p.name}, {"config_dim", p.config_dim}, {"action_dim", p.action_dim},
             {"camera_count", p.camera_count}};
}

void from_json(const json& j, RobotProfile& p) {
    p.name = j.at("name").get<RobotName>();
    p.config_dim = j.at("config_dim").get<int>();
    p.action_dim = j.at("action_dim").get<int>();
    p.camera_count = j.at("camera_count").get<int>();
}

void to_json(json& j, const RobotState& r) {
    j = json{{"profile", r.profile}, {"q", r.q}, {"gripper_open", r.gripper_open}};
}

void from_json(const json& j, RobotState& r) {
    r.profile = j.at("profile").get<RobotProfile>();
    r.q = j.at("q").get<std::vector<double>>();
    r.gripper_open = j.at("gripper_open").get<std::vector<double>>();
}

void to_json(json& j, const Location& loc) {
    std::visit(
        [&j](const auto& l) {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, Surface>) {
                j = json{{"kind", "surface"}, {"name", l.name}};
            } else if constexpr (std::is_same_v<T, Container>) {
                j = json{{"kind", "container"}, {"name", l.name}};
            } else {
                j = json{{"kind", "gripper"}, {"arm", l.arm}};
            }
        },
        loc);
}

void from_json(const json& j, Location& loc) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "surface") {
        loc = Surface{j.at("name").get<std::string>()};
    } else if (kind == "container") {
        loc = Container{j.at("name").get<std::string>()};
    } else if (kind == "gripper") {
        loc = Gripper{j.at("arm").get<Arm>()};
    } else {
        throw std::invalid_argument("unknown location kind: " + kind);
    }
}

void to_json(json& j, const SceneObject& o) {
    j = json{{"id", o.id},
             {"display_name", o.display_name},
             {"object_class", o.object_class},
             {"attributes", o.attributes},
             {"color_tags", o.color_tags},
             {"location", o.location},
             {"origin", o.origin},
             {"placed_order", o.placed_order}};
}

void from_json(const json& j, SceneObject& o) {
    o.id = j.at("id").get<std::string>();
    o.display_name = j.at("display_name").get<std::string>();
    o.object_class = j.at("object_class").get<ObjectClass>();
    o.attributes = value_or(j, "attributes", std::set<std::string>{});
    o.color_tags = value_or(j, "color_tags", std::set<std::string>{});
    o.location = j.at("location").get<Location>();
    o.origin = j.contains("origin") ? j.at("origin").get<Location>() : o.location;
    o.placed_order = value_or(j, "placed_order", 0);
}

void to_json(json& j, const SceneState& s) {
    j = json{{"objects", s.objects},
             {"fixtures", {{"surfaces", s.surfaces}, {"containers", s.containers}}},
             {"container_at", s.container_at},
             {"time", time_json(s.time)},
             {"next_order", s.next_order}};
}

void from_json(const json& j, SceneState& s) {
    s.objects = j.at("objects").get<std::vector<SceneObject>>();
    const auto& f = j.at("fixtures");
    s.surfaces = f.at("surfaces").get<std::vector<std::string>>();
    s.containers = f.at("containers").get<std::vector<std::string>>();
    s.container_at = value_or(j, "container_at", std::map<std::string, std::string>{});
    s.time = j.contains("time") ? time_from_json(j.at("time")) : Micros{0};
    s.next_order = value_or(j, "next_order", 1);
}

void to_json(json& j, const SkillCommand& c) {
    std::visit(
        [&j](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, Pick>) {
                j = json{{"kind", "pick"}, {"object", s.object}};
            } else if constexpr (std::is_same_v<T, Place>) {
                j = json{{"kind", "place"}, {"destination", s.destination}};
                put_optional(j, "object", s.object);
            } else if constexpr (std::is_same_v<T, Move>) {
                j = json{{"kind", "move"}, {"direction", s.direction}};
                put_optional(j, "arm", s.arm);
            } else if constexpr (std::is_same_v<T, Rotate>) {
                j = json{{"kind", "rotate"}, {"rotation", s.rotation}};
            } else if constexpr (std::is_same_v<T, GripperCommand>) {
                j = json{{"kind", "gripper"}, {"action", s.action}};
            } else if constexpr (std::is_same_v<T, Home>) {
                j = json{{"kind", "home"}};
            } else {
                j = json{{"kind", "done"}};
            }
        },
        c.skill);
    j["raw_text"] = c.raw_text;
}

void from_json(const json& j, SkillCommand& c) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "pick") {
        c.skill = Pick{j.at("object").get<std::string>()};
    } else if (kind == "place") {
        c.skill = Place{get_optional<std::string>(j, "object"), j.at("destination").get<std::string>()};
    } else if (kind == "move") {
        c.skill = Move{j.at("direction").get<Direction>(), get_optional<Arm>(j, "arm")};
    } else if (kind == "rotate") {
        c.skill = Rotate{j.at("rotation").get<Rotation>()};
    } else if (kind == "gripper") {
        c.skill = GripperCommand{j.at("action").get<GripperAction>()};
    } else if (kind == "home") {
        c.skill = Home{};
    } else if (kind == "done") {
        c.skill = Done{};
    } else {
        throw std::invalid_argument("unknown skill kind: " + kind);
    }
    c.raw_text = value_or(j, "raw_text", std::string{});
}

void to_json(json& j, const ActionChunk& c) {
    j = json{{"command_id", c.command_id}, {"actions", c.actions}, {"start_step", c.start_step}};
}

void from_json(const json& j, ActionChunk& c) {
    c.command_id = j.at("command_id").get<std::int64_t>();
    c.actions = j.at("actions").get<std::vector<std::vector<double>>>();
    c.start_step = j.at("start_step").get<std::int64_t>();
}

void to_json(json& j, const UserEvent& e) {
    j = json{{"kind", std::string(to_string(e.kind))}, {"time", time_json(e.time)}};
    if (e.kind != UserEvent::Kind::resume) j["text"] = e.text;
}

void from_json(const json& j, UserEvent& e) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "prompt") {
        e.kind = UserEvent::Kind::prompt;
    } else if (kind == "interjection") {
        e.kind = UserEvent::Kind::interjection;
    } else if (kind == "resume") {
        e.kind = UserEvent::Kind::resume;
    } else {
        throw std::invalid_argument("unknown user event kind: " + kind);
    }
    e.text = value_or(j, "text", std::string{});
    e.time = j.contains("time") ? time_from_json(j.at("time")) : Micros{0};
}

void to_json(json& j, const HighLevelDecision& d) {
    j = json{{"skill_text", d.skill_text}};
    put_optional(j, "utterance", d.utterance);
}

void from_json(const json& j, HighLevelDecision& d) {
    d.skill_text = j.at("skill_text").get<std::string>();
    d.utterance = get_optional<std::string>(j, "utterance");
}

void to_json(json& j, const Frame& f) {
    j = json{{"t", time_json(f.t)}, {"scene", f.scene}, {"q", f.q}, {"action", f.action}};
}

void from_json(const json& j, Frame& f) {
    f.t = time_from_json(j.at("t"));
    f.scene = j.at("scene").get<SceneState>();
    f.q = j.at("q").get<RobotState>();
    f.action = j.at("action").get<std::vector<double>>();
}

void to_json(json& j, const Segment& s) {
    j = json{{"start_frame", s.start_frame}, {"end_frame", s.end_frame}, {"label", s.label}};
}

void from_json(const json& j, Segment& s) {
    s.start_frame = j.at("start_frame").get<int>();
    s.end_frame = j.at("end_frame").get<int>();
    s.label = j.at("label").get<std::string>();
}

void to_json(json& j, const Episode& e) {
    j = json{{"id", e.id},
             {"task", e.task},
             {"frames", e.frames},
             {"segments", e.segments},
             {"goal_annotation", e.goal_annotation}};
}

void from_json(const json& j, Episode& e) {
    e.id = j.at("id").get<std::string>();
    e.task = j.at("task").get<Task>();
    e.frames = j.at("frames").get<std::vector<Frame>>();
    e.segments = value_or(j, "segments", std::vector<Segment>{});
    e.goal_annotation = value_or(j, "goal_annotation", std::string{});
}

void to_json(json& j, const SyntheticInteraction& s) {
    j = json{{"episode_id", s.episode_id},
             {"task", s.task},
             {"frame_index", s.frame_index},
             {"prior_skills", s.prior_skills},
             {"skill_label", s.skill_label},
             {"scenario_type", s.scenario_type},
             {"user_prompt", s.user_prompt},
             {"response_type", s.response_type},
             {"mentioned_objects", s.mentioned_objects}};
    put_optional(j, "robot_utterance", s.robot_utterance);
}

void from_json(const json& j, SyntheticInteraction& s) {
    s.episode_id = j.at("episode_id").get<std::string>();
    s.task = j.at("task").get<Task>();
    s.frame_index = j.at("frame_index").get<int>();
    s.prior_skills = j.at("prior_skills").get<std::vector<std::string>>();
    s.skill_label = j.at("skill_label").get<std::string>();
    s.scenario_type = j.at("scenario_type").get<ScenarioType>();
    s.user_prompt = j.at("user_prompt").get<std::string>();
    s.robot_utterance = get_optional<std::string>(j, "robot_utterance");
    s.response_type = j.at("response_type").get<ResponseType>();
    s.mentioned_objects = value_or(j, "mentioned_objects", std::vector<std::string>{});
}

void to_json(json& j, const Predicate& p) {
    j = json{{"all", p.all},
             {"classes", p.classes},
             {"names", p.names},
             {"attributes", p.attributes},
             {"color_tags", p.color_tags}};
}

void from_json(const json& j, Predicate& p) {
    p.all = value_or(j, "all", false);
    p.classes = value_or(j, "classes", std::set<ObjectClass>{});
    p.names = value_or(j, "names", std::set<std::string>{});
    p.attributes = value_or(j, "attributes", std::set<std::string>{});
    p.color_tags = value_or(j, "color_tags", std::set<std::string>{});
}

void to_json(json& j, const ItemRequest& r) {
    j = json{{"count", r.count}};
    if (!r.name.empty()) j["name"] = r.name;
    if (!r.attribute.empty()) j["attribute"] = r.attribute;
}

void from_json(const json& j, ItemRequest& r) {
    r.name = value_or(j, "name", std::string{});
    r.attribute = value_or(j, "attribute", std::string{});
    r.count = value_or(j, "count", 1);
}

void to_json(json& j, const Delivery& d) { j = json{{"container", d.container}, {"surface", d.surface}}; }

void from_json(const json& j, Delivery& d) {
    d.container = j.at("container").get<std::string>();
    d.surface = j.at("surface").get<std::string>();
}

void to_json(json& j, const GoalSpec& g) {
    json dest = json::object();
    for (const auto& [cls, container] : g.destination_map) dest[std::string(to_string(cls))] = container;
    json overrides = json::object();
    for (const auto& [id, cls] : g.class_overrides) overrides[id] = cls;
    j = json{{"destination_map", dest},
             {"include", g.include},
             {"exclude", g.exclude},
             {"required_items", g.required_items},
             {"forbidden_attributes", g.forbidden_attributes},
             {"halt", g.halt},
             {"ordered", g.ordered},
             {"bookend", g.bookend},
             {"excluded_ids", g.excluded_ids},
             {"class_overrides", overrides}};
    put_optional(j, "delivery", g.delivery);
}

void from_json(const json& j, GoalSpec& g) {
    g = GoalSpec{};
    if (auto it = j.find("destination_map"); it != j.end()) {
        for (const auto& [k, v] : it->items()) g.destination_map[parse_enum<ObjectClass>(k)] = v.get<std::string>();
    }
    g.include = value_or(j, "include", Predicate{});
    g.exclude = value_or(j, "exclude", Predicate{});
    g.required_items = value_or(j, "required_items", std::vector<ItemRequest>{});
    g.forbidden_attributes = value_or(j, "forbidden_attributes", std::set<std::string>{});
    g.halt = value_or(j, "halt", false);
    g.ordered = value_or(j, "ordered", false);
    g.bookend = value_or(j, "bookend", std::string{});
    g.delivery = get_optional<Delivery>(j, "delivery");
    g.excluded_ids = value_or(j, "excluded_ids", std::set<std::string>{});
    if (auto it = j.find("class_overrides"); it != j.end()) {
        for (const auto& [k, v] : it->items()) g.class_overrides[k] = v.get<ObjectClass>();
    }
}

}  // namespace hilo
