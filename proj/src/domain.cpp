#include "hilo/domain.hpp"

#include <algorithm>
#include <sstream>

namespace hilo {

bool is_known_attribute(std::string_view a) {
    return std::find(kAttributeLexicon.begin(), kAttributeLexicon.end(), a) != kAttributeLexicon.end();
}

bool is_known_color(std::string_view c) {
    return std::find(kColorPalette.begin(), kColorPalette.end(), c) != kColorPalette.end();
}

RobotProfile RobotProfile::of(RobotName name) {
    switch (name) {
        case RobotName::ur5e:
            return {RobotName::ur5e, 7, 7, 2};
        case RobotName::bimanual_arx:
            return {RobotName::bimanual_arx, 14, 14, 3};
        case RobotName::mobile_arx:
            return {RobotName::mobile_arx, 14, 16, 3};
    }
    throw std::invalid_argument("unknown robot");
}

std::vector<Arm> RobotProfile::arms() const {
    if (name == RobotName::ur5e) return {Arm::single};
    return {Arm::left, Arm::right};
}

RobotState RobotState::at_home(const RobotProfile& profile) {
    RobotState r;
    r.profile = profile;
    r.q.assign(static_cast<std::size_t>(profile.config_dim), 0.0);
    r.gripper_open.assign(profile.arms().size(), 1.0);
    return r;
}

std::string describe(const Location& loc) {
    return std::visit(
        [](const auto& l) -> std::string {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, Surface>) {
                return "surface:" + l.name;
            } else if constexpr (std::is_same_v<T, Container>) {
                return "container:" + l.name;
            } else {
                return "gripper:" + std::string(to_string(l.arm));
            }
        },
        loc);
}

const SceneObject* SceneState::find(std::string_view id) const {
    for (const auto& o : objects) {
        if (o.id == id) return &o;
    }
    return nullptr;
}

SceneObject* SceneState::find(std::string_view id) {
    for (auto& o : objects) {
        if (o.id == id) return &o;
    }
    return nullptr;
}

const SceneObject* SceneState::held_by(Arm arm) const {
    for (const auto& o : objects) {
        if (const auto* g = std::get_if<Gripper>(&o.location); g && g->arm == arm) return &o;
    }
    return nullptr;
}

std::vector<const SceneObject*> SceneState::held() const {
    std::vector<const SceneObject*> out;
    for (const auto& o : objects) {
        if (std::holds_alternative<Gripper>(o.location)) out.push_back(&o);
    }
    return out;
}

bool SceneState::is_surface(std::string_view name) const {
    return std::find(surfaces.begin(), surfaces.end(), name) != surfaces.end();
}

bool SceneState::is_container(std::string_view name) const {
    return std::find(containers.begin(), containers.end(), name) != containers.end();
}

bool SceneState::has_fixture(std::string_view name) const { return is_surface(name) || is_container(name); }

std::vector<std::string> validate_scene(const SceneState& scene, const RobotProfile& profile) {
    std::vector<std::string> out;
    auto add = [&out](std::string v) {
        if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(std::move(v));
    };

    std::set<std::string> ids;
    std::map<Arm, int> per_arm;
    const auto arms = profile.arms();
    for (const auto& o : scene.objects) {
        if (!ids.insert(o.id).second) add("duplicate object id");
        for (const auto& a : o.attributes) {
            if (!is_known_attribute(a)) add("unknown attribute");
        }
        for (const auto& c : o.color_tags) {
            if (!is_known_color(c)) add("unknown color tag");
        }
        for (const Location* loc : {&o.location, &o.origin}) {
            if (const auto* s = std::get_if<Surface>(loc); s && !scene.is_surface(s->name)) add("unknown fixture");
            if (const auto* c = std::get_if<Container>(loc); c && !scene.is_container(c->name)) add("unknown fixture");
        }
        if (const auto* g = std::get_if<Gripper>(&o.location)) {
            if (std::find(arms.begin(), arms.end(), g->arm) == arms.end()) add("gripper arm not on robot");
            if (++per_arm[g->arm] > 1) add("gripper capacity exceeded");
        }
    }
    for (const auto& [container, surface] : scene.container_at) {
        if (!scene.is_container(container) || !scene.is_surface(surface)) add("unknown fixture");
    }
    return out;
}

std::string_view skill_kind(const Skill& skill) {
    static constexpr std::array<std::string_view, 7> names = {"pick", "place", "move", "rotate",
                                                              "gripper", "home", "done"};
    return names[skill.index()];
}

std::string_view to_string(UserEvent::Kind kind) {
    switch (kind) {
        case UserEvent::Kind::prompt:
            return "prompt";
        case UserEvent::Kind::interjection:
            return "interjection";
        case UserEvent::Kind::resume:
            return "resume";
    }
    return "?";
}

std::vector<std::string> validate_episode(const Episode& episode) {
    std::vector<std::string> out;
    const int n = static_cast<int>(episode.frames.size());
    int last_end = -1;
    for (const auto& s : episode.segments) {
        if (s.start_frame < 0 || s.end_frame >= n || s.start_frame > s.end_frame) {
            out.push_back("segment out of frame bounds: " + s.label);
        } else if (s.start_frame <= last_end) {
            out.push_back("overlapping segment: " + s.label);
        }
        last_end = std::max(last_end, s.end_frame);
    }
    for (int i = 1; i < n; ++i) {
        if (episode.frames[i].t < episode.frames[i - 1].t) {
            out.push_back("frame times decrease");
            break;
        }
    }
    return out;
}

bool Predicate::matches(const SceneObject& obj, ObjectClass effective_class) const {
    if (all) return true;
    if (classes.count(effective_class)) return true;
    if (names.count(obj.display_name)) return true;
    for (const auto& a : obj.attributes) {
        if (attributes.count(a)) return true;
    }
    for (const auto& c : obj.color_tags) {
        if (color_tags.count(c)) return true;
    }
    return false;
}

bool ItemRequest::matches(const SceneObject& obj) const {
    if (!name.empty()) return obj.display_name == name;
    if (!attribute.empty()) return obj.attributes.count(attribute) > 0;
    return false;
}

}  // namespace hilo
