#include "hilo/simenv.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>

#include "hilo/json_io.hpp"
#include "hilo/rng.hpp"

#ifndef HILO_DEFAULT_DATA_DIR
#define HILO_DEFAULT_DATA_DIR "data"
#endif

namespace hilo::sim {

const CatalogItem* TaskCatalog::item(std::string_view name) const {
    for (const auto& it : items) {
        if (it.name == name) return &it;
    }
    return nullptr;
}

namespace {

DrawRule parse_rule(const json& j) {
    DrawRule r;
    r.name = j.value("name", std::string{});
    r.one_of = j.value("one_of", std::vector<std::string>{});
    if (j.contains("class")) r.object_class = j.at("class").get<ObjectClass>();
    if (!r.name.empty()) {
        r.min = r.max = j.value("count", 1);
    } else {
        r.min = j.value("min", 1);
        r.max = j.value("max", r.min);
    }
    if (r.min < 0 || r.max < r.min) throw CatalogError("bad draw bounds");
    return r;
}

TaskCatalog parse_catalog(const json& j) {
    TaskCatalog c;
    c.task = j.at("task").get<Task>();
    c.robot = j.at("robot").get<RobotName>();
    c.surfaces = j.at("surfaces").get<std::vector<std::string>>();
    c.containers = j.at("containers").get<std::vector<std::string>>();
    c.movable_containers = j.value("movable_containers", std::map<std::string, std::string>{});
    for (const auto& [k, v] : j.at("destination_map").items()) {
        c.destination_map[parse_enum<ObjectClass>(k)] = v.get<std::string>();
    }
    if (j.contains("delivery")) c.delivery = j.at("delivery").get<Delivery>();
    c.ordered = j.value("ordered", false);
    c.bookend = j.value("bookend", std::string{});
    const auto default_origin = j.value("origin", c.surfaces.empty() ? std::string{} : c.surfaces.front());
    for (const auto& ij : j.at("items")) {
        CatalogItem it;
        it.name = ij.at("name").get<std::string>();
        it.object_class = ij.at("class").get<ObjectClass>();
        it.attributes = ij.value("attributes", std::set<std::string>{});
        it.color_tags = ij.value("colors", std::set<std::string>{});
        it.origin = ij.value("origin", default_origin);
        it.extension = ij.value("extension", false);
        for (const auto& a : it.attributes) {
            if (!is_known_attribute(a)) throw CatalogError("unknown attribute '" + a + "' on " + it.name);
        }
        for (const auto& col : it.color_tags) {
            if (!is_known_color(col)) throw CatalogError("unknown color tag '" + col + "' on " + it.name);
        }
        if (std::find(c.surfaces.begin(), c.surfaces.end(), it.origin) == c.surfaces.end()) {
            throw CatalogError("unknown origin surface for " + it.name);
        }
        c.items.push_back(std::move(it));
    }
    for (const auto& rj : j.value("always", json::array())) c.always.push_back(parse_rule(rj));
    for (const auto& rj : j.value("draws", json::array())) c.draws.push_back(parse_rule(rj));
    auto known = [&c](const std::string& n) {
        if (!c.item(n)) throw CatalogError("rule references unknown item: " + n);
    };
    for (const auto* rules : {&c.always, &c.draws}) {
        for (const auto& r : *rules) {
            if (!r.name.empty()) known(r.name);
            for (const auto& n : r.one_of) known(n);
        }
    }
    for (const auto& [cls, dest] : c.destination_map) {
        if (std::find(c.containers.begin(), c.containers.end(), dest) == c.containers.end()) {
            throw CatalogError("destination is not a container: " + dest);
        }
    }
    return c;
}

}  // namespace

std::map<Task, TaskCatalog> load_catalogs(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw CatalogError("cannot open catalog file: " + path.string());
    std::map<Task, TaskCatalog> out;
    try {
        const auto j = json::parse(in);
        for (const auto& tj : j.at("tasks")) {
            auto c = parse_catalog(tj);
            const auto task = c.task;
            out.emplace(task, std::move(c));
        }
    } catch (const CatalogError&) {
        throw;
    } catch (const std::exception& e) {
        throw CatalogError(std::string("malformed catalog: ") + e.what());
    }
    return out;
}

std::filesystem::path data_dir() {
    if (const char* env = std::getenv("HILO_DATA_DIR"); env && *env) return env;
    return HILO_DEFAULT_DATA_DIR;
}

const TaskCatalog& catalog(Task task) {
    static const std::map<Task, TaskCatalog> bundled = load_catalogs(data_dir() / "catalogs.json");
    auto it = bundled.find(task);
    if (it == bundled.end()) throw CatalogError("task missing from bundled catalog");
    return it->second;
}

GoalSpec default_goal(const TaskCatalog& catalog) {
    GoalSpec g;
    g.destination_map = catalog.destination_map;
    g.delivery = catalog.delivery;
    g.ordered = catalog.ordered;
    g.bookend = catalog.bookend;
    if (catalog.ordered && !catalog.bookend.empty()) {
        // Two slices around every available filling.
        g.required_items.push_back(ItemRequest{catalog.bookend, "", 2});
    }
    g.include.all = true;
    return g;
}

TaskSetup load_task(const TaskCatalog& catalog, std::uint64_t seed) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(catalog.task)));

    std::vector<const CatalogItem*> chosen;
    std::set<std::string> used;
    auto take = [&](const std::string& name) {
        chosen.push_back(catalog.item(name));
        used.insert(name);
    };

    for (const auto& rule : catalog.always) {
        if (!rule.name.empty()) {
            for (int i = 0; i < rule.min; ++i) take(rule.name);
        } else {
            std::vector<std::string> pool;
            for (const auto& n : rule.one_of) {
                if (!used.count(n)) pool.push_back(n);
            }
            const int count = rule.min + static_cast<int>(rng.below(static_cast<std::uint64_t>(rule.max - rule.min + 1)));
            rng.shuffle(pool);
            for (int i = 0; i < count && i < static_cast<int>(pool.size()); ++i) take(pool[i]);
        }
    }
    for (const auto& rule : catalog.draws) {
        std::vector<std::string> pool;
        if (!rule.one_of.empty()) {
            for (const auto& n : rule.one_of) {
                if (!used.count(n)) pool.push_back(n);
            }
        } else {
            for (const auto& it : catalog.items) {
                if (rule.object_class && it.object_class == *rule.object_class && !used.count(it.name)) {
                    pool.push_back(it.name);
                }
            }
        }
        const int count = rule.min + static_cast<int>(rng.below(static_cast<std::uint64_t>(rule.max - rule.min + 1)));
        rng.shuffle(pool);
        for (int i = 0; i < count && i < static_cast<int>(pool.size()); ++i) take(pool[i]);
    }

    // Id order is a seeded permutation of the draw order.
    rng.shuffle(chosen);

    TaskSetup setup;
    auto& scene = setup.scene;
    scene.surfaces = catalog.surfaces;
    scene.containers = catalog.containers;
    scene.container_at = catalog.movable_containers;
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        const auto* it = chosen[i];
        char id[32];
        std::snprintf(id, sizeof id, "o%02zu", i + 1);
        SceneObject o;
        o.id = id;
        o.display_name = it->name;
        o.object_class = it->object_class;
        o.attributes = it->attributes;
        o.color_tags = it->color_tags;
        o.location = Surface{it->origin};
        o.origin = o.location;
        scene.objects.push_back(std::move(o));
    }
    setup.robot = RobotState::at_home(catalog.profile());
    setup.goal = default_goal(catalog);
    return setup;
}

TaskSetup load_task(Task task, std::uint64_t seed) { return load_task(catalog(task), seed); }

// =========================================================================================
// Skill effects
// =========================================================================================

namespace {

bool is_movable_container_place(const SceneState& scene, const SkillCommand& command) {
    const auto* place = std::get_if<Place>(&command.skill);
    return place && place->object && scene.container_at.count(*place->object) > 0;
}

const SceneObject* place_subject(const SceneState& scene, const std::optional<std::string>& object_id,
                                 std::span<const Arm> arms) {
    if (object_id) {
        const auto* obj = scene.find(*object_id);
        if (!obj) throw SkillEffectError("unresolved object");
        if (!std::holds_alternative<Gripper>(obj->location)) throw SkillEffectError("object not held");
        return obj;
    }
    for (Arm arm : arms) {
        if (const auto* held = scene.held_by(arm)) return held;
    }
    throw SkillEffectError("gripper empty");
}

}  // namespace

void check_preconditions(const SceneState& scene, const SkillCommand& command,
                         const std::optional<std::string>& object_id, std::span<const Arm> arms) {
    if (const auto* pick = std::get_if<Pick>(&command.skill)) {
        (void)pick;
        if (!object_id) throw SkillEffectError("unresolved object");
        const auto* obj = scene.find(*object_id);
        if (!obj) throw SkillEffectError("unresolved object");
        if (std::holds_alternative<Gripper>(obj->location)) throw SkillEffectError("object already held");
        bool free_arm = false;
        for (Arm arm : arms) free_arm = free_arm || scene.held_by(arm) == nullptr;
        if (!free_arm) throw SkillEffectError("gripper occupied");
    } else if (const auto* place = std::get_if<Place>(&command.skill)) {
        if (!scene.has_fixture(place->destination)) throw SkillEffectError("unknown destination");
        if (is_movable_container_place(scene, command)) {
            if (!scene.is_surface(place->destination)) throw SkillEffectError("unknown destination");
            return;
        }
        if (scene.held().empty()) throw SkillEffectError("gripper empty");
        place_subject(scene, object_id, arms);
    }
}

SceneState apply_skill_effect(const SceneState& scene, const SkillCommand& command,
                              const std::optional<std::string>& object_id, Outcome outcome,
                              std::span<const Arm> arms) {
    check_preconditions(scene, command, object_id, arms);
    SceneState next = scene;
    if (outcome == Outcome::failure) return next;

    if (std::holds_alternative<Pick>(command.skill)) {
        auto* obj = next.find(*object_id);
        for (Arm arm : arms) {
            if (!next.held_by(arm)) {
                obj->location = Gripper{arm};
                obj->placed_order = 0;
                break;
            }
        }
    } else if (const auto* place = std::get_if<Place>(&command.skill)) {
        if (is_movable_container_place(scene, command)) {
            next.container_at[*place->object] = place->destination;
            return next;
        }
        const auto id = place_subject(scene, object_id, arms)->id;
        auto* obj = next.find(id);
        if (next.is_container(place->destination)) {
            obj->location = Container{place->destination};
            obj->placed_order = next.next_order++;
        } else {
            obj->location = Surface{place->destination};
            obj->placed_order = 0;
        }
    }
    // Move, Rotate, Gripper, Home and Done do not touch objects.
    return next;
}

// =========================================================================================
// Goal semantics
// =========================================================================================

ObjectClass effective_class(const SceneObject& obj, const GoalSpec& goal) {
    auto it = goal.class_overrides.find(obj.id);
    return it == goal.class_overrides.end() ? obj.object_class : it->second;
}

bool hard_excluded(const SceneObject& obj, const GoalSpec& goal) {
    if (goal.excluded_ids.count(obj.id)) return true;
    if (goal.exclude.matches(obj, effective_class(obj, goal))) return true;
    for (const auto& a : obj.attributes) {
        if (goal.forbidden_attributes.count(a)) return true;
    }
    return false;
}

std::optional<std::string> mapped_destination(const SceneObject& obj, const GoalSpec& goal) {
    auto it = goal.destination_map.find(effective_class(obj, goal));
    if (it == goal.destination_map.end()) return std::nullopt;
    return it->second;
}

std::string origin_name(const SceneObject& obj) {
    return std::visit(
        [](const auto& l) -> std::string {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, Gripper>) {
                return {};
            } else {
                return l.name;
            }
        },
        obj.origin);
}

std::string destination_for(const SceneObject& obj, const GoalSpec& goal, bool excluded) {
    if (!excluded) {
        if (auto dest = mapped_destination(obj, goal)) return *dest;
    }
    return origin_name(obj);
}

bool in_container(const SceneObject& obj, std::string_view container) {
    const auto* c = std::get_if<Container>(&obj.location);
    return c && c->name == container;
}

bool displaced(const SceneObject& obj) { return obj.location != obj.origin; }

namespace {

bool contains(const std::vector<std::string>& v, std::string_view id) {
    return std::find(v.begin(), v.end(), id) != v.end();
}

bool is_held(const SceneObject& obj) { return std::holds_alternative<Gripper>(obj.location); }

}  // namespace

bool GoalStatus::is_target(std::string_view id) const { return contains(targets, id); }
bool GoalStatus::is_excluded(std::string_view id) const { return contains(excluded, id); }
bool GoalStatus::is_pickable(std::string_view id) const { return contains(pickable, id); }

GoalStatus evaluate_goal(const SceneState& scene, const GoalSpec& goal) {
    GoalStatus st;
    const auto& objs = scene.objects;
    const std::size_t n = objs.size();

    std::vector<bool> hard(n), governed(n), target(n), placed(n);
    for (std::size_t i = 0; i < n; ++i) {
        hard[i] = hard_excluded(objs[i], goal);
        for (const auto& r : goal.required_items) governed[i] = governed[i] || r.matches(objs[i]);
        const auto dest = mapped_destination(objs[i], goal);
        placed[i] = dest && in_container(objs[i], *dest);
    }

    // Named requests claim before attribute requests. Each claims placed
    // objects first, then held ones, then the rest in id order.
    std::vector<std::size_t> order;
    for (std::size_t r = 0; r < goal.required_items.size(); ++r) {
        if (!goal.required_items[r].name.empty()) order.push_back(r);
    }
    for (std::size_t r = 0; r < goal.required_items.size(); ++r) {
        if (goal.required_items[r].name.empty()) order.push_back(r);
    }
    std::vector<int> open(goal.required_items.size());
    for (std::size_t r = 0; r < goal.required_items.size(); ++r) open[r] = goal.required_items[r].count;
    std::vector<bool> assigned(n);
    auto assign_pass = [&](auto&& eligible) {
        for (std::size_t r : order) {
            for (std::size_t i = 0; i < n && open[r] > 0; ++i) {
                if (assigned[i] || hard[i] || !goal.required_items[r].matches(objs[i])) continue;
                if (!eligible(i)) continue;
                assigned[i] = true;
                --open[r];
            }
        }
    };
    assign_pass([&](std::size_t i) { return static_cast<bool>(placed[i]); });
    assign_pass([&](std::size_t i) { return is_held(objs[i]); });
    assign_pass([&](std::size_t) { return true; });

    for (std::size_t i = 0; i < n; ++i) {
        if (governed[i]) {
            target[i] = assigned[i];
        } else {
            target[i] = !hard[i] && goal.include.matches(objs[i], effective_class(objs[i], goal));
        }
        if (goal.halt && target[i]) target[i] = placed[i] || is_held(objs[i]);
    }

    // Request slots still open after claiming placed and held objects.
    std::vector<bool> slot_open(goal.required_items.size());
    {
        std::vector<int> remaining(goal.required_items.size());
        for (std::size_t r = 0; r < goal.required_items.size(); ++r) remaining[r] = goal.required_items[r].count;
        std::vector<bool> counted(n);
        for (std::size_t r : order) {
            for (std::size_t i = 0; i < n && remaining[r] > 0; ++i) {
                if (counted[i] || !target[i] || !goal.required_items[r].matches(objs[i])) continue;
                if (placed[i] || is_held(objs[i])) {
                    counted[i] = true;
                    --remaining[r];
                }
            }
            slot_open[r] = remaining[r] > 0;
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        const auto& o = objs[i];
        if (target[i]) st.targets.push_back(o.id);
        const bool excluded = hard[i] || (!target[i] && !governed[i]);
        if (excluded) {
            st.excluded.push_back(o.id);
            if (displaced(o) && !is_held(o)) st.displaced_excluded.push_back(o.id);
        }
        if (target[i] && placed[i]) st.placed.push_back(o.id);
        if (target[i] && !placed[i] && !is_held(o)) st.pending.push_back(o.id);
    }

    if (!goal.halt) {
        std::vector<std::string> candidates;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& o = objs[i];
            if (hard[i] || placed[i] || is_held(o)) continue;
            bool ok = target[i] && !governed[i];
            for (std::size_t r = 0; r < goal.required_items.size() && !ok; ++r) {
                ok = slot_open[r] && goal.required_items[r].matches(o);
            }
            if (ok) candidates.push_back(o.id);
        }
        if (goal.ordered && !goal.bookend.empty()) {
            auto is_bookend = [&](const std::string& id) { return scene.find(id)->display_name == goal.bookend; };
            std::optional<std::string> stack;
            for (std::size_t i = 0; i < n; ++i) {
                if (objs[i].display_name == goal.bookend) stack = mapped_destination(objs[i], goal);
            }
            bool stack_empty = true;
            if (stack) {
                for (const auto& o : objs) stack_empty = stack_empty && !in_container(o, *stack);
            }
            std::vector<std::string> bookends, fillings;
            for (const auto& id : candidates) (is_bookend(id) ? bookends : fillings).push_back(id);
            bool filling_in_hand = false;
            for (const auto* h : scene.held()) filling_in_hand = filling_in_hand || h->display_name != goal.bookend;
            if (stack_empty) {
                candidates = bookends;
            } else if (!fillings.empty() || filling_in_hand) {
                candidates = fillings;
            } else {
                candidates = bookends;
            }
        }
        st.pickable = std::move(candidates);
    }

    if (goal.delivery && !goal.halt) {
        st.delivery_applicable = true;
        auto it = scene.container_at.find(goal.delivery->container);
        st.delivery_done = it != scene.container_at.end() && it->second == goal.delivery->surface;
        bool target_in_hand = false;
        for (const auto* h : scene.held()) target_in_hand = target_in_hand || st.is_target(h->id);
        st.delivery_pending = !st.delivery_done && st.pending.empty() && !target_in_hand;
    }
    return st;
}

std::vector<const SceneObject*> stack_order(const SceneState& scene, std::string_view container) {
    std::vector<const SceneObject*> out;
    for (const auto& o : scene.objects) {
        if (in_container(o, container)) out.push_back(&o);
    }
    std::sort(out.begin(), out.end(),
              [](const SceneObject* a, const SceneObject* b) { return a->placed_order < b->placed_order; });
    return out;
}

bool goal_satisfied(const SceneState& scene, const GoalSpec& goal) {
    const auto st = evaluate_goal(scene, goal);
    if (st.placed.size() != st.targets.size()) return false;
    for (const auto& id : st.excluded) {
        if (displaced(*scene.find(id))) return false;
    }
    if (!scene.held().empty()) return false;
    if (st.delivery_applicable && !st.delivery_done) return false;
    if (goal.ordered && !goal.bookend.empty() && !st.targets.empty()) {
        const auto dest = mapped_destination(*scene.find(st.targets.front()), goal);
        if (!dest) return false;
        const auto stack = stack_order(scene, *dest);
        if (stack.size() < 2) return false;
        if (stack.front()->display_name != goal.bookend || stack.back()->display_name != goal.bookend) return false;
        for (std::size_t i = 1; i + 1 < stack.size(); ++i) {
            if (stack[i]->display_name == goal.bookend) return false;
        }
    }
    return true;
}

std::vector<std::string> validate_goal(const GoalSpec& goal, const SceneState& scene) {
    std::vector<std::string> out;
    for (const auto& a : goal.forbidden_attributes) {
        if (!is_known_attribute(a)) out.push_back("unknown forbidden attribute: " + a);
    }
    for (const auto* p : {&goal.include, &goal.exclude}) {
        for (const auto& a : p->attributes) {
            if (!is_known_attribute(a)) out.push_back("unknown attribute: " + a);
        }
        for (const auto& c : p->color_tags) {
            if (!is_known_color(c)) out.push_back("unknown color tag: " + c);
        }
    }
    for (const auto& [cls, dest] : goal.destination_map) {
        if (!scene.is_container(dest)) out.push_back("destination is not a container: " + dest);
    }
    const auto st = evaluate_goal(scene, goal);
    for (const auto& id : st.targets) {
        const auto& obj = *scene.find(id);
        if (hard_excluded(obj, goal)) out.push_back("object both included and excluded: " + id);
        if (!mapped_destination(obj, goal)) out.push_back("target without destination: " + id);
    }
    return out;
}

}  // namespace hilo::sim
