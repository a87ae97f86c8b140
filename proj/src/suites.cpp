#include <algorithm>
#include <fstream>

#include "hilo/eval.hpp"
#include "hilo/json_io.hpp"
#include "hilo/simenv.hpp"

namespace hilo::eval {

void to_json(json& j, const Suite& s) {
    j = json{{"name", s.name}, {"task", s.task}, {"constrained", s.constrained}, {"trials", s.trials}};
}

void from_json(const json& j, Suite& s) {
    s.name = j.at("name").get<std::string>();
    s.task = j.at("task").get<Task>();
    s.constrained = j.value("constrained", false);
    s.trials = j.at("trials").get<std::vector<orch::UserScript>>();
}

Suite load_suite(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read suite " + path.string());
    Suite s;
    try {
        s = json::parse(in).get<Suite>();
    } catch (const json::exception& e) {
        throw std::runtime_error("bad suite " + path.string() + ": " + e.what());
    }
    for (std::size_t i = 0; i < s.trials.size(); ++i) {
        if (s.trials[i].task != s.task) throw std::runtime_error("trial " + std::to_string(i) + " has another task");
        if (auto errs = s.trials[i].validate(); !errs.empty()) {
            throw std::runtime_error("trial " + std::to_string(i) + ": " + errs.front());
        }
    }
    return s;
}

void save_suite(const Suite& suite, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write suite " + path.string());
    out << json(suite).dump(1) << "\n";
}

std::string_view suite_name(SuiteKind kind) {
    switch (kind) {
        case SuiteKind::constrained_bussing:
            return "constrained_bussing";
        case SuiteKind::interjection_bussing:
            return "interjection_bussing";
        case SuiteKind::constrained_sandwich:
            return "constrained_sandwich";
        case SuiteKind::grocery_additions:
            return "grocery_additions";
    }
    return "?";
}

std::vector<SuiteKind> all_suite_kinds() {
    return {SuiteKind::constrained_bussing, SuiteKind::interjection_bussing, SuiteKind::constrained_sandwich,
            SuiteKind::grocery_additions};
}

namespace {

using orch::ScriptStep;
using orch::Trigger;
using orch::UserScript;

ScriptStep prompt_at_start(std::string text) {
    ScriptStep s;
    s.trigger.kind = Trigger::Kind::at_time;
    s.event = {UserEvent::Kind::prompt, std::move(text), Micros{0}};
    return s;
}

ScriptStep after_skills(int n, UserEvent::Kind kind, std::string text = {}) {
    ScriptStep s;
    s.trigger.kind = Trigger::Kind::on_skill_done;
    s.trigger.count = n;
    s.event = {kind, std::move(text), Micros{0}};
    return s;
}

ScriptStep on_command(std::string pattern, Micros delay, std::string text) {
    ScriptStep s;
    s.trigger.kind = Trigger::Kind::on_command_matching;
    s.trigger.pattern = std::move(pattern);
    s.trigger.delay = delay;
    s.event = {UserEvent::Kind::interjection, std::move(text), Micros{0}};
    return s;
}

const SceneObject* named(const SceneState& scene, std::string_view name) {
    for (const auto& o : scene.objects) {
        if (o.display_name == name) return &o;
    }
    return nullptr;
}

std::vector<const SceneObject*> fillings(const SceneState& scene, std::string_view bookend) {
    std::vector<const SceneObject*> out;
    for (const auto& o : scene.objects) {
        if (o.display_name != bookend) out.push_back(&o);
    }
    return out;
}

std::string join_with_and(const std::vector<std::string>& items) {
    if (items.size() == 1) return items[0];
    if (items.size() == 2) return items[0] + " and " + items[1];
    std::string s;
    for (std::size_t i = 0; i + 1 < items.size(); ++i) s += items[i] + ", ";
    return s + "and " + items.back();
}

// Each builder returns nullopt when the scene for `seed` does not suit variant
// `v`; the caller then tries the next seed.
using Builder = std::function<std::optional<UserScript>(int v, std::uint64_t seed, const SceneState& scene)>;

std::optional<UserScript> constrained_bussing(int v, std::uint64_t, const SceneState&) {
    const auto base = sim::default_goal(sim::catalog(Task::table_bussing));
    UserScript s;
    GoalSpec truth = base;
    truth.include = Predicate{};
    switch (v % 3) {
        case 0:
            s.steps.push_back(prompt_at_start("can you clean up only the trash, but not dishes?"));
            truth.include.classes = {ObjectClass::trash};
            truth.exclude.classes = {ObjectClass::dish, ObjectClass::utensil};
            break;
        case 1:
            s.steps.push_back(prompt_at_start("can you clean up only the dishes?"));
            truth.include.classes = {ObjectClass::dish, ObjectClass::utensil};
            break;
        default:
            s.steps.push_back(prompt_at_start("bus all the yellowish things"));
            truth.include.color_tags = {"yellowish"};
            break;
    }
    s.ground_truth = {truth};
    return s;
}

std::optional<UserScript> interjection_bussing(int v, std::uint64_t, const SceneState& scene) {
    const auto base = sim::default_goal(sim::catalog(Task::table_bussing));
    UserScript s;
    s.steps.push_back(prompt_at_start("clean up the table"));
    s.ground_truth.push_back(base);
    switch (v % 3) {
        case 0: {
            const auto* bowl = named(scene, "paper bowl");
            if (!bowl) return std::nullopt;
            s.steps.push_back(on_command("^put the paper bowl in the trash bin$", Micros{0}, "that's not trash"));
            GoalSpec g = base;
            g.excluded_ids.insert(bowl->id);
            g.class_overrides[bowl->id] = ObjectClass::dish;
            s.ground_truth.push_back(g);
            break;
        }
        case 1: {
            // The robot clears the table in id order; stop it on its second pick.
            if (scene.objects.size() < 3) return std::nullopt;
            const auto& second = scene.objects[1];
            s.steps.push_back(on_command("^pick up the " + second.display_name + "$", millis(500), "leave it alone"));
            GoalSpec g = base;
            g.excluded_ids.insert(second.id);
            s.ground_truth.push_back(g);
            s.steps.push_back(after_skills(4, UserEvent::Kind::resume));
            s.ground_truth.push_back(base);
            break;
        }
        default: {
            s.steps.push_back(after_skills(4, UserEvent::Kind::interjection, "ok, leave the rest"));
            GoalSpec g = base;
            g.halt = true;
            s.ground_truth.push_back(g);
            break;
        }
    }
    return s;
}

std::optional<UserScript> constrained_sandwich(int v, std::uint64_t, const SceneState& scene) {
    const auto& cat = sim::catalog(Task::sandwich_making);
    const auto base = sim::default_goal(cat);
    const auto fill = fillings(scene, cat.bookend);
    auto has_attr = [&](const char* a) {
        return std::any_of(fill.begin(), fill.end(), [a](const SceneObject* o) { return o->attributes.count(a) > 0; });
    };
    UserScript s;
    GoalSpec truth = base;
    switch (v % 4) {
        case 0: {
            if (!has_attr("meat") && !named(scene, "pickles")) return std::nullopt;
            s.steps.push_back(
                prompt_at_start("Hi robot, can you make me a sandwich? I'm vegetarian and I'm allergic to pickles."));
            truth.forbidden_attributes = {"meat"};
            truth.exclude.names = {"pickles"};
            s.ground_truth = {truth};
            break;
        }
        case 1: {
            if (fill.size() < 2) return std::nullopt;
            std::vector<std::string> chosen;
            const std::size_t k = std::min<std::size_t>(3, fill.size() - 1);
            for (const char* pref : {"cheese", "roast beef", "lettuce", "tomato", "ham", "pickles"}) {
                if (chosen.size() < k && named(scene, pref)) chosen.push_back(pref);
            }
            s.steps.push_back(prompt_at_start("can you make me a sandwich with " + join_with_and(chosen) + "?"));
            truth.include = Predicate{};
            truth.include.names.insert(chosen.begin(), chosen.end());
            s.ground_truth = {truth};
            break;
        }
        case 2: {
            if (fill.size() < 2) return std::nullopt;
            s.steps.push_back(prompt_at_start("make me a sandwich"));
            s.ground_truth.push_back(truth);
            s.steps.push_back(after_skills(4, UserEvent::Kind::interjection, "that's all, no more"));
            // Bread and the first filling are on the stack by then.
            GoalSpec g = truth;
            for (std::size_t i = 1; i < fill.size(); ++i) g.excluded_ids.insert(fill[i]->id);
            s.ground_truth.push_back(g);
            break;
        }
        default: {
            if (!has_attr("dairy")) return std::nullopt;
            s.steps.push_back(prompt_at_start("I'm lactose intolerant, can you make me a sandwich?"));
            truth.forbidden_attributes = {"dairy"};
            s.ground_truth = {truth};
            break;
        }
    }
    return s;
}

std::optional<UserScript> grocery_additions(int v, std::uint64_t, const SceneState& scene) {
    const auto base = sim::default_goal(sim::catalog(Task::grocery_shopping));
    static const std::vector<std::pair<std::string, std::string>> variants = {
        {"sweet", "Can you get me something sweet?"},
        {"drink", "Can you get me something to drink?"},
        {"salty", "Can you get me something salty?"},
    };
    const auto& [attr, prompt] = variants[v % 3];
    if (!named(scene, "kitkat")) return std::nullopt;
    const bool other = std::any_of(scene.objects.begin(), scene.objects.end(), [&](const SceneObject& o) {
        return o.display_name != "kitkat" && o.attributes.count(attr) > 0;
    });
    if (!other) return std::nullopt;

    UserScript s;
    GoalSpec g = base;
    g.include = Predicate{};
    g.required_items = {ItemRequest{"", attr, 1}};
    s.steps.push_back(prompt_at_start(prompt));
    s.ground_truth.push_back(g);
    s.steps.push_back(after_skills(2, UserEvent::Kind::interjection, "I also want some Kitkat"));
    g.required_items.push_back(ItemRequest{"kitkat", "", 1});
    s.ground_truth.push_back(g);
    return s;
}

}  // namespace

Suite build_suite(SuiteKind kind, int trials, std::uint64_t base_seed) {
    Suite suite;
    suite.name = std::string(suite_name(kind));
    Builder builder;
    switch (kind) {
        case SuiteKind::constrained_bussing:
            suite.task = Task::table_bussing;
            suite.constrained = true;
            builder = constrained_bussing;
            break;
        case SuiteKind::interjection_bussing:
            suite.task = Task::table_bussing;
            builder = interjection_bussing;
            break;
        case SuiteKind::constrained_sandwich:
            suite.task = Task::sandwich_making;
            suite.constrained = true;
            builder = constrained_sandwich;
            break;
        case SuiteKind::grocery_additions:
            suite.task = Task::grocery_shopping;
            builder = grocery_additions;
            break;
    }
    std::uint64_t seed = base_seed;
    for (int i = 0; i < trials; ++i) {
        for (int attempts = 0;; ++attempts, ++seed) {
            if (attempts > 1000) throw std::runtime_error("no suitable scene for " + suite.name);
            const auto scene = sim::load_task(suite.task, seed).scene;
            auto script = builder(i, seed, scene);
            if (!script) continue;
            script->name = suite.name;
            script->task = suite.task;
            script->seed = seed++;
            suite.trials.push_back(std::move(*script));
            break;
        }
    }
    return suite;
}

}  // namespace hilo::eval
