#include "hilo/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>
#include <set>

#include "hilo/eval.hpp"
#include "hilo/grammar.hpp"
#include "hilo/highlevel.hpp"
#include "hilo/json_io.hpp"
#include "hilo/lowlevel.hpp"
#include "hilo/simenv.hpp"

namespace hilo::datagen {

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string join_and(const std::vector<std::string>& items) {
    if (items.empty()) return {};
    if (items.size() == 1) return items[0];
    if (items.size() == 2) return items[0] + " and " + items[1];
    std::string s;
    for (std::size_t i = 0; i + 1 < items.size(); ++i) s += items[i] + ", ";
    return s + "and " + items.back();
}

bool on_surface(const SceneObject& o) { return std::holds_alternative<Surface>(o.location); }
bool in_gripper(const SceneObject& o) { return std::holds_alternative<Gripper>(o.location); }
bool in_any_container(const SceneObject& o) { return std::holds_alternative<Container>(o.location); }

template <class T>
std::vector<T> read_jsonl(const std::filesystem::path& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::vector<T> out;
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(json::parse(line).get<T>());
        } catch (const json::exception& e) {
            throw std::runtime_error(path.string() + " line " + std::to_string(n) + ": bad " + what + ": " + e.what());
        }
    }
    return out;
}

template <class T>
void write_jsonl(const std::vector<T>& items, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& it : items) out << json(it).dump() << "\n";
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

// =========================================================================================
// Motion primitives
// =========================================================================================

namespace {

/// Grammar command for motion along action dimension `d` with `sign`.
std::optional<Skill> primitive_for(std::size_t d, double sign, std::size_t action_dim) {
    const bool bimanual = action_dim >= 14;
    if (d >= (bimanual ? 14u : 7u)) return std::nullopt;  // mobile base
    const std::size_t m = d % 7;
    std::optional<Arm> arm;
    if (bimanual) arm = d < 7 ? Arm::left : Arm::right;
    const bool pos = sign > 0;
    switch (m) {
        case 0:
            return Move{pos ? Direction::right : Direction::left, arm};
        case 1:
            return Move{pos ? Direction::higher : Direction::lower, arm};
        case 2:
            return Move{pos ? Direction::away_from_user : Direction::toward_user, arm};
        case 5:
            return Rotate{pos ? Rotation::cw : Rotation::ccw};
        default:
            return std::nullopt;
    }
}

bool gripper_dim(std::size_t d, std::size_t action_dim) {
    const std::size_t arm_dims = action_dim >= 14 ? 14 : 7;
    return d < arm_dims && d % 7 == 6;
}

}  // namespace

std::vector<Segment> extract_motion_primitives(const Episode& episode, const PrimitiveOptions& opt) {
    const auto& frames = episode.frames;
    std::vector<bool> covered(frames.size());
    for (const auto& s : episode.segments) {
        for (int i = std::max(0, s.start_frame); i <= s.end_frame && i < static_cast<int>(frames.size()); ++i) {
            covered[static_cast<std::size_t>(i)] = true;
        }
    }

    // Per frame: the dominant dimension and its sign, or -1.
    std::vector<std::pair<int, int>> tag(frames.size(), {-1, 0});
    for (std::size_t i = 1; i < frames.size(); ++i) {
        if (covered[i]) continue;
        const auto& a = frames[i].action;
        const auto& b = frames[i - 1].action;
        if (a.size() != b.size() || a.empty()) continue;
        const std::size_t n = a.size();
        bool grip_still = true;
        std::size_t best = 0;
        double best_abs = -1.0;
        for (std::size_t d = 0; d < n; ++d) {
            const double v = a[d] - b[d];
            if (gripper_dim(d, n)) {
                grip_still = grip_still && std::abs(v) <= opt.still;
                continue;
            }
            if (std::abs(v) > best_abs) {
                best_abs = std::abs(v);
                best = d;
            }
        }
        if (!grip_still || best_abs <= opt.still) continue;
        bool dominant = true;
        for (std::size_t d = 0; d < n; ++d) {
            if (d == best || gripper_dim(d, n)) continue;
            dominant = dominant && best_abs >= opt.dominance * std::abs(a[d] - b[d]);
        }
        if (dominant) tag[i] = {static_cast<int>(best), a[best] - b[best] > 0 ? 1 : -1};
    }

    std::vector<Segment> out;
    for (std::size_t i = 1; i < frames.size();) {
        if (tag[i].first < 0) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < frames.size() && tag[j + 1] == tag[i]) ++j;
        const auto d = static_cast<std::size_t>(tag[i].first);
        const std::size_t n = frames[i].action.size();
        std::vector<double> total(n, 0.0);
        for (std::size_t k = i; k <= j; ++k) {
            for (std::size_t e = 0; e < n; ++e) total[e] += frames[k].action[e] - frames[k - 1].action[e];
        }
        bool ok = std::abs(total[d]) >= opt.min_displacement;
        for (std::size_t e = 0; e < n && ok; ++e) {
            if (e != d && !gripper_dim(e, n)) ok = std::abs(total[d]) >= opt.dominance * std::abs(total[e]);
        }
        if (ok) {
            if (auto skill = primitive_for(d, tag[i].second, n)) {
                out.push_back(Segment{static_cast<int>(i), static_cast<int>(j), lowlevel::render_command(*skill)});
            }
        }
        i = j + 1;
    }
    return out;
}

// =========================================================================================
// Demonstrations
// =========================================================================================

Episode record_demo(const DemoSpec& spec) {
    const auto& cat = sim::catalog(spec.task);
    auto setup = sim::load_task(cat, spec.seed);
    auto scene = setup.scene;
    auto robot = setup.robot;
    const auto arms = cat.profile().arms();

    highlevel::DialogueContext ctx;
    ctx.task = spec.task;
    GoalSpec goal;
    highlevel::apply_prompt(spec.prompt, cat, ctx, goal);

    Rng rng(mix_seed(spec.seed, fnv1a(spec.id)));
    const lowlevel::ExecutorConfig exec;
    const lowlevel::LatencyModel latency;
    const Micros span = latency.chunk_span(exec.horizon);

    Episode ep;
    ep.id = spec.id;
    ep.task = spec.task;
    ep.goal_annotation = spec.prompt;
    Micros t{0};
    std::int64_t command_id = 0;

    auto run = [&](const SkillCommand& cmd) -> std::pair<int, int> {
        auto plan = lowlevel::begin_skill(scene, robot, cmd, rng, exec, latency, ++command_id);
        const int first = static_cast<int>(ep.frames.size());
        while (!plan.complete()) {
            const SceneState before = scene;
            const auto chunk = lowlevel::next_chunk(plan, robot);
            ep.frames.push_back(Frame{t, before, robot, chunk.actions.back()});
            t += span;
        }
        if (plan.effect) scene = *plan.effect;
        return {first, static_cast<int>(ep.frames.size()) - 1};
    };

    static const std::vector<Direction> directions = {Direction::left,   Direction::right,       Direction::higher,
                                                      Direction::lower,  Direction::toward_user, Direction::away_from_user};
    for (int step = 0; step < 60; ++step) {
        const auto d = highlevel::decide(scene, ctx, goal);
        ctx.pending_utterance.reset();
        const auto cmd = lowlevel::parse_command(d.skill_text);
        if (std::holds_alternative<Pick>(cmd.skill) && rng.bernoulli(spec.correction_probability)) {
            Move m{rng.pick(directions), std::nullopt};
            if (arms.size() > 1) m.arm = rng.pick(arms);
            run(lowlevel::bundled_grammar().make(m));
        }
        const auto [first, last] = run(cmd);
        if (last >= first) ep.segments.push_back(Segment{first, last, d.skill_text});
        ctx.prior_skills.push_back(d.skill_text);
        if (cmd.is_terminal()) break;
    }

    auto prims = extract_motion_primitives(ep);
    ep.segments.insert(ep.segments.end(), prims.begin(), prims.end());
    std::sort(ep.segments.begin(), ep.segments.end(),
              [](const Segment& a, const Segment& b) { return a.start_frame < b.start_frame; });
    return ep;
}

std::vector<DemoSpec> demo_specs(Task task, int count, std::uint64_t base_seed) {
    static const std::map<Task, std::vector<std::string>> prompts = {
        {Task::sandwich_making,
         {"make me a sandwich", "I'm vegetarian, can you make me a sandwich?", "Can you make me a sandwich? No pickles.",
          "I'm lactose intolerant, can you make me a sandwich?"}},
        {Task::grocery_shopping,
         {"Can you get me some snacks?", "Can you get me something sweet and something salty?",
          "Can you get me two sweet things?", "Get me some snacks, nothing salty."}},
        {Task::table_bussing, {"clean up the table", "can you clean up only the trash?", "bus the dishes"}},
    };
    const auto& list = prompts.at(task);
    std::vector<DemoSpec> out;
    for (int i = 0; i < count; ++i) {
        DemoSpec s;
        s.task = task;
        s.seed = base_seed + static_cast<std::uint64_t>(i);
        char id[64];
        std::snprintf(id, sizeof id, "%s_%03d", std::string(to_string(task)).c_str(), i);
        s.id = id;
        s.prompt = list[static_cast<std::size_t>(i) % list.size()];
        out.push_back(s);
    }
    return out;
}

void write_episodes(const std::vector<Episode>& episodes, const std::filesystem::path& path) {
    write_jsonl(episodes, path);
}

std::vector<Episode> read_episodes(const std::filesystem::path& path) { return read_jsonl<Episode>(path, "episode"); }

// =========================================================================================
// Templates
// =========================================================================================

namespace {

const std::set<std::string> kSlots = {"item",   "placed", "avoid", "remaining",   "diet",  "attr_request", "avoid_attr",
                                      "cover",  "other",  "color", "cover_items", "motion", "skill"};

std::vector<std::string> slots_in(const std::string& text) {
    static const std::regex slot(R"(\{([a-z_]+)\})");
    std::vector<std::string> out;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), slot); it != std::sregex_iterator(); ++it) {
        out.push_back((*it)[1].str());
    }
    return out;
}

void check_slots(const std::string& text) {
    for (const auto& s : slots_in(text)) {
        if (!kSlots.count(s)) throw std::invalid_argument("unknown template slot {" + s + "} in: " + text);
    }
}

}  // namespace

TemplateBank TemplateBank::from_json(const json& j) {
    TemplateBank b;
    try {
        for (const auto& [task_name, scenarios] : j.at("prompts").items()) {
            const auto task = parse_enum<Task>(task_name);
            for (const auto& [scenario_name, kinds] : scenarios.items()) {
                const auto scenario = parse_enum<ScenarioType>(scenario_name);
                for (const auto& [kind, list] : kinds.items()) {
                    auto texts = list.get<std::vector<std::string>>();
                    for (const auto& t : texts) check_slots(t);
                    b.prompts_[{task, scenario, kind}] = std::move(texts);
                }
            }
        }
        for (const auto& [key, list] : j.at("responses").items()) {
            auto texts = list.get<std::vector<std::string>>();
            for (const auto& t : texts) check_slots(t);
            b.responses_[key] = std::move(texts);
        }
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("bad template bank: ") + e.what());
    }
    return b;
}

TemplateBank TemplateBank::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    try {
        return from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
}

const std::vector<std::string>& TemplateBank::prompts(Task task, ScenarioType scenario, const std::string& kind) const {
    static const std::vector<std::string> none;
    auto it = prompts_.find({task, scenario, kind});
    return it == prompts_.end() ? none : it->second;
}

const std::vector<std::string>& TemplateBank::responses(const std::string& key) const {
    static const std::vector<std::string> none;
    auto it = responses_.find(key);
    return it == responses_.end() ? none : it->second;
}

const TemplateBank& bundled_templates() {
    static const TemplateBank bank = TemplateBank::load(sim::data_dir() / "templates.json");
    return bank;
}

// =========================================================================================
// Generation
// =========================================================================================

namespace {

/// Slot values for one segment. A slot is absent when the scene offers no
/// value that keeps the prompt consistent with the skill and prior skills.
struct Analysis {
    std::string kind;
    std::map<std::string, std::string> slots;
    std::map<std::string, std::vector<std::string>> objects;  // catalog names a slot mentions
};

void set_slot(Analysis& a, const std::string& name, std::string value, std::vector<std::string> objects = {}) {
    if (value.empty()) return;
    a.slots[name] = std::move(value);
    a.objects[name] = std::move(objects);
}

std::vector<const SceneObject*> placed_in(const SceneState& scene, const std::string& container, const std::string& skip = {}) {
    std::vector<const SceneObject*> out;
    for (const auto& o : scene.objects) {
        const auto* c = std::get_if<Container>(&o.location);
        if (c && c->name == container && o.display_name != skip) out.push_back(&o);
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const SceneObject* a, const SceneObject* b) { return a->placed_order < b->placed_order; });
    return out;
}

std::vector<std::string> names_of(const std::vector<const SceneObject*>& objs) {
    std::vector<std::string> out;
    for (const auto* o : objs) {
        if (std::find(out.begin(), out.end(), o->display_name) == out.end()) out.push_back(o->display_name);
    }
    return out;
}

bool shares_attribute(const std::vector<const SceneObject*>& objs, const std::set<std::string>& attrs) {
    for (const auto* o : objs) {
        for (const auto& a : o->attributes) {
            if (attrs.count(a)) return true;
        }
    }
    return false;
}

const std::vector<std::string> kNumberWords = {"", "one", "two", "three", "four", "five"};

void analyze_sandwich(const SegmentContext& ctx, const SkillCommand& cmd, const SceneObject* x, Analysis& a, Rng& rng) {
    const auto& cat = sim::catalog(ctx.task);
    const auto& scene = ctx.scene;
    const std::string stack = cat.destination_map.begin()->second;
    const auto placed = placed_in(scene, stack, cat.bookend);
    const bool stack_empty = placed_in(scene, stack).empty();
    std::vector<const SceneObject*> held, remaining;
    for (const auto& o : scene.objects) {
        if (o.display_name == cat.bookend) continue;
        if (in_gripper(o) && &o != x) held.push_back(&o);
        if (on_surface(o) && &o != x) remaining.push_back(&o);
    }

    const bool bread = x && x->display_name == cat.bookend;
    if (cmd.is_terminal() || (bread && !stack_empty)) {
        a.kind = "finish";
    } else if (bread) {
        a.kind = "bread";
    } else if (x) {
        a.kind = placed.empty() ? "filling" : "filling_more";
    } else {
        return;
    }

    if (x && !bread) set_slot(a, "item", x->display_name, {x->display_name});
    set_slot(a, "placed", join_and(names_of(placed)), names_of(placed));

    // Nothing the prompt rules out may be on the stack, in hand or the skill's object.
    std::vector<const SceneObject*> kept = placed;
    kept.insert(kept.end(), held.begin(), held.end());
    if (x && !bread) kept.push_back(x);

    if (a.kind == "finish") {
        set_slot(a, "remaining", join_and(names_of(remaining)), names_of(remaining));
        return;
    }

    static const std::vector<std::pair<std::string, std::set<std::string>>> diets = {
        {"vegetarian", {"meat"}}, {"lactose intolerant", {"dairy"}}, {"vegan", {"meat", "dairy"}}};
    std::vector<std::string> biting, feasible;
    for (const auto& [phrase, forbidden] : diets) {
        if (shares_attribute(kept, forbidden)) continue;
        feasible.push_back(phrase);
        if (shares_attribute(remaining, forbidden)) biting.push_back(phrase);
    }
    const auto& diet_pool = biting.empty() ? feasible : biting;
    if (!diet_pool.empty()) set_slot(a, "diet", rng.pick(diet_pool));

    std::vector<std::string> avoid_pool = names_of(remaining);
    if (avoid_pool.empty()) {
        std::set<std::string> present;
        for (const auto& o : scene.objects) present.insert(o.display_name);
        for (const auto& it : cat.items) {
            if (!present.count(it.name)) avoid_pool.push_back(it.name);
        }
    }
    if (!avoid_pool.empty()) {
        const auto y = rng.pick(avoid_pool);
        set_slot(a, "avoid", y, {y});
    }
}

void analyze_grocery(const SegmentContext& ctx, const SkillCommand& cmd, const SceneObject* x, Analysis& a, Rng& rng) {
    const auto& cat = sim::catalog(ctx.task);
    const auto& scene = ctx.scene;
    const std::string basket = cat.destination_map.begin()->second;
    const auto placed = placed_in(scene, basket);
    std::vector<const SceneObject*> held, shelf;
    for (const auto& o : scene.objects) {
        if (in_gripper(o) && &o != x) held.push_back(&o);
        if (on_surface(o) && &o != x) shelf.push_back(&o);
    }

    const auto* place = std::get_if<Place>(&cmd.skill);
    const bool delivery = place && cat.delivery && place->object == cat.delivery->container;
    if (cmd.is_terminal() || delivery) {
        a.kind = "deliver";
    } else if (x) {
        a.kind = placed.empty() ? "item" : "item_more";
    } else {
        return;
    }
    set_slot(a, "placed", join_and(names_of(placed)), names_of(placed));
    if (a.kind == "deliver") return;

    set_slot(a, "item", x->display_name, {x->display_name});

    static const std::vector<std::string> kinds = {"sweet", "salty", "drink"};
    std::vector<std::string> own;
    for (const auto& k : kinds) {
        if (x->attributes.count(k)) own.push_back(k);
    }
    if (!own.empty()) {
        const auto attr = rng.pick(own);
        int n = 1;
        for (const auto* h : held) n += h->attributes.count(attr) ? 1 : 0;
        if (n < static_cast<int>(kNumberWords.size())) {
            std::string phrase;
            if (n == 1) {
                phrase = attr == "drink" ? "something to drink" : "something " + attr;
            } else {
                phrase = kNumberWords[static_cast<std::size_t>(n)] + (attr == "drink" ? " drinks" : " " + attr + " things");
            }
            set_slot(a, "attr_request", phrase);
        }
    }

    std::vector<const SceneObject*> kept = placed;
    kept.insert(kept.end(), held.begin(), held.end());
    kept.push_back(x);
    std::vector<std::string> free_attrs;
    for (const auto& k : kinds) {
        if (!shares_attribute(kept, {k})) free_attrs.push_back(k);
    }
    if (!free_attrs.empty()) {
        const auto b = rng.pick(free_attrs);
        set_slot(a, "avoid_attr", b == "drink" ? "no drinks" : "nothing " + b);
    }
    const auto avoid_pool = names_of(shelf);
    if (!avoid_pool.empty()) {
        const auto y = rng.pick(avoid_pool);
        set_slot(a, "avoid", y, {y});
    }
}

void analyze_bussing(const SegmentContext& ctx, const SkillCommand& cmd, const SceneObject* x, Analysis& a, Rng& rng) {
    const auto& scene = ctx.scene;
    std::vector<const SceneObject*> placed;
    for (const auto& o : scene.objects) {
        if (in_any_container(o)) placed.push_back(&o);
    }
    if (cmd.is_terminal()) {
        a.kind = "finish";
        set_slot(a, "placed", join_and(names_of(placed)), names_of(placed));
        return;
    }
    if (!x) return;
    a.kind = "item";
    set_slot(a, "item", x->display_name, {x->display_name});
    set_slot(a, "placed", join_and(names_of(placed)), names_of(placed));

    std::vector<const SceneObject*> cover = placed;
    for (const auto& o : scene.objects) {
        if (in_gripper(o) && &o != x) cover.push_back(&o);
    }
    cover.push_back(x);
    bool trash = false, dish = false, utensil = false;
    for (const auto* o : cover) {
        trash = trash || o->object_class == ObjectClass::trash;
        dish = dish || o->object_class == ObjectClass::dish;
        utensil = utensil || o->object_class == ObjectClass::utensil;
    }
    std::vector<std::string> words;
    if (trash) words.push_back("trash");
    if (dish) words.push_back("dishes");
    else if (utensil) words.push_back("utensils");
    set_slot(a, "cover", join_and(words));
    if (trash && !dish && !utensil) set_slot(a, "other", "dishes");
    if (!trash) set_slot(a, "other", "trash");
    set_slot(a, "cover_items", join_and(names_of(cover)), names_of(cover));

    std::set<std::string> common = x->color_tags;
    for (const auto* o : cover) {
        std::set<std::string> keep;
        for (const auto& c : common) {
            if (o->color_tags.count(c)) keep.insert(c);
        }
        common = keep;
    }
    std::vector<std::string> colors;
    for (const auto& c : common) {
        if (is_known_color(c)) colors.push_back(c);
    }
    if (!colors.empty()) set_slot(a, "color", rng.pick(colors));
}

Analysis analyze(const SegmentContext& ctx, Rng& rng) {
    Analysis a;
    a.slots["skill"] = ctx.skill_label;
    SkillCommand cmd;
    try {
        cmd = lowlevel::parse_command(ctx.skill_label);
    } catch (const lowlevel::OutOfGrammar&) {
        return a;
    }
    if (std::holds_alternative<Move>(cmd.skill) || std::holds_alternative<Rotate>(cmd.skill) ||
        std::holds_alternative<GripperCommand>(cmd.skill)) {
        a.kind = "motion";
        set_slot(a, "motion", ctx.skill_label);
        return a;
    }
    const auto arms = sim::catalog(ctx.task).profile().arms();
    const SceneObject* x = nullptr;
    try {
        if (const auto* p = std::get_if<Pick>(&cmd.skill)) x = &lowlevel::resolve_object(ctx.scene, p->object);
        if (const auto* p = std::get_if<Place>(&cmd.skill); p && !(p->object && ctx.scene.container_at.count(*p->object))) {
            x = &lowlevel::resolve_held(ctx.scene, p->object, arms);
        }
    } catch (const lowlevel::NotFound&) {
        return a;
    }
    switch (ctx.task) {
        case Task::sandwich_making:
            analyze_sandwich(ctx, cmd, x, a, rng);
            break;
        case Task::grocery_shopping:
            analyze_grocery(ctx, cmd, x, a, rng);
            break;
        case Task::table_bussing:
            analyze_bussing(ctx, cmd, x, a, rng);
            break;
    }
    return a;
}

bool fillable(const std::string& text, const Analysis& a) {
    for (const auto& s : slots_in(text)) {
        if (!a.slots.count(s)) return false;
    }
    return true;
}

std::vector<std::string> usable(const std::vector<std::string>& texts, const Analysis& a) {
    std::vector<std::string> out;
    for (const auto& t : texts) {
        if (fillable(t, a)) out.push_back(t);
    }
    return out;
}

std::string fill(const std::string& text, const Analysis& a, std::vector<std::string>* mentioned) {
    std::string out;
    std::size_t i = 0;
    while (i < text.size()) {
        const auto open = text.find('{', i);
        if (open == std::string::npos) {
            out += text.substr(i);
            break;
        }
        const auto close = text.find('}', open);
        out += text.substr(i, open - i);
        const auto name = text.substr(open + 1, close - open - 1);
        out += a.slots.at(name);
        if (mentioned) {
            auto it = a.objects.find(name);
            if (it != a.objects.end()) {
                for (const auto& o : it->second) {
                    if (std::find(mentioned->begin(), mentioned->end(), o) == mentioned->end()) mentioned->push_back(o);
                }
            }
        }
        i = close + 1;
    }
    return out;
}

SyntheticInteraction generate_from(const SegmentContext& ctx, const Analysis& a, ScenarioType scenario, Rng& rng,
                                   const TemplateBank& bank) {
    const auto texts = usable(bank.prompts(ctx.task, scenario, a.kind), a);
    if (texts.empty()) throw NoTemplate(ctx.task, scenario, a.kind.empty() ? "unknown" : a.kind);

    SyntheticInteraction r;
    r.episode_id = ctx.episode_id;
    r.task = ctx.task;
    r.frame_index = ctx.frame_index;
    r.prior_skills = ctx.prior_skills;
    r.skill_label = ctx.skill_label;
    r.scenario_type = scenario;
    r.user_prompt = fill(rng.pick(texts), a, &r.mentioned_objects);

    r.response_type = draw_response_type(rng);
    switch (r.response_type) {
        case ResponseType::simple_confirmation: {
            const auto parse = highlevel::parse_goal(r.user_prompt, sim::catalog(ctx.task));
            r.robot_utterance = parse.clarify ? "Okay." : parse.utterance;
            break;
        }
        case ResponseType::clarification:
        case ResponseType::error_handling: {
            const std::string key = r.response_type == ResponseType::clarification ? "clarification" : "error_handling";
            auto options = usable(bank.responses(key), a);
            if (options.empty()) options = usable(bank.responses("fallback_" + key), a);
            if (options.empty()) {
                r.response_type = ResponseType::none;
            } else {
                r.robot_utterance = fill(rng.pick(options), a, nullptr);
            }
            break;
        }
        case ResponseType::none:
            break;
    }
    return r;
}

}  // namespace

ResponseType draw_response_type(Rng& rng) {
    const double u = rng.uniform();
    if (u < 0.5) return ResponseType::simple_confirmation;
    if (u < 0.7) return ResponseType::clarification;
    if (u < 0.8) return ResponseType::error_handling;
    return ResponseType::none;
}

std::vector<ScenarioType> available_scenarios(const SegmentContext& ctx, const TemplateBank& bank) {
    Rng rng(0);
    const auto a = analyze(ctx, rng);
    std::vector<ScenarioType> out;
    for (const auto& [s, name] : EnumNames<ScenarioType>::values) {
        if (!usable(bank.prompts(ctx.task, s, a.kind), a).empty()) out.push_back(s);
    }
    return out;
}

SyntheticInteraction generate_interaction(const SegmentContext& ctx, ScenarioType scenario, Rng& rng,
                                          const TemplateBank& bank) {
    const auto a = analyze(ctx, rng);
    return generate_from(ctx, a, scenario, rng, bank);
}

SyntheticInteraction generate_remote(const SegmentContext& ctx, ScenarioType scenario,
                                     const highlevel::RemoteBackend& backend) {
    highlevel::RemoteRequest req;
    req.task = ctx.task;
    req.views = ctx.scene;
    req.prior_skills = ctx.prior_skills;
    req.allowed_skills = {ctx.skill_label};
    req.scenario = scenario;
    const auto reply = backend.post(highlevel::to_wire(req));

    SyntheticInteraction r;
    r.episode_id = ctx.episode_id;
    r.task = ctx.task;
    r.frame_index = ctx.frame_index;
    r.prior_skills = ctx.prior_skills;
    r.skill_label = ctx.skill_label;
    r.scenario_type = scenario;
    using Kind = highlevel::BackendError::Kind;
    try {
        if (!reply.is_object() || !reply.contains("user_prompt") || !reply.at("user_prompt").is_string()) {
            throw highlevel::BackendError(Kind::malformed, "reply lacks user_prompt");
        }
        r.user_prompt = reply.at("user_prompt").get<std::string>();
        if (reply.contains("utterance") && !reply.at("utterance").is_null()) {
            r.robot_utterance = reply.at("utterance").get<std::string>();
        }
        if (reply.contains("response_type")) {
            r.response_type = reply.at("response_type").get<ResponseType>();
        } else {
            r.response_type = r.robot_utterance ? ResponseType::simple_confirmation : ResponseType::none;
        }
    } catch (const std::invalid_argument& e) {
        throw highlevel::BackendError(Kind::malformed, e.what());
    } catch (const json::exception& e) {
        throw highlevel::BackendError(Kind::malformed, e.what());
    }
    r.mentioned_objects = highlevel::mentioned_items(r.user_prompt, sim::catalog(ctx.task));
    return r;
}

// =========================================================================================
// Validation
// =========================================================================================

namespace {

/// Catalog item a grammar command handles, if it names one.
const sim::CatalogItem* handled_item(const SkillCommand& cmd, const sim::TaskCatalog& cat) {
    if (const auto* p = std::get_if<Pick>(&cmd.skill)) return cat.item(p->object);
    if (const auto* p = std::get_if<Place>(&cmd.skill); p && p->object) return cat.item(*p->object);
    return nullptr;
}

SceneObject as_object(const sim::CatalogItem& it) {
    SceneObject o;
    o.id = it.name;
    o.display_name = it.name;
    o.object_class = it.object_class;
    o.attributes = it.attributes;
    o.color_tags = it.color_tags;
    return o;
}

}  // namespace

std::vector<std::string> validate_interaction(const SyntheticInteraction& r) {
    std::vector<std::string> out;
    const auto& cat = sim::catalog(r.task);

    if (r.user_prompt.find_first_not_of(" \t") == std::string::npos) out.push_back("empty user prompt");
    if ((r.response_type == ResponseType::none) != !r.robot_utterance) {
        out.push_back("response type " + std::string(to_string(r.response_type)) + " disagrees with the utterance");
    }
    if (r.robot_utterance && r.robot_utterance->empty()) out.push_back("empty utterance");
    if (r.frame_index < 0) out.push_back("negative frame index");

    std::vector<SkillCommand> handled;
    auto check_skill = [&](const std::string& text, const std::string& what) {
        try {
            handled.push_back(lowlevel::parse_command(text));
        } catch (const lowlevel::OutOfGrammar&) {
            out.push_back(what + " out of grammar: " + text);
        }
    };
    for (const auto& s : r.prior_skills) check_skill(s, "prior skill");
    check_skill(r.skill_label, "skill label");

    const auto prompt = lowlevel::normalize_text(r.user_prompt);
    for (const auto& name : r.mentioned_objects) {
        if (!cat.item(name)) {
            out.push_back("mentioned object not in the catalog: " + name);
        } else if (prompt.find(name) == std::string::npos) {
            out.push_back("mentioned object missing from the prompt: " + name);
        }
    }
    for (const auto& name : highlevel::mentioned_items(r.user_prompt, cat)) {
        if (std::find(r.mentioned_objects.begin(), r.mentioned_objects.end(), name) == r.mentioned_objects.end()) {
            out.push_back("prompt names an object outside its slots: " + name);
        }
    }

    const auto goal = highlevel::parse_goal(r.user_prompt, cat).goal;
    std::set<std::string> reported;
    for (const auto& cmd : handled) {
        const auto* it = handled_item(cmd, cat);
        if (!it || it->name == cat.bookend || reported.count(it->name)) continue;
        if (sim::hard_excluded(as_object(*it), goal)) {
            out.push_back("prompt rules out " + it->name + ", which the skills handle");
            reported.insert(it->name);
        }
    }
    return out;
}

std::vector<std::string> validate_interaction(const json& record) {
    SyntheticInteraction r;
    try {
        r = record.get<SyntheticInteraction>();
    } catch (const std::exception& e) {
        return {std::string("malformed record: ") + e.what()};
    }
    return validate_interaction(r);
}

bool judgeable(const SyntheticInteraction& r) {
    try {
        const auto cmd = lowlevel::parse_command(r.skill_label);
        return std::holds_alternative<Pick>(cmd.skill) || std::holds_alternative<Place>(cmd.skill) || cmd.is_terminal();
    } catch (const lowlevel::OutOfGrammar&) {
        return false;
    }
}

bool round_trip_consistent(const SyntheticInteraction& r, const SceneState& scene) {
    const auto parse = highlevel::parse_goal(r.user_prompt, sim::catalog(r.task));
    highlevel::DialogueContext ctx;
    ctx.task = r.task;
    ctx.active_prompt = r.user_prompt;
    ctx.prior_skills = r.prior_skills;
    return eval::auto_judge(HighLevelDecision{r.skill_label, r.robot_utterance}, parse.goal, scene, ctx);
}

// =========================================================================================
// Datasets
// =========================================================================================

SegmentContext segment_context(const Episode& episode, std::size_t index) {
    const auto& seg = episode.segments.at(index);
    SegmentContext ctx;
    ctx.task = episode.task;
    ctx.episode_id = episode.id;
    ctx.frame_index = seg.start_frame;
    ctx.skill_label = seg.label;
    ctx.scene = episode.frames.at(static_cast<std::size_t>(seg.start_frame)).scene;
    for (std::size_t i = 0; i < index; ++i) ctx.prior_skills.push_back(episode.segments[i].label);
    return ctx;
}

std::vector<SyntheticInteraction> build_dataset(const std::vector<Episode>& episodes, const DatasetOptions& options,
                                                const TemplateBank& bank) {
    if (options.per_segment < 1) throw std::invalid_argument("per_segment must be positive");
    if (options.scenarios.empty()) throw std::invalid_argument("no scenarios requested");

    struct Job {
        std::size_t episode;
        std::size_t segment;
    };
    std::vector<Job> jobs;
    for (std::size_t e = 0; e < episodes.size(); ++e) {
        for (std::size_t s = 0; s < episodes[e].segments.size(); ++s) jobs.push_back({e, s});
    }
    std::optional<highlevel::RemoteBackend> backend;
    if (options.remote) backend.emplace(*options.remote);

    std::vector<std::vector<SyntheticInteraction>> results(jobs.size());
    std::vector<std::string> errors(jobs.size());
    auto work = [&](std::size_t i) {
        try {
            const auto& ep = episodes[jobs[i].episode];
            const auto ctx = segment_context(ep, jobs[i].segment);
            for (int k = 0; k < options.per_segment; ++k) {
                Rng rng(mix_seed(mix_seed(options.seed, fnv1a(ep.id)), jobs[i].segment * 1000 + static_cast<std::uint64_t>(k)));
                const auto a = analyze(ctx, rng);
                std::vector<ScenarioType> open;
                for (auto s : options.scenarios) {
                    if (backend || !usable(bank.prompts(ctx.task, s, a.kind), a).empty()) open.push_back(s);
                }
                if (open.empty()) break;
                const auto scenario = rng.pick(open);
                results[i].push_back(backend ? generate_remote(ctx, scenario, *backend)
                                             : generate_from(ctx, a, scenario, rng, bank));
            }
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    };

    const auto n = static_cast<std::int64_t>(jobs.size());
    if (options.parallel) {
#pragma omp parallel for schedule(dynamic)
        for (std::int64_t i = 0; i < n; ++i) work(static_cast<std::size_t>(i));
    } else {
        for (std::int64_t i = 0; i < n; ++i) work(static_cast<std::size_t>(i));
    }

    std::vector<SyntheticInteraction> out;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (!errors[i].empty()) {
            throw std::runtime_error("episode " + episodes[jobs[i].episode].id + " segment " +
                                     std::to_string(jobs[i].segment) + ": " + errors[i]);
        }
        for (auto& r : results[i]) out.push_back(std::move(r));
    }
    return out;
}

void write_dataset(const std::vector<SyntheticInteraction>& records, const std::filesystem::path& path) {
    write_jsonl(records, path);
}

std::vector<SyntheticInteraction> read_dataset(const std::filesystem::path& path) {
    return read_jsonl<SyntheticInteraction>(path, "record");
}

}  // namespace hilo::datagen
