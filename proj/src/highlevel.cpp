#include "hilo/highlevel.hpp"

#include <algorithm>
#include <regex>

#include "hilo/grammar.hpp"

namespace hilo::highlevel {

using lowlevel::normalize_text;
using lowlevel::split_words;

bool DialogueContext::has_unhandled() const {
    return std::any_of(interjection_stack.begin(), interjection_stack.end(),
                       [](const InterjectionFrame& f) { return !f.handled; });
}

// =========================================================================================
// Lexical helpers
// =========================================================================================

namespace {

std::string join_list(const std::vector<std::string>& items, std::string_view conj) {
    if (items.empty()) return {};
    if (items.size() == 1) return items[0];
    if (items.size() == 2) return items[0] + " " + std::string(conj) + " " + items[1];
    std::string s;
    for (std::size_t i = 0; i + 1 < items.size(); ++i) s += items[i] + ", ";
    return s + std::string(conj) + " " + items.back();
}

std::vector<std::string> name_variants(const std::string& name) {
    std::vector<std::string> v = {name, name + "s", name + "es"};
    if (name.size() > 1 && name.back() == 's') v.push_back(name.substr(0, name.size() - 1));
    if (name == "kitkat") v.push_back("kit kat");
    return v;
}

bool words_at(const std::vector<std::string>& words, std::size_t i, const std::vector<std::string>& phrase) {
    if (i + phrase.size() > words.size()) return false;
    for (std::size_t k = 0; k < phrase.size(); ++k) {
        if (words[i + k] != phrase[k]) return false;
    }
    return true;
}

enum class Polarity { neutral, positive, negative };

struct Mention {
    std::string item;  // catalog name, class noun or attribute, by kind
    enum class Kind { item, klass, color, attribute } kind = Kind::item;
    Polarity polarity = Polarity::neutral;
    bool only = false;
    int count = 1;
};

const std::set<std::string> kNegativeCues = {"no",   "without", "not",   "allergic", "hold",   "except", "skip",
                                             "don't", "dont",   "hate",  "never",    "avoid",  "minus",  "leave",
                                             "nothing"};
const std::set<std::string> kPositiveCues = {"with", "add", "include", "plus", "extra", "also"};
const std::set<std::string> kResetCues = {"but", "then", "please"};

const std::map<std::string, std::set<ObjectClass>> kClassWords = {
    {"trash", {ObjectClass::trash}},     {"garbage", {ObjectClass::trash}},   {"rubbish", {ObjectClass::trash}},
    {"dishes", {ObjectClass::dish, ObjectClass::utensil}},                      {"dish", {ObjectClass::dish}},
    {"utensils", {ObjectClass::utensil}}, {"utensil", {ObjectClass::utensil}}, {"silverware", {ObjectClass::utensil}},
    {"cutlery", {ObjectClass::utensil}},
};

const std::map<std::string, std::string> kAttributeWords = {
    {"sweet", "sweet"},    {"sweets", "sweet"}, {"sugary", "sweet"}, {"candy", "sweet"},
    {"salty", "salty"},    {"savory", "salty"}, {"drink", "drink"},  {"drinks", "drink"},
    {"beverage", "drink"}, {"thirsty", "drink"},
};

const std::map<std::string, int> kNumbers = {{"one", 1}, {"two", 2},   {"three", 3}, {"four", 4}, {"five", 5},
                                             {"1", 1},   {"2", 2},     {"3", 3},     {"4", 4},    {"5", 5},
                                             {"a couple", 2}, {"couple", 2}};

const std::set<std::string> kColorNouns = {"things", "items", "objects", "stuff", "ones"};

int count_before(const std::vector<std::string>& words, std::size_t i) {
    for (std::size_t back = 1; back <= 2 && back <= i; ++back) {
        auto it = kNumbers.find(words[i - back]);
        if (it != kNumbers.end()) return it->second;
    }
    return 1;
}

/// Splits on sentence punctuation, then scans each clause word by word,
/// tracking whether the current phrase affirms or negates what follows.
std::vector<Mention> scan(std::string_view text, const sim::TaskCatalog& catalog, bool classes_and_colors,
                          bool attributes) {
    std::vector<std::pair<std::vector<std::string>, std::string>> names;  // (variant words, item)
    for (const auto& it : catalog.items) {
        for (const auto& v : name_variants(it.name)) names.emplace_back(split_words(v), it.name);
    }
    std::stable_sort(names.begin(), names.end(), [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });

    std::vector<Mention> out;
    std::string clause;
    std::vector<std::string> clauses;
    for (char c : text) {
        if (c == '.' || c == '?' || c == '!' || c == ';') {
            clauses.push_back(clause);
            clause.clear();
        } else {
            clause.push_back(c);
        }
    }
    clauses.push_back(clause);

    for (const auto& cl : clauses) {
        const auto words = split_words(normalize_text(cl));
        Polarity pol = Polarity::neutral;
        bool only = false;
        for (std::size_t i = 0; i < words.size();) {
            const auto& w = words[i];
            bool matched = false;
            for (const auto& [phrase, item] : names) {
                if (words_at(words, i, phrase)) {
                    out.push_back({item, Mention::Kind::item, pol, only, count_before(words, i)});
                    i += phrase.size();
                    matched = true;
                    break;
                }
            }
            if (matched) continue;
            if (classes_and_colors && kClassWords.count(w)) {
                out.push_back({w, Mention::Kind::klass, pol, only, 1});
            } else if (classes_and_colors && is_known_color(w) &&
                       (w.ends_with("ish") || (i + 1 < words.size() && kColorNouns.count(words[i + 1])))) {
                out.push_back({w, Mention::Kind::color, pol, only, 1});
            } else if (attributes && kAttributeWords.count(w)) {
                out.push_back({kAttributeWords.at(w), Mention::Kind::attribute, pol, only, count_before(words, i)});
            } else if (w == "only" || w == "just") {
                only = true;
                pol = Polarity::positive;
            } else if (kNegativeCues.count(w)) {
                pol = Polarity::negative;
                only = false;
            } else if (kPositiveCues.count(w)) {
                pol = Polarity::positive;
            } else if (kResetCues.count(w)) {
                pol = Polarity::neutral;
                only = false;
            }
            ++i;
        }
    }
    return out;
}

std::set<std::string> diet_forbidden(const std::string& t) {
    std::set<std::string> f;
    auto has = [&t](const char* s) { return (" " + t + " ").find(std::string(" ") + s + " ") != std::string::npos; };
    if (has("vegetarian") || has("no meat") || has("without meat")) f.insert("meat");
    if (has("vegan")) f.insert({"meat", "dairy"});
    if (has("lactose intolerant") || has("lactose") || has("dairy-free") || has("dairy free") || has("no dairy") ||
        has("without dairy")) {
        f.insert("dairy");
    }
    return f;
}

/// Catalog items a goal rules out by name or attribute, in catalog order.
std::vector<std::string> ruled_out(const sim::TaskCatalog& catalog, const std::set<std::string>& names,
                                   const std::set<std::string>& forbidden) {
    std::vector<std::string> out;
    for (const auto& it : catalog.items) {
        if (it.name == catalog.bookend) continue;
        bool hit = names.count(it.name) > 0;
        for (const auto& a : it.attributes) hit = hit || forbidden.count(a) > 0;
        if (hit) out.push_back(it.name);
    }
    return out;
}

bool has_task_verb(const std::string& t) {
    static const std::regex verbs(
        R"(\b(clean|bus|tidy|clear|pick|put|throw|make|get|grab|bring|fetch|buy|want|need|sandwich|table)\b)");
    return std::regex_search(t, verbs);
}

std::string describe_classes(const std::set<ObjectClass>& classes) {
    const bool dish = classes.count(ObjectClass::dish) > 0;
    const bool utensil = classes.count(ObjectClass::utensil) > 0;
    std::vector<std::string> parts;
    if (classes.count(ObjectClass::trash)) parts.push_back("trash");
    if (dish && utensil) {
        parts.push_back("dishes");
    } else if (dish) {
        parts.push_back("dishes");
    } else if (utensil) {
        parts.push_back("utensils");
    }
    return join_list(parts, "and");
}

// ---------------------------------------------------------------------------------------------

GoalParse parse_bussing(const std::string& t, std::string_view raw, const sim::TaskCatalog& catalog) {
    GoalParse r;
    r.goal = sim::default_goal(catalog);
    const auto mentions = scan(raw, catalog, true, false);
    Predicate inc, exc;
    std::vector<std::string> inc_desc, exc_desc;
    for (const auto& m : mentions) {
        auto& p = m.polarity == Polarity::negative ? exc : inc;
        auto& desc = m.polarity == Polarity::negative ? exc_desc : inc_desc;
        switch (m.kind) {
            case Mention::Kind::item:
                p.names.insert(m.item);
                desc.push_back(m.item);
                break;
            case Mention::Kind::klass:
                for (auto c : kClassWords.at(m.item)) p.classes.insert(c);
                desc.push_back(describe_classes(kClassWords.at(m.item)));
                break;
            case Mention::Kind::color:
                p.color_tags.insert(m.item);
                if (m.item == "yellowish") p.color_tags.insert("yellow");
                desc.push_back(m.item + " things");
                break;
            case Mention::Kind::attribute:
                break;
        }
    }
    if (!inc.empty()) r.goal.include = inc;
    r.goal.exclude = exc;
    if (inc.empty() && exc.empty() && !has_task_verb(t)) {
        r.clarify = true;
        r.utterance = "Sorry, I'm not sure what you want me to clean up. I'll clear the table.";
        return r;
    }
    if (!inc.empty()) {
        r.utterance = "Sure, I'll only clean up the " + join_list(inc_desc, "and") + ".";
    } else {
        r.utterance = "Sure, I'll clean up the table.";
    }
    if (!exc.empty()) r.utterance += " I won't touch the " + join_list(exc_desc, "or") + ".";
    return r;
}

GoalParse parse_sandwich(const std::string& t, std::string_view raw, const sim::TaskCatalog& catalog) {
    GoalParse r;
    r.goal = sim::default_goal(catalog);
    r.goal.forbidden_attributes = diet_forbidden(t);
    std::vector<std::string> wanted;
    for (const auto& m : scan(raw, catalog, false, false)) {
        if (m.item == catalog.bookend) continue;
        if (m.polarity == Polarity::negative) {
            r.goal.exclude.names.insert(m.item);
        } else if (std::find(wanted.begin(), wanted.end(), m.item) == wanted.end()) {
            wanted.push_back(m.item);
        }
    }
    if (!wanted.empty()) {
        r.goal.include = Predicate{};
        r.goal.include.names.insert(wanted.begin(), wanted.end());
    }
    const auto out = ruled_out(catalog, r.goal.exclude.names, r.goal.forbidden_attributes);
    if (!out.empty()) {
        r.utterance = "Sure, I won't put " + join_list(out, "or") + " on it.";
    } else if (!wanted.empty()) {
        r.utterance = "Sure, I'll make it with " + join_list(wanted, "and") + ".";
    } else if (has_task_verb(t)) {
        r.utterance = "Sure, I'll make you a sandwich.";
    } else {
        r.clarify = true;
        r.utterance = "Sorry, I didn't get that. I'll make a sandwich with everything.";
    }
    return r;
}

GoalParse parse_grocery(const std::string& t, std::string_view raw, const sim::TaskCatalog& catalog) {
    GoalParse r;
    r.goal = sim::default_goal(catalog);
    std::vector<ItemRequest> requests;
    std::vector<std::string> desc;
    for (const auto& m : scan(raw, catalog, false, true)) {
        if (m.polarity == Polarity::negative) {
            if (m.kind == Mention::Kind::item) r.goal.exclude.names.insert(m.item);
            if (m.kind == Mention::Kind::attribute) r.goal.forbidden_attributes.insert(m.item);
            continue;
        }
        ItemRequest req;
        if (m.kind == Mention::Kind::item) {
            req.name = m.item;
            desc.push_back(m.count > 1 ? std::to_string(m.count) + " " + m.item : m.item);
        } else {
            req.attribute = m.item;
            const std::string what = m.item == "drink" ? "to drink" : m.item;
            desc.push_back(m.count > 1 ? std::to_string(m.count) + " things " + what : "something " + what);
        }
        req.count = m.count;
        requests.push_back(req);
    }
    if (!requests.empty()) {
        r.goal.include = Predicate{};
        r.goal.required_items = requests;
        r.utterance = "Sure, I'll get you " + join_list(desc, "and") + ".";
    } else if (has_task_verb(t) && r.goal.exclude.empty() && r.goal.forbidden_attributes.empty()) {
        r.clarify = true;
        r.utterance = "What would you like me to get? I'll bring everything for now.";
    } else {
        r.clarify = true;
        r.utterance = "Sorry, I didn't catch what you need. I'll bring everything for now.";
    }
    return r;
}

const SceneObject* first_held(const SceneState& views) {
    const SceneObject* best = nullptr;
    for (const auto& o : views.objects) {
        const auto* g = std::get_if<Gripper>(&o.location);
        if (g && (!best || g->arm < std::get<Gripper>(best->location).arm)) best = &o;
    }
    return best;
}

/// The object an interjection like "leave it alone" refers to: what the robot
/// holds, else what it last went for.
const SceneObject* current_object(const SceneState& views, const DialogueContext& ctx) {
    if (const auto* h = first_held(views)) return h;
    if (ctx.last_target) return views.find(*ctx.last_target);
    return nullptr;
}

void sync_mirror(DialogueContext& ctx, const GoalSpec& goal) {
    ctx.excluded_ids = goal.excluded_ids;
    ctx.reclassified = goal.class_overrides;
}

}  // namespace

std::vector<std::string> mentioned_items(std::string_view text, const sim::TaskCatalog& catalog) {
    std::vector<std::string> out;
    for (const auto& m : scan(text, catalog, false, false)) {
        if (std::find(out.begin(), out.end(), m.item) == out.end()) out.push_back(m.item);
    }
    return out;
}

GoalParse parse_goal(std::string_view prompt, const sim::TaskCatalog& catalog) {
    const auto t = normalize_text(prompt);
    switch (catalog.task) {
        case Task::table_bussing:
            return parse_bussing(t, prompt, catalog);
        case Task::sandwich_making:
            return parse_sandwich(t, prompt, catalog);
        case Task::grocery_shopping:
            return parse_grocery(t, prompt, catalog);
    }
    return {};
}

void apply_prompt(std::string_view prompt, const sim::TaskCatalog& catalog, DialogueContext& ctx, GoalSpec& goal) {
    ctx.task = catalog.task;
    ctx.active_prompt = std::string(prompt);
    ctx.interjection_stack.clear();
    ctx.added_requests.clear();
    if (ctx.ignore_constraints) {
        goal = sim::default_goal(catalog);
        ctx.pending_utterance = "Sure.";
    } else {
        auto parsed = parse_goal(prompt, catalog);
        goal = std::move(parsed.goal);
        ctx.pending_utterance = parsed.utterance;
    }
    sync_mirror(ctx, goal);
}

// =========================================================================================
// Decisions
// =========================================================================================

HighLevelDecision decide(const SceneState& views, const DialogueContext& ctx, const GoalSpec& goal) {
    const auto& grammar = lowlevel::bundled_grammar();
    const auto st = sim::evaluate_goal(views, goal);
    HighLevelDecision d;
    d.utterance = ctx.pending_utterance;

    if (const auto* held = first_held(views)) {
        const bool wanted = st.is_target(held->id);
        d.skill_text = grammar.render(Place{held->display_name, sim::destination_for(*held, goal, !wanted)});
        return d;
    }
    if (!st.displaced_excluded.empty()) {
        d.skill_text = grammar.render(Pick{views.find(st.displaced_excluded.front())->display_name});
        return d;
    }
    if (!goal.halt && !st.pickable.empty()) {
        d.skill_text = grammar.render(Pick{views.find(st.pickable.front())->display_name});
        return d;
    }
    if (st.delivery_pending) {
        d.skill_text = grammar.render(Place{goal.delivery->container, goal.delivery->surface});
        return d;
    }
    d.skill_text = grammar.render(Home{});
    if (!d.utterance && (ctx.prior_skills.empty() || ctx.prior_skills.back() != d.skill_text)) {
        d.utterance = "All done!";
    }
    return d;
}

InterjectionResult handle_interjection(std::string_view text, Micros time, const SceneState& views,
                                       const DialogueContext& ctx, const GoalSpec& goal) {
    InterjectionResult r{ctx, goal, {}, false};
    auto& c = r.ctx;
    auto& g = r.goal;
    c.interjection_stack.push_back({std::string(text), time, false, goal, ctx.active_prompt});

    const auto& catalog = sim::catalog(ctx.task);
    const auto t = normalize_text(text);
    static const std::regex not_trash(R"(\b(that|this|it)('s| is| was)? not (trash|garbage|rubbish)\b)");
    static const std::regex leave_alone(R"(\bleave (it|that|this|the [a-z' -]+) alone\b|\bdon't (touch|take) (it|that|this)\b)");
    static const std::regex leave_rest(R"(\bleave the rest\b|\bstop there\b|\bstop here\b)");
    static const std::regex enough(R"(\bthat's (all|enough)\b|\bno more\b)");
    static const std::regex wants_more(R"(\b(also|more|another|add|want|some)\b)");

    auto clarify = [&] {
        c.pending_utterance = "Sorry, I didn't catch that. Could you say it another way?";
        r.understood = false;
    };

    if (ctx.ignore_constraints) {
        c.pending_utterance = "Okay.";
        r.understood = false;
    } else if (std::regex_search(t, not_trash)) {
        if (const auto* obj = current_object(views, ctx)) {
            g.class_overrides[obj->id] = ObjectClass::dish;
            g.excluded_ids.insert(obj->id);
            c.pending_utterance = "Sorry about that, I'll put the " + obj->display_name + " back.";
            r.understood = true;
        } else {
            clarify();
        }
    } else if (std::regex_search(t, leave_alone)) {
        const SceneObject* obj = nullptr;
        const auto named = mentioned_items(text, catalog);
        if (!named.empty()) {
            for (const auto& o : views.objects) {
                if (o.display_name == named.front()) {
                    obj = &o;
                    break;
                }
            }
        } else {
            obj = current_object(views, ctx);
        }
        if (obj) {
            g.excluded_ids.insert(obj->id);
            c.pending_utterance = "Okay, I'll leave the " + obj->display_name + " alone.";
            r.understood = true;
        } else {
            clarify();
        }
    } else if (std::regex_search(t, leave_rest)) {
        g.halt = true;
        c.pending_utterance = "Okay, I'll leave the rest.";
        r.understood = true;
    } else if (std::regex_search(t, enough)) {
        const auto st = sim::evaluate_goal(views, goal);
        if (!goal.required_items.empty() && !goal.ordered) {
            // Keep what is already in the basket or in hand.
            std::set<std::string> kept;
            for (const auto& id : st.targets) {
                const auto& o = *views.find(id);
                if (std::find(st.pending.begin(), st.pending.end(), id) == st.pending.end()) kept.insert(o.id);
            }
            for (auto& req : g.required_items) {
                int n = 0;
                for (auto it = kept.begin(); it != kept.end();) {
                    if (n < req.count && req.matches(*views.find(*it))) {
                        ++n;
                        it = kept.erase(it);
                    } else {
                        ++it;
                    }
                }
                req.count = n;
            }
            std::erase_if(g.required_items, [](const ItemRequest& q) { return q.count == 0; });
            g.include = Predicate{};
        } else if (goal.ordered) {
            for (const auto& id : st.pending) {
                if (views.find(id)->display_name != goal.bookend) g.excluded_ids.insert(id);
            }
        } else {
            g.halt = true;
        }
        c.pending_utterance = "Okay, no more.";
        r.understood = true;
    } else {
        const auto forbidden = diet_forbidden(t);
        const auto mentions = scan(text, catalog, false, catalog.task == Task::grocery_shopping);
        std::vector<std::string> dropped, added;
        for (const auto& m : mentions) {
            if (m.kind == Mention::Kind::item && m.item == catalog.bookend) continue;
            if (m.polarity == Polarity::negative) {
                if (m.kind == Mention::Kind::item) {
                    g.exclude.names.insert(m.item);
                    dropped.push_back(m.item);
                } else if (m.kind == Mention::Kind::attribute) {
                    g.forbidden_attributes.insert(m.item);
                }
            } else if (std::regex_search(t, wants_more)) {
                if (catalog.task == Task::grocery_shopping) {
                    ItemRequest req;
                    (m.kind == Mention::Kind::item ? req.name : req.attribute) = m.item;
                    req.count = m.count;
                    g.required_items.push_back(req);
                    if (g.required_items.size() == 1 && g.include.all) g.include = Predicate{};
                } else if (m.kind == Mention::Kind::item) {
                    g.exclude.names.erase(m.item);
                    if (!g.include.all) g.include.names.insert(m.item);
                }
                c.added_requests.push_back(m.item);
                added.push_back(m.item);
            }
        }
        g.forbidden_attributes.insert(forbidden.begin(), forbidden.end());
        const auto out = ruled_out(catalog, std::set<std::string>(dropped.begin(), dropped.end()), forbidden);
        if (!out.empty()) {
            c.pending_utterance = "Sure, I won't put " + join_list(out, "or") + " on it.";
            if (catalog.task != Task::sandwich_making) c.pending_utterance = "Okay, no " + join_list(out, "or") + ".";
            r.understood = true;
        } else if (!added.empty()) {
            c.pending_utterance = catalog.task == Task::grocery_shopping
                                      ? "Sure, I'll get you some " + join_list(added, "and") + " too."
                                      : "Sure, I'll add " + join_list(added, "and") + ".";
            r.understood = true;
        } else {
            clarify();
        }
    }
    sync_mirror(c, g);
    r.immediate = decide(views, c, g);
    return r;
}

bool resume(DialogueContext& ctx, GoalSpec& goal) {
    if (ctx.interjection_stack.empty()) return false;
    auto frame = std::move(ctx.interjection_stack.back());
    ctx.interjection_stack.pop_back();
    goal = std::move(frame.saved_goal);
    ctx.active_prompt = std::move(frame.saved_prompt);
    sync_mirror(ctx, goal);
    ctx.pending_utterance = "Okay, back to what I was doing.";
    return true;
}

}  // namespace hilo::highlevel
