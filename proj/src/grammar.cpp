#include "hilo/grammar.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "hilo/json_io.hpp"
#include "hilo/simenv.hpp"

namespace hilo::lowlevel {

std::string normalize_text(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool space = true;
    for (unsigned char c : text) {
        if (std::isalnum(c) || c == '\'' || c == '-') {
            out.push_back(static_cast<char>(std::tolower(c)));
            space = false;
        } else if (!space) {
            out.push_back(' ');
            space = true;
        }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && text[i] == ' ') ++i;
        std::size_t j = i;
        while (j < text.size() && text[j] != ' ') ++j;
        if (j > i) out.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

namespace {

std::string join(const std::vector<std::string>& words, std::size_t from, std::size_t to) {
    std::string s;
    for (std::size_t i = from; i < to; ++i) {
        if (i > from) s += ' ';
        s += words[i];
    }
    return s;
}

std::string_view direction_phrase(Direction d, bool with_arm) {
    switch (d) {
        case Direction::left:
            return "to the left";
        case Direction::right:
            return "to the right";
        case Direction::higher:
            return with_arm ? "higher" : "go higher";
        case Direction::lower:
            return with_arm ? "lower" : "go lower";
        case Direction::toward_user:
            return "towards me";
        case Direction::away_from_user:
            return "away from me";
    }
    return "";
}

}  // namespace

Grammar Grammar::from_json(const json& j) {
    Grammar g;
    g.articles_ = j.at("articles").get<std::vector<std::string>>();
    std::stable_sort(g.articles_.begin(), g.articles_.end(),
                     [](const std::string& a, const std::string& b) { return a.size() > b.size(); });
    for (const auto& o : j.at("object_lexicon")) g.objects_.insert(normalize_text(o.get<std::string>()));
    for (const auto& [fixture, dj] : j.at("destinations").items()) {
        Destination d;
        d.fixture = fixture;
        d.render = dj.at("render").get<std::string>();
        d.synonyms = dj.at("synonyms").get<std::vector<std::string>>();
        g.destinations_.push_back(std::move(d));
    }
    for (const auto& rj : j.at("rules")) {
        Rule r;
        r.pattern = rj.at("pattern").get<std::string>();
        r.skill = rj.at("skill");
        for (auto& w : split_words(r.pattern)) {
            Token t;
            if (w.size() > 1 && w.back() == '?') {
                t.optional = true;
                w.pop_back();
            }
            if (w.front() == '{' && w.back() == '}') {
                t.kind = Token::Kind::slot;
                t.slot = w.substr(1, w.size() - 2);
                if (t.slot != "object" && t.slot != "destination" && t.slot != "arm") {
                    throw std::invalid_argument("unknown grammar slot: " + t.slot);
                }
            } else if (w.front() == '(' && w.back() == ')') {
                std::string body = w.substr(1, w.size() - 2);
                std::size_t start = 0;
                while (true) {
                    const auto bar = body.find('|', start);
                    t.words.push_back(body.substr(start, bar - start));
                    if (bar == std::string::npos) break;
                    start = bar + 1;
                }
            } else {
                t.words.push_back(w);
            }
            r.tokens.push_back(std::move(t));
        }
        g.rules_.push_back(std::move(r));
    }
    if (j.contains("skill_lists")) {
        for (const auto& [task, lj] : j.at("skill_lists").items()) {
            g.skill_lists_[parse_enum<Task>(task)] = lj.get<std::vector<std::string>>();
        }
    }
    return g;
}

Grammar Grammar::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open grammar file: " + path.string());
    return from_json(json::parse(in));
}

void Grammar::add_objects(const std::vector<std::string>& names) {
    for (const auto& n : names) objects_.insert(normalize_text(n));
}

bool Grammar::in_lexicon(std::string_view object) const { return objects_.count(std::string(object)) > 0; }

std::string Grammar::strip_article(std::string_view phrase) const {
    std::string p = normalize_text(phrase);
    for (const auto& a : articles_) {
        if (p.size() > a.size() && p.compare(0, a.size(), a) == 0 && p[a.size()] == ' ') {
            return p.substr(a.size() + 1);
        }
    }
    return p;
}

const Grammar::Destination* Grammar::destination_by_phrase(std::string_view phrase) const {
    const auto p = strip_article(phrase);
    for (const auto& d : destinations_) {
        if (std::find(d.synonyms.begin(), d.synonyms.end(), p) != d.synonyms.end()) return &d;
    }
    return nullptr;
}

const Grammar::Destination* Grammar::destination_by_fixture(std::string_view fixture) const {
    for (const auto& d : destinations_) {
        if (d.fixture == fixture) return &d;
    }
    return nullptr;
}

const std::vector<std::string>& Grammar::skill_list(Task task) const {
    static const std::vector<std::string> empty;
    auto it = skill_lists_.find(task);
    return it == skill_lists_.end() ? empty : it->second;
}

bool Grammar::bind_slot(const std::string& slot, const std::string& phrase, Bindings& out) const {
    if (slot == "object") {
        auto obj = strip_article(phrase);
        if (!in_lexicon(obj)) return false;
        out[slot] = std::move(obj);
        return true;
    }
    if (slot == "destination") {
        const auto* d = destination_by_phrase(phrase);
        if (!d) return false;
        out[slot] = d->fixture;
        return true;
    }
    if (phrase == "left" || phrase == "right") {
        out[slot] = phrase;
        return true;
    }
    return false;
}

bool Grammar::match(const Rule& rule, std::size_t ti, const std::vector<std::string>& words, std::size_t wi,
                    Bindings& out) const {
    if (ti == rule.tokens.size()) return wi == words.size();
    const auto& t = rule.tokens[ti];
    if (t.kind == Token::Kind::word) {
        if (wi < words.size() && std::find(t.words.begin(), t.words.end(), words[wi]) != t.words.end()) {
            if (match(rule, ti + 1, words, wi + 1, out)) return true;
        }
        return t.optional && match(rule, ti + 1, words, wi, out);
    }
    // Slots take the shortest phrase that lets the rest of the pattern match.
    for (std::size_t end = wi + 1; end <= words.size(); ++end) {
        Bindings trial = out;
        if (!bind_slot(t.slot, join(words, wi, end), trial)) continue;
        if (match(rule, ti + 1, words, end, trial)) {
            out = std::move(trial);
            return true;
        }
    }
    return t.optional && match(rule, ti + 1, words, wi, out);
}

SkillCommand Grammar::parse(std::string_view text) const {
    const auto words = split_words(normalize_text(text));
    if (words.empty()) throw OutOfGrammar(std::string(text));
    for (const auto& rule : rules_) {
        Bindings b;
        if (!match(rule, 0, words, 0, b)) continue;
        const auto& sj = rule.skill;
        const auto kind = sj.at("kind").get<std::string>();
        SkillCommand cmd;
        cmd.raw_text = std::string(text);
        if (kind == "pick") {
            cmd.skill = Pick{b.at("object")};
        } else if (kind == "place") {
            Place p;
            if (b.count("object")) p.object = b.at("object");
            p.destination = b.count("destination") ? b.at("destination") : sj.at("destination").get<std::string>();
            cmd.skill = std::move(p);
        } else if (kind == "move") {
            Move m;
            m.direction = sj.at("direction").get<Direction>();
            if (b.count("arm")) m.arm = parse_enum<Arm>(b.at("arm"));
            cmd.skill = m;
        } else if (kind == "rotate") {
            cmd.skill = Rotate{sj.at("rotation").get<Rotation>()};
        } else if (kind == "gripper") {
            cmd.skill = GripperCommand{sj.at("action").get<GripperAction>()};
        } else if (kind == "home") {
            cmd.skill = Home{};
        } else if (kind == "done") {
            cmd.skill = Done{};
        } else {
            throw std::invalid_argument("unknown skill kind in grammar: " + kind);
        }
        return cmd;
    }
    throw OutOfGrammar(std::string(text));
}

std::string Grammar::render(const Skill& skill) const {
    return std::visit(
        [this](const auto& s) -> std::string {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, Pick>) {
                return "pick up the " + s.object;
            } else if constexpr (std::is_same_v<T, Place>) {
                const auto* d = destination_by_fixture(s.destination);
                const std::string where = d ? d->render : "on the " + s.destination;
                return s.object ? "put the " + *s.object + " " + where : "put it " + where;
            } else if constexpr (std::is_same_v<T, Move>) {
                if (s.arm && *s.arm != Arm::single) {
                    return "move the " + std::string(to_string(*s.arm)) + " arm " +
                           std::string(direction_phrase(s.direction, true));
                }
                const auto phrase = direction_phrase(s.direction, false);
                return phrase.starts_with("go ") ? std::string(phrase) : "move " + std::string(phrase);
            } else if constexpr (std::is_same_v<T, Rotate>) {
                return s.rotation == Rotation::cw ? "rotate clockwise" : "rotate counterclockwise";
            } else if constexpr (std::is_same_v<T, GripperCommand>) {
                return s.action == GripperAction::open ? "open gripper" : "close gripper";
            } else if constexpr (std::is_same_v<T, Home>) {
                return "go back to home position";
            } else {
                return "done";
            }
        },
        skill);
}

const Grammar& bundled_grammar() {
    static const Grammar g = [] {
        auto grammar = Grammar::load(sim::data_dir() / "grammar.json");
        for (Task t : {Task::table_bussing, Task::sandwich_making, Task::grocery_shopping}) {
            const auto& cat = sim::catalog(t);
            std::vector<std::string> names;
            for (const auto& it : cat.items) names.push_back(it.name);
            for (const auto& [container, surface] : cat.movable_containers) names.push_back(container);
            grammar.add_objects(names);
        }
        return grammar;
    }();
    return g;
}

SkillCommand parse_command(std::string_view text) { return bundled_grammar().parse(text); }

std::string render_command(const Skill& skill) { return bundled_grammar().render(skill); }

}  // namespace hilo::lowlevel
