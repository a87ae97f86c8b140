#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hilo/domain.hpp"

namespace hilo::lowlevel {

class OutOfGrammar : public std::runtime_error {
public:
    explicit OutOfGrammar(std::string text)
        : std::runtime_error("out of grammar: " + text), text_(std::move(text)) {}
    const std::string& text() const { return text_; }

private:
    std::string text_;
};

/// Lowercase, punctuation to spaces (apostrophes and hyphens kept), single spaces.
std::string normalize_text(std::string_view text);

std::vector<std::string> split_words(std::string_view text);

class Grammar {
public:
    struct Destination {
        std::string fixture;
        std::string render;  // "in the trash bin"
        std::vector<std::string> synonyms;
    };

    static Grammar from_json(const nlohmann::json& j);
    static Grammar load(const std::filesystem::path& path);

    /// Throws OutOfGrammar when no rule matches or a slot falls outside the lexicon.
    SkillCommand parse(std::string_view text) const;

    /// Canonical text. parse(render(s)).skill == s for every skill whose
    /// object and destination are in this grammar.
    std::string render(const Skill& skill) const;
    SkillCommand make(const Skill& skill) const { return SkillCommand{skill, render(skill)}; }

    void add_objects(const std::vector<std::string>& names);
    bool in_lexicon(std::string_view object) const;

    /// Drops a leading article ("the", "one piece of", ...).
    std::string strip_article(std::string_view phrase) const;

    const std::set<std::string>& objects() const { return objects_; }
    const std::vector<Destination>& destinations() const { return destinations_; }
    const std::vector<std::string>& skill_list(Task task) const;

private:
    struct Token {
        enum class Kind { word, slot };
        Kind kind = Kind::word;
        std::vector<std::string> words;  // alternatives
        bool optional = false;
        std::string slot;                // object | destination | arm
    };
    struct Rule {
        std::string pattern;
        std::vector<Token> tokens;
        nlohmann::json skill;
    };
    using Bindings = std::map<std::string, std::string>;

    bool match(const Rule& rule, std::size_t ti, const std::vector<std::string>& words, std::size_t wi,
               Bindings& out) const;
    bool bind_slot(const std::string& slot, const std::string& phrase, Bindings& out) const;
    const Destination* destination_by_phrase(std::string_view phrase) const;
    const Destination* destination_by_fixture(std::string_view fixture) const;

    std::vector<std::string> articles_;  // longest first
    std::set<std::string> objects_;
    std::vector<Destination> destinations_;
    std::vector<Rule> rules_;
    std::map<Task, std::vector<std::string>> skill_lists_;
};

/// data_dir()/grammar.json with every catalog item and movable container added
/// to the object lexicon. Loaded once.
const Grammar& bundled_grammar();

SkillCommand parse_command(std::string_view text);
std::string render_command(const Skill& skill);

}  // namespace hilo::lowlevel
