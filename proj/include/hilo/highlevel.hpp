#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "hilo/domain.hpp"
#include "hilo/simenv.hpp"

namespace hilo::highlevel {

struct InterjectionFrame {
    std::string text;
    Micros time{0};
    bool handled = false;
    // State before the interjection; Resume restores it.
    GoalSpec saved_goal;
    std::string saved_prompt;
};

struct DialogueContext {
    Task task = Task::table_bussing;
    std::string active_prompt;
    std::vector<InterjectionFrame> interjection_stack;
    std::vector<std::string> prior_skills;
    std::map<Arm, std::string> held_objects;
    std::map<std::string, ObjectClass> reclassified;
    std::set<std::string> excluded_ids;
    std::vector<std::string> added_requests;
    std::optional<std::string> last_target;  // object of the most recent pick
    std::optional<std::string> pending_utterance;
    bool ignore_constraints = false;  // ablation: prompt clauses and interjections have no effect

    bool has_unhandled() const;
};

struct GoalParse {
    GoalSpec goal;
    bool clarify = false;  // nothing in the prompt was understood
    std::string utterance;
};

/// Reads a task prompt into a goal over the closed lexicon. Unrecognized
/// prompts fall back to the catalog default with clarify set.
GoalParse parse_goal(std::string_view prompt, const sim::TaskCatalog& catalog);

/// Starts a new prompt: resets the interjection stack and stores the
/// confirmation or clarification for the next decision.
void apply_prompt(std::string_view prompt, const sim::TaskCatalog& catalog, DialogueContext& ctx, GoalSpec& goal);

/// The reference reasoner. Holding an object: place it (mapped destination,
/// or back where it came from when it is not wanted). Otherwise restore a
/// displaced excluded object, stop on halt, pick the first pickable object in
/// id order, deliver, and finally go home.
HighLevelDecision decide(const SceneState& views, const DialogueContext& ctx, const GoalSpec& goal);

struct InterjectionResult {
    DialogueContext ctx;
    GoalSpec goal;
    HighLevelDecision immediate;
    bool understood = false;
};

InterjectionResult handle_interjection(std::string_view text, Micros time, const SceneState& views,
                                       const DialogueContext& ctx, const GoalSpec& goal);

/// Pops the newest interjection frame, restoring the goal and prompt it saved.
/// Returns false when there is nothing to resume.
bool resume(DialogueContext& ctx, GoalSpec& goal);

/// Objects the text names, by catalog item, with simple plural forms.
std::vector<std::string> mentioned_items(std::string_view text, const sim::TaskCatalog& catalog);

}  // namespace hilo::highlevel
