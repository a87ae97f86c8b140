#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hilo/domain.hpp"
#include "hilo/highlevel.hpp"
#include "hilo/orchestrator.hpp"

namespace hilo::eval {

using nlohmann::json;

/// Exact count ratio; metrics are compared as fractions, reported as doubles.
struct Ratio {
    std::int64_t num = 0;
    std::int64_t den = 1;

    double value() const { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); }
    /// Cross-multiplied, so 2/4 == 1/2.
    bool operator==(const Ratio& o) const { return num * o.den == o.num * den; }
};

class EmptyGoal : public std::invalid_argument {
public:
    EmptyGoal() : std::invalid_argument("goal selects no objects") {}
};

class EmptyMarks : public std::invalid_argument {
public:
    EmptyMarks() : std::invalid_argument("no decisions were marked") {}
};

/// Admissible-action check against the intended goal: a pick of a pickable
/// target, a place of the held object at its mapped destination (or back at
/// its origin when it is not wanted), a pick that restores a displaced
/// excluded object, delivery, and a terminal skill once nothing is left.
/// Restoring displaced objects takes precedence over new picks. Anything out
/// of grammar is wrong.
bool auto_judge(const HighLevelDecision& decision, const GoalSpec& goal_now, const SceneState& scene,
                const highlevel::DialogueContext& ctx);

struct Mark {
    std::int64_t decision_id = 0;
    Micros t{0};
    std::string skill_text;
    bool correct = false;
    int truth_step = -1;
};

/// Throws EmptyMarks.
Ratio instruction_accuracy(const std::vector<Mark>& marks);

/// Targets at their destination over all targets; a delivery counts as one
/// more unit. A halted goal with nothing left is complete. Throws EmptyGoal.
Ratio task_progress(const SceneState& final_scene, const GoalSpec& goal);

/// Whether finishing `command` in `before` touched an object the goal leaves
/// alone: picking a non-target that is not being restored, or placing a
/// non-target anywhere but its origin.
bool is_violation(const SceneState& before, const SkillCommand& command, const std::optional<std::string>& object_id,
                  const GoalSpec& goal);

struct TrialResult {
    std::string suite;
    Task task = Task::table_bussing;
    orch::Policy policy = orch::Policy::hierarchical_reference;
    std::uint64_t seed = 0;
    std::vector<Mark> marks;
    Ratio ia;
    Ratio tp;
    int violations = 0;
    std::string end_reason;
    Micros duration{0};
    std::string log_hash;
    std::optional<orch::EventLog> log;  // kept on request
};

json to_json(const TrialResult& r);

/// Runs one scripted trial under `config` (task and seed come from the script)
/// and scores every high-level decision against the script's ground truth.
TrialResult run_trial(orch::SessionConfig config, const orch::UserScript& script, bool keep_log = false);

// =========================================================================================
// Suites and benchmarks
// =========================================================================================

struct Suite {
    std::string name;
    Task task = Task::table_bussing;
    bool constrained = false;  // prompts carry constraints a flat policy cannot express
    std::vector<orch::UserScript> trials;
};

void to_json(json& j, const Suite& s);
void from_json(const json& j, Suite& s);
Suite load_suite(const std::filesystem::path& path);
void save_suite(const Suite& suite, const std::filesystem::path& path);

enum class SuiteKind { constrained_bussing, interjection_bussing, constrained_sandwich, grocery_additions };
std::string_view suite_name(SuiteKind kind);
std::vector<SuiteKind> all_suite_kinds();

/// Scripted trials with hand-built ground truth. Seeds start at `base_seed`;
/// scenes where the prompt would not bite are skipped.
Suite build_suite(SuiteKind kind, int trials = 20, std::uint64_t base_seed = 0);

struct Cell {
    std::string suite;
    Task task = Task::table_bussing;
    orch::Policy policy = orch::Policy::hierarchical_reference;
    bool constrained = false;
    std::vector<TrialResult> trials;

    double mean_ia() const;
    double mean_tp() const;
    double min_ia() const;
    int violations() const;
    int trials_with_violations() const;
};

struct Report {
    std::vector<Cell> cells;  // suite-major, then policy in request order

    const Cell* find(std::string_view suite, orch::Policy policy) const;
    json to_json() const;
    /// Suites as rows, policies as IA/TP column pairs, then the
    /// hierarchical-minus-flat gap.
    std::string to_text() const;
};

struct BenchOptions {
    int trials_per_cell = 20;
    std::uint64_t seed = 0;  // salts executor randomness
    bool parallel = true;
    bool keep_logs = false;
    orch::SessionConfig base;  // latency, horizon, failure probability, backend
};

Report run_benchmark(const std::vector<Suite>& suites, const std::vector<orch::Policy>& policies,
                     const BenchOptions& options);

}  // namespace hilo::eval
