#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <queue>
#include <regex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hilo/domain.hpp"
#include "hilo/highlevel.hpp"
#include "hilo/lowlevel.hpp"
#include "hilo/remote.hpp"

namespace hilo {

namespace orch {
enum class Policy { hierarchical_reference, flat_passthrough, oracle_scripted, remote_backend, reference_no_constraints };
}

template <>
struct EnumNames<orch::Policy> {
    static constexpr auto values = std::to_array<std::pair<orch::Policy, std::string_view>>({
        {orch::Policy::hierarchical_reference, "hierarchical_reference"},
        {orch::Policy::flat_passthrough, "flat_passthrough"},
        {orch::Policy::oracle_scripted, "oracle_scripted"},
        {orch::Policy::remote_backend, "remote_backend"},
        {orch::Policy::reference_no_constraints, "reference_no_constraints"},
    });
};

}  // namespace hilo

namespace hilo::orch {

using nlohmann::json;

struct SessionConfig {
    Task task = Task::table_bussing;
    std::uint64_t seed = 0;
    std::uint64_t rng_salt = 0;  // varies executor draws without changing the scene
    Policy policy = Policy::hierarchical_reference;
    lowlevel::LatencyModel latency;
    int horizon = 10;
    double highlevel_period_s = 1.0;
    bool realtime = false;
    double timeout_s = 120.0;
    double failure_probability = 0.0;
    double primitive_s = 0.5;
    bool record_actions = true;  // chunk records carry the action vectors
    std::optional<highlevel::RemoteConfig> remote;

    RobotProfile profile() const;
    /// Throws std::invalid_argument on out-of-range values.
    void validate() const;
};

json to_json_config(const SessionConfig& c);

// =========================================================================================
// Event log
// =========================================================================================

struct LogRecord {
    std::int64_t seq = 0;
    Micros t{0};
    std::string kind;
    json payload;

    json to_json() const;
};

class LogError : public std::runtime_error {
public:
    LogError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class EventLog {
public:
    const LogRecord& append(Micros t, std::string kind, json payload);
    const std::vector<LogRecord>& records() const { return records_; }
    bool empty() const { return records_.empty(); }

    std::string to_jsonl() const;
    /// SHA-256 of the JSONL text, lowercase hex.
    std::string hash() const;
    void write(const std::filesystem::path& path) const;

    /// Throws LogError naming the first bad line.
    static EventLog parse(std::istream& in);
    static EventLog read(const std::filesystem::path& path);

private:
    std::vector<LogRecord> records_;
};

std::string sha256_hex(std::string_view data);

struct Gap {
    std::int64_t command_id = 0;
    Micros expected{0};  // previous chunk start + span
    Micros actual{0};
};

/// Consecutive chunks of one command whose starts are further apart than one
/// chunk span. `horizon` and `control_rate_hz` define the span.
std::vector<Gap> detect_gaps(const EventLog& log, int horizon, double control_rate_hz);

// =========================================================================================
// Scripted users
// =========================================================================================

struct Trigger {
    enum class Kind { at_time, on_command_matching, on_skill_done };
    Kind kind = Kind::at_time;
    Micros time{0};       // at_time
    std::string pattern;  // on_command_matching, ECMAScript regex searched in skill_text
    int count = 0;        // on_skill_done: fires once this many skills finished
    Micros delay{0};      // after the matching command or skill
};

struct ScriptStep {
    Trigger trigger;
    UserEvent event;
};

/// Scripted user for one trial. ground_truth[i] is the intended goal after
/// steps[i] fired.
struct UserScript {
    std::string name;
    Task task = Task::table_bussing;
    std::uint64_t seed = 0;
    std::vector<ScriptStep> steps;
    std::vector<GoalSpec> ground_truth;

    /// Empty when steps and ground truth line up and patterns compile.
    std::vector<std::string> validate() const;
};

void to_json(json& j, const Trigger& t);
void from_json(const json& j, Trigger& t);
void to_json(json& j, const ScriptStep& s);
void from_json(const json& j, ScriptStep& s);
void to_json(json& j, const UserScript& s);
void from_json(const json& j, UserScript& s);

// =========================================================================================
// Sessions
// =========================================================================================

/// What a high-level invocation saw and produced, for judging.
struct DecisionRecord {
    std::int64_t id = 0;
    Micros t{0};
    HighLevelDecision decision;
    SceneState scene;
    highlevel::DialogueContext ctx;
    int truth_step = -1;  // index into the script's ground truth, -1 before any step
};

class Session {
public:
    explicit Session(SessionConfig config, std::optional<UserScript> script = std::nullopt);
    ~Session();
    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;

    /// Queues a live user event at max(event.time, now()).
    void inject(UserEvent event);

    /// Processes every event strictly before `until` (capped at the timeout).
    /// Returns false once the session has ended.
    bool advance_to(Micros until);
    void run_to_end();

    bool ended() const;
    Micros now() const;
    std::optional<Micros> next_event_time() const;

    const SessionConfig& config() const;
    const EventLog& log() const;
    const SceneState& scene() const;
    const RobotState& robot() const;
    const GoalSpec& belief() const;
    const highlevel::DialogueContext& context() const;
    const std::optional<UserScript>& script() const;
    int truth_step() const;
    /// Ground-truth goal now: the script's, or the policy's belief without a script.
    GoalSpec truth() const;
    const SceneState& initial_scene() const;

    void on_record(std::function<void(const LogRecord&)> fn);
    void on_decision(std::function<void(const DecisionRecord&)> fn);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Headless run of a scripted session.
EventLog run_session(const SessionConfig& config, const UserScript& script);

}  // namespace hilo::orch
