#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "hilo/domain.hpp"
#include "hilo/grammar.hpp"
#include "hilo/rng.hpp"

namespace hilo::lowlevel {

class NotFound : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The command could not start; the skill becomes a no-op.
class FailedStart : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ChunkAfterComplete : public std::logic_error {
public:
    ChunkAfterComplete() : std::logic_error("chunk requested after plan completed") {}
};

struct LatencyModel {
    double per_chunk_inference_ms = 86.0;
    double control_rate_hz = 50.0;
    double highlevel_prefill_ms = 47.0;
    double highlevel_per_token_ms = 13.2;

    Micros chunk_inference() const { return millis(per_chunk_inference_ms); }
    /// Wall time one chunk of `horizon` actions covers.
    Micros chunk_span(int horizon) const { return seconds(horizon / control_rate_hz); }
    Micros highlevel(int tokens) const { return millis(highlevel_prefill_ms + tokens * highlevel_per_token_ms); }
    bool realtime_feasible(int horizon) const {
        return per_chunk_inference_ms < 1000.0 * horizon / control_rate_hz;
    }
    /// Throws std::invalid_argument unless every field is positive.
    void validate() const;
};

/// Whitespace token count used for high-level decode cost.
int token_count(std::string_view text);

struct ExecutorConfig {
    int horizon = 10;
    double min_skill_s = 1.0;
    double max_skill_s = 3.0;
    double primitive_s = 0.5;  // Move, Rotate, Gripper
    double failure_probability = 0.0;
};

struct ExecutionPlan {
    std::int64_t command_id = 0;
    SkillCommand command;
    std::optional<std::string> resolved_object_id;
    Arm arm = Arm::single;
    Micros duration{0};
    int chunks_total = 0;
    int chunks_emitted = 0;
    Outcome outcome = Outcome::success;
    int horizon = 10;
    double control_rate_hz = 50.0;

    SceneState scene_before;
    RobotState robot_before;
    std::optional<SceneState> effect;  // set by the final chunk

    bool complete() const { return chunks_emitted >= chunks_total; }
};

/// Grounds a noun phrase against objects not in a gripper: exact display
/// name, then head-noun match ("bowl" -> "white bowl"), then class noun
/// ("trash"). Objects on surfaces win over objects in containers; remaining
/// ties go to the smallest id. Throws NotFound.
const SceneObject& resolve_object(const SceneState& scene, std::string_view phrase);

/// Same tiers over held objects; an empty phrase means the first held object
/// in arm order. Throws NotFound.
const SceneObject& resolve_held(const SceneState& scene, const std::optional<std::string>& phrase,
                                const std::vector<Arm>& arms);

/// Throws FailedStart when the object cannot be grounded or the skill's
/// preconditions fail.
ExecutionPlan begin_skill(const SceneState& scene, const RobotState& robot, const SkillCommand& command,
                          Rng& rng, const ExecutorConfig& config, const LatencyModel& latency,
                          std::int64_t command_id);

/// Next H actions. Updates `robot` to the pose at the end of the chunk. The
/// final chunk stores the skill's effect in plan.effect.
ActionChunk next_chunk(ExecutionPlan& plan, RobotState& robot);

/// Robot pose and gripper state after the whole skill ran.
RobotState final_robot_state(const ExecutionPlan& plan);

}  // namespace hilo::lowlevel
