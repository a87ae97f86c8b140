#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "hilo/domain.hpp"
#include "hilo/remote.hpp"
#include "hilo/rng.hpp"

namespace hilo::datagen {

using nlohmann::json;

// =========================================================================================
// Demonstrations
// =========================================================================================

struct PrimitiveOptions {
    double dominance = 3.0;          // dominant dimension over every other arm dimension
    double min_displacement = 0.02;  // cumulative, along the dominant dimension
    double still = 1e-9;             // largest gripper change still counted as unchanged
};

/// Windows of frames not covered by existing segments where one arm dimension
/// carries the motion, labeled as grammar commands ("move the right arm to
/// the left"). Frame i's motion is action[i] - action[i-1].
std::vector<Segment> extract_motion_primitives(const Episode& episode, const PrimitiveOptions& options = {});

struct DemoSpec {
    std::string id;
    Task task = Task::sandwich_making;
    std::uint64_t seed = 0;
    std::string prompt;
    double correction_probability = 0.3;  // unlabeled corrective move before a pick
};

/// Teleoperation stand-in: the reference reasoner picks each skill for
/// `prompt`, the executor produces the motion, and every chunk becomes a
/// frame. Skills are labeled; corrective moves are left for
/// extract_motion_primitives, whose segments are merged in.
Episode record_demo(const DemoSpec& spec);

/// `count` demos of `task` with prompts cycling through a fixed list.
std::vector<DemoSpec> demo_specs(Task task, int count, std::uint64_t base_seed = 0);

/// JSON Lines, one episode per line. read_episodes throws std::runtime_error
/// naming the bad line.
void write_episodes(const std::vector<Episode>& episodes, const std::filesystem::path& path);
std::vector<Episode> read_episodes(const std::filesystem::path& path);

// =========================================================================================
// Synthetic interactions
// =========================================================================================

class NoTemplate : public std::runtime_error {
public:
    NoTemplate(Task task, ScenarioType scenario, const std::string& kind)
        : std::runtime_error("no template for " + std::string(to_string(task)) + "/" +
                             std::string(to_string(scenario)) + "/" + kind) {}
};

/// Prompt templates keyed by (task, scenario, skill kind) plus robot response
/// templates. Slots are written {name}.
class TemplateBank {
public:
    /// Throws std::invalid_argument on unknown tasks, scenarios or slots.
    static TemplateBank from_json(const json& j);
    static TemplateBank load(const std::filesystem::path& path);

    const std::vector<std::string>& prompts(Task task, ScenarioType scenario, const std::string& kind) const;
    const std::vector<std::string>& responses(const std::string& key) const;

private:
    std::map<std::tuple<Task, ScenarioType, std::string>, std::vector<std::string>> prompts_;
    std::map<std::string, std::vector<std::string>> responses_;
};

/// data_dir()/templates.json, loaded once.
const TemplateBank& bundled_templates();

struct SegmentContext {
    Task task = Task::sandwich_making;
    SceneState scene;  // at the segment's first frame
    std::vector<std::string> prior_skills;
    std::string skill_label;
    std::string episode_id;
    int frame_index = 0;
};

/// Scenarios with at least one fillable template for this segment.
std::vector<ScenarioType> available_scenarios(const SegmentContext& ctx, const TemplateBank& bank = bundled_templates());

/// Fills a template for the segment's skill so the prompt asks for the skill's
/// object and keeps what prior skills already placed. Throws NoTemplate.
SyntheticInteraction generate_interaction(const SegmentContext& ctx, ScenarioType scenario, Rng& rng,
                                          const TemplateBank& bank = bundled_templates());

/// Model-backed generation over the high-level wire schema with `scenario`
/// set; the reply is {user_prompt, utterance?, response_type?}. Throws
/// highlevel::BackendError.
SyntheticInteraction generate_remote(const SegmentContext& ctx, ScenarioType scenario,
                                     const highlevel::RemoteBackend& backend);

ResponseType draw_response_type(Rng& rng);

/// Empty when the record is well formed: known taxonomy values, response
/// type agreeing with the utterance, grammar-valid skills, prompt objects
/// grounded in the catalog, and a prompt that does not rule out anything the
/// prior skills or the current skill handle.
std::vector<std::string> validate_interaction(const SyntheticInteraction& record);
std::vector<std::string> validate_interaction(const json& record);

/// Pick, place and terminal skills; motion primitives have no judge.
bool judgeable(const SyntheticInteraction& record);

/// The prompt read by highlevel::parse_goal admits the record's skill in `scene`.
bool round_trip_consistent(const SyntheticInteraction& record, const SceneState& scene);

struct DatasetOptions {
    int per_segment = 3;
    std::uint64_t seed = 0;
    std::vector<ScenarioType> scenarios = {ScenarioType::negative_task, ScenarioType::situated_correction,
                                           ScenarioType::specific_constraint, ScenarioType::direct_request};
    bool parallel = true;
    std::optional<highlevel::RemoteConfig> remote;
};

/// per_segment records for every segment with an available scenario, ordered
/// by (episode, frame, sample). Independent of `parallel`.
std::vector<SyntheticInteraction> build_dataset(const std::vector<Episode>& episodes, const DatasetOptions& options,
                                                const TemplateBank& bank = bundled_templates());

/// Segment context for segment `index` of `episode`.
SegmentContext segment_context(const Episode& episode, std::size_t index);

void write_dataset(const std::vector<SyntheticInteraction>& records, const std::filesystem::path& path);
std::vector<SyntheticInteraction> read_dataset(const std::filesystem::path& path);

}  // namespace hilo::datagen
