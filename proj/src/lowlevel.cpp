#include "hilo/lowlevel.hpp"

#include <algorithm>
#include <cmath>
#include <array>
#include <functional>
#include <numbers>

#include "hilo/simenv.hpp"

namespace hilo::lowlevel {

void LatencyModel::validate() const {
    if (!(per_chunk_inference_ms > 0 && control_rate_hz > 0 && highlevel_prefill_ms > 0 &&
          highlevel_per_token_ms > 0)) {
        throw std::invalid_argument("latency model values must be positive");
    }
}

int token_count(std::string_view text) { return static_cast<int>(split_words(text).size()); }

// =========================================================================================
// Grounding
// =========================================================================================

namespace {

const std::map<std::string, std::set<ObjectClass>>& class_nouns() {
    static const std::map<std::string, std::set<ObjectClass>> nouns = {
        {"trash", {ObjectClass::trash}},          {"garbage", {ObjectClass::trash}},
        {"dish", {ObjectClass::dish}},            {"dishes", {ObjectClass::dish, ObjectClass::utensil}},
        {"utensil", {ObjectClass::utensil}},      {"utensils", {ObjectClass::utensil}},
        {"ingredient", {ObjectClass::ingredient}}, {"grocery", {ObjectClass::grocery}},
        {"item", {ObjectClass::trash, ObjectClass::dish, ObjectClass::utensil, ObjectClass::ingredient,
                  ObjectClass::grocery}},
    };
    return nouns;
}

bool head_noun_match(std::string_view name, std::string_view phrase) {
    return name.size() > phrase.size() && name.ends_with(phrase) && name[name.size() - phrase.size() - 1] == ' ';
}

int placement_rank(const SceneObject& o) { return std::holds_alternative<Surface>(o.location) ? 0 : 1; }

template <class Filter>
const SceneObject* ground(const SceneState& scene, std::string_view phrase, Filter&& eligible) {
    const std::array<std::function<bool(const SceneObject&)>, 3> tiers = {
        [&](const SceneObject& o) { return o.display_name == phrase; },
        [&](const SceneObject& o) { return head_noun_match(o.display_name, phrase); },
        [&](const SceneObject& o) {
            auto it = class_nouns().find(std::string(phrase));
            return it != class_nouns().end() && it->second.count(o.object_class) > 0;
        },
    };
    for (const auto& tier : tiers) {
        const SceneObject* best = nullptr;
        for (const auto& o : scene.objects) {
            if (!eligible(o) || !tier(o)) continue;
            if (!best || placement_rank(o) < placement_rank(*best) ||
                (placement_rank(o) == placement_rank(*best) && o.id < best->id)) {
                best = &o;
            }
        }
        if (best) return best;
    }
    return nullptr;
}

}  // namespace

const SceneObject& resolve_object(const SceneState& scene, std::string_view phrase) {
    const auto p = bundled_grammar().strip_article(phrase);
    const auto* obj = ground(scene, p, [](const SceneObject& o) { return !std::holds_alternative<Gripper>(o.location); });
    if (!obj) throw NotFound("no object matches '" + std::string(phrase) + "'");
    return *obj;
}

const SceneObject& resolve_held(const SceneState& scene, const std::optional<std::string>& phrase,
                                const std::vector<Arm>& arms) {
    if (!phrase) {
        for (Arm a : arms) {
            if (const auto* o = scene.held_by(a)) return *o;
        }
        throw NotFound("nothing is held");
    }
    const auto p = bundled_grammar().strip_article(*phrase);
    const auto* obj = ground(scene, p, [](const SceneObject& o) { return std::holds_alternative<Gripper>(o.location); });
    if (!obj) throw NotFound("no held object matches '" + *phrase + "'");
    return *obj;
}

// =========================================================================================
// Plans and chunks
// =========================================================================================

namespace {

bool timed_skill(const Skill& s) {
    return std::holds_alternative<Pick>(s) || std::holds_alternative<Place>(s) || std::holds_alternative<Home>(s);
}

bool primitive_skill(const Skill& s) {
    return std::holds_alternative<Move>(s) || std::holds_alternative<Rotate>(s) ||
           std::holds_alternative<GripperCommand>(s);
}

int arm_offset(Arm arm) { return arm == Arm::right ? 7 : 0; }

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

double smoothstep(double x) {
    x = std::clamp(x, 0.0, 1.0);
    return x * x * (3.0 - 2.0 * x);
}

std::vector<double> pose_at(const ExecutionPlan& plan, double p) {
    const auto& profile = plan.robot_before.profile;
    std::vector<double> a(static_cast<std::size_t>(profile.action_dim), 0.0);
    const auto& q0 = plan.robot_before.q;
    std::copy(q0.begin(), q0.begin() + std::min<std::size_t>(q0.size(), a.size()), a.begin());

    const int k = arm_offset(plan.arm);
    const double s = smoothstep(p);
    const double bump = std::sin(std::numbers::pi * std::clamp(p, 0.0, 1.0));

    std::visit(
        [&](const auto& skill) {
            using T = std::decay_t<decltype(skill)>;
            if constexpr (std::is_same_v<T, Pick> || std::is_same_v<T, Place>) {
                const auto h = fnv1a(plan.resolved_object_id.value_or("") + "|" + std::string(skill_kind(plan.command.skill)));
                for (int j = 0; j < 6; ++j) {
                    a[static_cast<std::size_t>(k + j)] += 0.25 * std::sin(static_cast<double>((h >> (8 * j)) & 0xff) / 40.0) * bump;
                }
                const double closure = smoothstep((p - 0.6) / 0.4);
                a[static_cast<std::size_t>(k + 6)] = std::is_same_v<T, Pick> ? closure : 1.0 - closure;
                if constexpr (std::is_same_v<T, Place>) {
                    // Carrying the basket drives the mobile base.
                    if (profile.action_dim == 16 && !plan.resolved_object_id) a[14] = 0.3 * bump;
                }
            } else if constexpr (std::is_same_v<T, Move>) {
                int dim = 0;
                double sign = 1.0;
                switch (skill.direction) {
                    case Direction::left: sign = -1.0; break;
                    case Direction::right: break;
                    case Direction::higher: dim = 1; break;
                    case Direction::lower: dim = 1; sign = -1.0; break;
                    case Direction::toward_user: dim = 2; sign = -1.0; break;
                    case Direction::away_from_user: dim = 2; break;
                }
                a[static_cast<std::size_t>(k + dim)] += sign * 0.1 * s;
            } else if constexpr (std::is_same_v<T, Rotate>) {
                a[static_cast<std::size_t>(k + 5)] += (skill.rotation == Rotation::cw ? 0.3 : -0.3) * s;
            } else if constexpr (std::is_same_v<T, GripperCommand>) {
                const double from = a[static_cast<std::size_t>(k + 6)];
                const double to = skill.action == GripperAction::close ? 1.0 : 0.0;
                a[static_cast<std::size_t>(k + 6)] = from + (to - from) * s;
            } else if constexpr (std::is_same_v<T, Home>) {
                for (std::size_t j = 0; j < a.size(); ++j) {
                    if (j % 7 != 6) a[j] *= 1.0 - s;
                }
            }
        },
        plan.command.skill);
    return a;
}

}  // namespace

ExecutionPlan begin_skill(const SceneState& scene, const RobotState& robot, const SkillCommand& command,
                          Rng& rng, const ExecutorConfig& config, const LatencyModel& latency,
                          std::int64_t command_id) {
    ExecutionPlan plan;
    plan.command_id = command_id;
    plan.command = command;
    plan.horizon = config.horizon;
    plan.control_rate_hz = latency.control_rate_hz;
    plan.scene_before = scene;
    plan.robot_before = robot;
    const auto arms = robot.profile.arms();
    plan.arm = arms.front();

    try {
        if (const auto* pick = std::get_if<Pick>(&command.skill)) {
            plan.resolved_object_id = resolve_object(scene, pick->object).id;
            for (Arm a : arms) {
                if (!scene.held_by(a)) {
                    plan.arm = a;
                    break;
                }
            }
        } else if (const auto* place = std::get_if<Place>(&command.skill)) {
            const bool moves_container = place->object && scene.container_at.count(*place->object);
            if (!moves_container) {
                const auto& held = resolve_held(scene, place->object, arms);
                plan.resolved_object_id = held.id;
                plan.arm = std::get<Gripper>(held.location).arm;
            }
        } else if (const auto* move = std::get_if<Move>(&command.skill); move && move->arm) {
            if (std::find(arms.begin(), arms.end(), *move->arm) == arms.end()) {
                throw FailedStart("arm not on robot");
            }
            plan.arm = *move->arm;
        }
        sim::check_preconditions(scene, command, plan.resolved_object_id, arms);
    } catch (const NotFound& e) {
        throw FailedStart(e.what());
    } catch (const sim::SkillEffectError& e) {
        throw FailedStart(e.what());
    }

    // Two draws per started skill, whatever its kind, so later draws do not
    // depend on which skills ran before.
    const double span = rng.uniform(config.min_skill_s, config.max_skill_s);
    const bool fails = rng.uniform() < config.failure_probability;

    if (timed_skill(command.skill)) {
        plan.duration = seconds(span);
    } else if (primitive_skill(command.skill)) {
        plan.duration = seconds(config.primitive_s);
    }
    const double chunks = to_seconds(plan.duration) * latency.control_rate_hz / config.horizon;
    plan.chunks_total = static_cast<int>(std::ceil(chunks - 1e-9));
    const bool can_fail = std::holds_alternative<Pick>(command.skill) || std::holds_alternative<Place>(command.skill);
    plan.outcome = can_fail && fails ? Outcome::failure : Outcome::success;
    if (plan.chunks_total == 0) {
        plan.effect = sim::apply_skill_effect(scene, command, plan.resolved_object_id, plan.outcome, arms);
    }
    return plan;
}

ActionChunk next_chunk(ExecutionPlan& plan, RobotState& robot) {
    if (plan.complete()) throw ChunkAfterComplete();
    const double total_steps = to_seconds(plan.duration) * plan.control_rate_hz;
    ActionChunk chunk;
    chunk.command_id = plan.command_id;
    chunk.start_step = static_cast<std::int64_t>(plan.chunks_emitted) * plan.horizon;
    for (int i = 0; i < plan.horizon; ++i) {
        const double step = static_cast<double>(chunk.start_step + i + 1);
        chunk.actions.push_back(pose_at(plan, total_steps > 0 ? step / total_steps : 1.0));
    }
    ++plan.chunks_emitted;

    const auto& last = chunk.actions.back();
    for (std::size_t j = 0; j < robot.q.size() && j < last.size(); ++j) robot.q[j] = last[j];
    if (plan.complete()) {
        plan.effect = sim::apply_skill_effect(plan.scene_before, plan.command, plan.resolved_object_id, plan.outcome,
                                              plan.robot_before.profile.arms());
        robot = final_robot_state(plan);
    }
    return chunk;
}

RobotState final_robot_state(const ExecutionPlan& plan) {
    RobotState r = plan.robot_before;
    const auto pose = pose_at(plan, 1.0);
    for (std::size_t j = 0; j < r.q.size() && j < pose.size(); ++j) r.q[j] = pose[j];
    if (plan.effect) {
        const auto arms = r.profile.arms();
        for (std::size_t i = 0; i < arms.size(); ++i) {
            const bool holding = plan.effect->held_by(arms[i]) != nullptr;
            r.gripper_open[i] = holding ? 0.0 : 1.0;
            const auto g = static_cast<std::size_t>(arm_offset(arms[i]) + 6);
            if (g < r.q.size()) r.q[g] = holding ? 1.0 : 0.0;
        }
    }
    return r;
}

}  // namespace hilo::lowlevel
