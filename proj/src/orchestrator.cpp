#include "hilo/orchestrator.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <variant>

#include "hilo/json_io.hpp"
#include "hilo/simenv.hpp"

namespace hilo::orch {

RobotProfile SessionConfig::profile() const { return sim::catalog(task).profile(); }

void SessionConfig::validate() const {
    latency.validate();
    if (horizon < 1) throw std::invalid_argument("horizon must be at least 1");
    if (!(highlevel_period_s > 0)) throw std::invalid_argument("high-level period must be positive");
    if (!(timeout_s > 0)) throw std::invalid_argument("timeout must be positive");
    if (!(failure_probability >= 0 && failure_probability <= 1)) {
        throw std::invalid_argument("failure probability must lie in [0, 1]");
    }
    if (!(primitive_s > 0)) throw std::invalid_argument("primitive duration must be positive");
    if (policy == Policy::remote_backend && (!remote || remote->url.empty())) {
        throw std::invalid_argument("remote_backend policy needs a backend url");
    }
}

json to_json_config(const SessionConfig& c) {
    json j = {{"task", c.task},
              {"seed", c.seed},
              {"rng_salt", c.rng_salt},
              {"policy", std::string(to_string(c.policy))},
              {"horizon", c.horizon},
              {"control_rate_hz", c.latency.control_rate_hz},
              {"per_chunk_inference_ms", c.latency.per_chunk_inference_ms},
              {"highlevel_prefill_ms", c.latency.highlevel_prefill_ms},
              {"highlevel_per_token_ms", c.latency.highlevel_per_token_ms},
              {"highlevel_period_s", c.highlevel_period_s},
              {"timeout_s", c.timeout_s},
              {"failure_probability", c.failure_probability}};
    return j;
}

// =========================================================================================
// Event log
// =========================================================================================

json LogRecord::to_json() const {
    return json{{"seq", seq}, {"t", time_json(t)}, {"kind", kind}, {"payload", payload}};
}

const LogRecord& EventLog::append(Micros t, std::string kind, json payload) {
    records_.push_back({static_cast<std::int64_t>(records_.size()), t, std::move(kind), std::move(payload)});
    return records_.back();
}

std::string EventLog::to_jsonl() const {
    std::string out;
    for (const auto& r : records_) {
        out += r.to_json().dump();
        out += '\n';
    }
    return out;
}

std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256 failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xf];
    }
    return out;
}

std::string EventLog::hash() const { return sha256_hex(to_jsonl()); }

void EventLog::write(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << to_jsonl();
}

EventLog EventLog::parse(std::istream& in) {
    EventLog log;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw LogError(n, std::string("not JSON: ") + e.what());
        }
        if (!j.is_object()) throw LogError(n, "record is not an object");
        for (const char* key : {"seq", "t", "kind", "payload"}) {
            if (!j.contains(key)) throw LogError(n, std::string("missing field ") + key);
        }
        if (!j["seq"].is_number_integer()) throw LogError(n, "seq is not an integer");
        if (!j["t"].is_number()) throw LogError(n, "t is not a number");
        if (!j["kind"].is_string()) throw LogError(n, "kind is not a string");
        LogRecord r{j["seq"].get<std::int64_t>(), time_from_json(j["t"]), j["kind"].get<std::string>(), j["payload"]};
        if (r.seq != static_cast<std::int64_t>(log.records_.size())) {
            throw LogError(n, "seq " + std::to_string(r.seq) + " out of order");
        }
        if (!log.records_.empty() && r.t < log.records_.back().t) throw LogError(n, "time goes backwards");
        log.records_.push_back(std::move(r));
    }
    return log;
}

EventLog EventLog::read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    return parse(in);
}

std::vector<Gap> detect_gaps(const EventLog& log, int horizon, double control_rate_hz) {
    const Micros span = seconds(horizon / control_rate_hz);
    std::map<std::int64_t, Micros> last;
    std::vector<Gap> gaps;
    for (const auto& r : log.records()) {
        if (r.kind != "chunk") continue;
        const auto id = r.payload.at("command_id").get<std::int64_t>();
        if (auto it = last.find(id); it != last.end() && r.t - it->second > span) {
            gaps.push_back({id, it->second + span, r.t});
        }
        last[id] = r.t;
    }
    return gaps;
}

// =========================================================================================
// Scripts
// =========================================================================================

namespace {

std::string_view trigger_name(Trigger::Kind k) {
    switch (k) {
        case Trigger::Kind::at_time:
            return "at_time";
        case Trigger::Kind::on_command_matching:
            return "on_command_matching";
        case Trigger::Kind::on_skill_done:
            return "on_skill_done";
    }
    return "?";
}

}  // namespace

void to_json(json& j, const Trigger& t) {
    j = json{{"kind", std::string(trigger_name(t.kind))}};
    switch (t.kind) {
        case Trigger::Kind::at_time:
            j["t"] = time_json(t.time);
            break;
        case Trigger::Kind::on_command_matching:
            j["pattern"] = t.pattern;
            j["delay"] = time_json(t.delay);
            break;
        case Trigger::Kind::on_skill_done:
            j["count"] = t.count;
            j["delay"] = time_json(t.delay);
            break;
    }
}

void from_json(const json& j, Trigger& t) {
    const auto kind = j.at("kind").get<std::string>();
    t = Trigger{};
    if (kind == "at_time") {
        t.kind = Trigger::Kind::at_time;
        t.time = time_from_json(j.at("t"));
    } else if (kind == "on_command_matching") {
        t.kind = Trigger::Kind::on_command_matching;
        t.pattern = j.at("pattern").get<std::string>();
    } else if (kind == "on_skill_done") {
        t.kind = Trigger::Kind::on_skill_done;
        t.count = j.at("count").get<int>();
    } else {
        throw std::invalid_argument("unknown trigger kind: " + kind);
    }
    if (j.contains("delay")) t.delay = time_from_json(j.at("delay"));
}

void to_json(json& j, const ScriptStep& s) {
    json ev = {{"kind", std::string(to_string(s.event.kind))}};
    if (s.event.kind != UserEvent::Kind::resume) ev["text"] = s.event.text;
    j = json{{"trigger", s.trigger}, {"event", ev}};
}

void from_json(const json& j, ScriptStep& s) {
    s.trigger = j.at("trigger").get<Trigger>();
    s.event = j.at("event").get<UserEvent>();
}

void to_json(json& j, const UserScript& s) {
    j = json{{"name", s.name}, {"task", s.task}, {"seed", s.seed}, {"steps", s.steps}, {"ground_truth", s.ground_truth}};
}

void from_json(const json& j, UserScript& s) {
    s.name = j.value("name", std::string{});
    s.task = j.at("task").get<Task>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.steps = j.at("steps").get<std::vector<ScriptStep>>();
    s.ground_truth = j.at("ground_truth").get<std::vector<GoalSpec>>();
}

std::vector<std::string> UserScript::validate() const {
    std::vector<std::string> errs;
    if (steps.size() != ground_truth.size()) {
        errs.push_back("steps and ground_truth differ in length (" + std::to_string(steps.size()) + " vs " +
                       std::to_string(ground_truth.size()) + ")");
    }
    if (steps.empty()) errs.push_back("script has no steps");
    if (!steps.empty() && steps.front().event.kind != UserEvent::Kind::prompt) errs.push_back("first step is not a prompt");
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const auto& tr = steps[i].trigger;
        const auto where = "step " + std::to_string(i) + ": ";
        if (tr.kind == Trigger::Kind::on_command_matching) {
            try {
                std::regex re(tr.pattern);
            } catch (const std::regex_error&) {
                errs.push_back(where + "bad pattern " + tr.pattern);
            }
        }
        if (tr.kind == Trigger::Kind::on_skill_done && tr.count < 1) errs.push_back(where + "count must be positive");
        if (tr.delay < Micros{0} || tr.time < Micros{0}) errs.push_back(where + "negative time");
    }
    return errs;
}

// =========================================================================================
// Session
// =========================================================================================

namespace {

struct UserArrive {
    UserEvent event;
    int step = -1;
};
struct HlInvoke {
    std::int64_t gen = 0;
    bool user = false;
};
struct Issue {
    std::int64_t hl_id = 0;
    Micros invoked{0};
    HighLevelDecision decision;
};
struct ChunkDue {
    std::int64_t gen = 0;
};
struct SkillEnd {
    std::int64_t gen = 0;
};
using Payload = std::variant<UserArrive, SkillEnd, Issue, HlInvoke, ChunkDue>;

struct QueuedEvent {
    Micros t;
    int rank;  // ties at one instant: user input, skill end, issue, invocation, chunk
    std::int64_t seq;
    Payload payload;

    bool operator>(const QueuedEvent& o) const {
        if (t != o.t) return t > o.t;
        if (rank != o.rank) return rank > o.rank;
        return seq > o.seq;
    }
};

enum class FlatMode { idle, forward, atomic, finish, fallback };

json believed_pending(const SceneState& scene, const GoalSpec& goal) {
    return sim::evaluate_goal(scene, goal).pending;
}

std::string strip_utterance(std::string text, const std::optional<std::string>& utterance) {
    if (!utterance || utterance->empty()) return text;
    if (auto pos = text.find(*utterance); pos != std::string::npos) {
        text.erase(pos, utterance->size());
        const auto b = text.find_first_not_of(" \t\n");
        const auto e = text.find_last_not_of(" \t\n");
        text = b == std::string::npos ? std::string{} : text.substr(b, e - b + 1);
    }
    return text;
}

}  // namespace

struct Session::Impl {
    SessionConfig cfg;
    std::optional<UserScript> script;
    const sim::TaskCatalog& catalog;
    lowlevel::ExecutorConfig exec;
    Rng rng;

    SceneState scene;
    SceneState initial;
    RobotState robot;
    GoalSpec belief;
    highlevel::DialogueContext ctx;
    EventLog log;

    std::priority_queue<QueuedEvent, std::vector<QueuedEvent>, std::greater<>> queue;
    std::int64_t queue_seq = 0;
    Micros now{0};
    bool ended = false;

    std::int64_t timer_gen = 0;
    std::optional<Micros> last_invocation;
    std::int64_t hl_counter = 0;
    std::int64_t command_counter = 0;

    std::optional<lowlevel::ExecutionPlan> plan;
    std::int64_t plan_gen = 0;
    Micros last_chunk_start{0};
    std::optional<SkillCommand> last_completed;
    Micros completed_at{0};
    int skills_done = 0;

    int truth_step = -1;
    int armed_step = -1;

    FlatMode flat = FlatMode::idle;
    std::string flat_prompt;
    std::int64_t flat_atomic_id = 0;

    std::unique_ptr<highlevel::RemoteBackend> backend;

    std::vector<std::function<void(const LogRecord&)>> record_hooks;
    std::vector<std::function<void(const DecisionRecord&)>> decision_hooks;

    Impl(SessionConfig c, std::optional<UserScript> s)
        : cfg(std::move(c)), script(std::move(s)), catalog(sim::catalog(cfg.task)), rng(mix_seed(cfg.seed, 0x6c6f77 + cfg.rng_salt)) {
        cfg.validate();
        if (script) {
            if (script->task != cfg.task) throw std::invalid_argument("script task differs from session task");
            if (auto errs = script->validate(); !errs.empty()) throw std::invalid_argument("bad script: " + errs.front());
        }
        exec.horizon = cfg.horizon;
        exec.primitive_s = cfg.primitive_s;
        exec.failure_probability = cfg.failure_probability;
        auto setup = sim::load_task(catalog, cfg.seed);
        scene = setup.scene;
        initial = setup.scene;
        robot = setup.robot;
        belief = setup.goal;
        ctx.task = cfg.task;
        ctx.ignore_constraints = cfg.policy == Policy::reference_no_constraints;
        if (cfg.policy == Policy::remote_backend) backend = std::make_unique<highlevel::RemoteBackend>(*cfg.remote);

        append(Micros{0}, "session_start",
               json{{"config", to_json_config(cfg)}, {"scene", scene}, {"robot", robot}});
        push(Micros{0}, 3, HlInvoke{++timer_gen, false});
        arm_step(0);
    }

    void push(Micros t, int rank, Payload p) { queue.push({t, rank, queue_seq++, std::move(p)}); }

    void append(Micros t, std::string kind, json payload) {
        const auto& r = log.append(t, std::move(kind), std::move(payload));
        for (const auto& h : record_hooks) h(r);
    }

    Micros span() const { return cfg.latency.chunk_span(cfg.horizon); }

    // ---------------------------------------------------------------- script triggers

    void arm_step(int i) {
        armed_step = -1;
        if (!script || i >= static_cast<int>(script->steps.size())) return;
        const auto& step = script->steps[i];
        switch (step.trigger.kind) {
            case Trigger::Kind::at_time:
                fire(i, std::max(now, step.trigger.time));
                return;
            case Trigger::Kind::on_skill_done:
                if (skills_done >= step.trigger.count) {
                    fire(i, now + step.trigger.delay);
                    return;
                }
                break;
            case Trigger::Kind::on_command_matching:
                break;
        }
        armed_step = i;
    }

    void fire(int i, Micros t) {
        armed_step = -1;
        auto ev = script->steps[i].event;
        push(t, 0, UserArrive{ev, i});
    }

    void command_seen(const std::string& text) {
        if (armed_step < 0) return;
        const auto& tr = script->steps[armed_step].trigger;
        if (tr.kind == Trigger::Kind::on_command_matching && std::regex_search(text, std::regex(tr.pattern))) {
            fire(armed_step, now + tr.delay);
        }
    }

    void skill_finished() {
        if (armed_step < 0) return;
        const auto& tr = script->steps[armed_step].trigger;
        if (tr.kind == Trigger::Kind::on_skill_done && skills_done >= tr.count) fire(armed_step, now + tr.delay);
    }

    // ---------------------------------------------------------------- dispatch

    void process(QueuedEvent& e) {
        now = e.t;
        scene.time = now;
        std::visit([this](auto& p) { handle(p); }, e.payload);
    }

    void request_invocation() {
        if (last_invocation && *last_invocation == now) return;
        push(now, 3, HlInvoke{++timer_gen, true});
    }

    void handle(UserArrive& a) {
        auto ev = a.event;
        ev.time = now;
        append(now, "user_event", ev);
        if (a.step >= 0) truth_step = a.step;

        bool retrigger = true;
        switch (cfg.policy) {
            case Policy::hierarchical_reference:
            case Policy::reference_no_constraints:
            case Policy::oracle_scripted:
                if (ev.kind == UserEvent::Kind::prompt) {
                    highlevel::apply_prompt(ev.text, catalog, ctx, belief);
                } else if (ev.kind == UserEvent::Kind::interjection) {
                    auto r = highlevel::handle_interjection(ev.text, now, scene, ctx, belief);
                    ctx = std::move(r.ctx);
                    belief = std::move(r.goal);
                } else if (!highlevel::resume(ctx, belief)) {
                    ctx.pending_utterance = "There is nothing to go back to.";
                }
                if (cfg.policy == Policy::oracle_scripted) ctx.pending_utterance.reset();
                break;
            case Policy::flat_passthrough:
                if (ev.kind == UserEvent::Kind::prompt) {
                    ctx.active_prompt = ev.text;
                    flat_prompt = ev.text;
                    flat = FlatMode::forward;
                } else {
                    retrigger = false;
                }
                break;
            case Policy::remote_backend:
                if (ev.kind == UserEvent::Kind::prompt) {
                    ctx.active_prompt = ev.text;
                    ctx.interjection_stack.clear();
                } else if (ev.kind == UserEvent::Kind::interjection) {
                    ctx.interjection_stack.push_back({ev.text, now, false, belief, ctx.active_prompt});
                } else if (!ctx.interjection_stack.empty()) {
                    ctx.interjection_stack.pop_back();
                }
                break;
        }
        if (script && a.step >= 0) arm_step(a.step + 1);
        if (retrigger) request_invocation();
    }

    GoalSpec truth() const {
        if (script && truth_step >= 0) return script->ground_truth[truth_step];
        return belief;
    }

    /// nullopt: nothing to do yet. Throws BackendError for remote failures.
    std::optional<HighLevelDecision> policy_decide() {
        switch (cfg.policy) {
            case Policy::hierarchical_reference:
            case Policy::reference_no_constraints:
                if (ctx.active_prompt.empty()) return std::nullopt;
                return highlevel::decide(scene, ctx, belief);
            case Policy::oracle_scripted: {
                if (ctx.active_prompt.empty()) return std::nullopt;
                auto d = highlevel::decide(scene, ctx, truth());
                d.utterance.reset();
                return d;
            }
            case Policy::flat_passthrough: {
                const auto& grammar = lowlevel::bundled_grammar();
                switch (flat) {
                    case FlatMode::idle:
                        return std::nullopt;
                    case FlatMode::forward:
                    case FlatMode::atomic:
                        return HighLevelDecision{flat_prompt, std::nullopt};
                    case FlatMode::finish:
                        return HighLevelDecision{grammar.render(Home{}), std::nullopt};
                    case FlatMode::fallback: {
                        highlevel::DialogueContext plain;
                        plain.task = cfg.task;
                        plain.prior_skills = ctx.prior_skills;
                        auto d = highlevel::decide(scene, plain, sim::default_goal(catalog));
                        d.utterance.reset();
                        return d;
                    }
                }
                return std::nullopt;
            }
            case Policy::remote_backend: {
                if (ctx.active_prompt.empty()) return std::nullopt;
                highlevel::RemoteRequest req;
                req.task = cfg.task;
                req.views = scene;
                req.active_prompt = ctx.active_prompt;
                for (const auto& f : ctx.interjection_stack) req.interjections.push_back(f.text);
                req.prior_skills = ctx.prior_skills;
                req.allowed_skills = lowlevel::bundled_grammar().skill_list(cfg.task);
                return backend->decide(req);
            }
        }
        return std::nullopt;
    }

    void handle(HlInvoke& h) {
        if (h.gen != timer_gen) return;
        if (last_invocation && *last_invocation == now) return;
        last_invocation = now;
        push(now + seconds(cfg.highlevel_period_s), 3, HlInvoke{++timer_gen, false});

        ctx.held_objects.clear();
        for (const auto* o : scene.held()) ctx.held_objects[std::get<Gripper>(o->location).arm] = o->id;

        const auto id = ++hl_counter;
        json payload = {{"id", id},
                        {"reason", h.user ? "user_event" : "timer"},
                        {"scene", scene},
                        {"robot", robot},
                        {"pending", believed_pending(scene, belief)}};
        std::optional<HighLevelDecision> decision;
        try {
            decision = policy_decide();
        } catch (const highlevel::BackendError& e) {
            payload["error"] = {{"code", std::string(e.code())}, {"detail", e.what()}};
        }
        if (decision) {
            decision->skill_text = strip_utterance(decision->skill_text, decision->utterance);
            payload["decision"] = *decision;
        }
        append(now, "hl_invoked", std::move(payload));
        if (!decision) return;

        for (const auto& hook : decision_hooks) hook(DecisionRecord{id, now, *decision, scene, ctx, truth_step});
        ctx.pending_utterance.reset();
        for (auto& f : ctx.interjection_stack) f.handled = true;

        const int tokens = lowlevel::token_count(decision->skill_text) +
                           (decision->utterance ? lowlevel::token_count(*decision->utterance) : 0);
        push(now + cfg.latency.highlevel(tokens), 2, Issue{id, now, *decision});
    }

    void fail(std::int64_t command_id, const std::string& skill_text, std::string_view reason,
              const std::string& detail) {
        append(now, "skill_failed",
               json{{"command_id", command_id}, {"skill_text", skill_text}, {"reason", reason}, {"detail", detail}});
    }

    void handle(Issue& is) {
        const auto id = ++command_counter;
        const auto& text = is.decision.skill_text;
        append(now, "command_issued", json{{"id", id}, {"hl_id", is.hl_id}, {"skill_text", text}});
        if (is.decision.utterance) append(now, "utterance", json{{"command_id", id}, {"text", *is.decision.utterance}});
        command_seen(text);

        SkillCommand cmd;
        try {
            cmd = lowlevel::parse_command(text);
        } catch (const lowlevel::OutOfGrammar& e) {
            fail(id, text, "out_of_grammar", e.what());
            if (cfg.policy == Policy::flat_passthrough && flat == FlatMode::forward) flat = FlatMode::fallback;
            return;
        }

        if (plan && plan->command == cmd) return;  // already running
        if (!plan && last_completed && *last_completed == cmd && completed_at > is.invoked) return;  // stale

        if (plan) {
            fail(plan->command_id, plan->command.raw_text, "preempted", "superseded by command " + std::to_string(id));
            plan.reset();
            ++plan_gen;
        }

        if (cfg.policy == Policy::flat_passthrough && flat == FlatMode::forward) {
            flat = FlatMode::atomic;
            flat_atomic_id = id;
        }

        try {
            plan = lowlevel::begin_skill(scene, robot, cmd, rng, exec, cfg.latency, id);
        } catch (const lowlevel::FailedStart& e) {
            fail(id, text, "failed_start", e.what());
            if (cfg.policy != Policy::flat_passthrough && cfg.policy != Policy::oracle_scripted) {
                ctx.pending_utterance = "Sorry, I couldn't do that.";
            }
            if (cfg.policy == Policy::flat_passthrough && flat == FlatMode::atomic && flat_atomic_id == id) {
                flat = FlatMode::finish;
            }
            return;
        }
        ++plan_gen;
        ctx.prior_skills.push_back(text);
        if (std::holds_alternative<Pick>(cmd.skill)) ctx.last_target = plan->resolved_object_id;
        if (plan->chunks_total == 0) {
            push(now, 1, SkillEnd{plan_gen});
        } else {
            push(now + cfg.latency.chunk_inference(), 4, ChunkDue{plan_gen});
        }
    }

    void handle(ChunkDue& c) {
        if (c.gen != plan_gen || !plan) return;
        const int index = plan->chunks_emitted;
        auto chunk = lowlevel::next_chunk(*plan, robot);
        chunk.start_step = std::llround(to_seconds(now) * cfg.latency.control_rate_hz);
        if (index > 0 && now - last_chunk_start > span()) {
            append(now, "gap_detected",
                   json{{"command_id", plan->command_id},
                        {"expected", time_json(last_chunk_start + span())},
                        {"actual", time_json(now)}});
        }
        last_chunk_start = now;
        json payload = {{"command_id", plan->command_id}, {"index", index}, {"start_step", chunk.start_step}};
        if (cfg.record_actions) payload["actions"] = chunk.actions;
        append(now, "chunk", std::move(payload));
        if (plan->complete()) {
            push(now + span(), 1, SkillEnd{plan_gen});
        } else {
            push(now + std::max(span(), cfg.latency.chunk_inference()), 4, ChunkDue{plan_gen});
        }
    }

    void handle(SkillEnd& s) {
        if (s.gen != plan_gen || !plan) return;
        auto done = std::move(*plan);
        plan.reset();
        if (done.effect) scene = *done.effect;
        scene.time = now;
        robot = lowlevel::final_robot_state(done);
        last_completed = done.command;
        completed_at = now;

        if (done.outcome == Outcome::success) {
            ++skills_done;
            json payload = {{"command_id", done.command_id},
                            {"skill_text", done.command.raw_text},
                            {"outcome", done.outcome},
                            {"scene", scene},
                            {"robot", robot}};
            if (done.resolved_object_id) payload["object"] = *done.resolved_object_id;
            append(now, "skill_done", std::move(payload));
        } else {
            fail(done.command_id, done.command.raw_text, "execution_failure", "skill did not achieve its effect");
        }

        if (cfg.policy == Policy::flat_passthrough && flat == FlatMode::atomic && done.command_id == flat_atomic_id &&
            done.outcome == Outcome::success) {
            flat = FlatMode::finish;
        }
        skill_finished();

        if (done.outcome == Outcome::success && done.command.is_terminal()) end("completed");
    }

    void end(std::string_view reason) {
        if (ended) return;
        ended = true;
        append(now, "trial_end",
               json{{"reason", reason},
                    {"scene", scene},
                    {"believed_goal_satisfied", sim::goal_satisfied(scene, belief)},
                    {"skills_done", skills_done}});
        queue = {};
    }

    Micros timeout() const { return seconds(cfg.timeout_s); }

    bool advance_to(Micros until) {
        const auto limit = std::min(until, timeout());
        while (!ended && !queue.empty() && queue.top().t < limit) {
            auto e = queue.top();
            queue.pop();
            process(e);
        }
        if (!ended && until >= timeout()) {
            now = timeout();
            scene.time = now;
            end("timeout");
        } else if (!ended && until > now) {
            now = until;
        }
        return !ended;
    }
};

Session::Session(SessionConfig config, std::optional<UserScript> script)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(script))) {}

Session::~Session() = default;

void Session::inject(UserEvent event) {
    if (impl_->ended) return;
    const auto t = std::max(event.time, impl_->now);
    impl_->push(t, 0, UserArrive{std::move(event), -1});
}

bool Session::advance_to(Micros until) { return impl_->advance_to(until); }
void Session::run_to_end() { impl_->advance_to(impl_->timeout()); }
bool Session::ended() const { return impl_->ended; }
Micros Session::now() const { return impl_->now; }

std::optional<Micros> Session::next_event_time() const {
    if (impl_->ended || impl_->queue.empty()) return std::nullopt;
    return impl_->queue.top().t;
}

const SessionConfig& Session::config() const { return impl_->cfg; }
const EventLog& Session::log() const { return impl_->log; }
const SceneState& Session::scene() const { return impl_->scene; }
const RobotState& Session::robot() const { return impl_->robot; }
const GoalSpec& Session::belief() const { return impl_->belief; }
const highlevel::DialogueContext& Session::context() const { return impl_->ctx; }
const std::optional<UserScript>& Session::script() const { return impl_->script; }
int Session::truth_step() const { return impl_->truth_step; }
GoalSpec Session::truth() const { return impl_->truth(); }
const SceneState& Session::initial_scene() const { return impl_->initial; }

void Session::on_record(std::function<void(const LogRecord&)> fn) { impl_->record_hooks.push_back(std::move(fn)); }
void Session::on_decision(std::function<void(const DecisionRecord&)> fn) {
    impl_->decision_hooks.push_back(std::move(fn));
}

EventLog run_session(const SessionConfig& config, const UserScript& script) {
    Session s(config, script);
    s.run_to_end();
    return s.log();
}

}  // namespace hilo::orch
