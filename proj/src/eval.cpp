#include "hilo/eval.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>

#include "hilo/grammar.hpp"
#include "hilo/json_io.hpp"
#include "hilo/lowlevel.hpp"
#include "hilo/simenv.hpp"

namespace hilo::eval {

namespace {

bool contains(const std::vector<std::string>& v, const std::string& id) {
    return std::find(v.begin(), v.end(), id) != v.end();
}

std::vector<Arm> free_arms(const SceneState& scene, const std::vector<Arm>& arms) {
    std::vector<Arm> out;
    for (auto a : arms) {
        if (!scene.held_by(a)) out.push_back(a);
    }
    return out;
}

}  // namespace

bool auto_judge(const HighLevelDecision& decision, const GoalSpec& goal_now, const SceneState& scene,
                const highlevel::DialogueContext& ctx) {
    SkillCommand cmd;
    try {
        cmd = lowlevel::parse_command(decision.skill_text);
    } catch (const lowlevel::OutOfGrammar&) {
        return false;
    }
    const auto arms = sim::catalog(ctx.task).profile().arms();
    const auto st = sim::evaluate_goal(scene, goal_now);
    const bool repair_owed = !st.displaced_excluded.empty();
    const bool hands_empty = scene.held().empty();

    if (const auto* pick = std::get_if<Pick>(&cmd.skill)) {
        if (free_arms(scene, arms).empty()) return false;
        const SceneObject* obj = nullptr;
        try {
            obj = &lowlevel::resolve_object(scene, pick->object);
        } catch (const lowlevel::NotFound&) {
            return false;
        }
        if (repair_owed) return contains(st.displaced_excluded, obj->id);
        return st.is_pickable(obj->id);
    }
    if (const auto* place = std::get_if<Place>(&cmd.skill)) {
        if (goal_now.delivery && place->object == goal_now.delivery->container) {
            return hands_empty && !repair_owed && st.delivery_pending && place->destination == goal_now.delivery->surface;
        }
        const SceneObject* obj = nullptr;
        try {
            obj = &lowlevel::resolve_held(scene, place->object, arms);
        } catch (const lowlevel::NotFound&) {
            return false;
        }
        if (st.is_target(obj->id)) {
            const auto dest = sim::mapped_destination(*obj, goal_now);
            return dest && place->destination == *dest;
        }
        return place->destination == sim::origin_name(*obj);
    }
    if (cmd.is_terminal()) {
        return hands_empty && !repair_owed && st.pickable.empty() && !st.delivery_pending;
    }
    return false;
}

Ratio instruction_accuracy(const std::vector<Mark>& marks) {
    if (marks.empty()) throw EmptyMarks();
    Ratio r{0, static_cast<std::int64_t>(marks.size())};
    for (const auto& m : marks) r.num += m.correct ? 1 : 0;
    return r;
}

Ratio task_progress(const SceneState& final_scene, const GoalSpec& goal) {
    const auto st = sim::evaluate_goal(final_scene, goal);
    Ratio r{static_cast<std::int64_t>(st.placed.size()), static_cast<std::int64_t>(st.targets.size())};
    if (st.delivery_applicable) {
        r.den += 1;
        r.num += st.delivery_done ? 1 : 0;
    }
    if (r.den == 0) {
        if (goal.halt) return Ratio{1, 1};
        throw EmptyGoal();
    }
    return r;
}

bool is_violation(const SceneState& before, const SkillCommand& command, const std::optional<std::string>& object_id,
                  const GoalSpec& goal) {
    if (!object_id) return false;
    const auto* obj = before.find(*object_id);
    if (!obj) return false;
    const auto st = sim::evaluate_goal(before, goal);
    if (st.is_target(obj->id)) return false;
    if (std::holds_alternative<Pick>(command.skill)) return !contains(st.displaced_excluded, obj->id);
    if (const auto* place = std::get_if<Place>(&command.skill)) return place->destination != sim::origin_name(*obj);
    return false;
}

json to_json(const TrialResult& r) {
    json marks = json::array();
    for (const auto& m : r.marks) {
        marks.push_back({{"decision_id", m.decision_id},
                         {"t", time_json(m.t)},
                         {"skill_text", m.skill_text},
                         {"correct", m.correct},
                         {"truth_step", m.truth_step}});
    }
    return json{{"suite", r.suite},
                {"task", r.task},
                {"policy", std::string(to_string(r.policy))},
                {"seed", r.seed},
                {"instruction_accuracy", r.ia.value()},
                {"ia_fraction", {r.ia.num, r.ia.den}},
                {"task_progress", r.tp.value()},
                {"tp_fraction", {r.tp.num, r.tp.den}},
                {"violations", r.violations},
                {"end_reason", r.end_reason},
                {"duration", time_json(r.duration)},
                {"log_hash", r.log_hash},
                {"marks", marks}};
}

TrialResult run_trial(orch::SessionConfig config, const orch::UserScript& script, bool keep_log) {
    config.task = script.task;
    config.seed = script.seed;
    orch::Session session(config, script);

    TrialResult result;
    result.suite = script.name;
    result.task = script.task;
    result.policy = config.policy;
    result.seed = script.seed;

    const auto default_goal = sim::default_goal(sim::catalog(script.task));
    auto truth_at = [&](int step) { return step >= 0 ? script.ground_truth[step] : default_goal; };

    session.on_decision([&](const orch::DecisionRecord& d) {
        const bool ok = auto_judge(d.decision, truth_at(d.truth_step), d.scene, d.ctx);
        result.marks.push_back({d.id, d.t, d.decision.skill_text, ok, d.truth_step});
    });

    SceneState before = session.initial_scene();
    session.on_record([&](const orch::LogRecord& r) {
        const bool done = r.kind == "skill_done";
        const bool failed = r.kind == "skill_failed" && r.payload.at("reason") == "execution_failure";
        if (!done && !failed) return;
        if (done) {
            const auto cmd = lowlevel::parse_command(r.payload.at("skill_text").get<std::string>());
            std::optional<std::string> obj;
            if (r.payload.contains("object")) obj = r.payload.at("object").get<std::string>();
            if (is_violation(before, cmd, obj, truth_at(session.truth_step()))) ++result.violations;
        }
        before = session.scene();
    });

    session.run_to_end();

    try {
        result.ia = instruction_accuracy(result.marks);
    } catch (const EmptyMarks&) {
        result.ia = Ratio{0, 0};
    }
    result.tp = task_progress(session.scene(), truth_at(session.truth_step()));
    const auto& end = session.log().records().back();
    result.end_reason = end.payload.value("reason", std::string{});
    result.duration = end.t;
    result.log_hash = session.log().hash();
    if (keep_log) result.log = session.log();
    return result;
}

// =========================================================================================
// Benchmark
// =========================================================================================

double Cell::mean_ia() const {
    if (trials.empty()) return 0.0;
    double s = 0;
    for (const auto& t : trials) s += t.ia.value();
    return s / static_cast<double>(trials.size());
}

double Cell::mean_tp() const {
    if (trials.empty()) return 0.0;
    double s = 0;
    for (const auto& t : trials) s += t.tp.value();
    return s / static_cast<double>(trials.size());
}

double Cell::min_ia() const {
    double m = trials.empty() ? 0.0 : 1.0;
    for (const auto& t : trials) m = std::min(m, t.ia.value());
    return m;
}

int Cell::violations() const {
    int n = 0;
    for (const auto& t : trials) n += t.violations;
    return n;
}

int Cell::trials_with_violations() const {
    int n = 0;
    for (const auto& t : trials) n += t.violations > 0 ? 1 : 0;
    return n;
}

const Cell* Report::find(std::string_view suite, orch::Policy policy) const {
    for (const auto& c : cells) {
        if (c.suite == suite && c.policy == policy) return &c;
    }
    return nullptr;
}

namespace {

std::vector<std::string> suite_order(const Report& r) {
    std::vector<std::string> out;
    for (const auto& c : r.cells) {
        if (std::find(out.begin(), out.end(), c.suite) == out.end()) out.push_back(c.suite);
    }
    return out;
}

std::vector<orch::Policy> policy_order(const Report& r) {
    std::vector<orch::Policy> out;
    for (const auto& c : r.cells) {
        if (std::find(out.begin(), out.end(), c.policy) == out.end()) out.push_back(c.policy);
    }
    return out;
}

std::string fixed(double v, int width, int prec = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%*.*f", width, prec, v);
    return buf;
}

std::string pad(std::string s, std::size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
}

}  // namespace

json Report::to_json() const {
    json cells_json = json::array();
    for (const auto& c : cells) {
        json trials_json = json::array();
        for (const auto& t : c.trials) trials_json.push_back(eval::to_json(t));
        cells_json.push_back({{"suite", c.suite},
                              {"task", c.task},
                              {"policy", std::string(to_string(c.policy))},
                              {"constrained", c.constrained},
                              {"trials", c.trials.size()},
                              {"mean_ia", c.mean_ia()},
                              {"mean_tp", c.mean_tp()},
                              {"min_ia", c.min_ia()},
                              {"violations", c.violations()},
                              {"trials_with_violations", c.trials_with_violations()},
                              {"results", trials_json}});
    }
    json gaps = json::array();
    for (const auto& s : suite_order(*this)) {
        const auto* h = find(s, orch::Policy::hierarchical_reference);
        const auto* f = find(s, orch::Policy::flat_passthrough);
        if (!h || !f) continue;
        gaps.push_back({{"suite", s},
                        {"ia_gap", h->mean_ia() - f->mean_ia()},
                        {"tp_gap", h->mean_tp() - f->mean_tp()}});
    }
    return json{{"cells", cells_json}, {"gaps", gaps}};
}

std::string Report::to_text() const {
    const auto suites = suite_order(*this);
    const auto policies = policy_order(*this);
    std::size_t sw = 5;
    for (const auto& s : suites) sw = std::max(sw, s.size());
    constexpr std::size_t cw = 26;

    std::string out = pad("suite", sw);
    for (auto p : policies) out += " | " + pad(std::string(to_string(p)), cw);
    out += " | gap (hier - flat)\n";
    out += pad("", sw);
    for (std::size_t i = 0; i < policies.size(); ++i) out += " | " + pad("    IA     TP  viol", cw);
    out += " |     IA     TP\n";
    out += std::string(sw, '-');
    for (std::size_t i = 0; i < policies.size(); ++i) out += "-+-" + std::string(cw, '-');
    out += "-+" + std::string(16, '-') + "\n";

    for (const auto& s : suites) {
        out += pad(s, sw);
        for (auto p : policies) {
            const auto* c = find(s, p);
            std::string cell;
            if (c) cell = fixed(c->mean_ia(), 6) + " " + fixed(c->mean_tp(), 6) + " " + std::to_string(c->violations());
            out += " | " + pad(cell, cw);
        }
        const auto* h = find(s, orch::Policy::hierarchical_reference);
        const auto* f = find(s, orch::Policy::flat_passthrough);
        out += " |";
        if (h && f) out += " " + fixed(h->mean_ia() - f->mean_ia(), 6) + " " + fixed(h->mean_tp() - f->mean_tp(), 6);
        out += "\n";
    }
    return out;
}

Report run_benchmark(const std::vector<Suite>& suites, const std::vector<orch::Policy>& policies,
                     const BenchOptions& options) {
    struct Job {
        std::size_t cell;
        const orch::UserScript* script;
        orch::Policy policy;
    };
    Report report;
    std::vector<Job> jobs;
    for (const auto& suite : suites) {
        const auto n = std::min<std::size_t>(suite.trials.size(), static_cast<std::size_t>(options.trials_per_cell));
        for (auto policy : policies) {
            report.cells.push_back({suite.name, suite.task, policy, suite.constrained, {}});
            report.cells.back().trials.resize(n);
            for (std::size_t i = 0; i < n; ++i) jobs.push_back({report.cells.size() - 1, &suite.trials[i], policy});
        }
    }
    std::vector<TrialResult> results(jobs.size());
    std::vector<std::string> errors(jobs.size());

    auto run_job = [&](std::size_t k) {
        try {
            auto config = options.base;
            config.policy = jobs[k].policy;
            config.rng_salt = options.seed;
            results[k] = run_trial(config, *jobs[k].script, options.keep_logs);
            results[k].suite = report.cells[jobs[k].cell].suite;
        } catch (const std::exception& e) {
            errors[k] = e.what();
        }
    };

    const auto count = static_cast<std::int64_t>(jobs.size());
    if (options.parallel) {
#pragma omp parallel for schedule(dynamic, 1)
        for (std::int64_t k = 0; k < count; ++k) run_job(static_cast<std::size_t>(k));
    } else {
        for (std::int64_t k = 0; k < count; ++k) run_job(static_cast<std::size_t>(k));
    }

    std::vector<std::size_t> next(report.cells.size(), 0);
    for (std::size_t k = 0; k < jobs.size(); ++k) {
        if (!errors[k].empty()) {
            throw std::runtime_error("trial " + jobs[k].script->name + " seed " + std::to_string(jobs[k].script->seed) +
                                     " failed: " + errors[k]);
        }
        auto& cell = report.cells[jobs[k].cell];
        cell.trials[next[jobs[k].cell]++] = std::move(results[k]);
    }
    return report;
}

}  // namespace hilo::eval
