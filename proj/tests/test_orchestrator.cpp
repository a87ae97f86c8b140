#include <doctest.h>
#include <httplib.h>

#include <sstream>
#include <thread>

#include "hilo/grammar.hpp"
#include "hilo/json_io.hpp"
#include "hilo/orchestrator.hpp"
#include "hilo/simenv.hpp"

using namespace hilo;
using namespace hilo::orch;

namespace {

ScriptStep step_at(double t, UserEvent::Kind kind, std::string text = {}) {
    ScriptStep s;
    s.trigger.kind = Trigger::Kind::at_time;
    s.trigger.time = seconds(t);
    s.event.kind = kind;
    s.event.text = std::move(text);
    return s;
}

UserScript prompt_script(Task task, std::uint64_t seed, const std::string& prompt) {
    UserScript s;
    s.name = "test";
    s.task = task;
    s.seed = seed;
    s.steps.push_back(step_at(0, UserEvent::Kind::prompt, prompt));
    s.ground_truth.push_back(sim::default_goal(sim::catalog(task)));
    return s;
}

void add_step(UserScript& s, ScriptStep step) {
    s.steps.push_back(std::move(step));
    s.ground_truth.push_back(s.ground_truth.back());
}

SessionConfig config_for(Task task, std::uint64_t seed, Policy policy = Policy::hierarchical_reference) {
    SessionConfig c;
    c.task = task;
    c.seed = seed;
    c.policy = policy;
    return c;
}

std::vector<double> times_of(const EventLog& log, std::string_view kind) {
    std::vector<double> out;
    for (const auto& r : log.records()) {
        if (r.kind == kind) out.push_back(to_seconds(r.t));
    }
    return out;
}

std::vector<const LogRecord*> records_of(const EventLog& log, std::string_view kind) {
    std::vector<const LogRecord*> out;
    for (const auto& r : log.records()) {
        if (r.kind == kind) out.push_back(&r);
    }
    return out;
}

const LogRecord& last_record(const EventLog& log) { return log.records().back(); }

}  // namespace

TEST_CASE("high-level invocations follow the 1 s grid without user events") {
    auto c = config_for(Task::table_bussing, 1);
    c.timeout_s = 10;
    auto log = run_session(c, prompt_script(Task::table_bussing, 1, "clean up the table"));
    CHECK(times_of(log, "hl_invoked") == std::vector<double>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    CHECK(last_record(log).kind == "trial_end");
    CHECK(last_record(log).payload["reason"] == "timeout");
    CHECK(to_seconds(last_record(log).t) == 10.0);
}

TEST_CASE("a user event triggers an immediate invocation and restarts the period") {
    auto c = config_for(Task::table_bussing, 1);
    c.timeout_s = 6;
    auto script = prompt_script(Task::table_bussing, 1, "clean up the table");
    add_step(script, step_at(2.5, UserEvent::Kind::interjection, "the weather is lovely"));
    auto log = run_session(c, script);
    CHECK(times_of(log, "hl_invoked") == std::vector<double>{0, 1, 2, 2.5, 3.5, 4.5, 5.5});
}

TEST_CASE("property: invocations are never more than one period apart") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        auto c = config_for(Task::table_bussing, seed);
        c.timeout_s = 30;
        auto script = prompt_script(Task::table_bussing, seed, "clean up the table");
        add_step(script, step_at(1.3 + seed * 0.7, UserEvent::Kind::interjection, "leave it alone"));
        add_step(script, step_at(4.05 + seed, UserEvent::Kind::resume));
        auto log = run_session(c, script);
        auto t = times_of(log, "hl_invoked");
        REQUIRE(t.size() > 2);
        for (std::size_t i = 1; i < t.size(); ++i) CHECK(t[i] - t[i - 1] <= 1.0 + 1e-9);
        // every user event is answered at its own instant
        for (double u : times_of(log, "user_event")) CHECK(std::count(t.begin(), t.end(), u) == 1);
    }
}

TEST_CASE("command issue waits for decode latency") {
    auto c = config_for(Task::table_bussing, 2);
    c.timeout_s = 5;
    auto log = run_session(c, prompt_script(Task::table_bussing, 2, "clean up the table"));
    std::map<std::int64_t, Micros> invoked;
    std::map<std::int64_t, HighLevelDecision> decided;
    for (const auto& r : log.records()) {
        if (r.kind == "hl_invoked" && r.payload.contains("decision")) {
            invoked[r.payload["id"]] = r.t;
            decided[r.payload["id"]] = r.payload["decision"].get<HighLevelDecision>();
        }
    }
    for (const auto* r : records_of(log, "command_issued")) {
        const auto hl = r->payload["hl_id"].get<std::int64_t>();
        const auto& d = decided.at(hl);
        const int tokens = lowlevel::token_count(d.skill_text) + (d.utterance ? lowlevel::token_count(*d.utterance) : 0);
        // 47 ms + 13.2 ms per token
        CHECK((r->t - invoked.at(hl)).count() == std::llround((47.0 + 13.2 * tokens) * 1000));
    }
}

TEST_CASE("chunks stream without gaps when inference is faster than a chunk") {
    auto c = config_for(Task::table_bussing, 3);
    c.timeout_s = 20;
    auto log = run_session(c, prompt_script(Task::table_bussing, 3, "clean up the table"));
    CHECK(detect_gaps(log, c.horizon, c.latency.control_rate_hz).empty());
    CHECK(records_of(log, "gap_detected").empty());
    const auto profile = c.profile();
    auto chunks = records_of(log, "chunk");
    REQUIRE_FALSE(chunks.empty());
    for (const auto* r : chunks) {
        const auto& a = r->payload["actions"];
        REQUIRE(a.size() == 10);
        for (const auto& row : a) CHECK(row.size() == static_cast<std::size_t>(profile.action_dim));
        CHECK(r->payload["start_step"].get<std::int64_t>() == std::llround(to_seconds(r->t) * 50));
    }
}

TEST_CASE("slow inference leaves gaps between chunks") {
    auto c = config_for(Task::table_bussing, 3);
    c.timeout_s = 20;
    c.latency.per_chunk_inference_ms = 250;
    auto log = run_session(c, prompt_script(Task::table_bussing, 3, "clean up the table"));
    auto gaps = detect_gaps(log, c.horizon, c.latency.control_rate_hz);
    CHECK(gaps.size() == records_of(log, "gap_detected").size());

    std::map<std::int64_t, int> chunks_per_command, gaps_per_command;
    for (const auto* r : records_of(log, "chunk")) ++chunks_per_command[r->payload["command_id"]];
    for (const auto& g : gaps) {
        ++gaps_per_command[g.command_id];
        CHECK(g.actual - g.expected == millis(50));
    }
    int multi = 0;
    for (const auto& [id, n] : chunks_per_command) {
        if (n < 2) continue;
        ++multi;
        CHECK(gaps_per_command[id] == n - 1);
    }
    CHECK(multi > 0);
}

TEST_CASE("runs are deterministic and logs round-trip") {
    auto c = config_for(Task::sandwich_making, 5);
    c.timeout_s = 30;
    auto script = prompt_script(Task::sandwich_making, 5, "make me a vegetarian sandwich");
    auto a = run_session(c, script);
    auto b = run_session(c, script);
    CHECK(a.hash() == b.hash());
    CHECK(a.hash().size() == 64);

    std::istringstream in(a.to_jsonl());
    auto parsed = EventLog::parse(in);
    CHECK(parsed.to_jsonl() == a.to_jsonl());
    CHECK(parsed.hash() == a.hash());

    c.seed = 6;
    script.seed = 6;
    CHECK(run_session(c, script).hash() != a.hash());
}

TEST_CASE("log parse errors name the line") {
    auto c = config_for(Task::table_bussing, 1);
    c.timeout_s = 3;
    auto text = run_session(c, prompt_script(Task::table_bussing, 1, "clean up the table")).to_jsonl();
    std::istringstream lines(text);
    std::string out, line;
    for (int n = 1; std::getline(lines, line); ++n) out += (n == 3 ? std::string("{broken") : line) + "\n";
    std::istringstream bad(out);
    try {
        EventLog::parse(bad);
        FAIL("expected LogError");
    } catch (const LogError& e) {
        CHECK(e.line() == 3);
    }
    std::istringstream missing(R"({"seq":0,"t":0,"kind":"x"})");
    CHECK_THROWS_AS(EventLog::parse(missing), LogError);
}

TEST_CASE("reference policy completes the default tasks") {
    for (auto [task, prompt] : std::vector<std::pair<Task, std::string>>{
             {Task::table_bussing, "clean up the table"},
             {Task::sandwich_making, "make me a sandwich"},
             {Task::grocery_shopping, "Can you get me something sweet?"}}) {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            Session s(config_for(task, seed), prompt_script(task, seed, prompt));
            s.run_to_end();
            const auto& end = last_record(s.log());
            INFO(to_string(task), " seed ", seed);
            CHECK(end.kind == "trial_end");
            CHECK(end.payload["reason"] == "completed");
            CHECK(end.payload["believed_goal_satisfied"] == true);
            CHECK(sim::goal_satisfied(s.scene(), s.belief()));
            CHECK(validate_scene(s.scene(), s.config().profile()).empty());
        }
    }
}

TEST_CASE("utterances never reach the executor") {
    auto script = prompt_script(Task::table_bussing, 4, "clean up the table");
    ScriptStep j;
    j.trigger.kind = Trigger::Kind::on_command_matching;
    j.trigger.pattern = "put the paper bowl";
    j.event.kind = UserEvent::Kind::interjection;
    j.event.text = "that's not trash";
    add_step(script, j);
    auto log = run_session(config_for(Task::table_bussing, 4), script);
    std::set<std::string> said;
    for (const auto* r : records_of(log, "utterance")) said.insert(r->payload["text"].get<std::string>());
    CHECK(said.size() >= 2);
    for (const auto* r : records_of(log, "command_issued")) {
        const auto text = r->payload["skill_text"].get<std::string>();
        CHECK_NOTHROW(lowlevel::parse_command(text));
        for (const auto& u : said) CHECK(text.find(u) == std::string::npos);
    }
}

TEST_CASE("an interjection preempts the running skill and the object goes back") {
    auto script = prompt_script(Task::table_bussing, 4, "clean up the table");
    ScriptStep j;
    j.trigger.kind = Trigger::Kind::on_command_matching;
    j.trigger.pattern = "put the paper bowl in the trash bin";
    j.event.kind = UserEvent::Kind::interjection;
    j.event.text = "that's not trash";
    add_step(script, j);
    Session s(config_for(Task::table_bussing, 4), script);
    s.run_to_end();
    bool preempted = false;
    for (const auto* r : records_of(s.log(), "skill_failed")) {
        if (r->payload["reason"] == "preempted") {
            preempted = true;
            CHECK(r->payload["skill_text"] == "put the paper bowl in the trash bin");
        }
    }
    CHECK(preempted);
    const SceneObject* bowl = nullptr;
    for (const auto& o : s.scene().objects) {
        if (o.display_name == "paper bowl") bowl = &o;
    }
    REQUIRE(bowl);
    CHECK(std::holds_alternative<Surface>(bowl->location));
    CHECK(last_record(s.log()).payload["reason"] == "completed");
}

TEST_CASE("flat pass-through: constraint prompts fall back to clearing everything") {
    auto c = config_for(Task::table_bussing, 2, Policy::flat_passthrough);
    Session s(c, prompt_script(Task::table_bussing, 2, "can you clean up only the trash, but not dishes?"));
    s.run_to_end();
    auto failed = records_of(s.log(), "skill_failed");
    REQUIRE_FALSE(failed.empty());
    CHECK(failed.front()->payload["reason"] == "out_of_grammar");
    CHECK(records_of(s.log(), "utterance").empty());
    // it cleans dishes too
    bool dish_binned = false;
    for (const auto& o : s.scene().objects) {
        if (o.object_class == ObjectClass::dish && std::holds_alternative<Container>(o.location)) dish_binned = true;
    }
    CHECK(dish_binned);
}

TEST_CASE("flat pass-through: an atomic prompt runs once then goes home") {
    auto c = config_for(Task::table_bussing, 2, Policy::flat_passthrough);
    Session s(c, prompt_script(Task::table_bussing, 2, "pick up the paper cup"));
    s.run_to_end();
    std::vector<std::string> done;
    for (const auto* r : records_of(s.log(), "skill_done")) done.push_back(r->payload["skill_text"]);
    CHECK(done == std::vector<std::string>{"pick up the paper cup", "go back to home position"});
    CHECK(last_record(s.log()).payload["reason"] == "completed");
}

TEST_CASE("ablation keeps working after interjections but ignores them") {
    auto script = prompt_script(Task::table_bussing, 4, "can you clean up only the trash?");
    auto c = config_for(Task::table_bussing, 4, Policy::reference_no_constraints);
    Session s(c, script);
    s.run_to_end();
    CHECK(sim::goal_satisfied(s.scene(), sim::default_goal(sim::catalog(Task::table_bussing))));
}

TEST_CASE("oracle policy follows the scripted ground truth") {
    auto script = prompt_script(Task::table_bussing, 4, "gibberish words");
    auto truth = sim::default_goal(sim::catalog(Task::table_bussing));
    truth.include = Predicate{};
    truth.include.classes = {ObjectClass::trash};
    script.ground_truth[0] = truth;
    Session s(config_for(Task::table_bussing, 4, Policy::oracle_scripted), script);
    s.run_to_end();
    CHECK(sim::goal_satisfied(s.scene(), truth));
    for (const auto& o : s.scene().objects) {
        if (o.object_class != ObjectClass::trash) CHECK(std::holds_alternative<Surface>(o.location));
    }
}

TEST_CASE("skill failure outcomes are logged and retried") {
    auto c = config_for(Task::table_bussing, 1);
    c.failure_probability = 1.0;
    c.timeout_s = 8;
    auto log = run_session(c, prompt_script(Task::table_bussing, 1, "clean up the table"));
    CHECK(records_of(log, "skill_done").empty());
    int failures = 0;
    for (const auto* r : records_of(log, "skill_failed")) failures += r->payload["reason"] == "execution_failure";
    CHECK(failures >= 2);
}

TEST_CASE("live injection matches the scripted run") {
    auto c = config_for(Task::table_bussing, 7);
    c.timeout_s = 25;
    auto script = prompt_script(Task::table_bussing, 7, "clean up the table");
    add_step(script, step_at(6.25, UserEvent::Kind::interjection, "leave the rest"));
    auto scripted = run_session(c, script);

    Session live(c);
    live.inject(UserEvent{UserEvent::Kind::prompt, "clean up the table", Micros{0}});
    for (double t = 0.05; t < 6.25; t += 0.05) live.advance_to(seconds(t));
    live.advance_to(seconds(6.25));
    live.inject(UserEvent{UserEvent::Kind::interjection, "leave the rest", Micros{0}});
    live.run_to_end();
    CHECK(live.log().hash() == scripted.hash());
}

TEST_CASE("script triggers fire in order") {
    auto script = prompt_script(Task::table_bussing, 2, "clean up the table");
    ScriptStep a;
    a.trigger.kind = Trigger::Kind::on_skill_done;
    a.trigger.count = 2;
    a.trigger.delay = millis(300);
    a.event.kind = UserEvent::Kind::interjection;
    a.event.text = "leave the rest";
    add_step(script, a);
    Session s(config_for(Task::table_bussing, 2), script);
    s.run_to_end();
    auto done = times_of(s.log(), "skill_done");
    auto user = times_of(s.log(), "user_event");
    REQUIRE(user.size() == 2);
    CHECK(user[1] == doctest::Approx(done[1] + 0.3));
    CHECK(s.truth_step() == 1);
}

TEST_CASE("scripts round-trip through JSON and validate") {
    auto script = prompt_script(Task::grocery_shopping, 9, "something sweet");
    ScriptStep m;
    m.trigger.kind = Trigger::Kind::on_command_matching;
    m.trigger.pattern = "pick up the (kitkat|twix)";
    m.trigger.delay = millis(500);
    m.event.kind = UserEvent::Kind::interjection;
    m.event.text = "I also want some Kitkat";
    add_step(script, m);
    add_step(script, ScriptStep{Trigger{Trigger::Kind::on_skill_done, {}, {}, 4, {}}, UserEvent{UserEvent::Kind::resume, "", {}}});
    json j = script;
    auto back = j.get<UserScript>();
    CHECK(json(back) == j);
    CHECK(back.validate().empty());

    back.ground_truth.pop_back();
    CHECK_FALSE(back.validate().empty());
    back = j.get<UserScript>();
    back.steps[1].trigger.pattern = "(";
    CHECK_FALSE(back.validate().empty());
    CHECK_THROWS_AS(Session(config_for(Task::grocery_shopping, 9), back), std::invalid_argument);
}

TEST_CASE("config validation") {
    auto c = config_for(Task::table_bussing, 0);
    c.horizon = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = config_for(Task::table_bussing, 0, Policy::remote_backend);
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = config_for(Task::table_bussing, 0);
    c.failure_probability = 2;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

// ------------------------------------------------------------------------- remote policy

namespace {

struct StubServer {
    httplib::Server server;
    int port = 0;
    std::thread thread;

    explicit StubServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
        server.Post("/decide", [handler](const httplib::Request& req, httplib::Response& res) { handler(req, res); });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~StubServer() {
        server.stop();
        thread.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port) + "/decide"; }
};

}  // namespace

TEST_CASE("remote policy: replies drive the robot and bad replies keep the last command") {
    int calls = 0;
    StubServer stub([&calls](const httplib::Request& req, httplib::Response& res) {
        ++calls;
        auto body = json::parse(req.body);
        std::string text = "pick up the paper cup";
        if (calls == 3) text = "pick up the bermuda triangle";
        if (calls == 4) {
            res.set_content("nonsense", "application/json");
            return;
        }
        if (!body["prior_skills"].empty() && calls > 4) text = "go back to home position";
        res.set_content(json{{"skill_text", text}, {"utterance", "On it."}}.dump(), "application/json");
    });
    auto c = config_for(Task::table_bussing, 2, Policy::remote_backend);
    c.remote = highlevel::RemoteConfig{stub.url(), 2000};
    c.timeout_s = 12;
    Session s(c, prompt_script(Task::table_bussing, 2, "clean up the table"));
    s.run_to_end();

    bool oog = false;
    for (const auto* r : records_of(s.log(), "skill_failed")) oog |= r->payload["reason"] == "out_of_grammar";
    CHECK(oog);
    bool malformed = false;
    for (const auto* r : records_of(s.log(), "hl_invoked")) {
        if (r->payload.contains("error")) malformed |= r->payload["error"]["code"] == "backend_malformed";
    }
    CHECK(malformed);
    auto done = records_of(s.log(), "skill_done");
    REQUIRE(done.size() == 2);
    CHECK(done[0]->payload["skill_text"] == "pick up the paper cup");
    CHECK(done[1]->payload["skill_text"] == "go back to home position");
    for (const auto* r : records_of(s.log(), "command_issued")) {
        CHECK(r->payload["skill_text"].get<std::string>().find("On it.") == std::string::npos);
    }
}
