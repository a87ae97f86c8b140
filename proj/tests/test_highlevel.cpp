#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <thread>

#include "hilo/grammar.hpp"
#include "hilo/highlevel.hpp"
#include "hilo/lowlevel.hpp"
#include "hilo/json_io.hpp"
#include "hilo/remote.hpp"
#include "hilo/rng.hpp"
#include "hilo/simenv.hpp"

using namespace hilo;
using namespace hilo::highlevel;

namespace {

SceneObject item(const std::string& id, const std::string& name, ObjectClass cls, Location loc = Surface{"table"}) {
    const auto& cat = sim::catalog(Task::table_bussing);
    SceneObject o;
    o.id = id;
    o.display_name = name;
    o.object_class = cls;
    if (const auto* it = cat.item(name)) {
        o.attributes = it->attributes;
        o.color_tags = it->color_tags;
    }
    o.location = loc;
    o.origin = Surface{"table"};
    return o;
}

SceneState bussing_scene() {
    SceneState s;
    s.surfaces = {"table"};
    s.containers = {"trash_bin", "bussing_bin"};
    s.objects = {item("o1", "paper cup", ObjectClass::trash),    item("o2", "plastic cup", ObjectClass::dish),
                 item("o3", "paper bowl", ObjectClass::trash),   item("o4", "white bowl", ObjectClass::dish),
                 item("o5", "fork", ObjectClass::utensil),       item("o6", "wrapper", ObjectClass::trash),
                 item("o7", "yellow plate", ObjectClass::dish)};
    return s;
}

DialogueContext context_for(Task task) {
    DialogueContext c;
    c.task = task;
    return c;
}

}  // namespace

TEST_CASE("prompt parsing: bussing constraints") {
    const auto& cat = sim::catalog(Task::table_bussing);
    auto p = parse_goal("can you clean up only the trash, but not dishes?", cat);
    CHECK_FALSE(p.clarify);
    CHECK(p.goal.include.classes == std::set<ObjectClass>{ObjectClass::trash});
    CHECK(p.goal.exclude.classes.count(ObjectClass::dish) == 1);
    CHECK(p.utterance.rfind("Sure, I'll only clean up the trash", 0) == 0);

    auto st = sim::evaluate_goal(bussing_scene(), p.goal);
    CHECK(st.targets == std::vector<std::string>{"o1", "o3", "o6"});

    auto y = parse_goal("bus all the yellowish things", cat);
    st = sim::evaluate_goal(bussing_scene(), y.goal);
    CHECK(st.targets == std::vector<std::string>{"o6", "o7"});

    auto d = parse_goal("can you clean up only the dishes?", cat);
    st = sim::evaluate_goal(bussing_scene(), d.goal);
    CHECK(st.targets == std::vector<std::string>{"o2", "o4", "o5", "o7"});

    CHECK(parse_goal("hmm", cat).clarify);
}

TEST_CASE("prompt parsing: sandwich diets and fillings") {
    const auto& cat = sim::catalog(Task::sandwich_making);
    auto v = parse_goal("Hi robot, can you make me a sandwich? I'm vegetarian and I'm allergic to pickles.", cat);
    CHECK(v.goal.forbidden_attributes.count("meat") == 1);
    CHECK(v.goal.exclude.names.count("pickles") == 1);

    auto l = parse_goal("make me a sandwich, I'm lactose intolerant", cat);
    CHECK(l.goal.forbidden_attributes == std::set<std::string>{"dairy"});
    CHECK(l.utterance == "Sure, I won't put cheese on it.");

    auto w = parse_goal("make me a sandwich with cheese, roast beef, and lettuce", cat);
    CHECK(w.goal.include.names == std::set<std::string>{"cheese", "roast beef", "lettuce"});
}

TEST_CASE("prompt parsing: grocery requests") {
    const auto& cat = sim::catalog(Task::grocery_shopping);
    auto s = parse_goal("Can you get me something sweet?", cat);
    REQUIRE(s.goal.required_items.size() == 1);
    CHECK(s.goal.required_items[0].attribute == "sweet");
    CHECK(s.goal.required_items[0].count == 1);
    CHECK(s.utterance == "Sure, I'll get you something sweet.");

    auto k = parse_goal("I want some kitkat", cat);
    REQUIRE(k.goal.required_items.size() == 1);
    CHECK(k.goal.required_items[0].name == "kitkat");
}

TEST_CASE("reference decisions") {
    const auto& cat = sim::catalog(Task::table_bussing);
    auto scene = bussing_scene();
    auto ctx = context_for(Task::table_bussing);
    GoalSpec goal;
    apply_prompt("can you clean up only the trash, but not dishes?", cat, ctx, goal);

    auto d = decide(scene, ctx, goal);
    CHECK(d.skill_text == "pick up the paper cup");
    REQUIRE(d.utterance);

    ctx.pending_utterance.reset();
    scene.find("o4")->location = Gripper{Arm::single};
    d = decide(scene, ctx, sim::default_goal(cat));
    CHECK(d.skill_text == "put the white bowl in the bussing bin");
    CHECK_FALSE(d.utterance);

    // holding something the goal rules out: put it back
    d = decide(scene, ctx, goal);
    CHECK(d.skill_text == "put the white bowl on the table");

    scene = bussing_scene();
    for (auto& o : scene.objects) {
        if (o.object_class == ObjectClass::trash) o.location = Container{"trash_bin"};
    }
    d = decide(scene, ctx, goal);
    CHECK(d.skill_text == "go back to home position");
    CHECK(d.utterance == std::optional<std::string>("All done!"));
    ctx.prior_skills.push_back(d.skill_text);
    CHECK_FALSE(decide(scene, ctx, goal).utterance);
}

TEST_CASE("decisions always parse") {
    for (auto task : {Task::table_bussing, Task::sandwich_making, Task::grocery_shopping}) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            auto setup = sim::load_task(task, seed);
            auto ctx = context_for(task);
            auto d = decide(setup.scene, ctx, setup.goal);
            CHECK_NOTHROW(lowlevel::parse_command(d.skill_text));
        }
    }
}

TEST_CASE("interjection: that's not trash") {
    const auto& cat = sim::catalog(Task::table_bussing);
    auto scene = bussing_scene();
    auto ctx = context_for(Task::table_bussing);
    GoalSpec goal;
    apply_prompt("clean up the table", cat, ctx, goal);
    scene.find("o3")->location = Gripper{Arm::single};

    auto r = handle_interjection("that's not trash", seconds(3), scene, ctx, goal);
    CHECK(r.understood);
    CHECK(r.goal.excluded_ids.count("o3") == 1);
    CHECK(r.goal.class_overrides.at("o3") == ObjectClass::dish);
    CHECK(r.immediate.skill_text == "put the paper bowl on the table");
    CHECK(r.immediate.utterance == std::optional<std::string>("Sorry about that, I'll put the paper bowl back."));
    CHECK(r.ctx.has_unhandled());

    // once back on the table it stays there
    scene.find("o3")->location = Surface{"table"};
    auto st = sim::evaluate_goal(scene, r.goal);
    CHECK_FALSE(st.is_pickable("o3"));
    CHECK(st.is_excluded("o3"));
}

TEST_CASE("interjection: leave the rest halts") {
    const auto& cat = sim::catalog(Task::table_bussing);
    auto scene = bussing_scene();
    auto ctx = context_for(Task::table_bussing);
    GoalSpec goal;
    apply_prompt("clean up the table", cat, ctx, goal);
    auto r = handle_interjection("ok, leave the rest", seconds(5), scene, ctx, goal);
    CHECK(r.goal.halt);
    CHECK(r.immediate.skill_text == "go back to home position");

    // still finishes the object in hand
    scene.find("o1")->location = Gripper{Arm::single};
    r = handle_interjection("leave the rest", seconds(5), scene, ctx, goal);
    CHECK(r.immediate.skill_text == "put the paper cup in the trash bin");
}

TEST_CASE("interjection then resume restores the goal") {
    const auto& cat = sim::catalog(Task::table_bussing);
    auto scene = bussing_scene();
    auto ctx = context_for(Task::table_bussing);
    GoalSpec goal;
    apply_prompt("clean up the table", cat, ctx, goal);
    ctx.last_target = "o2";
    const auto before = sim::evaluate_goal(scene, goal).pending;

    auto r = handle_interjection("leave it alone", seconds(2), scene, ctx, goal);
    CHECK(r.goal.excluded_ids == std::set<std::string>{"o2"});
    CHECK(r.immediate.skill_text == "pick up the paper cup");
    auto after = sim::evaluate_goal(scene, r.goal).pending;
    CHECK(std::find(after.begin(), after.end(), "o2") == after.end());

    auto c2 = r.ctx;
    auto g2 = r.goal;
    CHECK(resume(c2, g2));
    CHECK(g2 == goal);
    CHECK(sim::evaluate_goal(scene, g2).pending == before);
    CHECK_FALSE(resume(c2, g2));
}

TEST_CASE("interjection: extra grocery request") {
    const auto& cat = sim::catalog(Task::grocery_shopping);
    auto setup = sim::load_task(Task::grocery_shopping, 3);
    auto ctx = context_for(Task::grocery_shopping);
    GoalSpec goal;
    apply_prompt("Can you get me something sweet?", cat, ctx, goal);
    auto r = handle_interjection("I also want some Kitkat", seconds(4), setup.scene, ctx, goal);
    CHECK(r.understood);
    REQUIRE(r.goal.required_items.size() == 2);
    CHECK(r.goal.required_items[1].name == "kitkat");
}

TEST_CASE("interjection nobody understands asks for clarification") {
    const auto& cat = sim::catalog(Task::table_bussing);
    auto scene = bussing_scene();
    auto ctx = context_for(Task::table_bussing);
    GoalSpec goal;
    apply_prompt("clean up the table", cat, ctx, goal);
    auto r = handle_interjection("the weather is lovely", seconds(1), scene, ctx, goal);
    CHECK_FALSE(r.understood);
    CHECK(r.goal == goal);
    REQUIRE(r.immediate.utterance);
}

TEST_CASE("ablation ignores constraints and interjections") {
    const auto& cat = sim::catalog(Task::table_bussing);
    auto scene = bussing_scene();
    auto ctx = context_for(Task::table_bussing);
    ctx.ignore_constraints = true;
    GoalSpec goal;
    apply_prompt("can you clean up only the dishes?", cat, ctx, goal);
    CHECK(goal == sim::default_goal(cat));
    auto r = handle_interjection("that's not trash", seconds(1), scene, ctx, goal);
    CHECK(r.goal == goal);
}

// Following the reference reasoner on its own goal never moves an excluded
// object into a container and finishes every target within 2|targets|+1 skills.
TEST_CASE("property: constraint safety and liveness") {
    const std::vector<std::pair<Task, std::vector<std::string>>> prompts = {
        {Task::table_bussing,
         {"can you clean up only the trash, but not dishes?", "can you clean up only the dishes?",
          "bus all the yellowish things", "clean up the table", "throw away the paper cup but not the wrapper"}},
        {Task::sandwich_making,
         {"make me a vegetarian sandwich, I'm allergic to pickles", "I'm lactose intolerant",
          "make me a sandwich with cheese and lettuce", "make me a sandwich"}},
        {Task::grocery_shopping,
         {"Can you get me something sweet?", "I want something to drink", "get me two salty snacks",
          "I want some kitkat"}},
    };
    for (const auto& [task, list] : prompts) {
        const auto& cat = sim::catalog(task);
        const auto arms = cat.profile().arms();
        for (std::uint64_t seed = 0; seed < 25; ++seed) {
            for (const auto& prompt : list) {
                auto setup = sim::load_task(cat, seed);
                auto ctx = context_for(task);
                GoalSpec goal;
                apply_prompt(prompt, cat, ctx, goal);
                auto scene = setup.scene;
                const auto targets = sim::evaluate_goal(scene, goal).targets.size();
                const int budget = 2 * static_cast<int>(targets) + 1 + (goal.delivery ? 1 : 0);
                int steps = 0;
                for (; steps < budget + 5; ++steps) {
                    auto d = decide(scene, ctx, goal);
                    ctx.prior_skills.push_back(d.skill_text);
                    ctx.pending_utterance.reset();
                    auto cmd = lowlevel::parse_command(d.skill_text);
                    if (cmd.is_terminal()) break;
                    std::optional<std::string> obj;
                    if (const auto* pick = std::get_if<Pick>(&cmd.skill)) {
                        obj = lowlevel::resolve_object(scene, pick->object).id;
                    } else if (const auto* place = std::get_if<Place>(&cmd.skill);
                               place && !(goal.delivery && place->object == goal.delivery->container)) {
                        obj = lowlevel::resolve_held(scene, place->object, arms).id;
                    }
                    scene = sim::apply_skill_effect(scene, cmd, obj, Outcome::success, arms);
                    for (const auto& o : scene.objects) {
                        if (!sim::hard_excluded(o, goal)) continue;
                        INFO(prompt, " seed ", seed, " object ", o.id);
                        CHECK_FALSE(std::holds_alternative<Container>(o.location));
                    }
                }
                INFO(prompt, " seed ", seed);
                CHECK(steps <= budget);
                CHECK(sim::goal_satisfied(scene, goal));
            }
        }
    }
}

// ------------------------------------------------------------------------- remote backend

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

RemoteRequest sample_request() {
    RemoteRequest r;
    r.task = Task::table_bussing;
    r.views = bussing_scene();
    r.active_prompt = "clean up the table";
    r.interjections = {"that's not trash"};
    r.prior_skills = {"pick up the paper bowl"};
    r.allowed_skills = lowlevel::bundled_grammar().skill_list(Task::table_bussing);
    return r;
}

}  // namespace

TEST_CASE("remote backend round trip") {
    json seen;
    StubServer stub([&seen](const httplib::Request& req, httplib::Response& res) {
        seen = json::parse(req.body);
        res.set_content(R"({"skill_text": "pick up the fork", "utterance": "Sure."})", "application/json");
    });
    RemoteBackend backend({stub.url(), 2000});
    auto d = backend.decide(sample_request());
    CHECK(d.skill_text == "pick up the fork");
    CHECK(d.utterance == std::optional<std::string>("Sure."));
    for (const char* key : {"task", "views", "active_prompt", "interjections", "prior_skills", "allowed_skills"}) {
        CHECK(seen.contains(key));
    }
    CHECK(seen["task"] == "table_bussing");
    CHECK(seen["views"].get<SceneState>() == bussing_scene());
    CHECK(seen["interjections"] == json::array({"that's not trash"}));
}

TEST_CASE("remote backend: out-of-grammar reply surfaces at parse time") {
    StubServer stub([](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"skill_text": "pick up the bermuda triangle"})", "application/json");
    });
    RemoteBackend backend({stub.url(), 2000});
    auto d = backend.decide(sample_request());
    CHECK_FALSE(d.utterance);
    CHECK_THROWS_AS(lowlevel::parse_command(d.skill_text), lowlevel::OutOfGrammar);
}

TEST_CASE("remote backend failures") {
    SUBCASE("malformed") {
        StubServer stub([](const httplib::Request&, httplib::Response& res) {
            res.set_content(R"({"text": 3})", "application/json");
        });
        RemoteBackend backend({stub.url(), 2000});
        try {
            backend.decide(sample_request());
            FAIL("expected BackendError");
        } catch (const BackendError& e) {
            CHECK(e.kind() == BackendError::Kind::malformed);
        }
    }
    SUBCASE("timeout") {
        StubServer stub([](const httplib::Request&, httplib::Response& res) {
            std::this_thread::sleep_for(std::chrono::milliseconds(600));
            res.set_content(R"({"skill_text": "done"})", "application/json");
        });
        RemoteBackend backend({stub.url(), 150});
        try {
            backend.decide(sample_request());
            FAIL("expected BackendError");
        } catch (const BackendError& e) {
            CHECK(e.kind() == BackendError::Kind::timeout);
            CHECK(e.code() == "backend_timeout");
        }
    }
    SUBCASE("unreachable") {
        RemoteBackend backend({"http://127.0.0.1:1/decide", 200});
        CHECK_THROWS_AS(backend.decide(sample_request()), BackendError);
    }
    CHECK_THROWS_AS(parse_reply("not json"), BackendError);
    CHECK_THROWS_AS(parse_reply(R"({"skill_text": "x", "utterance": 4})"), BackendError);
}
