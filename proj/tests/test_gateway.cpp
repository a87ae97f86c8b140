#include <doctest.h>

#include <fstream>
#include <sstream>
#include <thread>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "hilo/eval.hpp"
#include "hilo/gateway.hpp"
#include "hilo/highlevel.hpp"
#include "hilo/json_io.hpp"
#include "hilo/simenv.hpp"

using namespace hilo;
using namespace hilo::gateway;

namespace {

json msg(std::string type, json fields = json::object()) {
    fields["type"] = std::move(type);
    return fields;
}

std::string start(Task task, orch::Policy policy, std::uint64_t seed) {
    return msg("start_session", {{"task", task}, {"policy", std::string(to_string(policy))}, {"seed", seed}}).dump();
}

struct Captured {
    std::vector<json> frames;
    std::function<void(const std::string&)> sink() {
        return [this](const std::string& s) { frames.push_back(json::parse(s)); };
    }
    std::vector<json> of(const std::string& type) const {
        std::vector<json> out;
        for (const auto& f : frames) {
            if (f["type"] == type) out.push_back(f);
        }
        return out;
    }
};

orch::UserScript one_prompt(Task task, std::uint64_t seed, const std::string& text, Micros t = Micros{0}) {
    orch::UserScript s;
    s.task = task;
    s.seed = seed;
    orch::ScriptStep step;
    step.trigger.kind = orch::Trigger::Kind::at_time;
    step.trigger.time = t;
    step.event = UserEvent{UserEvent::Kind::prompt, text, t};
    s.steps.push_back(step);
    s.ground_truth.push_back(highlevel::parse_goal(text, sim::catalog(task)).goal);
    return s;
}

void drive(SessionHost& host, Micros until, Micros step = millis(10)) {
    for (Micros t{0}; t <= until && host.active(); t += step) host.tick(t);
}

}  // namespace

TEST_CASE("client messages parse") {
    auto m = parse_client_message(start(Task::table_bussing, orch::Policy::flat_passthrough, 7));
    const auto& s = std::get<StartSession>(m);
    CHECK(s.task == Task::table_bussing);
    CHECK(s.policy == orch::Policy::flat_passthrough);
    CHECK(s.seed == 7);
    CHECK(std::get<Say>(parse_client_message(R"({"type":"interjection","text":"leave it alone"})")).kind ==
          UserEvent::Kind::interjection);
    CHECK(std::get<Say>(parse_client_message(R"({"type":"resume"})")).kind == UserEvent::Kind::resume);
    const auto mark = std::get<EvalMark>(parse_client_message(R"({"type":"eval_mark","decision_id":3,"correct":true})"));
    CHECK(mark.decision_id == 3);
    CHECK(mark.correct);
    CHECK(std::holds_alternative<Pause>(parse_client_message(R"({"type":"pause"})")));
    CHECK(std::holds_alternative<Stop>(parse_client_message(R"({"type":"stop"})")));

    auto code = [](std::string_view text) {
        try {
            parse_client_message(text);
        } catch (const ProtocolError& e) {
            return e.code();
        }
        return std::string("ok");
    };
    CHECK(code("{oops") == "malformed");
    CHECK(code("[1,2]") == "malformed");
    CHECK(code(R"({"type":"dance"})") == "unknown_type");
    CHECK(code(R"({"type":"prompt"})") == "malformed");
    CHECK(code(R"({"type":"prompt","text":""})") == "malformed");
    CHECK(code(R"({"type":"eval_mark","decision_id":"x","correct":true})") == "malformed");
    CHECK(code(R"({"type":"start_session","task":"juggling","policy":"flat_passthrough","seed":1})") == "malformed");
    CHECK(code(R"({"type":"start_session","task":"table_bussing","policy":"flat_passthrough","seed":-1})") == "malformed");
}

TEST_CASE("every frame from headless runs follows the schema") {
    for (auto kind : eval::all_suite_kinds()) {
        const auto suite = eval::build_suite(kind, 3, 0);
        for (auto policy : {orch::Policy::hierarchical_reference, orch::Policy::flat_passthrough}) {
            for (const auto& script : suite.trials) {
                orch::SessionConfig cfg;
                cfg.task = script.task;
                cfg.seed = script.seed;
                cfg.policy = policy;
                const auto frames = frames_from_log(orch::run_session(cfg, script));
                REQUIRE(frames.size() >= 2);
                CHECK(frames.front()["type"] == "state_update");
                for (const auto& f : frames) CHECK(validate_server_frame(f).empty());
            }
        }
    }
    CHECK(validate_server_frame(error_frame("malformed", "x")).empty());
    CHECK(validate_server_frame(json{{"type", "metrics"}, {"ia", 0.5}, {"tp", nullptr}}).empty());
    CHECK_FALSE(validate_server_frame(json{{"type", "metrics"}, {"ia", "high"}, {"tp", nullptr}}).empty());
    CHECK_FALSE(validate_server_frame(json{{"type", "utterance"}}).empty());
    CHECK_FALSE(validate_server_frame(json{{"type", "utterance"}, {"text", "hi"}, {"extra", 1}}).empty());
    CHECK_FALSE(validate_server_frame(json{{"type", "telemetry"}}).empty());
}

TEST_CASE("live prompt matches the headless run and targets trash") {
    Captured out;
    SessionHost host({}, out.sink());
    host.handle(start(Task::table_bussing, orch::Policy::hierarchical_reference, 7));
    host.handle(msg("prompt", {{"text", "clean up only the trash"}}).dump());
    drive(host, seconds(200));
    REQUIRE(host.session());
    REQUIRE(host.session()->ended());

    orch::SessionConfig cfg;
    cfg.task = Task::table_bussing;
    cfg.seed = 7;
    const auto headless = orch::run_session(cfg, one_prompt(Task::table_bussing, 7, "clean up only the trash"));
    CHECK(host.session()->log().hash() == headless.hash());

    const auto issued = out.of("command_issued");
    REQUIRE(!issued.empty());
    const auto cmd = lowlevel::parse_command(issued[0]["skill_text"].get<std::string>());
    REQUIRE(std::holds_alternative<Pick>(cmd.skill));
    for (const auto& r : host.session()->log().records()) {
        if (r.kind != "skill_done") continue;
        const auto* obj = host.session()->initial_scene().find(r.payload.at("object").get<std::string>());
        REQUIRE(obj);
        CHECK(obj->object_class == ObjectClass::trash);
        break;
    }
    for (const auto& f : out.frames) CHECK(validate_server_frame(f).empty());
    CHECK(out.frames.back()["type"] == "metrics");
}

TEST_CASE("live interjection matches a scripted one") {
    Captured out;
    SessionHost host({}, out.sink());
    host.handle(start(Task::table_bussing, orch::Policy::hierarchical_reference, 3));
    host.handle(msg("prompt", {{"text", "clean up the table"}}).dump());
    drive(host, seconds(2.5));
    host.handle(msg("interjection", {{"text", "leave it alone"}}).dump());
    drive(host, seconds(200));

    auto script = one_prompt(Task::table_bussing, 3, "clean up the table");
    orch::ScriptStep step;
    step.trigger.kind = orch::Trigger::Kind::at_time;
    step.trigger.time = seconds(2.5);
    step.event = UserEvent{UserEvent::Kind::interjection, "leave it alone", seconds(2.5)};
    script.steps.push_back(step);
    script.ground_truth.push_back(script.ground_truth[0]);
    orch::SessionConfig cfg;
    cfg.task = Task::table_bussing;
    cfg.seed = 3;
    CHECK(host.session()->log().hash() == orch::run_session(cfg, script).hash());
}

TEST_CASE("leave it alone skips the current target") {
    Captured out;
    SessionHost host({}, out.sink());
    host.handle(start(Task::table_bussing, orch::Policy::hierarchical_reference, 7));
    host.handle(msg("prompt", {{"text", "clean up the table"}}).dump());
    Micros t{0};
    while (out.of("command_issued").empty()) host.tick(t += millis(10));
    const auto first = lowlevel::parse_command(out.of("command_issued")[0]["skill_text"].get<std::string>());
    const auto target = std::get<Pick>(first.skill).object;
    host.tick(t += millis(100));  // mid-skill
    host.handle(msg("interjection", {{"text", "leave it alone"}}).dump());
    const auto before = out.of("command_issued").size();
    while (host.active() && t < seconds(200)) host.tick(t += millis(10));

    const auto issued = out.of("command_issued");
    REQUIRE(issued.size() > before);
    for (std::size_t i = before; i < issued.size(); ++i) {
        const auto cmd = lowlevel::parse_command(issued[i]["skill_text"].get<std::string>());
        if (const auto* p = std::get_if<Pick>(&cmd.skill)) CHECK(p->object != target);
    }
}

TEST_CASE("marks flow into metrics; errors keep the session alive") {
    Captured out;
    SessionHost host({}, out.sink());
    host.handle(msg("prompt", {{"text", "hello"}}).dump());
    REQUIRE(out.frames.size() == 1);
    CHECK(out.frames[0]["code"] == "no_session");

    host.handle(start(Task::table_bussing, orch::Policy::hierarchical_reference, 7));
    host.handle(msg("prompt", {{"text", "clean up the table"}}).dump());
    Micros t{0};
    while (out.of("command_issued").size() < 5 && host.active()) host.tick(t += millis(10));
    const auto issued = out.of("command_issued");
    REQUIRE(issued.size() >= 5);

    host.handle("{broken");
    CHECK(out.frames.back()["type"] == "error");
    CHECK(out.frames.back()["code"] == "malformed");
    CHECK(host.active());

    host.handle(msg("eval_mark", {{"decision_id", 999}, {"correct", true}}).dump());
    CHECK(out.frames.back()["code"] == "unknown_decision");

    for (int i = 0; i < 5; ++i) {
        host.handle(msg("eval_mark", {{"decision_id", issued[i]["id"]}, {"correct", i != 2}}).dump());
    }
    CHECK(out.frames.back()["type"] == "metrics");
    CHECK(out.frames.back()["ia"].get<double>() == doctest::Approx(0.8));

    host.handle(msg("pause").dump());
    const auto now = host.session()->now();
    host.tick(t + seconds(5));
    CHECK(host.session()->now() == now);
    host.handle(msg("pause").dump());

    host.handle(msg("stop").dump());
    CHECK_FALSE(host.active());
    CHECK(out.frames.back()["type"] == "metrics");
    CHECK(out.frames.back()["ia"].get<double>() == doctest::Approx(0.8));
    host.handle(msg("resume").dump());
    CHECK(out.frames.back()["code"] == "no_session");
    for (const auto& f : out.frames) CHECK(validate_server_frame(f).empty());
}

TEST_CASE("replay reproduces the live frames") {
    const auto dir = std::filesystem::temp_directory_path() / "hilo_gateway_logs";
    std::filesystem::remove_all(dir);
    Captured out;
    std::vector<std::string> live;
    {
        SessionHost host({orch::SessionConfig{}, dir}, [&](const std::string& s) {
            if (json::parse(s)["type"] != "metrics") live.push_back(s);
        });
        host.handle(start(Task::sandwich_making, orch::Policy::hierarchical_reference, 2));
        host.handle(msg("prompt", {{"text", "make me a vegetarian sandwich"}}).dump());
        drive(host, seconds(200));
        REQUIRE(host.last_log());
    }
    const auto path = std::filesystem::directory_iterator(dir)->path();
    std::vector<std::string> replayed;
    replay(path, [&](const std::string& s) { replayed.push_back(s); });
    CHECK(replayed == live);

    std::istringstream empty("");
    int n = 0;
    replay(empty, [&](const std::string&) { ++n; });
    CHECK(n == 0);

    std::ifstream in(path);
    std::string a, b, c;
    std::getline(in, a);
    std::getline(in, b);
    std::getline(in, c);
    std::istringstream truncated(a + "\n" + b + "\n" + c.substr(0, c.size() / 2) + "\n");
    try {
        replay(truncated, [&](const std::string&) { ++n; });
        FAIL("expected a log error");
    } catch (const orch::LogError& e) {
        CHECK(e.line() == 3);
    }
    CHECK(n == 0);
    std::filesystem::remove_all(dir);
}

TEST_CASE("websocket round trip") {
    namespace beast = boost::beast;
    namespace websocket = beast::websocket;
    using tcp = boost::asio::ip::tcp;

    ServeOptions opt;
    opt.address = "127.0.0.1";
    opt.port = 0;
    opt.speed = 20.0;
    Server server(opt);
    const auto port = server.bind();
    std::thread th([&] { server.run(); });

    boost::asio::io_context ioc;
    tcp::resolver resolver(ioc);
    websocket::stream<tcp::socket> ws(ioc);
    boost::asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws.handshake("127.0.0.1", "/");
    ws.text(true);

    auto send = [&](const json& j) { ws.write(boost::asio::buffer(j.dump())); };
    auto recv = [&] {
        beast::flat_buffer buf;
        ws.read(buf);
        return json::parse(beast::buffers_to_string(buf.data()));
    };

    send(json{{"type", "nonsense"}});
    auto f = recv();
    CHECK(f["type"] == "error");
    CHECK(f["code"] == "unknown_type");

    send(json::parse(start(Task::table_bussing, orch::Policy::hierarchical_reference, 7)));
    f = recv();
    CHECK(f["type"] == "state_update");
    send(msg("prompt", {{"text", "clean up only the trash"}}));
    json issued;
    for (int i = 0; i < 50 && issued.is_null(); ++i) {
        f = recv();
        CHECK(validate_server_frame(f).empty());
        if (f["type"] == "command_issued") issued = f;
    }
    REQUIRE(!issued.is_null());
    send(msg("eval_mark", {{"decision_id", issued["id"]}, {"correct", true}}));
    send(msg("stop"));
    json metrics;
    for (int i = 0; i < 200 && metrics.is_null(); ++i) {
        f = recv();
        if (f["type"] == "metrics") metrics = f;
    }
    REQUIRE(!metrics.is_null());
    CHECK(metrics["ia"].get<double>() == 1.0);

    ws.close(websocket::close_code::normal);
    server.stop();
    th.join();
}
