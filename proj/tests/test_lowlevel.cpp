#include <doctest.h>

#include <cmath>

#include "hilo/lowlevel.hpp"
#include "hilo/simenv.hpp"

using namespace hilo;
using namespace hilo::lowlevel;

namespace {

SceneObject obj(std::string id, std::string name, ObjectClass cls, Location loc = Surface{"table"}) {
    SceneObject o;
    o.id = std::move(id);
    o.display_name = std::move(name);
    o.object_class = cls;
    o.location = loc;
    o.origin = Surface{"table"};
    return o;
}

SceneState bowls() {
    SceneState s;
    s.surfaces = {"table"};
    s.containers = {"trash_bin", "bussing_bin"};
    s.objects = {obj("b2", "bowl", ObjectClass::dish), obj("b9", "bowl", ObjectClass::dish),
                 obj("c1", "paper cup", ObjectClass::trash), obj("w1", "white bowl", ObjectClass::dish),
                 obj("p1", "plate", ObjectClass::dish, Container{"bussing_bin"})};
    return s;
}

const RobotState kUr5e = RobotState::at_home(RobotProfile::of(RobotName::ur5e));

}  // namespace

TEST_CASE("resolve_object") {
    auto s = bowls();
    CHECK(resolve_object(s, "bowl").id == "b2");
    CHECK(resolve_object(s, "the bowl").id == "b2");
    CHECK(resolve_object(s, "the plate").id == "p1");
    CHECK(resolve_object(s, "cup").id == "c1");
    CHECK(resolve_object(s, "trash").id == "c1");
    CHECK(resolve_object(s, "White Bowl").id == "w1");
    CHECK_THROWS_AS(resolve_object(s, "kitkat"), NotFound);

    s.find("b2")->location = Gripper{Arm::single};
    CHECK(resolve_object(s, "bowl").id == "b9");
    CHECK(resolve_held(s, std::nullopt, {Arm::single}).id == "b2");
    CHECK(resolve_held(s, std::string("bowl"), {Arm::single}).id == "b2");
    CHECK_THROWS_AS(resolve_held(s, std::string("cup"), {Arm::single}), NotFound);

    SceneState empty_shelf;
    empty_shelf.surfaces = {"shelf"};
    CHECK_THROWS_AS(resolve_object(empty_shelf, "kitkat"), NotFound);
}

TEST_CASE("latency model arithmetic") {
    LatencyModel m;
    CHECK(m.highlevel(10) == Micros{179000});
    CHECK(m.chunk_span(10) == Micros{200000});
    CHECK(m.chunk_inference() == Micros{86000});
    CHECK(m.realtime_feasible(10));
    m.per_chunk_inference_ms = 250;
    CHECK_FALSE(m.realtime_feasible(10));
    m.control_rate_hz = 0;
    CHECK_THROWS(m.validate());
    CHECK(token_count("pick up the plate") == 4);
    CHECK(token_count("") == 0);
}

TEST_CASE("begin_skill durations and chunk counts") {
    const auto s = bowls();
    ExecutorConfig cfg;
    LatencyModel lat;
    Rng rng(7);

    for (int i = 0; i < 200; ++i) {
        const auto plan = begin_skill(s, kUr5e, parse_command("pick up the bowl"), rng, cfg, lat, i);
        CHECK(plan.duration >= seconds(1.0));
        CHECK(plan.duration <= seconds(3.0));
        CHECK(plan.chunks_total == static_cast<int>(std::ceil(to_seconds(plan.duration) * 50 / 10 - 1e-9)));
        CHECK(plan.resolved_object_id == std::optional<std::string>("b2"));
    }

    const auto move = begin_skill(s, kUr5e, parse_command("move to the left"), rng, cfg, lat, 1);
    CHECK(move.duration == seconds(0.5));
    CHECK(move.chunks_total == 3);  // ceil(0.5 * 50 / 10)

    const auto done = begin_skill(s, kUr5e, SkillCommand{Done{}, "done"}, rng, cfg, lat, 2);
    CHECK(done.chunks_total == 0);
    CHECK(done.complete());
    CHECK(done.effect.has_value());

    CHECK_THROWS_AS(begin_skill(s, kUr5e, parse_command("pick up the kitkat"), rng, cfg, lat, 3), FailedStart);
    CHECK_THROWS_AS(begin_skill(s, kUr5e, parse_command("put it in the trash bin"), rng, cfg, lat, 4), FailedStart);
    CHECK_THROWS_AS(begin_skill(s, kUr5e, parse_command("move the left arm higher"), rng, cfg, lat, 5), FailedStart);
}

TEST_CASE("next_chunk shapes, completion and effect") {
    const auto s = bowls();
    ExecutorConfig cfg;
    LatencyModel lat;

    for (RobotName name : {RobotName::ur5e, RobotName::bimanual_arx, RobotName::mobile_arx}) {
        auto robot = RobotState::at_home(RobotProfile::of(name));
        Rng rng(1);
        auto plan = begin_skill(s, robot, parse_command("pick up the paper cup"), rng, cfg, lat, 9);
        int chunks = 0;
        while (!plan.complete()) {
            const auto chunk = next_chunk(plan, robot);
            ++chunks;
            CHECK(chunk.command_id == 9);
            CHECK(chunk.actions.size() == 10);
            for (const auto& a : chunk.actions) {
                CHECK(a.size() == static_cast<std::size_t>(robot.profile.action_dim));
                for (double v : a) CHECK(std::isfinite(v));
            }
            CHECK_FALSE((plan.complete() ^ plan.effect.has_value()));
        }
        CHECK(chunks == plan.chunks_total);
        CHECK(plan.effect->find("c1")->location == Location{Gripper{robot.profile.arms().front()}});
        CHECK(robot.gripper_open.front() == 0.0);
        CHECK(robot.q.size() == static_cast<std::size_t>(robot.profile.config_dim));
        CHECK_THROWS_AS(next_chunk(plan, robot), ChunkAfterComplete);
    }
}

TEST_CASE("pre-drawn failure leaves the scene unchanged") {
    const auto s = bowls();
    ExecutorConfig cfg;
    cfg.failure_probability = 1.0;
    LatencyModel lat;
    Rng rng(3);
    auto robot = kUr5e;
    auto plan = begin_skill(s, robot, parse_command("pick up the plate"), rng, cfg, lat, 1);
    CHECK(plan.outcome == Outcome::failure);
    while (!plan.complete()) next_chunk(plan, robot);
    CHECK(*plan.effect == s);
    CHECK(robot.gripper_open.front() == 1.0);
}

TEST_CASE("plans and chunks are deterministic") {
    const auto s = bowls();
    ExecutorConfig cfg;
    LatencyModel lat;
    auto run = [&] {
        Rng rng(42);
        auto robot = kUr5e;
        std::vector<ActionChunk> out;
        begin_skill(s, robot, parse_command("rotate clockwise"), rng, cfg, lat, 0);
        auto plan = begin_skill(s, robot, parse_command("pick up the white bowl"), rng, cfg, lat, 0);
        while (!plan.complete()) out.push_back(next_chunk(plan, robot));
        return out;
    };
    CHECK(run() == run());
}

TEST_CASE("move primitives displace the named arm along one dimension") {
    SceneState s = bowls();
    ExecutorConfig cfg;
    LatencyModel lat;
    auto robot = RobotState::at_home(RobotProfile::of(RobotName::bimanual_arx));
    Rng rng(5);
    auto plan = begin_skill(s, robot, parse_command("move the right arm to the left"), rng, cfg, lat, 1);
    std::vector<double> last;
    while (!plan.complete()) last = next_chunk(plan, robot).actions.back();
    for (std::size_t j = 0; j < last.size(); ++j) {
        if (j == 7) {
            CHECK(last[j] == doctest::Approx(-0.1));
        } else {
            CHECK(last[j] == 0.0);
        }
    }
}
