// hilo command line: serve, run, replay, bench, datagen, suites, demos.

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "hilo/datagen.hpp"
#include "hilo/eval.hpp"
#include "hilo/gateway.hpp"
#include "hilo/highlevel.hpp"
#include "hilo/json_io.hpp"
#include "hilo/simenv.hpp"

using namespace hilo;

namespace {

std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    for (std::string part; std::getline(in, part, ',');) {
        if (!part.empty()) out.push_back(part);
    }
    return out;
}

/// A path, or the name of a bundled suite.
eval::Suite resolve_suite(const std::string& ref) {
    std::filesystem::path p(ref);
    if (!std::filesystem::exists(p)) p = sim::data_dir() / "suites" / (ref + ".json");
    if (!std::filesystem::exists(p)) throw std::runtime_error("no suite file or bundled suite named " + ref);
    return eval::load_suite(p);
}

struct SessionFlags {
    double chunk_ms = 86.0;
    double failure_probability = 0.0;
    double timeout_s = 120.0;
    std::string remote;

    void add(CLI::App* app) {
        app->add_option("--chunk-ms", chunk_ms, "low-level inference time per chunk")->capture_default_str();
        app->add_option("--failure-prob", failure_probability, "per-skill execution failure probability")
            ->capture_default_str();
        app->add_option("--timeout", timeout_s, "session timeout in virtual seconds")->capture_default_str();
        app->add_option("--remote", remote, "model backend URL for remote_backend");
    }

    orch::SessionConfig config() const {
        orch::SessionConfig c;
        c.latency.per_chunk_inference_ms = chunk_ms;
        c.failure_probability = failure_probability;
        c.timeout_s = timeout_s;
        if (!remote.empty()) c.remote = highlevel::RemoteConfig{remote, 2000};
        return c;
    }
};

gateway::Server* running_server = nullptr;

void on_signal(int) {
    if (running_server) running_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical instruction-following robot sessions, benchmarks and data generation"};
    app.require_subcommand(1);

    // ------------------------------------------------------------------ serve
    auto* serve = app.add_subcommand("serve", "WebSocket session server");
    gateway::ServeOptions serve_opt;
    SessionFlags serve_flags;
    std::string serve_logs = "logs";
    serve->add_option("--port", serve_opt.port)->capture_default_str();
    serve->add_option("--address", serve_opt.address)->capture_default_str();
    serve->add_option("--speed", serve_opt.speed, "virtual seconds per wall second")->capture_default_str();
    serve->add_option("--log-dir", serve_logs, "where session logs are written")->capture_default_str();
    serve_flags.add(serve);

    // ------------------------------------------------------------------ run
    auto* run = app.add_subcommand("run", "run one scripted trial headless");
    std::string run_task, run_policy = "hierarchical_reference", run_suite, run_prompt, run_log;
    std::uint64_t run_seed = 0;
    SessionFlags run_flags;
    run->add_option("--task", run_task, "task; taken from the suite when omitted");
    run->add_option("--policy", run_policy)->capture_default_str();
    run->add_option("--suite", run_suite, "suite file or bundled suite name");
    run->add_option("--prompt", run_prompt, "single prompt at t=0 instead of a suite trial");
    run->add_option("--seed", run_seed, "scene seed; selects the suite trial with that seed")->capture_default_str();
    run->add_option("--log", run_log, "write the event log here");
    run_flags.add(run);

    // ------------------------------------------------------------------ replay
    auto* rep = app.add_subcommand("replay", "print a log's server frames");
    std::string rep_log;
    bool rep_paced = false;
    double rep_speed = 1.0;
    rep->add_option("--log", rep_log)->required();
    rep->add_flag("--paced", rep_paced, "sleep between frames by recorded time");
    rep->add_option("--speed", rep_speed)->capture_default_str();

    // ------------------------------------------------------------------ bench
    auto* bench = app.add_subcommand("bench", "IA/TP benchmark over suites and policies");
    std::vector<std::string> bench_suites;
    std::string bench_policies = "hierarchical_reference,flat_passthrough,oracle_scripted", bench_out;
    eval::BenchOptions bench_opt;
    bool bench_serial = false;
    SessionFlags bench_flags;
    bench->add_option("--suite", bench_suites, "suite files or bundled names; repeat or comma-separate")
        ->required()
        ->delimiter(',');
    bench->add_option("--policies", bench_policies)->capture_default_str();
    bench->add_option("--trials", bench_opt.trials_per_cell)->capture_default_str();
    bench->add_option("--seed", bench_opt.seed, "salts executor randomness")->capture_default_str();
    bench->add_option("--out", bench_out, "report JSON");
    bench->add_flag("--serial", bench_serial, "run trials on one thread");
    bench_flags.add(bench);

    // ------------------------------------------------------------------ datagen
    auto* dg = app.add_subcommand("datagen", "synthetic interactions from demonstrations");
    std::vector<std::string> dg_demos;
    std::string dg_out, dg_scenarios = "negative_task,situated_correction,specific_constraint,direct_request",
                        dg_templates, dg_remote;
    datagen::DatasetOptions dg_opt;
    bool dg_serial = false;
    dg->add_option("--demos", dg_demos, "episode JSONL files; repeat or comma-separate")->required()->delimiter(',');
    dg->add_option("--out", dg_out)->required();
    dg->add_option("--per-segment", dg_opt.per_segment)->capture_default_str();
    dg->add_option("--seed", dg_opt.seed)->capture_default_str();
    dg->add_option("--scenarios", dg_scenarios)->capture_default_str();
    dg->add_option("--templates", dg_templates, "template bank JSON");
    dg->add_option("--remote", dg_remote, "model backend URL used instead of templates");
    dg->add_flag("--serial", dg_serial, "generate on one thread");

    // ------------------------------------------------------------------ suites
    auto* su = app.add_subcommand("suites", "write the scripted evaluation suites");
    std::string su_out = (sim::data_dir() / "suites").string();
    int su_trials = 20;
    std::uint64_t su_seed = 0;
    su->add_option("--out", su_out, "directory")->capture_default_str();
    su->add_option("--trials", su_trials)->capture_default_str();
    su->add_option("--seed", su_seed, "first scene seed")->capture_default_str();

    // ------------------------------------------------------------------ demos
    auto* de = app.add_subcommand("demos", "record demonstration episodes");
    std::string de_task, de_out;
    int de_count = 16;
    std::uint64_t de_seed = 0;
    double de_corr = 0.3;
    de->add_option("--task", de_task)->required();
    de->add_option("--count", de_count)->capture_default_str();
    de->add_option("--seed", de_seed)->capture_default_str();
    de->add_option("--correction-prob", de_corr, "chance of a corrective move before each pick")->capture_default_str();
    de->add_option("--out", de_out)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*serve) {
            serve_opt.host.base = serve_flags.config();
            serve_opt.host.base.timeout_s = std::max(serve_flags.timeout_s, 600.0);
            serve_opt.host.log_dir = serve_logs;
            gateway::Server server(serve_opt);
            const auto port = server.bind();
            running_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << "listening on ws://" << serve_opt.address << ":" << port << "\n";
            server.run();
            running_server = nullptr;
            return 0;
        }

        if (*run) {
            orch::UserScript script;
            std::string suite_name = "adhoc";
            if (!run_suite.empty()) {
                const auto suite = resolve_suite(run_suite);
                suite_name = suite.name;
                auto it = std::find_if(suite.trials.begin(), suite.trials.end(),
                                       [&](const orch::UserScript& s) { return s.seed == run_seed; });
                if (it == suite.trials.end()) {
                    std::string seeds;
                    for (const auto& s : suite.trials) seeds += " " + std::to_string(s.seed);
                    throw std::runtime_error("suite " + suite.name + " has no trial with seed " +
                                             std::to_string(run_seed) + "; seeds:" + seeds);
                }
                script = *it;
                if (!run_task.empty() && parse_enum<Task>(run_task) != script.task) {
                    throw std::runtime_error("--task differs from the suite's task");
                }
            } else {
                if (run_task.empty() || run_prompt.empty()) throw std::runtime_error("give --suite, or --task and --prompt");
                script.name = "adhoc";
                script.task = parse_enum<Task>(run_task);
                script.seed = run_seed;
                orch::ScriptStep step;
                step.event = UserEvent{UserEvent::Kind::prompt, run_prompt, Micros{0}};
                script.steps.push_back(step);
                script.ground_truth.push_back(highlevel::parse_goal(run_prompt, sim::catalog(script.task)).goal);
            }
            auto cfg = run_flags.config();
            cfg.policy = parse_enum<orch::Policy>(run_policy);
            auto result = eval::run_trial(cfg, script, true);
            result.suite = suite_name;
            if (!run_log.empty()) result.log->write(run_log);
            json j = eval::to_json(result);
            std::cout << j.dump(2) << "\n";
            return 0;
        }

        if (*rep) {
            gateway::replay(std::filesystem::path(rep_log), [](const std::string& f) { std::cout << f << "\n"; },
                            {rep_paced, rep_speed});
            return 0;
        }

        if (*bench) {
            std::vector<eval::Suite> suites;
            for (const auto& s : bench_suites) suites.push_back(resolve_suite(s));
            std::vector<orch::Policy> policies;
            for (const auto& p : split(bench_policies)) policies.push_back(parse_enum<orch::Policy>(p));
            bench_opt.parallel = !bench_serial;
            bench_opt.base = bench_flags.config();
            const auto report = eval::run_benchmark(suites, policies, bench_opt);
            std::cout << report.to_text();
            if (!bench_out.empty()) {
                std::ofstream out(bench_out);
                out << report.to_json().dump(2) << "\n";
            }
            return 0;
        }

        if (*dg) {
            std::vector<Episode> episodes;
            for (const auto& p : dg_demos) {
                auto eps = datagen::read_episodes(p);
                episodes.insert(episodes.end(), eps.begin(), eps.end());
            }
            dg_opt.scenarios.clear();
            for (const auto& s : split(dg_scenarios)) dg_opt.scenarios.push_back(parse_enum<ScenarioType>(s));
            dg_opt.parallel = !dg_serial;
            if (!dg_remote.empty()) dg_opt.remote = highlevel::RemoteConfig{dg_remote, 5000};
            const auto bank = dg_templates.empty() ? datagen::bundled_templates() : datagen::TemplateBank::load(dg_templates);
            const auto records = datagen::build_dataset(episodes, dg_opt, bank);
            datagen::write_dataset(records, dg_out);

            std::map<ScenarioType, int> by_scenario;
            int invalid = 0;
            for (const auto& r : records) {
                ++by_scenario[r.scenario_type];
                if (!datagen::validate_interaction(r).empty()) ++invalid;
            }
            std::cout << records.size() << " interactions from " << episodes.size() << " episodes, " << invalid
                      << " invalid\n";
            for (const auto& [s, n] : by_scenario) std::cout << "  " << to_string(s) << ": " << n << "\n";
            return invalid == 0 ? 0 : 1;
        }

        if (*su) {
            std::filesystem::create_directories(su_out);
            for (auto kind : eval::all_suite_kinds()) {
                const auto suite = eval::build_suite(kind, su_trials, su_seed);
                const auto path = std::filesystem::path(su_out) / (suite.name + ".json");
                eval::save_suite(suite, path);
                std::cout << path.string() << ": " << suite.trials.size() << " trials\n";
            }
            return 0;
        }

        if (*de) {
            std::vector<Episode> episodes;
            for (auto spec : datagen::demo_specs(parse_enum<Task>(de_task), de_count, de_seed)) {
                spec.correction_probability = de_corr;
                episodes.push_back(datagen::record_demo(spec));
            }
            datagen::write_episodes(episodes, de_out);
            std::size_t frames = 0, segments = 0;
            for (const auto& e : episodes) {
                frames += e.frames.size();
                segments += e.segments.size();
            }
            std::cout << episodes.size() << " episodes, " << frames << " frames, " << segments << " segments -> "
                      << de_out << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
