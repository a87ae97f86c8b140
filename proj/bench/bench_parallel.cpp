// Serial reference against the OpenMP path for benchmark trials and datagen
// segments. Prints wall times and whether the outputs agree.

#include <chrono>
#include <cstdio>

#include <omp.h>

#include "hilo/datagen.hpp"
#include "hilo/eval.hpp"
#include "hilo/simenv.hpp"

using namespace hilo;

namespace {

template <class F>
double timed(F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main() {
    std::printf("threads: %d\n", omp_get_max_threads());

    std::vector<eval::Suite> suites;
    for (auto kind : eval::all_suite_kinds()) suites.push_back(eval::build_suite(kind, 20, 0));
    const std::vector<orch::Policy> policies = {orch::Policy::hierarchical_reference, orch::Policy::flat_passthrough,
                                                orch::Policy::oracle_scripted, orch::Policy::reference_no_constraints};
    eval::BenchOptions opt;
    opt.seed = 7;
    eval::Report serial, parallel;
    opt.parallel = false;
    const double ts = timed([&] { serial = eval::run_benchmark(suites, policies, opt); });
    opt.parallel = true;
    const double tp = timed([&] { parallel = eval::run_benchmark(suites, policies, opt); });
    const bool same_report = serial.to_json() == parallel.to_json();
    std::printf("benchmark trials  serial %7.3f s  parallel %7.3f s  speedup %.2fx  identical %s\n", ts, tp, ts / tp,
                same_report ? "yes" : "NO");

    std::vector<Episode> episodes;
    for (const char* f : {"sandwich_making.jsonl", "grocery_shopping.jsonl"}) {
        auto eps = datagen::read_episodes(sim::data_dir() / "demos" / f);
        episodes.insert(episodes.end(), eps.begin(), eps.end());
    }
    datagen::DatasetOptions dopt;
    std::vector<SyntheticInteraction> a, b;
    dopt.parallel = false;
    const double ds = timed([&] { a = datagen::build_dataset(episodes, dopt); });
    dopt.parallel = true;
    const double dp = timed([&] { b = datagen::build_dataset(episodes, dopt); });
    std::printf("datagen segments  serial %7.3f s  parallel %7.3f s  speedup %.2fx  identical %s (%zu records)\n", ds,
                dp, ds / dp, a == b ? "yes" : "NO", a.size());
    return same_report && a == b ? 0 : 1;
}
