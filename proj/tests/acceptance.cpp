// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "support.hpp"

#include "crashforge/agent.hpp"
#include "crashforge/eval.hpp"
#include "crashforge/errors.hpp"
#include "crashforge/fixtures.hpp"
#include "crashforge/inference.hpp"
#include "crashforge/ingest.hpp"
#include "crashforge/narrative.hpp"
#include "crashforge/synth.hpp"

#include <fmt/format.h>

#include <chrono>
#include <functional>
#include <iostream>

using namespace crashforge;
using namespace testsupport;

namespace {

constexpr double kInferBudgetSec = 1.0;
constexpr double kMaxRegenerationRate = 0.05;
constexpr double kCampaignBudgetSec = 60.0;
constexpr int kPropertyTrials = 1000;
constexpr int kOracleMaxSamples = 100;
constexpr double kShiftEps = 1e-6;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

GeneratorSpec chain_spec(std::uint64_t seed, int n, double p_mislabel, double p_extra, double p_unrelated) {
    GeneratorSpec s;
    s.seed = seed;
    s.n_cases = n;
    s.chain_length_min = 3;
    s.chain_length_max = 4;
    s.p_mislabel = p_mislabel;
    s.p_extra_overlapping_record = p_extra;
    s.p_unrelated_record = p_unrelated;
    return s;
}

Outcome case_32548() {
    const auto start = Clock::now();
    const auto c = load_case_file(source_dir() / "fixtures" / "32548.case.json");
    const auto f = infer_first_crash(c);
    const double elapsed = seconds_since(start);
    const bool exact = f.striking_vehno == VehNo{3} && f.struck_vehno == VehNo{2} && f.striking_edr == EdrEventNo{1} &&
                       f.struck_edr == EdrEventNo{5};
    return {exact && elapsed < kInferBudgetSec,
            fmt::format("V{} -> V{}, E{} / E{}, {:.3f} s", f.striking_vehno.value, f.struck_vehno.value,
                        f.striking_edr ? f.striking_edr->value : 0, f.struck_edr ? f.struck_edr->value : 0, elapsed)};
}

Outcome mislabel_robustness() {
    const auto corpus = generate(chain_spec(2024, 200, 1.0, 0.3, 0.3));
    int complicated = 0;
    int correct = 0;
    for (const auto& g : corpus.cases) {
        complicated += g.c.stratum == Stratum::Complicated;
        correct += same_outputs(infer_first_crash(g.c), *g.c.ground_truth);
    }
    const double rate = static_cast<double>(corpus.regenerations) / static_cast<double>(corpus.draws);
    const int n = static_cast<int>(corpus.cases.size());
    return {n == 200 && complicated == n && correct == n && rate < kMaxRegenerationRate,
            fmt::format("{}/{} correct, {} complicated, {} of {} draws regenerated ({:.1f}%)", correct, n, complicated,
                        corpus.regenerations, corpus.draws, 100.0 * rate)};
}

Outcome simple_exactness() {
    const auto corpus = generate(chain_spec(7, 238, 0.0, 0.0, 0.0));
    int simple = 0;
    int correct = 0;
    int unscored = 0;
    for (const auto& g : corpus.cases) {
        simple += g.c.stratum == Stratum::Simple;
        const auto rep = run_inference(g.c);
        correct += same_outputs(rep.finding, *g.c.ground_truth);
        unscored += rep.striking_selection.path != SelectionPath::Scored && rep.struck_selection.path != SelectionPath::Scored;
    }
    const int n = static_cast<int>(corpus.cases.size());
    return {n == 238 && simple == n && correct == n && unscored == n,
            fmt::format("{}/{} correct, {} simple, {} without scoring", correct, n, simple, unscored)};
}

std::vector<TrialScore> hand_built(int trials, int passes) {
    const auto c = replay_case_32548();
    auto wrong = *c.ground_truth;
    wrong.struck_edr = EdrEventNo{2};
    std::vector<TrialScore> out;
    for (int i = 0; i < trials; ++i) out.push_back(score_trial(i < passes ? *c.ground_truth : wrong, *c.ground_truth));
    return out;
}

Outcome scoring_arithmetic() {
    const auto a = summarize(hand_built(78, 72)).overall;
    const auto b = summarize(hand_built(195, 195)).overall;
    const bool ok = a.accuracy.percent() == "92.31%" && b.accuracy.percent() == "100.00%" && b.precision.fixed2() == "1.00" &&
                    b.recall.fixed2() == "1.00" && b.f1.fixed2() == "1.00";
    return {ok, fmt::format("72/78 = {}; 195/195 = {}, P={} R={} F1={}", a.accuracy.percent(), b.accuracy.percent(),
                            b.precision.fixed2(), b.recall.fixed2(), b.f1.fixed2())};
}

Outcome campaign_shape() {
    std::vector<CrashCase> corpus;
    for (auto& g : generate(chain_spec(39, 39, 0.5, 0.5, 0.3)).cases) corpus.push_back(std::move(g.c));
    CampaignOptions o;
    o.mode = CampaignMode::Agent;
    o.backends = {default_mock_profile("mock-a"), default_mock_profile("mock-b"), default_mock_profile("mock-c")};
    o.trials_per_case = 5;
    const auto start = Clock::now();
    const auto scores = run_campaign(corpus, o);
    const auto log = std::filesystem::temp_directory_path() / "crashforge-acceptance.trials.jsonl";
    std::filesystem::remove(log);
    append_trial_log(log, scores);
    const double elapsed = seconds_since(start);
    const auto text = read_file(log);
    const auto lines = std::count(text.begin(), text.end(), '\n');
    const auto consistency = consistency_report(scores);
    std::filesystem::remove(log);
    return {lines == 585 && consistency.agreement.percent() == "100.00%" && elapsed < kCampaignBudgetSec,
            fmt::format("{} log lines, agreement {}, {:.2f} s", lines, consistency.agreement.percent(), elapsed)};
}

Outcome encoding_goldens() {
    const auto c = load_case_file(source_dir() / "fixtures" / "28197.case.json");
    const auto scene = encode_scene_description(c).text;
    const auto edr = encode_edr_report(c).text;
    const bool scene_ok = scene == read(source_dir() / "goldens" / "28197.scene.md");
    const bool edr_ok = edr == read(source_dir() / "goldens" / "28197.edr.md");
    const bool row = edr.find("| -5.00 | 9.70 | Peak speed |") != std::string::npos;
    return {scene_ok && edr_ok && row, fmt::format("scene {}, edr {}, peak row {}", scene_ok ? "identical" : "differs",
                                                   edr_ok ? "identical" : "differs", row ? "present" : "missing")};
}

EdrRecord random_walk(Rng& rng, int edr, int n, double period, double start) {
    double v = rng.uniform(10, 80);
    return speed_record(1, edr, grid_series(period, n, [&](int) {
                            v = std::max(0.0, v + rng.uniform(-1.5, 1.5));
                            return round1(v);
                        }, start));
}

Outcome alignment_properties() {
    Rng rng(20241);
    int self_bad = 0;
    for (int i = 0; i < kPropertyTrials; ++i) {
        const double period = rng.chance(0.5) ? 0.1 : 0.2;
        const auto a = random_walk(rng, 1, rng.integer(5, kOracleMaxSamples), period, -period * rng.integer(4, 60));
        const auto r = align_records(a, a);
        self_bad += r.best_shift_sec != 0.0 || r.matched_fraction != 1.0;
    }
    int shift_bad = 0;
    for (int i = 0; i < kPropertyTrials; ++i) {
        double v = rng.uniform(0, 20);
        const auto a = speed_record(1, 1, grid_series(0.1, rng.integer(40, kOracleMaxSamples), [&](int) { return v += 1.0 + rng.uniform(0, 1.0); }));
        const int k = rng.integer(-30, 30);
        EdrRecord b = a;
        b.edr_event_no = EdrEventNo{2};
        for (auto& s : b.channels[Channel::Speed].samples) s.t_sec = std::round((s.t_sec + k * 0.1) * 1e6) / 1e6;
        const auto r = align_records(a, b);
        shift_bad += std::llround(r.best_shift_sec * 10) != -k || r.matched_fraction != 1.0;
    }
    int oracle_bad = 0;
    for (int i = 0; i < kPropertyTrials; ++i) {
        const double pa = rng.chance(0.5) ? 0.1 : 0.2;
        const double pb = rng.chance(0.5) ? 0.1 : 0.2;
        const double offset = rng.chance(0.3) ? rng.uniform(-0.04, 0.04) : 0.0;
        const auto a = random_walk(rng, 1, rng.integer(2, kOracleMaxSamples), pa, -pa * rng.integer(1, 99));
        const auto b = random_walk(rng, 2, rng.integer(2, kOracleMaxSamples), pb, -pb * rng.integer(1, 99) + offset);
        const auto got = align_records(a, b);
        const auto want = brute_force_align(a, b);
        oracle_bad += std::fabs(got.best_shift_sec - want.shift_sec) > kShiftEps || got.matched_pairs != want.matched ||
                      got.compared_pairs != want.pairs;
    }
    return {self_bad == 0 && shift_bad == 0 && oracle_bad == 0,
            fmt::format("self {}/{}, shift {}/{}, oracle {}/{}", kPropertyTrials - self_bad, kPropertyTrials, kPropertyTrials - shift_bad,
                        kPropertyTrials, kPropertyTrials - oracle_bad, kPropertyTrials)};
}

Outcome round_trip() {
    Rng rng(20242);
    int same = 0;
    for (int i = 0; i < kPropertyTrials; ++i) {
        const auto c = random_case(rng, i);
        same += parse_case(emit_case(c)) == c;
    }
    return {same == kPropertyTrials, fmt::format("{}/{} identical", same, kPropertyTrials)};
}

Outcome loop_closure() {
    std::vector<CrashCase> fixtures;
    for (const auto& e : load_corpus(source_dir() / "fixtures")) {
        if (!e.ok()) return {false, e.error_message()};
        fixtures.push_back(e.value());
    }
    CampaignOptions o;
    o.mode = CampaignMode::Agent;
    o.backends = {default_mock_profile()};
    const auto scores = run_campaign(fixtures, o);
    int agree = 0;
    for (std::size_t i = 0; i < fixtures.size(); ++i) {
        agree += scores[i].predicted && same_outputs(*scores[i].predicted, infer_first_crash(fixtures[i]));
    }
    const int n = static_cast<int>(fixtures.size());
    return {n > 0 && agree == n, fmt::format("{}/{} fixture cases reproduce the rule engine", agree, n)};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"case 32548 inference", case_32548},
        {"mislabel robustness on 200 complicated cases", mislabel_robustness},
        {"simple-case exactness on 238 cases", simple_exactness},
        {"scoring arithmetic", scoring_arithmetic},
        {"585-trial mock campaign", campaign_shape},
        {"case 28197 encoding goldens", encoding_goldens},
        {"alignment properties", alignment_properties},
        {"case round trip", round_trip},
        {"two-phase loop closure with the echo mock", loop_closure},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, fmt::format("threw {}: {}", error_kind(e), e.what())};
        }
        failed += !o.pass;
        std::cout << fmt::format("{} criterion {}: {} ({})", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail) << std::endl;
    }
    std::cout << fmt::format("{}/{} criteria passed", criteria.size() - static_cast<std::size_t>(failed), criteria.size()) << std::endl;
    return failed == 0 ? 0 : 1;
}
