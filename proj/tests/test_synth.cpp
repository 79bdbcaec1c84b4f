#include "doctest.h"
#include "support.hpp"

#include "crashforge/errors.hpp"
#include "crashforge/eval.hpp"
#include "crashforge/inference.hpp"
#include "crashforge/ingest.hpp"
#include "crashforge/synth.hpp"

#include <set>

using namespace crashforge;

namespace {

GeneratorSpec spec_with(double p, std::uint64_t seed, int n) {
    GeneratorSpec s;
    s.seed = seed;
    s.n_cases = n;
    s.chain_length_min = 3;
    s.chain_length_max = 4;
    s.p_mislabel = p;
    s.p_extra_overlapping_record = p;
    s.p_unrelated_record = p;
    return s;
}

std::size_t max_records_per_vehicle(const CrashCase& c) {
    std::map<int, std::size_t> n;
    std::size_t best = 0;
    for (const auto& r : c.edr_records) best = std::max(best, ++n[r.vehno.value]);
    return best;
}

}  // namespace

TEST_SUITE("synthetic corpus") {
    TEST_CASE("probability zero gives simple cases") {
        const auto corpus = generate(spec_with(0.0, 7, 60));
        REQUIRE(corpus.cases.size() == 60);
        CHECK(corpus.regenerations == 0);
        for (const auto& g : corpus.cases) {
            CHECK(g.c.stratum == Stratum::Simple);
            CHECK(max_records_per_vehicle(g.c) <= 1);
            CHECK_FALSE(g.intended_complicated);
        }
    }

    TEST_CASE("probability one gives complicated cases") {
        const auto corpus = generate(spec_with(1.0, 8, 60));
        for (const auto& g : corpus.cases) {
            CHECK(g.c.stratum == Stratum::Complicated);
            CHECK(g.mislabel_injected);
        }
    }

    TEST_CASE("stratum agrees with what was injected") {
        const auto corpus = generate(spec_with(0.4, 9, 150));
        int complicated = 0;
        for (const auto& g : corpus.cases) {
            CAPTURE(g.c.case_id);
            CHECK((g.c.stratum == Stratum::Complicated) == g.intended_complicated);
            CHECK(g.c.stratum == compute_stratum(g.c, g.mislabel_injected));
            complicated += g.intended_complicated;
        }
        CHECK(complicated > 0);
        CHECK(complicated < 150);
    }

    TEST_CASE("every case is valid and round-trips") {
        for (const auto& g : generate(spec_with(0.5, 10, 80)).cases) {
            CAPTURE(g.c.case_id);
            CHECK(validate_case(g.c).empty());
            CHECK(parse_case(emit_case(g.c)) == g.c);
            const auto chain = static_cast<int>(g.c.vehicles.size());
            CHECK(chain >= 3);
            CHECK(chain <= 4);
            CHECK(g.c.ground_truth.has_value());
        }
    }

    TEST_CASE("the rule engine recovers the generated ground truth") {
        int wrong = 0;
        for (const auto& g : generate(spec_with(0.5, 11, 120)).cases) {
            if (!same_outputs(infer_first_crash(g.c), *g.c.ground_truth)) ++wrong;
        }
        CHECK(wrong == 0);
    }

    TEST_CASE("same seed, same corpus, at any parallelism") {
        const auto spec = spec_with(0.5, 12, 40);
        const auto a = generate(spec);
        const auto b = generate(spec, 4);
        REQUIRE(a.cases.size() == b.cases.size());
        for (std::size_t i = 0; i < a.cases.size(); ++i) CHECK(emit_case(a.cases[i].c) == emit_case(b.cases[i].c));
        CHECK(a.draws == b.draws);
        auto other = spec;
        other.seed = 13;
        CHECK(emit_case(generate(other).cases[0].c) != emit_case(a.cases[0].c));
    }

    TEST_CASE("a case does not depend on how many precede or follow it") {
        const auto big = generate(spec_with(0.5, 14, 30));
        const auto small = generate(spec_with(0.5, 14, 10));
        for (std::size_t i = 0; i < small.cases.size(); ++i) CHECK(emit_case(small.cases[i].c) == emit_case(big.cases[i].c));
    }

    TEST_CASE("case stream seeds are distinct") {
        std::set<std::uint64_t> seen;
        for (std::uint64_t i = 0; i < 200; ++i) {
            for (std::uint64_t a = 0; a < 5; ++a) seen.insert(case_stream_seed(2024, i, a));
        }
        CHECK(seen.size() == 1000);
        CHECK(case_stream_seed(1, 2, 3) == case_stream_seed(1, 2, 3));
    }

    TEST_CASE("spec json round trip and errors") {
        auto spec = spec_with(0.25, 99, 5);
        spec.sample_periods_sec = {0.1};
        CHECK(parse_generator_spec(generator_spec_to_json(spec)) == spec);
        CHECK(parse_generator_spec("{}") == GeneratorSpec{});
        CHECK_THROWS_AS(parse_generator_spec("{\"p_mislabel\": 1.5}"), SpecError);
        CHECK_THROWS_AS(parse_generator_spec("{\"colour\": 1}"), SpecError);
        CHECK_THROWS_AS(parse_generator_spec("{\"seed\": -1}"), SpecError);
        CHECK_THROWS_AS(parse_generator_spec("{\"chain_length_min\": 5, \"chain_length_max\": 3}"), SpecError);
        CHECK_THROWS_AS(parse_generator_spec("[1]"), SpecError);
        CHECK_THROWS_AS(parse_generator_spec("{"), SpecError);
        CHECK_THROWS_AS(parse_generator_spec("{\"window_sec\": 5.05}"), SpecError);
    }

    TEST_CASE("empty corpus") {
        const auto corpus = generate(spec_with(0.5, 1, 0));
        CHECK(corpus.cases.empty());
        CHECK(corpus.draws == 0);
    }
}
