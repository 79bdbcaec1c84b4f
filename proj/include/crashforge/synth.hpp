#pragma once

// Seeded generator of rear-end chain cases with known ground truth.
//
// Randomness: each case draws from its own mt19937_64 stream whose seed is
// SplitMix64(spec.seed, case index, attempt), so a case does not depend on
// how many cases precede it. Uniform variates are built from the raw 64-bit
// output, not from <random> distributions, to stay identical across
// standard libraries.

#include "crashforge/case_model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace crashforge {

struct Range {
    double min = 0.0;
    double max = 0.0;
    friend bool operator==(const Range&, const Range&) = default;
};

struct GeneratorSpec {
    std::uint64_t seed = 0;
    int n_cases = 10;
    int chain_length_min = 2;
    int chain_length_max = 4;
    double p_missing_edr = 0.0;
    double p_extra_overlapping_record = 0.0;
    double p_mislabel = 0.0;
    double p_unrelated_record = 0.0;
    Range initial_speed_kmh{40.0, 90.0};
    Range lead_decel_kmh_per_s{8.0, 15.0};
    std::vector<double> sample_periods_sec{0.1, 0.2};
    double window_sec = 5.0;

    /// Throws SpecError.
    void check() const;

    friend bool operator==(const GeneratorSpec&, const GeneratorSpec&) = default;
};

/// Throws SpecError on malformed or out-of-range input.
GeneratorSpec parse_generator_spec(std::string_view json_text);
std::string generator_spec_to_json(const GeneratorSpec& spec);

struct GeneratedCase {
    CrashCase c;  // ground_truth and stratum populated
    int regenerations = 0;
    bool mislabel_injected = false;
    bool intended_complicated = false;
};

struct GeneratedCorpus {
    std::vector<GeneratedCase> cases;
    std::uint64_t draws = 0;          // cases drawn, including rejected ones
    std::uint64_t regenerations = 0;  // rejected draws
};

/// Draws failing the decidability check are discarded and redrawn with the
/// next attempt number. A draw is decidable when, for both first-event
/// vehicles, the record that truly belongs to EVENTNO 1 is reachable through
/// the label filters: it carries the EVENTNO 1 label, a record of its own
/// overlap family does, or it is the only record surviving the filters.
/// Throws SpecError.
GeneratedCorpus generate(const GeneratorSpec& spec, unsigned parallelism = 1);

/// The per-case PRNG seed (exposed for tests).
std::uint64_t case_stream_seed(std::uint64_t seed, std::uint64_t case_index, std::uint64_t attempt);

}  // namespace crashforge
