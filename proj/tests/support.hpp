#pragma once

// Shared test helpers: random valid cases, random series, and a brute-force
// alignment oracle written without reference to the library's scan.

#include "crashforge/case_model.hpp"
#include "crashforge/edr_analysis.hpp"
#include "crashforge/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace testsupport {

using namespace crashforge;

inline std::filesystem::path source_dir() { return CRASHFORGE_SOURCE_DIR; }

inline std::string read(const std::filesystem::path& p) { return read_file(p); }

struct Rng {
    std::mt19937_64 engine;
    explicit Rng(std::uint64_t seed) : engine(seed) {}
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine); }
    bool chance(double p) { return uniform(0.0, 1.0) < p; }
    template <typename T>
    const T& pick(const std::vector<T>& v) { return v[static_cast<std::size_t>(integer(0, static_cast<int>(v.size()) - 1))]; }
};

inline double round1(double v) { return std::round(v * 10.0) / 10.0; }

/// Samples at -window + k*period, values from `f(k)`.
template <typename F>
TimeSeries grid_series(double period, int n, F f, double start = -5.0) {
    TimeSeries s;
    for (int k = 0; k < n; ++k) s.samples.push_back({std::round((start + k * period) * 1e6) / 1e6, f(k)});
    return s;
}

inline EdrRecord speed_record(int vehno, int edr, TimeSeries speed, EventLabel label = EventLabel::mapped(1)) {
    EdrRecord r;
    r.vehno = VehNo{vehno};
    r.edr_event_no = EdrEventNo{edr};
    r.db_label = label;
    r.channels[Channel::Speed] = std::move(speed);
    return r;
}

/// A structurally valid case with arbitrary (not necessarily physical) content.
inline CrashCase random_case(Rng& rng, int index) {
    static const std::vector<std::string> classes{"Pickup Truck", "Small Passenger Car", "Sport Utility Vehicle", "Motorcycle", "Bus \"coach\""};
    static const std::vector<std::string> flows{"Not physically divided (two-way traffic)", "Divided, with barrier", "One-way trafficway"};
    static const std::vector<std::string> lanes{"One", "Two", "Three", "Four or more"};
    static const std::vector<std::string> other_planes{"Rear Quarter", "Mirror", "Tow hitch"};

    CrashCase c;
    c.case_id = "rt-" + std::to_string(index) + (rng.chance(0.2) ? " ünïcode" : "");
    const int nveh = rng.integer(1, 5);
    for (int v = 1; v <= nveh; ++v) {
        Vehicle veh{VehNo{v}, rng.pick(classes), {}};
        const int nplanes = rng.integer(1, 3);
        for (int p = 0; p < nplanes; ++p) {
            const int kind = rng.integer(0, 6);
            ContactPlane plane{static_cast<ContactPlane::Kind>(kind), {}};
            if (plane.kind == ContactPlane::Kind::Other) plane.other_text = rng.pick(other_planes);
            veh.damage_planes.push_back(plane);
        }
        std::sort(veh.damage_planes.begin(), veh.damage_planes.end());
        veh.damage_planes.erase(std::unique(veh.damage_planes.begin(), veh.damage_planes.end()), veh.damage_planes.end());
        c.vehicles.push_back(veh);
    }
    const int nevents = nveh >= 2 ? rng.integer(1, 4) : 0;
    for (int e = 1; e <= nevents; ++e) {
        const int a = rng.integer(1, nveh);
        int b = rng.integer(1, nveh - 1);
        if (b >= a) ++b;
        c.events.push_back({EventNo{e}, VehNo{a}, rng.pick(c.vehicles[a - 1].damage_planes), VehNo{b}, rng.pick(c.vehicles[b - 1].damage_planes)});
    }
    for (int v = 1; v <= nveh; ++v) {
        if (!rng.chance(0.8)) continue;
        EnvironmentRecord env{VehNo{v}, static_cast<double>(rng.integer(0, 13) * 8), rng.pick(flows), rng.pick(lanes), {}};
        if (rng.chance(0.3)) env.extra.emplace_back("Roadway Alignment", rng.chance(0.5) ? "Straight" : "Curve Left");
        if (rng.chance(0.2)) env.speed_limit_kmh = rng.uniform(0.0, 130.0);
        c.environments.push_back(env);
    }
    for (int v = 1; v <= nveh; ++v) {
        const int nrec = rng.integer(0, 3);
        for (int r = 1; r <= nrec; ++r) {
            EdrRecord rec;
            rec.vehno = VehNo{v};
            rec.edr_event_no = EdrEventNo{r};
            const int label = rng.integer(0, 2);
            if (label == 0 && nevents > 0) rec.db_label = EventLabel::mapped(rng.integer(1, nevents));
            else if (label == 1) rec.db_label = EventLabel::not_related();
            else rec.db_label = EventLabel::related_unknown();
            const double period = rng.chance(0.5) ? 0.1 : 0.2;
            const int n = rng.integer(1, 30);
            for (Channel ch : {Channel::Speed, Channel::Steering, Channel::Accel, Channel::Brake}) {
                if (ch != Channel::Speed && rng.chance(0.3)) continue;
                TimeSeries s;
                double t = -period * (n - 1) - (rng.chance(0.2) ? rng.uniform(0.0, 0.05) : 0.0);
                for (int k = 0; k < n; ++k) {
                    double value = 0.0;
                    switch (ch) {
                        case Channel::Speed: value = rng.chance(0.5) ? round1(rng.uniform(0, 120)) : rng.uniform(0, 120); break;
                        case Channel::Steering: value = rng.uniform(-540, 540); break;
                        case Channel::Accel: value = rng.chance(0.5) ? rng.integer(0, 100) : rng.uniform(0, 100); break;
                        case Channel::Brake: value = rng.integer(0, 1); break;
                    }
                    s.samples.push_back({t, value});
                    t += period;
                    if (t > 0.0) t = 0.0;
                }
                // Keep times strictly increasing after the clamp at zero.
                s.samples.erase(std::unique(s.samples.begin(), s.samples.end(), [](const Sample& x, const Sample& y) { return x.t_sec == y.t_sec; }),
                                s.samples.end());
                rec.channels[ch] = s;
            }
            c.edr_records.push_back(rec);
        }
    }
    if (rng.chance(0.3)) c.scene_diagram = SceneDiagramRef{"diagrams/" + c.case_id + ".png", "image/png"};
    if (rng.chance(0.5) && nevents > 0) {
        c.ground_truth = FirstCrashFinding{c.events[0].actor_vehno, c.events[0].target_vehno, std::nullopt, std::nullopt, {}};
        const auto target_records = c.records_of(c.events[0].target_vehno);
        if (!target_records.empty()) c.ground_truth->struck_edr = target_records.front()->edr_event_no;
        if (rng.chance(0.5)) c.ground_truth->rationale = {"analyst consensus", "line with \"quotes\""};
    }
    if (rng.chance(0.5)) c.stratum = rng.chance(0.5) ? Stratum::Simple : Stratum::Complicated;
    return c;
}

// ---- brute-force alignment oracle --------------------------------------------

struct OracleResult {
    double shift_sec = 0.0;
    std::size_t matched = 0;
    std::size_t pairs = 0;
};

/// Every grid shift, every sample pair: O(K * n * m). Speed channel only.
inline OracleResult brute_force_align(const EdrRecord& a, const EdrRecord& b, const AlignmentConfig& cfg = {}) {
    const auto& sa = a.channel(Channel::Speed)->samples;
    const auto& sb = b.channel(Channel::Speed)->samples;
    auto us = [](double t) { return static_cast<std::int64_t>(std::llround(t * 1e6)); };
    auto min_gap = [&](const std::vector<Sample>& s) {
        std::int64_t g = INT64_MAX;
        for (std::size_t i = 1; i < s.size(); ++i) g = std::min(g, us(s[i].t_sec) - us(s[i - 1].t_sec));
        return g;
    };
    const std::int64_t half = std::min(min_gap(sa), min_gap(sb)) / 2;
    const std::int64_t step = us(cfg.shift_step_sec);
    const std::int64_t kmax = us(cfg.shift_range_sec) / step;
    const double tol = cfg.tolerance_of(Channel::Speed) + 1e-9;
    const bool b_first = key_of(b) < key_of(a);

    OracleResult best;
    bool have = false;
    for (std::int64_t k = -kmax; k <= kmax; ++k) {
        const std::int64_t s = k * step;
        // Nearest partner with ties to the earlier sample.
        auto nearest_in_b = [&](std::int64_t t) {
            std::size_t bj = 0;
            std::int64_t bd = INT64_MAX;
            for (std::size_t j = 0; j < sb.size(); ++j) {
                const std::int64_t d = std::llabs(us(sb[j].t_sec) + s - t);
                if (d < bd) bd = d, bj = j;
            }
            return std::pair(bj, bd);
        };
        auto nearest_in_a = [&](std::int64_t t) {
            std::size_t bi = 0;
            std::int64_t bd = INT64_MAX;
            for (std::size_t i = 0; i < sa.size(); ++i) {
                const std::int64_t d = std::llabs(us(sa[i].t_sec) - t);
                if (d < bd) bd = d, bi = i;
            }
            return bi;
        };
        std::size_t n = 0;
        std::size_t m = 0;
        for (std::size_t i = 0; i < sa.size(); ++i) {
            auto [j, d] = nearest_in_b(us(sa[i].t_sec));
            if (d > half) continue;
            if (nearest_in_a(us(sb[j].t_sec) + s) != i) continue;
            ++n;
            if (std::fabs(sa[i].value - sb[j].value) <= tol) ++m;
        }
        if (n < static_cast<std::size_t>(cfg.min_overlap_samples)) n = 0, m = 0;
        const double shift = static_cast<double>(s) / 1e6;
        if (!have) {
            best = {shift, m, n};
            have = true;
            continue;
        }
        // Compare m/n against best.m/best.pairs, 0/0 counting as 0.
        const auto lhs = static_cast<long double>(m) * static_cast<long double>(best.pairs == 0 ? 1 : best.pairs);
        const auto rhs = static_cast<long double>(best.matched) * static_cast<long double>(n == 0 ? 1 : n);
        const bool better_fraction = lhs > rhs;
        const bool equal_fraction = lhs == rhs;
        if (better_fraction) {
            best = {shift, m, n};
        } else if (equal_fraction) {
            const double cur = std::fabs(best.shift_sec);
            const double cand = std::fabs(shift);
            if (cand < cur - 1e-12) {
                best = {shift, m, n};
            } else if (std::fabs(cand - cur) < 1e-12 && cand > 0) {
                // Exact +/- tie: the negative shift unless b sorts before a.
                const bool want_negative = !b_first;
                if ((shift < 0) == want_negative) best = {shift, m, n};
            }
        }
    }
    return best;
}

}  // namespace testsupport
