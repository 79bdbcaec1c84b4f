#include "crashforge/synth.hpp"

#include "crashforge/errors.hpp"
#include "crashforge/eval.hpp"

#include <json.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

namespace crashforge {

namespace {

using json = nlohmann::ordered_json;

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double uniform(const Range& r) { return uniform(r.min, r.max); }
    bool chance(double p) { return p >= 1.0 || (p > 0.0 && uniform() < p); }

    // Unbiased integer in [lo, hi] by rejection.
    int integer(int lo, int hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % span;
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return lo + static_cast<int>(x % span);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[static_cast<std::size_t>(integer(0, static_cast<int>(i) - 1))]);
    }

    template <class T>
    const T& pick(const std::vector<T>& v) {
        return v[static_cast<std::size_t>(integer(0, static_cast<int>(v.size()) - 1))];
    }

private:
    std::mt19937_64 engine_;
};

double round_to(double v, double scale) { return std::round(v * scale) / scale; }

const std::vector<std::string> kClasses = {"Small Passenger Car", "Medium Passenger Car", "Large Passenger Car", "Compact Utility Vehicle",
                                           "Large Utility Vehicle", "Pickup Truck", "Minivan"};
const std::vector<std::string> kFlows = {"Not physically divided (two-way traffic)", "Divided, with a barrier", "One-way trafficway",
                                         "Divided, no barrier"};
const std::vector<std::string> kLanes = {"One", "Two", "Three", "Four"};
const std::vector<double> kSpeedLimits = {40.0, 48.0, 56.0, 64.0, 72.0, 88.0, 104.0};

// One vehicle's record before EDREVENTNOs are assigned.
struct Draft {
    int family = -1;  // index of the true record this one overlaps, or -1 for unrelated
    bool is_true = false;
    EventLabel label;
    std::map<Channel, TimeSeries> channels;
};

struct VehicleDraft {
    int position = 0;  // 0 = lead
    VehNo vehno;
    bool missing = false;
    std::vector<Draft> records;
};

class CaseBuilder {
public:
    CaseBuilder(const GeneratorSpec& spec, std::uint64_t index, std::uint64_t attempt)
        : spec_(spec), rng_(case_stream_seed(spec.seed, index, attempt)), index_(index) {}

    GeneratedCase build();
    bool decidable() const;

private:
    std::vector<double> times(double period) const {
        std::vector<double> t;
        const int n = static_cast<int>(std::llround(spec_.window_sec / period));
        for (int k = 0; k <= n; ++k) t.push_back(round_to(-spec_.window_sec + k * period, 1000.0));
        return t;
    }

    Draft lead_record(double period);
    Draft follower_record(double period);
    Draft extra_record(const Draft& truth, double period, bool lead, int label_event);
    Draft unrelated_record(double period);

    const GeneratorSpec& spec_;
    Rng rng_;
    std::uint64_t index_;
    std::vector<VehicleDraft> vehicles_;
    int first_event_positions_[2] = {0, 1};
};

TimeSeries make_series(const std::vector<double>& t, const std::vector<double>& v) {
    TimeSeries ts;
    for (std::size_t i = 0; i < t.size(); ++i) ts.samples.push_back({t[i], v[i]});
    return ts;
}

Draft CaseBuilder::lead_record(double period) {
    const auto t = times(period);
    const double decel = rng_.uniform(spec_.lead_decel_kmh_per_s);
    // Brake onset on the sample grid within [-4.5, -2.5] s.
    std::vector<std::size_t> onsets;
    for (std::size_t i = 1; i < t.size(); ++i) {
        if (t[i] >= -4.5 - 1e-9 && t[i] <= -2.5 + 1e-9) onsets.push_back(i);
    }
    const std::size_t onset = rng_.pick(onsets);
    const double braking_sec = -t[onset];
    const double v0 = round_to(2.0 + decel * braking_sec + rng_.uniform(0.0, 15.0), 10.0);

    std::vector<double> speed;
    std::vector<double> brake;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double v = i < onset ? v0 : v0 - decel * (t[i] - t[onset]);
        speed.push_back(round_to(std::max(v, 0.0), 10.0));
        brake.push_back(i >= onset ? 1.0 : 0.0);
    }
    Draft d;
    d.channels[Channel::Speed] = make_series(t, speed);
    d.channels[Channel::Brake] = make_series(t, brake);
    return d;
}

Draft CaseBuilder::follower_record(double period) {
    const auto t = times(period);
    const double v0 = rng_.uniform(spec_.initial_speed_kmh);
    const double decel = rng_.uniform(20.0, 28.0);
    std::vector<std::size_t> onsets;
    for (std::size_t i = 1; i < t.size(); ++i) {
        if (t[i] >= -0.4 - 1e-9 && t[i] <= -0.1 + 1e-9) onsets.push_back(i);
    }
    const std::size_t onset = rng_.pick(onsets);
    const double pedal = round_to(rng_.uniform(10.0, 40.0), 1.0);

    std::vector<double> speed;
    std::vector<double> brake;
    std::vector<double> accel;
    double walk = v0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (i > 0 && i < onset) walk = std::clamp(walk + rng_.uniform(-0.8, 0.8), v0 - 1.5, v0 + 1.5);
        const double v = i < onset ? walk : walk - decel * (t[i] - t[onset] + period);
        speed.push_back(round_to(std::max(v, 0.0), 10.0));
        brake.push_back(i >= onset ? 1.0 : 0.0);
        accel.push_back(i >= onset ? 0.0 : pedal);
    }
    Draft d;
    d.channels[Channel::Speed] = make_series(t, speed);
    d.channels[Channel::Brake] = make_series(t, brake);
    d.channels[Channel::Accel] = make_series(t, accel);
    return d;
}

// A later trigger of the same vehicle: the record's clock runs `shift` seconds
// behind the true record's, so its early part repeats the true record's tail
// and the last `shift` seconds are new post-impact data.
Draft CaseBuilder::extra_record(const Draft& truth, double period, bool lead, int label_event) {
    const int lo = static_cast<int>(std::ceil(0.5 / period - 1e-9));
    const int hi = static_cast<int>(std::floor(2.0 / period + 1e-9));
    const int steps = rng_.integer(lo, hi);
    const double tail_rate = lead ? rng_.uniform(5.0, 10.0) : -rng_.uniform(10.0, 20.0);

    Draft d;
    d.label = EventLabel::mapped(label_event);
    for (const auto& [ch, ts] : truth.channels) {
        const auto n = ts.samples.size();
        TimeSeries out;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t src = i + static_cast<std::size_t>(steps);
            double v;
            if (src < n) {
                v = ts.samples[src].value;
            } else {
                const double last = ts.samples[n - 1].value;
                const double dt = static_cast<double>(src - (n - 1)) * period;
                switch (ch) {
                    case Channel::Speed: v = round_to(std::max(last + tail_rate * dt, 0.0), 10.0); break;
                    case Channel::Brake: v = 1.0; break;
                    default: v = 0.0; break;
                }
            }
            out.samples.push_back({ts.samples[i].t_sec, v});
        }
        d.channels[ch] = std::move(out);
    }
    return d;
}

Draft CaseBuilder::unrelated_record(double period) {
    const auto t = times(period);
    const double base = rng_.uniform(5.0, 120.0);
    std::vector<double> speed;
    std::vector<double> brake;
    const double onset = rng_.uniform(-5.0, 0.0);
    for (double ti : t) {
        speed.push_back(round_to(std::max(base + rng_.uniform(-20.0, 20.0), 0.0), 10.0));
        brake.push_back(ti >= onset ? 1.0 : 0.0);
    }
    Draft d;
    d.label = rng_.chance(0.5) ? EventLabel::not_related() : EventLabel::related_unknown();
    d.channels[Channel::Speed] = make_series(t, speed);
    d.channels[Channel::Brake] = make_series(t, brake);
    return d;
}

GeneratedCase CaseBuilder::build() {
    using K = ContactPlane::Kind;
    const int n = rng_.integer(spec_.chain_length_min, spec_.chain_length_max);
    std::vector<int> vehnos(static_cast<std::size_t>(n));
    std::iota(vehnos.begin(), vehnos.end(), 1);
    rng_.shuffle(vehnos);

    GeneratedCase out;
    CrashCase& c = out.c;
    c.case_id = fmt::format("syn-{}-{:04}", spec_.seed, index_);

    vehicles_.clear();
    for (int p = 0; p < n; ++p) {
        VehicleDraft v;
        v.position = p;
        v.vehno = VehNo{vehnos[static_cast<std::size_t>(p)]};
        vehicles_.push_back(v);
    }

    // Event k: position k's front into position k-1's back.
    for (int k = 1; k < n; ++k) {
        c.events.push_back({EventNo{k}, vehicles_[static_cast<std::size_t>(k)].vehno, {K::Front, {}},
                            vehicles_[static_cast<std::size_t>(k - 1)].vehno, {K::Back, {}}});
    }
    for (const auto& v : vehicles_) {
        Vehicle veh{v.vehno, rng_.pick(kClasses), {}};
        if (v.position > 0) veh.damage_planes.push_back({K::Front, {}});
        if (v.position < n - 1) veh.damage_planes.push_back({K::Back, {}});
        std::sort(veh.damage_planes.begin(), veh.damage_planes.end());
        c.vehicles.push_back(veh);
        c.environments.push_back({v.vehno, rng_.pick(kSpeedLimits), rng_.pick(kFlows), rng_.pick(kLanes), {}});
    }

    bool extra_shares_label = false;
    for (auto& v : vehicles_) {
        v.missing = rng_.chance(spec_.p_missing_edr);
        if (v.missing) continue;
        const double period = rng_.pick(spec_.sample_periods_sec);
        const bool lead = v.position == 0;
        const int own_event = std::max(v.position, 1);
        Draft truth = lead ? lead_record(period) : follower_record(period);
        truth.is_true = true;
        truth.family = 0;
        truth.label = EventLabel::mapped(own_event);
        v.records.push_back(truth);

        if (rng_.chance(spec_.p_extra_overlapping_record)) {
            // A later trigger is filed under the same event or the vehicle's next one.
            const bool has_next = !lead && v.position + 1 <= n - 1;
            const int label_event = has_next && rng_.chance(0.5) ? v.position + 1 : own_event;
            v.records.push_back(extra_record(v.records.front(), period, lead, label_event));
            v.records.back().family = 0;
            if (label_event == own_event) extra_shares_label = true;
        }
        if (rng_.chance(spec_.p_unrelated_record)) v.records.push_back(unrelated_record(period));
    }

    // Label error: one mapped record of a first-event vehicle gets another event.
    if (c.events.size() >= 2 && rng_.chance(spec_.p_mislabel)) {
        std::vector<std::pair<std::size_t, std::size_t>> mapped;
        for (std::size_t vi = 0; vi < 2; ++vi) {
            for (std::size_t ri = 0; ri < vehicles_[vi].records.size(); ++ri) {
                if (vehicles_[vi].records[ri].label.is_mapped()) mapped.emplace_back(vi, ri);
            }
        }
        if (!mapped.empty()) {
            auto [vi, ri] = rng_.pick(mapped);
            EventLabel& label = vehicles_[vi].records[ri].label;
            if (label.event.value == 1) {
                std::vector<int> others;
                for (int e = 2; e <= static_cast<int>(c.events.size()); ++e) others.push_back(e);
                label = EventLabel::mapped(rng_.pick(others));
            } else {
                label = EventLabel::mapped(1);
            }
            out.mislabel_injected = true;
        }
    }

    FirstCrashFinding truth;
    truth.striking_vehno = vehicles_[1].vehno;
    truth.struck_vehno = vehicles_[0].vehno;
    for (auto& v : vehicles_) {
        std::vector<int> numbers(v.records.size());
        std::iota(numbers.begin(), numbers.end(), 1);
        rng_.shuffle(numbers);
        for (std::size_t i = 0; i < v.records.size(); ++i) {
            EdrRecord r;
            r.vehno = v.vehno;
            r.edr_event_no = EdrEventNo{numbers[i]};
            r.db_label = v.records[i].label;
            r.channels = v.records[i].channels;
            if (v.records[i].is_true && v.position <= 1) {
                (v.position == 0 ? truth.struck_edr : truth.striking_edr) = r.edr_event_no;
            }
            c.edr_records.push_back(std::move(r));
        }
    }
    std::sort(c.edr_records.begin(), c.edr_records.end(),
              [](const EdrRecord& a, const EdrRecord& b) { return std::pair(a.vehno, a.edr_event_no) < std::pair(b.vehno, b.edr_event_no); });
    c.ground_truth = truth;
    c.stratum = compute_stratum(c, out.mislabel_injected);
    out.intended_complicated = out.mislabel_injected || extra_shares_label;
    return out;
}

bool CaseBuilder::decidable() const {
    for (std::size_t vi = 0; vi < 2; ++vi) {
        const auto& v = vehicles_[vi];
        std::size_t survivors = 0;
        bool family_labeled = false;
        bool truth_present = false;
        for (const auto& r : v.records) {
            if (!r.label.is_mapped()) continue;
            ++survivors;
            if (r.is_true) truth_present = true;
            if (r.family == 0 && r.label.is_mapped_to(EventNo{1})) family_labeled = true;
        }
        if (!truth_present) continue;
        if (!family_labeled && survivors != 1) return false;
    }
    return true;
}

}  // namespace

std::uint64_t case_stream_seed(std::uint64_t seed, std::uint64_t case_index, std::uint64_t attempt) {
    std::uint64_t state = seed;
    std::uint64_t s = splitmix64(state);
    state = s ^ (case_index * 0xD1B54A32D192ED03ULL);
    s = splitmix64(state);
    state = s ^ (attempt * 0x8CB92BA72F3D8DD7ULL);
    return splitmix64(state);
}

void GeneratorSpec::check() const {
    auto prob = [](double p, const char* name) {
        if (!(p >= 0.0 && p <= 1.0)) throw SpecError(fmt::format("{} must lie in [0, 1]", name));
    };
    prob(p_missing_edr, "p_missing_edr");
    prob(p_extra_overlapping_record, "p_extra_overlapping_record");
    prob(p_mislabel, "p_mislabel");
    prob(p_unrelated_record, "p_unrelated_record");
    if (n_cases < 0) throw SpecError("n_cases must be non-negative");
    if (chain_length_min < 2 || chain_length_max < chain_length_min || chain_length_max > 9) {
        throw SpecError("chain length range must satisfy 2 <= min <= max <= 9");
    }
    if (!(initial_speed_kmh.min > 0.0 && initial_speed_kmh.min <= initial_speed_kmh.max)) throw SpecError("invalid initial_speed_kmh range");
    if (!(lead_decel_kmh_per_s.min > 0.0 && lead_decel_kmh_per_s.min <= lead_decel_kmh_per_s.max)) {
        throw SpecError("invalid lead_decel_kmh_per_s range");
    }
    if (!(window_sec >= 5.0 && window_sec <= 20.0)) throw SpecError("window_sec must lie in [5, 20]");
    if (sample_periods_sec.empty()) throw SpecError("sample_periods_sec must not be empty");
    for (double p : sample_periods_sec) {
        if (!(p >= 0.05 && p <= 0.25)) throw SpecError("sample periods must lie in [0.05, 0.25] s");
        const double steps = window_sec / p;
        if (std::fabs(steps - std::round(steps)) > 1e-9) throw SpecError("window_sec must be a whole number of sample periods");
    }
}

GeneratorSpec parse_generator_spec(std::string_view text) {
    json j;
    try {
        j = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw SpecError(std::string("malformed generator spec: ") + e.what());
    }
    if (!j.is_object()) throw SpecError("generator spec must be a JSON object");

    GeneratorSpec s;
    auto number = [&](const char* key, double& out) {
        if (!j.contains(key)) return;
        if (!j[key].is_number()) throw SpecError(fmt::format("'{}' must be a number", key));
        out = j[key].get<double>();
    };
    auto integer = [&](const char* key, auto& out) {
        if (!j.contains(key)) return;
        if (!j[key].is_number_integer()) throw SpecError(fmt::format("'{}' must be an integer", key));
        out = j[key].get<std::remove_reference_t<decltype(out)>>();
    };
    auto range = [&](const char* key, Range& out) {
        if (!j.contains(key)) return;
        const auto& r = j[key];
        if (!r.is_array() || r.size() != 2 || !r[0].is_number() || !r[1].is_number()) throw SpecError(fmt::format("'{}' must be [min, max]", key));
        out = {r[0].get<double>(), r[1].get<double>()};
    };
    static const char* const known[] = {"seed",        "n_cases",     "chain_length_min",           "chain_length_max",
                                        "p_missing_edr", "p_extra_overlapping_record", "p_mislabel", "p_unrelated_record",
                                        "initial_speed_kmh", "lead_decel_kmh_per_s", "sample_periods_sec", "window_sec"};
    for (const auto& [key, value] : j.items()) {
        if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) == std::end(known)) {
            throw SpecError(fmt::format("unknown generator spec field '{}'", key));
        }
    }
    if (j.contains("seed") && !j["seed"].is_number_unsigned() && !(j["seed"].is_number_integer() && j["seed"].get<std::int64_t>() >= 0)) {
        throw SpecError("'seed' must be a non-negative integer");
    }
    integer("seed", s.seed);
    integer("n_cases", s.n_cases);
    integer("chain_length_min", s.chain_length_min);
    integer("chain_length_max", s.chain_length_max);
    number("p_missing_edr", s.p_missing_edr);
    number("p_extra_overlapping_record", s.p_extra_overlapping_record);
    number("p_mislabel", s.p_mislabel);
    number("p_unrelated_record", s.p_unrelated_record);
    range("initial_speed_kmh", s.initial_speed_kmh);
    range("lead_decel_kmh_per_s", s.lead_decel_kmh_per_s);
    number("window_sec", s.window_sec);
    if (j.contains("sample_periods_sec")) {
        const auto& p = j["sample_periods_sec"];
        if (!p.is_array()) throw SpecError("'sample_periods_sec' must be an array");
        s.sample_periods_sec.clear();
        for (const auto& x : p) {
            if (!x.is_number()) throw SpecError("'sample_periods_sec' entries must be numbers");
            s.sample_periods_sec.push_back(x.get<double>());
        }
    }
    s.check();
    return s;
}

std::string generator_spec_to_json(const GeneratorSpec& s) {
    json j;
    j["seed"] = s.seed;
    j["n_cases"] = s.n_cases;
    j["chain_length_min"] = s.chain_length_min;
    j["chain_length_max"] = s.chain_length_max;
    j["p_missing_edr"] = s.p_missing_edr;
    j["p_extra_overlapping_record"] = s.p_extra_overlapping_record;
    j["p_mislabel"] = s.p_mislabel;
    j["p_unrelated_record"] = s.p_unrelated_record;
    j["initial_speed_kmh"] = {s.initial_speed_kmh.min, s.initial_speed_kmh.max};
    j["lead_decel_kmh_per_s"] = {s.lead_decel_kmh_per_s.min, s.lead_decel_kmh_per_s.max};
    j["sample_periods_sec"] = s.sample_periods_sec;
    j["window_sec"] = s.window_sec;
    return j.dump(2);
}

GeneratedCorpus generate(const GeneratorSpec& spec, unsigned parallelism) {
    spec.check();
    constexpr std::uint64_t kMaxAttempts = 1000;
    const auto n = static_cast<std::size_t>(spec.n_cases);
    GeneratedCorpus corpus;
    corpus.cases.resize(n);

    auto make = [&](std::size_t i) {
        for (std::uint64_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
            CaseBuilder b(spec, i, attempt);
            GeneratedCase g = b.build();
            if (b.decidable()) {
                g.regenerations = static_cast<int>(attempt);
                corpus.cases[i] = std::move(g);
                return;
            }
        }
        throw SpecError(fmt::format("case {} stayed undecidable after {} draws", i, kMaxAttempts));
    };

    const unsigned workers = std::max(1U, std::min<unsigned>(parallelism, static_cast<unsigned>(n)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) make(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        make(i);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
        if (failure) std::rethrow_exception(failure);
    }

    for (const auto& g : corpus.cases) {
        corpus.regenerations += static_cast<std::uint64_t>(g.regenerations);
        corpus.draws += static_cast<std::uint64_t>(g.regenerations) + 1;
    }
    return corpus;
}

}  // namespace crashforge
