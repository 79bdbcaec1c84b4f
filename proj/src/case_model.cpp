#include "crashforge/case_model.hpp"

#include "crashforge/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

namespace crashforge {

namespace {

constexpr std::pair<ContactPlane::Kind, std::string_view> kPlaneNames[] = {
    {ContactPlane::Kind::Front, "Front"},
    {ContactPlane::Kind::Back, "Back"},
    {ContactPlane::Kind::Left, "Left"},
    {ContactPlane::Kind::Right, "Right"},
    {ContactPlane::Kind::Top, "Top"},
    {ContactPlane::Kind::Undercarriage, "Undercarriage"},
};

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    return out;
}

}  // namespace

ContactPlane ContactPlane::from_name(std::string_view name) {
    const std::string lowered = to_lower(name);
    for (const auto& [kind, text] : kPlaneNames) {
        if (lowered == to_lower(text)) return {kind, {}};
    }
    return {Kind::Other, std::string(name)};
}

std::string ContactPlane::name() const {
    if (kind == Kind::Other) return other_text;
    for (const auto& [k, text] : kPlaneNames) {
        if (k == kind) return std::string(text);
    }
    return {};
}

std::string ContactPlane::lower_name() const { return to_lower(name()); }

std::string CrashEvent::describe() const {
    return fmt::format("Contact between Vehicle {}'s {} and Vehicle {}'s {}", actor_vehno.value, actor_plane.lower_name(),
                       target_vehno.value, target_plane.lower_name());
}

std::string CrashEvent::short_form() const {
    return fmt::format("V{} {} vs V{} {}", actor_vehno.value, actor_plane.name(), target_vehno.value, target_plane.name());
}

std::string_view channel_name(Channel c) {
    switch (c) {
        case Channel::Speed: return "speed_kmh";
        case Channel::Steering: return "steering_deg";
        case Channel::Accel: return "accel_pedal_pct";
        case Channel::Brake: return "brake_on";
    }
    return "";
}

std::optional<Channel> channel_from_name(std::string_view name) {
    for (Channel c : kAllChannels) {
        if (channel_name(c) == name) return c;
    }
    return std::nullopt;
}

std::string_view channel_unit(Channel c) {
    switch (c) {
        case Channel::Speed: return "km/h";
        case Channel::Steering: return "deg";
        case Channel::Accel: return "%";
        case Channel::Brake: return "on/off";
    }
    return "";
}

const TimeSeries* EdrRecord::channel(Channel c) const {
    auto it = channels.find(c);
    return it == channels.end() ? nullptr : &it->second;
}

bool same_outputs(const FirstCrashFinding& a, const FirstCrashFinding& b) {
    return a.striking_vehno == b.striking_vehno && a.struck_vehno == b.struck_vehno && a.striking_edr == b.striking_edr &&
           a.struck_edr == b.struck_edr;
}

std::string_view stratum_name(Stratum s) { return s == Stratum::Simple ? "simple" : "complicated"; }

std::optional<Stratum> stratum_from_name(std::string_view name) {
    if (name == "simple") return Stratum::Simple;
    if (name == "complicated") return Stratum::Complicated;
    return std::nullopt;
}

const Vehicle* CrashCase::vehicle(VehNo v) const {
    auto it = std::find_if(vehicles.begin(), vehicles.end(), [v](const Vehicle& x) { return x.vehno == v; });
    return it == vehicles.end() ? nullptr : &*it;
}

const EnvironmentRecord* CrashCase::environment(VehNo v) const {
    auto it = std::find_if(environments.begin(), environments.end(), [v](const EnvironmentRecord& x) { return x.vehno == v; });
    return it == environments.end() ? nullptr : &*it;
}

std::vector<const EdrRecord*> CrashCase::records_of(VehNo v) const {
    std::vector<const EdrRecord*> out;
    for (const auto& r : edr_records) {
        if (r.vehno == v) out.push_back(&r);
    }
    std::sort(out.begin(), out.end(), [](const EdrRecord* a, const EdrRecord* b) { return a->edr_event_no < b->edr_event_no; });
    return out;
}

ValidationReport validate_case(const CrashCase& c) {
    ValidationReport report;
    auto add = [&report](std::string field, std::string rule) { report.push_back({std::move(field), std::move(rule)}); };

    if (c.case_id.empty()) add("case_id", "case id must not be empty");

    // Vehicles: unique positive VEHNOs, contiguous from 1.
    std::set<int> vehnos;
    for (std::size_t i = 0; i < c.vehicles.size(); ++i) {
        const auto& v = c.vehicles[i];
        const std::string field = fmt::format("vehicles[{}].vehno", i);
        if (v.vehno.value <= 0) add(field, "vehicle number must be positive");
        if (!vehnos.insert(v.vehno.value).second) add(field, "duplicate vehicle number");
    }
    {
        int expected = 1;
        bool contiguous = true;
        for (int n : vehnos) {
            if (n != expected++) contiguous = false;
        }
        if (!contiguous) add("vehicles", "vehicle numbers not contiguous from 1");
    }
    auto known_vehicle = [&vehnos](VehNo v) { return vehnos.count(v.value) != 0; };

    // Events: EVENTNO 1..N in ascending order, two distinct known participants.
    std::set<int> involved;
    for (std::size_t i = 0; i < c.events.size(); ++i) {
        const auto& e = c.events[i];
        if (e.eventno.value != static_cast<int>(i) + 1) {
            add(fmt::format("events[{}].eventno", i), "events not contiguous");
        }
        if (!known_vehicle(e.actor_vehno)) add(fmt::format("events[{}].actor_vehno", i), "event references unknown vehicle");
        if (!known_vehicle(e.target_vehno)) add(fmt::format("events[{}].target_vehno", i), "event references unknown vehicle");
        if (e.actor_vehno == e.target_vehno) add(fmt::format("events[{}]", i), "event participants must be distinct");
        involved.insert(e.actor_vehno.value);
        involved.insert(e.target_vehno.value);
    }
    std::set<int> eventnos;
    for (const auto& e : c.events) eventnos.insert(e.eventno.value);

    for (std::size_t i = 0; i < c.vehicles.size(); ++i) {
        const auto& v = c.vehicles[i];
        if (involved.count(v.vehno.value) != 0 && v.damage_planes.empty()) {
            add(fmt::format("vehicles[{}].damage_planes", i), "vehicle in an event has no damage plane");
        }
    }

    std::set<int> env_seen;
    for (std::size_t i = 0; i < c.environments.size(); ++i) {
        const auto& env = c.environments[i];
        if (!known_vehicle(env.vehno)) add(fmt::format("environments[{}].vehno", i), "environment references unknown vehicle");
        if (!env_seen.insert(env.vehno.value).second) add(fmt::format("environments[{}].vehno", i), "duplicate environment record");
        if (!(env.speed_limit_kmh >= 0.0) || !std::isfinite(env.speed_limit_kmh)) {
            add(fmt::format("environments[{}].speed_limit_kmh", i), "speed limit must be non-negative");
        }
    }

    std::set<std::pair<int, int>> edr_keys;
    for (std::size_t i = 0; i < c.edr_records.size(); ++i) {
        const auto& r = c.edr_records[i];
        const std::string base = fmt::format("edr_records[{}]", i);
        if (!known_vehicle(r.vehno)) add(base + ".vehno", "EDR record references unknown vehicle");
        if (r.edr_event_no.value <= 0) add(base + ".edr_event_no", "EDR event number must be positive");
        if (!edr_keys.insert({r.vehno.value, r.edr_event_no.value}).second) add(base, "duplicate EDR event number for vehicle");
        if (r.db_label.is_mapped() && eventnos.count(r.db_label.event.value) == 0) add(base + ".label", "dangling event mapping");

        for (const auto& [ch, series] : r.channels) {
            const std::string field = fmt::format("{}.channels.{}", base, channel_name(ch));
            if (series.samples.empty()) {
                add(field, "time series has no samples");
                continue;
            }
            for (std::size_t k = 0; k < series.samples.size(); ++k) {
                const auto& s = series.samples[k];
                if (!std::isfinite(s.t_sec) || !std::isfinite(s.value)) {
                    add(fmt::format("{}[{}]", field, k), "non-finite sample");
                    continue;
                }
                if (k > 0 && !(s.t_sec > series.samples[k - 1].t_sec)) add(fmt::format("{}[{}]", field, k), "non-increasing time");
                if (s.t_sec > 0.0) add(fmt::format("{}[{}]", field, k), "pre-crash sample after trigger");
                switch (ch) {
                    case Channel::Speed:
                        if (s.value < 0.0) add(fmt::format("{}[{}]", field, k), "negative speed");
                        break;
                    case Channel::Brake:
                        if (s.value != 0.0 && s.value != 1.0) add(fmt::format("{}[{}]", field, k), "brake value not 0 or 1");
                        break;
                    case Channel::Accel:
                        if (s.value < 0.0 || s.value > 100.0) add(fmt::format("{}[{}]", field, k), "pedal position outside [0,100]");
                        break;
                    case Channel::Steering: break;
                }
            }
        }
    }

    if (c.ground_truth) {
        const auto& g = *c.ground_truth;
        if (g.striking_vehno == g.struck_vehno) add("ground_truth", "striking and struck vehicle must differ");
        if (!c.events.empty()) {
            const auto& first = c.events.front();
            auto in_first = [&first](VehNo v) { return first.actor_vehno == v || first.target_vehno == v; };
            if (!in_first(g.striking_vehno)) add("ground_truth.striking_vehno", "vehicle not in first event");
            if (!in_first(g.struck_vehno)) add("ground_truth.struck_vehno", "vehicle not in first event");
        }
        auto check_edr = [&](const std::optional<EdrEventNo>& e, VehNo v, const char* field) {
            if (e && edr_keys.count({v.value, e->value}) == 0) add(field, "ground truth references unknown EDR record");
        };
        check_edr(g.striking_edr, g.striking_vehno, "ground_truth.striking_edr");
        check_edr(g.struck_edr, g.struck_vehno, "ground_truth.struck_edr");
    }

    return report;
}

std::string format_report(const ValidationReport& report) {
    std::string out;
    for (const auto& v : report) {
        if (!out.empty()) out += "; ";
        out += v.field + ": " + v.rule;
    }
    return out;
}

void require_valid(const CrashCase& c) {
    auto report = validate_case(c);
    if (!report.empty()) throw ValidationError("case '" + c.case_id + "' is invalid: " + format_report(report));
}

}  // namespace crashforge
