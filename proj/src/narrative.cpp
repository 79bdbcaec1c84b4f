#include "crashforge/narrative.hpp"

#include "crashforge/assets.hpp"
#include "crashforge/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <iterator>
#include <set>

namespace crashforge {

namespace {

struct ChannelTable {
    Channel channel;
    std::string_view title;
    std::string_view value_header;
};

constexpr ChannelTable kTables[] = {
    {Channel::Speed, "Velocities", "Speed(kmph)"},
    {Channel::Steering, "Steering Wheel Angles", "Angle(deg)"},
    {Channel::Accel, "Accelerator Pedal", "Pedal(%)"},
    {Channel::Brake, "Service Brake", "Brake(on=1)"},
};

std::string format_speed_limit(double kmh) { return fmt::format("{}", std::llround(kmh)); }

}  // namespace

std::string format_fixed2(double v) {
    std::string s = fmt::format("{:.2f}", v);
    if (s == "-0.00") s = "0.00";
    return s;
}

SceneDescriptionDoc encode_scene_description(const CrashCase& c) {
    require_valid(c);
    std::string out;
    auto w = std::back_inserter(out);

    std::vector<const Vehicle*> vehicles;
    for (const auto& v : c.vehicles) vehicles.push_back(&v);
    std::sort(vehicles.begin(), vehicles.end(), [](const Vehicle* a, const Vehicle* b) { return a->vehno < b->vehno; });

    fmt::format_to(w, "# Crash Scene Description\n\n");
    fmt::format_to(w, "Total number of vehicles involved in this Crash: {}\n\n", c.vehicles.size());

    fmt::format_to(w, "## Vehicle Information\n\n");
    for (const Vehicle* v : vehicles) {
        fmt::format_to(w, "## VEHNO={}\n", v->vehno.value);
        fmt::format_to(w, "  ### Class of Vehicle: {}\n", v->vehicle_class);
        if (v->damage_planes.empty()) fmt::format_to(w, "  ### Damage Plane: none recorded\n");
        for (const auto& p : v->damage_planes) fmt::format_to(w, "  ### Damage Plane: {}\n", p.name());
    }
    out += "\n";

    fmt::format_to(w, "## Crash Event Sequences Description\n\n");
    for (const auto& e : c.events) fmt::format_to(w, "EVENTNO{}: {}\n", e.eventno.value, e.describe());
    if (!c.events.empty()) out += "\n";

    fmt::format_to(w, "## Environment Information\n\n");
    for (const Vehicle* v : vehicles) {
        fmt::format_to(w, "## Environment for VEHNO={}:\n", v->vehno.value);
        const EnvironmentRecord* env = c.environment(v->vehno);
        if (env == nullptr) {
            fmt::format_to(w, "  No environment record for this vehicle.\n");
            continue;
        }
        fmt::format_to(w, "  SPEEDLIMIT: {} km/h\n", format_speed_limit(env->speed_limit_kmh));
        fmt::format_to(w, "  Trafficway Flow: {}\n", env->trafficway_flow);
        fmt::format_to(w, "  Travel Lanes: {}\n", env->travel_lanes);
        for (const auto& [key, value] : env->extra) fmt::format_to(w, "  {}: {}\n", key, value);
    }
    out += "\n";

    fmt::format_to(w, "## Notes (Semantic Grounding Instructions)\n\n");
    out += *embedded_asset(kDefaultTemplateVersion, "scene_notes.md");
    return {std::move(out)};
}

EdrReportDoc encode_edr_report(const CrashCase& c) {
    require_valid(c);
    std::string out;
    auto w = std::back_inserter(out);

    std::set<VehNo> with_records;
    for (const auto& r : c.edr_records) with_records.insert(r.vehno);

    fmt::format_to(w, "# EDR Data Analysis Report\n\n");
    fmt::format_to(w, "## Basic description\n\n");
    fmt::format_to(w,
                   "This case (CASEID={}) contains EDR data for {} {}. In this EDR record, time zero (0 seconds) marks the "
                   "triggering threshold of the recorded event for this vehicle\n\n",
                   c.case_id, with_records.size(), with_records.size() == 1 ? "vehicle" : "vehicles");

    fmt::format_to(w, "## EDR Data for this Crash\n\n");
    for (VehNo v : with_records) {
        fmt::format_to(w, "### VEHNO{}\n", v.value);
        for (const EdrRecord* r : c.records_of(v)) {
            fmt::format_to(w, "  ### EDREVENTNO{}\n", r->edr_event_no.value);
            for (const auto& table : kTables) {
                const TimeSeries* ts = r->channel(table.channel);
                if (ts == nullptr) continue;
                fmt::format_to(w, "    ##### {}\n", table.title);
                fmt::format_to(w, "    | Time(sec) | {} | Notes |\n", table.value_header);
                std::optional<std::size_t> peak;
                if (table.channel == Channel::Speed) {
                    for (std::size_t i = 0; i < ts->samples.size(); ++i) {
                        if (!peak || ts->samples[i].value > ts->samples[*peak].value) peak = i;
                    }
                }
                for (std::size_t i = 0; i < ts->samples.size(); ++i) {
                    const auto& s = ts->samples[i];
                    fmt::format_to(w, "    | {} | {} | {}|\n", format_fixed2(s.t_sec), format_fixed2(s.value),
                                   peak == i ? "Peak speed " : "");
                }
            }
        }
        out += "\n";
    }

    fmt::format_to(w, "## CDC and EDR Event Description\n\n");
    fmt::format_to(w, "Each EDR record is listed with the crash event the investigation filed it under.\n\n");
    std::vector<const EdrRecord*> records;
    for (const auto& r : c.edr_records) records.push_back(&r);
    std::sort(records.begin(), records.end(), [](const EdrRecord* a, const EdrRecord* b) {
        return std::pair(a->vehno, a->edr_event_no) < std::pair(b->vehno, b->edr_event_no);
    });
    for (const EdrRecord* r : records) {
        fmt::format_to(w, "- For VEHNO={}, EDREVENTNO={}, ", r->vehno.value, r->edr_event_no.value);
        switch (r->db_label.kind) {
            case EventLabel::Kind::MappedToEvent: {
                const auto& e = c.events.at(static_cast<std::size_t>(r->db_label.event.value - 1));
                fmt::format_to(w, "corresponds to EVENTNO{}: {}\n", e.eventno.value, e.short_form());
                break;
            }
            case EventLabel::Kind::NotRelatedToCrash: fmt::format_to(w, "{}\n", kNotRelatedText); break;
            case EventLabel::Kind::RelatedUnknownEvent: fmt::format_to(w, "{}\n", kRelatedUnknownText); break;
        }
    }
    return {std::move(out)};
}

}  // namespace crashforge
