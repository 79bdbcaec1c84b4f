#include "crashforge/inference.hpp"

#include "crashforge/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace crashforge {

namespace {

constexpr double kScoreEpsilon = 1e-12;

bool is_front(const ContactPlane& p) { return p.kind == ContactPlane::Kind::Front; }

bool has_plane(const Vehicle* v, const ContactPlane& p) {
    return v != nullptr && std::find(v->damage_planes.begin(), v->damage_planes.end(), p) != v->damage_planes.end();
}

std::string join_edrs(const std::vector<EdrEventNo>& v) {
    std::string out;
    for (const auto& e : v) {
        if (!out.empty()) out += ", ";
        out += std::to_string(e.value);
    }
    return out;
}

const OverlapCluster* cluster_of(const CandidateSet& set, EdrEventNo e) {
    for (const auto& c : set.clusters) {
        if (c.contains(e)) return &c;
    }
    return nullptr;
}

}  // namespace

std::string_view role_name(Role r) { return r == Role::Striking ? "striking" : "struck"; }

std::string_view provenance_name(Provenance p) {
    switch (p) {
        case Provenance::LabelMatch: return "LabelMatch";
        case Provenance::ClusterRecovered: return "ClusterRecovered";
        case Provenance::SoleSurvivor: return "SoleSurvivor";
    }
    return "";
}

std::string_view selection_path_name(SelectionPath p) {
    switch (p) {
        case SelectionPath::NoRecord: return "NoRecord";
        case SelectionPath::Single: return "Single";
        case SelectionPath::Scored: return "Scored";
    }
    return "";
}

void InferenceConfig::check() const {
    alignment.check();
    if (!(w_dyn >= 0.0) || !(w_time >= 0.0) || !(w_dyn + w_time > 0.0)) throw ConfigError("scoring weights must be non-negative and not both zero");
    if (!(dynamics.steady_band_kmh > 0.0)) throw ConfigError("steady band must be positive");
    if (!(dynamics.decel_threshold_kmh > 0.0)) throw ConfigError("deceleration threshold must be positive");
}

const CrashEvent& identify_first_event(const CrashCase& c) {
    if (c.events.empty()) throw NoEvents();
    return *std::min_element(c.events.begin(), c.events.end(),
                             [](const CrashEvent& a, const CrashEvent& b) { return a.eventno < b.eventno; });
}

RoleAssignment assign_roles(const CrashEvent& e, const CrashCase& c) {
    RoleAssignment r;
    const bool actor_front = is_front(e.actor_plane);
    const bool target_front = is_front(e.target_plane);
    ContactPlane struck_plane;
    if (actor_front && target_front) {
        r.striking = e.actor_vehno;
        r.struck = e.target_vehno;
        r.rule = "R2";
        struck_plane = e.target_plane;
    } else if (actor_front || target_front) {
        r.striking = actor_front ? e.actor_vehno : e.target_vehno;
        r.struck = actor_front ? e.target_vehno : e.actor_vehno;
        r.rule = "R1";
        struck_plane = actor_front ? e.target_plane : e.actor_plane;
    } else {
        throw RoleIndeterminate(fmt::format("EVENTNO{} has no front contact ({} vs {})", e.eventno.value, e.actor_plane.name(),
                                            e.target_plane.name()));
    }

    const ContactPlane front{ContactPlane::Kind::Front, {}};
    if (!has_plane(c.vehicle(r.striking), front)) {
        r.notes.push_back(fmt::format("VEHNO={} is striking but carries no Front damage plane", r.striking.value));
    }
    if (!has_plane(c.vehicle(r.struck), struck_plane)) {
        r.notes.push_back(fmt::format("VEHNO={} is struck on its {} but carries no {} damage plane", r.struck.value,
                                      struck_plane.lower_name(), struck_plane.name()));
    }
    return r;
}

CandidateSet filter_candidates(VehNo vehno, Role role, const CrashEvent& first_event, const CrashCase& c, const InferenceConfig& cfg) {
    CandidateSet set;
    set.vehno = vehno;
    set.role = role;

    std::vector<const EdrRecord*> survivors;
    for (const EdrRecord* r : c.records_of(vehno)) {
        switch (r->db_label.kind) {
            case EventLabel::Kind::RelatedUnknownEvent: set.eliminated.push_back({r->edr_event_no, std::string(kRelatedUnknownFilter)}); break;
            case EventLabel::Kind::NotRelatedToCrash: set.eliminated.push_back({r->edr_event_no, std::string(kNotRelatedFilter)}); break;
            case EventLabel::Kind::MappedToEvent: survivors.push_back(r); break;
        }
    }
    set.clusters = cluster_overlaps(survivors, cfg.alignment);

    auto label_match = [&](EdrEventNo e) {
        auto it = std::find_if(survivors.begin(), survivors.end(), [e](const EdrRecord* r) { return r->edr_event_no == e; });
        return (*it)->db_label.is_mapped_to(first_event.eventno);
    };
    const bool any_label_match =
        std::any_of(survivors.begin(), survivors.end(), [&](const EdrRecord* r) { return r->db_label.is_mapped_to(first_event.eventno); });

    for (const EdrRecord* r : survivors) {
        const EdrEventNo e = r->edr_event_no;
        if (label_match(e)) {
            set.candidates.push_back({e, Provenance::LabelMatch});
            continue;
        }
        if (!any_label_match && survivors.size() == 1) {
            set.candidates.push_back({e, Provenance::SoleSurvivor});
            continue;
        }
        const OverlapCluster* cl = cluster_of(set, e);
        const bool recovered = cl != nullptr && std::any_of(cl->members.begin(), cl->members.end(), [&](EdrEventNo m) { return label_match(m); });
        if (recovered) {
            set.candidates.push_back({e, Provenance::ClusterRecovered});
        } else {
            set.eliminated.push_back(
                {e, fmt::format("mapped to EVENTNO{} with no overlap with an EVENTNO{} record", r->db_label.event.value, first_event.eventno.value)});
        }
    }
    std::sort(set.eliminated.begin(), set.eliminated.end(), [](const Elimination& a, const Elimination& b) { return a.edr < b.edr; });
    return set;
}

DynamicsClass expected_dynamics(Role role) {
    return role == Role::Struck ? DynamicsClass::DeceleratingLead : DynamicsClass::ApproachThenLateBrake;
}

Selection select_record(const CandidateSet& set, Role role, const CrashEvent& /*first_event*/, const CrashCase& c, const InferenceConfig& cfg) {
    Selection sel;
    if (set.candidates.empty()) return sel;
    if (set.candidates.size() == 1) {
        sel.edr = set.candidates.front().edr;
        sel.path = SelectionPath::Single;
        return sel;
    }

    sel.path = SelectionPath::Scored;
    const auto records = c.records_of(set.vehno);
    auto record = [&](EdrEventNo e) {
        return *std::find_if(records.begin(), records.end(), [e](const EdrRecord* r) { return r->edr_event_no == e; });
    };

    for (const auto& cand : set.candidates) {
        ScoreRow row;
        row.edr = cand.edr;
        try {
            row.dynamics = profile_dynamics(*record(cand.edr), cfg.dynamics).classification;
        } catch (const ChannelMissing&) {
        }
        if (row.dynamics == expected_dynamics(role)) {
            row.dyn = 1.0;
        } else if (row.dynamics == DynamicsClass::SteadyState) {
            row.dyn = 0.5;
        }

        const OverlapCluster* cl = cluster_of(set, cand.edr);
        double earliest = 0.0;
        if (cl != nullptr) {
            row.trigger_offset_sec = cl->trigger_offset_sec.at(cand.edr);
            earliest = row.trigger_offset_sec;
            for (const auto& other : set.candidates) {
                if (cl->contains(other.edr)) earliest = std::min(earliest, cl->trigger_offset_sec.at(other.edr));
            }
        }
        const double lag = row.trigger_offset_sec - earliest;
        const double range = cfg.alignment.shift_range_sec;
        row.time = range > 0.0 ? std::max(0.0, 1.0 - lag / range) : (lag == 0.0 ? 1.0 : 0.0);
        row.score = cfg.w_dyn * row.dyn + cfg.w_time * row.time;
        sel.table.push_back(row);
    }

    const ScoreRow* best = nullptr;
    for (const auto& row : sel.table) {
        if (best == nullptr || row.score > best->score + kScoreEpsilon ||
            (std::fabs(row.score - best->score) <= kScoreEpsilon && row.edr < best->edr)) {
            best = &row;
        }
    }
    sel.edr = best->edr;
    return sel;
}

namespace {

void trace_vehicle(std::vector<std::string>& out, const CandidateSet& set, const Selection& sel) {
    const int v = set.vehno.value;
    const std::string role(role_name(set.role));
    for (const auto& e : set.eliminated) {
        out.push_back(fmt::format("[EDR Filtering & Correlation] VEHNO={} EDREVENTNO={} eliminated: {}", v, e.edr.value, e.reason));
    }
    for (const auto& cl : set.clusters) {
        if (cl.members.size() < 2) continue;
        out.push_back(fmt::format("[EDR Filtering & Correlation] VEHNO={} records {{{}}} overlap after trigger alignment", v,
                                  join_edrs(cl.members)));
        std::string offsets;
        for (const auto& m : cl.members) {
            if (!offsets.empty()) offsets += ", ";
            offsets += fmt::format("EDREVENTNO={} at {:+.2f} s", m.value, cl.trigger_offset_sec.at(m));
        }
        out.push_back(fmt::format("[Critical Timing] VEHNO={} trigger times on the EDREVENTNO={} clock: {}", v, cl.anchor.value, offsets));
    }
    for (const auto& c : set.candidates) {
        out.push_back(fmt::format("[EDR Filtering & Correlation] VEHNO={} EDREVENTNO={} kept as {} candidate ({})", v, c.edr.value, role,
                                  provenance_name(c.provenance)));
    }
    switch (sel.path) {
        case SelectionPath::NoRecord:
            out.push_back(fmt::format("[Missing Data Handling] VEHNO={} ({}) has no usable EDR record; reported as no record", v, role));
            break;
        case SelectionPath::Single:
            out.push_back(fmt::format("[EDREVENTNO Interpretation] VEHNO={} ({}) has a single candidate: EDREVENTNO={}", v, role, sel.edr->value));
            break;
        case SelectionPath::Scored:
            for (const auto& row : sel.table) {
                out.push_back(fmt::format(
                    "[EDREVENTNO Interpretation] VEHNO={} EDREVENTNO={}: dynamics={} dyn={:.2f} trigger={:+.2f} s time={:.2f} score={:.3f}", v,
                    row.edr.value, row.dynamics ? dynamics_class_name(*row.dynamics) : std::string_view("no speed channel"), row.dyn,
                    row.trigger_offset_sec, row.time, row.score));
            }
            out.push_back(fmt::format("[EDREVENTNO Interpretation] VEHNO={} ({}) selected EDREVENTNO={} (expected dynamics {})", v, role,
                                      sel.edr->value, dynamics_class_name(expected_dynamics(set.role))));
            break;
    }
}

}  // namespace

InferenceReport run_inference(const CrashCase& c, const InferenceConfig& cfg) {
    cfg.check();
    require_valid(c);

    InferenceReport rep;
    const CrashEvent& first = identify_first_event(c);
    rep.roles = assign_roles(first, c);

    std::vector<std::string>& trace = rep.finding.rationale;
    trace.push_back(fmt::format("[Primary Understanding] First crash event EVENTNO{}: {}", first.eventno.value, first.describe()));
    trace.push_back(fmt::format("[Primary Understanding] Rule {}: striking VEHNO={}, struck VEHNO={}", rep.roles.rule,
                                rep.roles.striking.value, rep.roles.struck.value));
    for (const auto& note : rep.roles.notes) trace.push_back("[Primary Understanding] Damage check: " + note);

    rep.striking_set = filter_candidates(rep.roles.striking, Role::Striking, first, c, cfg);
    rep.struck_set = filter_candidates(rep.roles.struck, Role::Struck, first, c, cfg);
    rep.striking_selection = select_record(rep.striking_set, Role::Striking, first, c, cfg);
    rep.struck_selection = select_record(rep.struck_set, Role::Struck, first, c, cfg);
    trace_vehicle(trace, rep.striking_set, rep.striking_selection);
    trace_vehicle(trace, rep.struck_set, rep.struck_selection);

    rep.finding.striking_vehno = rep.roles.striking;
    rep.finding.struck_vehno = rep.roles.struck;
    rep.finding.striking_edr = rep.striking_selection.edr;
    rep.finding.struck_edr = rep.struck_selection.edr;
    return rep;
}

}  // namespace crashforge
