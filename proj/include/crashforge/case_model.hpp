#pragma once

// Domain model for one crash case: vehicles, ordered contact events,
// per-vehicle environment, and per-vehicle EDR recordings.
//
// All types are plain values; once built they are never mutated by the
// pipeline and can be shared freely across worker threads.

#include <compare>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace crashforge {

template <class Tag>
struct Id {
    int value = 0;
    friend constexpr auto operator<=>(Id, Id) = default;
};

/// VEHNO: vehicle number within a case, contiguous from 1.
using VehNo = Id<struct VehNoTag>;
/// EVENTNO: index of one physical contact; EVENTNO 1 is the first collision.
using EventNo = Id<struct EventNoTag>;
/// EDREVENTNO: index of one recorded EDR event within a vehicle.
using EdrEventNo = Id<struct EdrEventNoTag>;

struct ContactPlane {
    enum class Kind { Front, Back, Left, Right, Top, Undercarriage, Other };

    Kind kind = Kind::Front;
    std::string other_text;  // only meaningful for Kind::Other

    static ContactPlane from_name(std::string_view name);
    [[nodiscard]] std::string name() const;        // "Front", or the free text
    [[nodiscard]] std::string lower_name() const;  // "front"

    friend bool operator==(const ContactPlane&, const ContactPlane&) = default;
    friend auto operator<=>(const ContactPlane&, const ContactPlane&) = default;
};

struct Vehicle {
    VehNo vehno;
    std::string vehicle_class;
    std::vector<ContactPlane> damage_planes;  // kept sorted and unique

    friend bool operator==(const Vehicle&, const Vehicle&) = default;
};

struct CrashEvent {
    EventNo eventno;
    VehNo actor_vehno;
    ContactPlane actor_plane;
    VehNo target_vehno;
    ContactPlane target_plane;

    /// "Contact between Vehicle X's <plane> and Vehicle Y's <plane>"
    [[nodiscard]] std::string describe() const;
    /// "VX Front vs VY Back"
    [[nodiscard]] std::string short_form() const;

    friend bool operator==(const CrashEvent&, const CrashEvent&) = default;
};

struct EnvironmentRecord {
    VehNo vehno;
    double speed_limit_kmh = 0.0;
    std::string trafficway_flow;
    std::string travel_lanes;
    std::vector<std::pair<std::string, std::string>> extra;

    friend bool operator==(const EnvironmentRecord&, const EnvironmentRecord&) = default;
};

enum class Channel { Speed, Steering, Accel, Brake };

inline constexpr Channel kAllChannels[] = {Channel::Speed, Channel::Steering, Channel::Accel, Channel::Brake};

/// Canonical channel key: speed_kmh, steering_deg, accel_pedal_pct, brake_on.
std::string_view channel_name(Channel c);
std::optional<Channel> channel_from_name(std::string_view name);
std::string_view channel_unit(Channel c);

struct Sample {
    double t_sec = 0.0;
    double value = 0.0;
    friend bool operator==(const Sample&, const Sample&) = default;
};

/// Trigger-relative samples, strictly increasing in time. The unit is implied
/// by the channel the series is stored under.
struct TimeSeries {
    std::vector<Sample> samples;

    [[nodiscard]] bool empty() const noexcept { return samples.empty(); }
    [[nodiscard]] std::size_t size() const noexcept { return samples.size(); }

    friend bool operator==(const TimeSeries&, const TimeSeries&) = default;
};

struct EventLabel {
    enum class Kind { MappedToEvent, NotRelatedToCrash, RelatedUnknownEvent };

    Kind kind = Kind::MappedToEvent;
    EventNo event;  // valid for MappedToEvent only

    static EventLabel mapped(int eventno) { return {Kind::MappedToEvent, EventNo{eventno}}; }
    static EventLabel not_related() { return {Kind::NotRelatedToCrash, {}}; }
    static EventLabel related_unknown() { return {Kind::RelatedUnknownEvent, {}}; }

    [[nodiscard]] bool is_mapped() const noexcept { return kind == Kind::MappedToEvent; }
    [[nodiscard]] bool is_mapped_to(EventNo e) const noexcept { return is_mapped() && event == e; }

    friend bool operator==(const EventLabel&, const EventLabel&) = default;
};

/// Database label text for the two unmapped kinds.
inline constexpr std::string_view kNotRelatedText = "Event not related to this crash";
inline constexpr std::string_view kRelatedUnknownText = "Related, unknown event";

struct EdrRecord {
    VehNo vehno;
    EdrEventNo edr_event_no;
    std::map<Channel, TimeSeries> channels;
    EventLabel db_label;

    [[nodiscard]] const TimeSeries* channel(Channel c) const;

    friend bool operator==(const EdrRecord&, const EdrRecord&) = default;
};

struct FirstCrashFinding {
    VehNo striking_vehno;
    VehNo struck_vehno;
    std::optional<EdrEventNo> striking_edr;  // nullopt means NoRecord
    std::optional<EdrEventNo> struck_edr;
    std::vector<std::string> rationale;

    friend bool operator==(const FirstCrashFinding&, const FirstCrashFinding&) = default;
};

/// Compares the four scored outputs, ignoring the rationale.
bool same_outputs(const FirstCrashFinding& a, const FirstCrashFinding& b);

struct SceneDiagramRef {
    std::string path;  // relative to the case document
    std::string media_type;
    friend bool operator==(const SceneDiagramRef&, const SceneDiagramRef&) = default;
};

enum class Stratum { Simple, Complicated };
std::string_view stratum_name(Stratum s);
std::optional<Stratum> stratum_from_name(std::string_view name);

struct CrashCase {
    std::string case_id;
    std::vector<Vehicle> vehicles;
    std::vector<CrashEvent> events;
    std::vector<EnvironmentRecord> environments;
    std::vector<EdrRecord> edr_records;
    std::optional<SceneDiagramRef> scene_diagram;
    std::optional<FirstCrashFinding> ground_truth;
    std::optional<Stratum> stratum;
    /// Unknown top-level keys kept by lenient parsing: key -> compact JSON text.
    std::vector<std::pair<std::string, std::string>> extra_fields;

    [[nodiscard]] const Vehicle* vehicle(VehNo v) const;
    [[nodiscard]] const EnvironmentRecord* environment(VehNo v) const;
    [[nodiscard]] std::vector<const EdrRecord*> records_of(VehNo v) const;

    friend bool operator==(const CrashCase&, const CrashCase&) = default;
};

struct Violation {
    std::string field;
    std::string rule;
    friend bool operator==(const Violation&, const Violation&) = default;
};

using ValidationReport = std::vector<Violation>;

/// Checks every model invariant and lists all violations found.
ValidationReport validate_case(const CrashCase& c);

/// Throws ValidationError summarising the report when it is non-empty.
void require_valid(const CrashCase& c);

std::string format_report(const ValidationReport& report);

}  // namespace crashforge
