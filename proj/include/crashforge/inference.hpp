#pragma once

// Rule-based first-crash inference: first event, vehicle roles, and the most
// relevant EDR record per vehicle, with a rationale trace.

#include "crashforge/case_model.hpp"
#include "crashforge/edr_analysis.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace crashforge {

enum class Role { Striking, Struck };
std::string_view role_name(Role r);

enum class Provenance { LabelMatch, ClusterRecovered, SoleSurvivor };
std::string_view provenance_name(Provenance p);

struct Candidate {
    EdrEventNo edr;
    Provenance provenance = Provenance::LabelMatch;
    friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct Elimination {
    EdrEventNo edr;
    std::string reason;
    friend bool operator==(const Elimination&, const Elimination&) = default;
};

inline constexpr std::string_view kRelatedUnknownFilter = "related-unknown filter";
inline constexpr std::string_view kNotRelatedFilter = "not-related filter";

struct CandidateSet {
    VehNo vehno;
    Role role = Role::Striking;
    std::vector<Candidate> candidates;   // ascending EDREVENTNO
    std::vector<Elimination> eliminated; // ascending EDREVENTNO
    std::vector<OverlapCluster> clusters; // over the records that passed the label filters
};

struct InferenceConfig {
    AlignmentConfig alignment;
    DynamicsConfig dynamics;
    double w_dyn = 0.7;
    double w_time = 0.3;

    /// Throws ConfigError.
    void check() const;
};

const CrashEvent& identify_first_event(const CrashCase& c);

struct RoleAssignment {
    VehNo striking;
    VehNo struck;
    std::string rule;                 // "R1" or "R2"
    std::vector<std::string> notes;   // damage-plane consistency remarks
};

/// Throws RoleIndeterminate when neither contact plane is Front.
RoleAssignment assign_roles(const CrashEvent& first_event, const CrashCase& c);

CandidateSet filter_candidates(VehNo vehno, Role role, const CrashEvent& first_event, const CrashCase& c,
                               const InferenceConfig& cfg = {});

enum class SelectionPath { NoRecord, Single, Scored };
std::string_view selection_path_name(SelectionPath p);

struct ScoreRow {
    EdrEventNo edr;
    std::optional<DynamicsClass> dynamics;  // absent without a speed channel
    double trigger_offset_sec = 0.0;        // on the cluster anchor's clock
    double dyn = 0.0;
    double time = 0.0;
    double score = 0.0;
};

struct Selection {
    std::optional<EdrEventNo> edr;
    SelectionPath path = SelectionPath::NoRecord;
    std::vector<ScoreRow> table;  // filled only on the scored path
};

/// Role expectation for lead-vehicle-deceleration crashes.
DynamicsClass expected_dynamics(Role role);

Selection select_record(const CandidateSet& set, Role role, const CrashEvent& first_event, const CrashCase& c,
                        const InferenceConfig& cfg = {});

struct InferenceReport {
    FirstCrashFinding finding;
    RoleAssignment roles;
    CandidateSet striking_set;
    CandidateSet struck_set;
    Selection striking_selection;
    Selection struck_selection;
};

/// Throws ValidationError, NoEvents, RoleIndeterminate.
InferenceReport run_inference(const CrashCase& c, const InferenceConfig& cfg = {});

inline FirstCrashFinding infer_first_crash(const CrashCase& c, const InferenceConfig& cfg = {}) {
    return run_inference(c, cfg).finding;
}

}  // namespace crashforge
