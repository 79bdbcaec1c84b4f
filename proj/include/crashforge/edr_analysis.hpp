#pragma once

// Trigger alignment, overlap clustering and pre-crash dynamics over EDR series.

#include "crashforge/case_model.hpp"

#include <map>
#include <optional>
#include <string_view>
#include <vector>

namespace crashforge {

struct RecordKey {
    VehNo vehno;
    EdrEventNo edr_event_no;
    friend constexpr auto operator<=>(RecordKey, RecordKey) = default;
    friend constexpr bool operator==(RecordKey, RecordKey) = default;
};

inline RecordKey key_of(const EdrRecord& r) { return {r.vehno, r.edr_event_no}; }

struct AlignmentConfig {
    double shift_range_sec = 5.0;
    double shift_step_sec = 0.1;
    std::map<Channel, double> tolerance{
        {Channel::Speed, 0.5}, {Channel::Steering, 1.0}, {Channel::Accel, 1.0}, {Channel::Brake, 0.5}};
    int min_overlap_samples = 5;
    double overlap_threshold = 0.8;  // θ

    /// Throws ConfigError for an empty shift grid or a non-positive tolerance.
    void check() const;
    [[nodiscard]] double tolerance_of(Channel c) const;
};

struct AlignmentResult {
    RecordKey record_a;
    RecordKey record_b;
    /// Amount added to b's sample times to line them up with a's. Equivalently,
    /// the time of b's trigger on a's clock.
    double best_shift_sec = 0.0;
    double matched_fraction = 0.0;
    std::size_t matched_pairs = 0;
    std::size_t compared_pairs = 0;
    std::map<Channel, double> channel_agreement;
};

/// Exhaustive scan over shifts k*step, |k*step| <= range, pairing samples by
/// mutual nearest time within half the finer sample period.
/// Throws ChannelMissing when either record lacks speed, ConfigError on bad config.
AlignmentResult align_records(const EdrRecord& a, const EdrRecord& b, const AlignmentConfig& cfg = {});

struct OverlapCluster {
    std::vector<EdrEventNo> members;  // ascending
    EdrEventNo anchor;                // lowest member
    /// Trigger time of each member on the anchor's clock (anchor itself at 0).
    std::map<EdrEventNo, double> trigger_offset_sec;

    [[nodiscard]] bool contains(EdrEventNo e) const;
};

/// Connected components of the relation matched_fraction >= θ. Records
/// without a speed channel stay singletons. Output sorted by anchor.
std::vector<OverlapCluster> cluster_overlaps(const std::vector<const EdrRecord*>& records, const AlignmentConfig& cfg = {});

enum class DynamicsClass { DeceleratingLead, ApproachThenLateBrake, SteadyState, Indeterminate };
std::string_view dynamics_class_name(DynamicsClass c);

struct DynamicsConfig {
    double decel_threshold_kmh = 15.0;
    double steady_band_kmh = 5.0;
    double early_brake_before_sec = -0.5;
    double late_window_start_sec = -1.0;
};

struct DynamicsProfile {
    double initial_speed_kmh = 0.0;
    double final_speed_kmh = 0.0;
    double net_delta_v_kmh = 0.0;
    std::optional<double> brake_onset_sec;
    DynamicsClass classification = DynamicsClass::Indeterminate;
};

/// Uses pre-crash samples (t <= 0) only. Throws ChannelMissing without speed.
DynamicsProfile profile_dynamics(const EdrRecord& record, const DynamicsConfig& cfg = {});

}  // namespace crashforge
