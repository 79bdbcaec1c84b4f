#pragma once

// Trial scoring, campaign execution and metric reports.

#include "crashforge/agent.hpp"
#include "crashforge/case_model.hpp"
#include "crashforge/inference.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace crashforge {

/// Exact non-negative fraction. A zero denominator means "undefined".
struct Ratio {
    std::int64_t num = 0;
    std::int64_t den = 0;

    [[nodiscard]] bool defined() const noexcept { return den != 0; }
    [[nodiscard]] double value() const noexcept { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); }
    /// "92.31%", rounded half-up; "n/a" when undefined.
    [[nodiscard]] std::string percent() const;
    /// "0.92", rounded half-up; "n/a" when undefined.
    [[nodiscard]] std::string fixed2() const;

    friend bool operator==(const Ratio&, const Ratio&) = default;
};

enum class Field { StrikingVehicle, StruckVehicle, StrikingEdr, StruckEdr };
inline constexpr std::array<Field, 4> kAllFields{Field::StrikingVehicle, Field::StruckVehicle, Field::StrikingEdr, Field::StruckEdr};
std::string_view field_name(Field f);

struct PhaseLatency {
    std::string phase;  // "Phase I", "Phase II"
    double seconds = 0.0;
    friend bool operator==(const PhaseLatency&, const PhaseLatency&) = default;
};

struct TrialScore {
    std::string case_id;
    std::string backend;
    int trial = 0;
    std::optional<Stratum> stratum;
    std::optional<FirstCrashFinding> predicted;  // absent when the trial failed before producing one
    FirstCrashFinding truth;
    std::array<bool, 4> field_correct{};  // indexed like kAllFields
    bool trial_pass = false;
    std::vector<PhaseLatency> latency;
    std::string error;  // "<ErrorKind>: message" for failed trials

    friend bool operator==(const TrialScore&, const TrialScore&) = default;
};

/// Each field is compared on its own; NoRecord equals NoRecord. Rationale is ignored.
TrialScore score_trial(const FirstCrashFinding& predicted, const FirstCrashFinding& truth);

/// A trial that produced no prediction: every field false.
TrialScore failed_trial(const FirstCrashFinding& truth, std::string error);

/// Complicated when a label error was injected or some vehicle has more than
/// one record filed under the same crash event.
Stratum compute_stratum(const CrashCase& c, bool label_error_injected);

// ---- metrics -----------------------------------------------------------------

/// One positive per trial (the true four-tuple). A pass is a true positive;
/// a failed trial is a false negative and, when it still produced an answer,
/// also a false positive. True negatives do not occur.
struct ConfusionMatrix {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    std::int64_t tn = 0;
    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct GroupMetrics {
    std::int64_t trials = 0;
    std::int64_t passes = 0;
    ConfusionMatrix confusion;
    Ratio accuracy;
    Ratio precision;
    Ratio recall;
    Ratio f1;
    friend bool operator==(const GroupMetrics&, const GroupMetrics&) = default;
};

struct LatencyRow {
    std::string phase;
    std::int64_t count = 0;
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
    friend bool operator==(const LatencyRow&, const LatencyRow&) = default;
};

struct MetricsTable {
    GroupMetrics overall;
    std::map<std::string, GroupMetrics> strata;    // "simple", "complicated", "untagged"
    std::map<std::string, GroupMetrics> backends;
    std::vector<LatencyRow> latency;              // Phase I before Phase II

    [[nodiscard]] bool empty() const noexcept { return overall.trials == 0; }
    friend bool operator==(const MetricsTable&, const MetricsTable&) = default;
};

MetricsTable summarize(const std::vector<TrialScore>& scores);

struct CaseAgreement {
    std::string case_id;
    int observations = 0;
    bool agree = true;
};

struct ConsistencyReport {
    std::vector<CaseAgreement> cases;  // in first-seen order
    Ratio agreement;                   // undefined when no case has two observations
    std::string note;
};

/// A case agrees when every (backend, trial) produced the same four outputs;
/// trials without a prediction count as one shared outcome.
ConsistencyReport consistency_report(const std::vector<TrialScore>& scores);

enum class ReportFormat { Markdown, Csv, Json };
/// Throws ConfigError for an unknown name.
ReportFormat report_format_from_name(std::string_view name);
std::string_view report_format_extension(ReportFormat f);

std::string emit_report(const MetricsTable& metrics, const std::vector<TrialScore>& scores, ReportFormat format);

// ---- trial log ---------------------------------------------------------------

std::string trial_score_to_json(const TrialScore& s);
/// Throws SyntaxError / SchemaError.
TrialScore trial_score_from_json(std::string_view line);

/// Appends one line per score. Throws IoError.
void append_trial_log(const std::filesystem::path& path, const std::vector<TrialScore>& scores);
/// Throws IoError, SyntaxError, SchemaError (with the line number in the path).
std::vector<TrialScore> read_trial_log(const std::filesystem::path& path);

// ---- campaigns ---------------------------------------------------------------

enum class CampaignMode { Deterministic, Agent };

struct CampaignOptions {
    CampaignMode mode = CampaignMode::Deterministic;
    std::vector<BackendProfile> backends;  // ignored in Deterministic mode
    int trials_per_case = 1;               // ignored in Deterministic mode
    unsigned parallelism = 1;
    InferenceConfig inference;
    std::optional<TemplateSet> templates;  // embedded set when absent
    DispatchOptions dispatch;
    /// Scene diagram for a case, if one should be attached.
    std::function<std::optional<Attachment>(const CrashCase&)> diagram_for;
    /// Called after each finished trial (from worker threads, serialised).
    std::function<void(std::size_t done, std::size_t total)> progress;
};

/// Scores come back in case order, then backend order, then trial index.
/// Failures inside a trial become failed trials; the campaign continues.
/// Throws ConfigError (trials < 1, no backends, unusable endpoint),
/// AuthError (a required credential is unset; checked before any dispatch),
/// ValidationError (a case without ground truth).
std::vector<TrialScore> run_campaign(const std::vector<CrashCase>& corpus, const CampaignOptions& options);

}  // namespace crashforge
