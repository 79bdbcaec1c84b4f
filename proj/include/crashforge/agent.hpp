#pragma once

// Two-phase agent protocol: prompt construction from versioned templates,
// backend dispatch with retries, and parsing of the structured replies.

#include "crashforge/case_model.hpp"
#include "crashforge/inference.hpp"
#include "crashforge/narrative.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace crashforge {

// ---- templates ---------------------------------------------------------------

struct TemplateSet {
    std::string version;
    std::string phase1_system;
    std::string phase1_user;
    std::string phase2_system;
    std::string phase2_user;

    /// The set compiled into the binary. Throws TemplateError for an unknown version.
    static TemplateSet embedded(std::string_view version = "v1");
    /// Reads the four template files from `dir`; the version is the directory name.
    /// Throws TemplateError when a file is missing.
    static TemplateSet load(const std::filesystem::path& dir);
};

/// Replaces every `{{name}}`. Throws TemplateError when the template names a
/// placeholder without a value, or leaves a supplied value unused.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

// ---- prompts -----------------------------------------------------------------

enum class Phase { PhaseI, PhaseII };

struct Attachment {
    std::string media_type;
    std::vector<unsigned char> bytes;
    friend bool operator==(const Attachment&, const Attachment&) = default;
};

struct PromptBundle {
    Phase phase = Phase::PhaseI;
    std::string system_text;
    std::string user_text;
    std::optional<Attachment> image;
    std::string template_version;
    friend bool operator==(const PromptBundle&, const PromptBundle&) = default;
};

/// The image is attached only when `diagram` is present and the backend takes
/// images; otherwise the prompt states that no diagram is available.
/// Throws ValidationError.
PromptBundle build_phase1_prompt(const CrashCase& c, const std::optional<Attachment>& diagram = std::nullopt,
                                 bool backend_supports_images = false, const TemplateSet& templates = TemplateSet::embedded());

struct ReconstructionDoc {
    std::string scene_location;
    std::vector<std::string> vehicle_information;
    std::string accident_process;
    std::string raw_text;  // the reply as received; embedded verbatim in Phase II
};

/// Throws EmptyInput when the reconstruction or the report is empty.
PromptBundle build_phase2_prompt(const ReconstructionDoc& reconstruction, const EdrReportDoc& edr_report,
                                 const TemplateSet& templates = TemplateSet::embedded());

// ---- parsing -----------------------------------------------------------------

inline constexpr std::string_view kSceneLocationHeading = "Scene Location Analysis";
inline constexpr std::string_view kVehicleInformationHeading = "Vehicle Information Identification";
inline constexpr std::string_view kAccidentProcessHeading = "Accident Process Reconstruction";

/// Throws ParseError naming the first missing (or empty) section in A, B, C order.
ReconstructionDoc parse_phase1_output(std::string_view raw);

/// Throws ParseError (no conforming object) or SchemaError (wrong types, equal VEHNOs).
FirstCrashFinding parse_phase2_output(std::string_view raw);

// ---- backends ----------------------------------------------------------------

struct BackendProfile {
    std::string name;
    std::string endpoint;  // http(s)://host[:port]/path, or mock://<kind>
    std::string model_id;
    std::string credential_env;  // name of the environment variable holding the key; empty for none
    bool supports_images = false;
    double request_timeout_sec = 60.0;
    int max_retries = 2;
    std::string response_path = "/text";  // JSON pointer to the generated text
    double backoff_initial_sec = 1.0;

    [[nodiscard]] bool is_mock() const { return endpoint.rfind("mock://", 0) == 0; }
};

/// The built-in profile set used when no configuration names backends.
BackendProfile default_mock_profile(std::string name = "mock");

/// One attempt's outcome as seen by dispatch.
struct BackendReply {
    enum class Status { Ok, Unauthorized, Timeout, Failed };
    Status status = Status::Ok;
    std::string text;    // generated text when Ok, diagnostic otherwise
    int http_status = 0;
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual BackendReply complete(const PromptBundle& bundle, const BackendProfile& profile, const std::string& credential) = 0;
};

/// Always returns the same text.
class FixedBackend : public Backend {
public:
    explicit FixedBackend(std::string text) : text_(std::move(text)) {}
    BackendReply complete(const PromptBundle&, const BackendProfile&, const std::string&) override { return {BackendReply::Status::Ok, text_, 200}; }

private:
    std::string text_;
};

/// Replays a fixed sequence of outcomes; the last one repeats.
class ScriptedBackend : public Backend {
public:
    explicit ScriptedBackend(std::vector<BackendReply> script) : script_(std::move(script)) {}
    BackendReply complete(const PromptBundle&, const BackendProfile&, const std::string&) override;
    [[nodiscard]] int calls() const noexcept { return calls_; }

private:
    std::vector<BackendReply> script_;
    int calls_ = 0;
};

/// Deterministic stand-in for a model: answers Phase I with a reconstruction
/// of the case and Phase II with the rule engine's finding, after checking
/// that each prompt embeds the documents the protocol requires. A prompt
/// missing them gets a reply without the expected structure.
class EchoBackend : public Backend {
public:
    EchoBackend(const CrashCase& c, const InferenceConfig& cfg);
    BackendReply complete(const PromptBundle& bundle, const BackendProfile& profile, const std::string& credential) override;

    [[nodiscard]] const std::string& phase1_reply() const noexcept { return phase1_; }
    [[nodiscard]] const std::string& phase2_reply() const noexcept { return phase2_; }

private:
    std::string scene_text_;
    std::string edr_text_;
    std::string phase1_;
    std::string phase2_;
};

/// POSTs {"model", "messages"} JSON and reads the reply at profile.response_path.
class HttpBackend : public Backend {
public:
    BackendReply complete(const PromptBundle& bundle, const BackendProfile& profile, const std::string& credential) override;
};

/// Request body sent by HttpBackend (exposed for tests).
std::string http_request_body(const PromptBundle& bundle, const BackendProfile& profile);

/// mock://echo needs the case it will answer for; mock://fail always fails.
/// Throws ConfigError for an unknown scheme.
std::unique_ptr<Backend> make_backend(const BackendProfile& profile, const CrashCase& c, const InferenceConfig& cfg);

/// Throws AuthError when the profile names a credential variable that is unset.
std::string resolve_credential(const BackendProfile& profile);

struct DispatchOptions {
    std::function<void(double)> sleep;          // seconds; defaults to a real sleep
    std::function<double()> jitter;             // in [-1, 1]; defaults to a seeded generator
    std::function<void(const std::string&)> log;
};

struct DispatchResult {
    std::string text;
    double latency_sec = 0.0;
    int retries = 0;
    std::vector<double> backoff_sec;  // delays actually requested
};

/// Throws AuthError, TimeoutError, TransportError, UnsupportedImage.
DispatchResult dispatch(const PromptBundle& bundle, const BackendProfile& profile, Backend& backend, const DispatchOptions& options = {});

// ---- full pipeline -----------------------------------------------------------

struct AgentRun {
    PromptBundle phase1_prompt;
    DispatchResult phase1;
    ReconstructionDoc reconstruction;
    PromptBundle phase2_prompt;
    DispatchResult phase2;
    FirstCrashFinding finding;
};

AgentRun run_agent_pipeline(const CrashCase& c, const BackendProfile& profile, Backend& backend,
                            const std::optional<Attachment>& diagram = std::nullopt, const TemplateSet& templates = TemplateSet::embedded(),
                            const DispatchOptions& options = {});

}  // namespace crashforge
