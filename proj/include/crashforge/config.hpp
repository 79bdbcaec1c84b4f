#pragma once

// Pipeline configuration: a TOML file, then CRASHFORGE_<SECTION>_<KEY>
// environment overrides, then command-line flags (applied by the caller).
//
//   [pipeline]    parallelism, template_version, template_dir, output_dir
//   [alignment]   shift_range_sec, shift_step_sec, overlap_threshold,
//                 min_overlap_samples, tolerance_speed_kmh,
//                 tolerance_steering_deg, tolerance_accel_pct, tolerance_brake
//   [inference]   w_dyn, w_time, decel_threshold_kmh, steady_band_kmh,
//                 early_brake_before_sec, late_window_start_sec
//   [backend.N]   endpoint, model_id, credential_env, supports_images,
//                 request_timeout_sec, max_retries, response_path,
//                 backoff_initial_sec
//
// Backend overrides use the upper-cased name with '-' and '.' mapped to '_':
// CRASHFORGE_BACKEND_MODEL_A_ENDPOINT.

#include "crashforge/agent.hpp"
#include "crashforge/inference.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace crashforge {

struct PipelineConfig {
    InferenceConfig inference;
    std::vector<BackendProfile> backends;
    unsigned parallelism = 1;
    std::string template_version = "v1";
    std::optional<std::filesystem::path> template_dir;
    std::filesystem::path output_dir = ".";

    /// Throws ConfigError.
    void check() const;
    /// Throws TemplateError.
    [[nodiscard]] TemplateSet templates() const;
    /// Configured profile by name. Unconfigured names starting with "mock"
    /// resolve to an echoing mock profile. Throws ConfigError otherwise.
    [[nodiscard]] BackendProfile backend(const std::string& name) const;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
/// Reads the process environment.
EnvLookup process_env();

/// Throws ConfigError naming the offending key or line.
PipelineConfig parse_config(std::string_view toml_text, std::string_view source = "<config>");
void apply_env_overrides(PipelineConfig& cfg, const EnvLookup& env);

/// `path`, else $CRASHFORGE_CONFIG, else defaults; then environment
/// overrides; then check(). Throws ConfigError, IoError.
PipelineConfig load_config(const std::optional<std::filesystem::path>& path, const EnvLookup& env = process_env());

}  // namespace crashforge
