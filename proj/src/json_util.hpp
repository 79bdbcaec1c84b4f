#pragma once

// Private JSON helpers shared by ingest, the agent output parser and eval.

#include "crashforge/case_model.hpp"

#include <json.hpp>

#include <string>

namespace crashforge::detail {

/// Integral doubles become JSON integers so that 72.0 is written as `72`.
nlohmann::ordered_json number_json(double v);

nlohmann::ordered_json finding_json(const FirstCrashFinding& f);

/// Strict finding reader; SchemaError paths are rooted at `path`.
FirstCrashFinding finding_from_json(const nlohmann::ordered_json& j, const std::string& path);

}  // namespace crashforge::detail
