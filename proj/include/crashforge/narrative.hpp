#pragma once

// Renders a case into the two markdown documents handed to the agents.

#include "crashforge/case_model.hpp"

#include <string>

namespace crashforge {

struct SceneDescriptionDoc {
    std::string text;
};

struct EdrReportDoc {
    std::string text;
};

/// Throws ValidationError on an invalid case.
SceneDescriptionDoc encode_scene_description(const CrashCase& c);
EdrReportDoc encode_edr_report(const CrashCase& c);

/// Fixed two-decimal rendering used in EDR tables; never yields "-0.00".
std::string format_fixed2(double v);

}  // namespace crashforge
