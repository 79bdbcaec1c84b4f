#pragma once

// Template assets compiled into the library from assets/templates/<version>/.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace crashforge {

inline constexpr std::string_view kDefaultTemplateVersion = "v1";

std::optional<std::string_view> embedded_asset(std::string_view version, std::string_view name);

/// Versions compiled in, ascending.
std::vector<std::string> embedded_template_versions();

}  // namespace crashforge
