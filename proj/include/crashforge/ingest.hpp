#pragma once

#include "crashforge/case_model.hpp"
#include "crashforge/errors.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace crashforge {

inline constexpr std::string_view kSchemaVersion = "1.0";

enum class ParseMode {
    Strict,   // unknown keys are schema errors
    Lenient,  // unknown top-level keys are preserved, unknown nested keys dropped
};

/// Parses a `*.case.json` document.
/// Throws SyntaxError, SchemaError (with a JSON pointer path) or VersionError.
CrashCase parse_case(std::string_view bytes, ParseMode mode = ParseMode::Strict);

/// Canonical serialization: fixed key order, shortest round-trip numbers,
/// two-space indentation, trailing newline. Throws ValidationError.
std::string emit_case(const CrashCase& c);

/// Serialization shared with the agent output parser and the trial log:
/// {"striking_vehno", "struck_vehno", "striking_edr", "struck_edr", "rationale"}.
std::string finding_to_json(const FirstCrashFinding& f, int indent = -1);

struct CorpusEntry {
    std::string case_id;  // from the file name when the file cannot be parsed
    std::filesystem::path path;
    std::variant<CrashCase, SyntaxError, SchemaError, VersionError, IoError> result;

    [[nodiscard]] bool ok() const noexcept { return std::holds_alternative<CrashCase>(result); }
    [[nodiscard]] const CrashCase& value() const { return std::get<CrashCase>(result); }
    [[nodiscard]] std::string error_message() const;
};

/// Loads every `*.case.json` in `dir` (non-recursive) in lexicographic filename
/// order. Per-file failures are captured in the entry; only a missing or
/// unreadable directory throws IoError.
std::vector<CorpusEntry> load_corpus(const std::filesystem::path& dir, ParseMode mode = ParseMode::Strict,
                                     unsigned parallelism = 1);

CrashCase load_case_file(const std::filesystem::path& path, ParseMode mode = ParseMode::Strict);

/// Reads the scene diagram referenced by a case, relative to the case's directory.
std::vector<unsigned char> load_scene_diagram(const SceneDiagramRef& ref, const std::filesystem::path& case_dir);

/// Writes via a temporary sibling file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

}  // namespace crashforge
