#include "crashforge/agent.hpp"

#include "crashforge/assets.hpp"
#include "crashforge/errors.hpp"
#include "crashforge/ingest.hpp"
#include "json_util.hpp"

#include <fmt/format.h>
#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <random>
#include <regex>
#include <thread>

namespace crashforge {

namespace {

using json = nlohmann::ordered_json;

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    return out;
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        start = end + 1;
    }
    return lines;
}

std::string read_template_file(const std::filesystem::path& dir, const char* name) {
    try {
        return read_file(dir / name);
    } catch (const IoError&) {
        throw TemplateError(fmt::format("template file '{}' missing from '{}'", name, dir.string()));
    }
}

std::string base64(const std::vector<unsigned char>& bytes) {
    if (bytes.empty()) return {};
    std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

}  // namespace

// ---- templates ---------------------------------------------------------------

TemplateSet TemplateSet::embedded(std::string_view version) {
    auto get = [&](std::string_view name) {
        auto text = embedded_asset(version, name);
        if (!text) throw TemplateError(fmt::format("no embedded template '{}' for version '{}'", name, version));
        return std::string(*text);
    };
    return {std::string(version), get("phase1.system.txt"), get("phase1.user.tmpl"), get("phase2.system.txt"), get("phase2.user.tmpl")};
}

TemplateSet TemplateSet::load(const std::filesystem::path& dir) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) throw TemplateError(fmt::format("template directory '{}' not found", dir.string()));
    auto name = dir.filename().string();
    if (name.empty()) name = dir.parent_path().filename().string();
    return {name, read_template_file(dir, "phase1.system.txt"), read_template_file(dir, "phase1.user.tmpl"),
            read_template_file(dir, "phase2.system.txt"), read_template_file(dir, "phase2.user.tmpl")};
}

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
    std::string out;
    std::map<std::string, bool> used;
    for (const auto& [k, v] : values) used[k] = false;
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        const std::size_t open = tmpl.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(tmpl.substr(pos));
            break;
        }
        const std::size_t close = tmpl.find("}}", open + 2);
        if (close == std::string_view::npos) throw TemplateError("unterminated placeholder");
        out.append(tmpl.substr(pos, open - pos));
        const std::string name = trim(tmpl.substr(open + 2, close - open - 2));
        auto it = values.find(name);
        if (it == values.end()) throw TemplateError(fmt::format("template placeholder '{{{{{}}}}}' has no value", name));
        out += it->second;
        used[name] = true;
        pos = close + 2;
    }
    for (const auto& [k, was_used] : used) {
        if (!was_used) throw TemplateError(fmt::format("template does not embed '{{{{{}}}}}'", k));
    }
    return out;
}

// ---- prompts -----------------------------------------------------------------

PromptBundle build_phase1_prompt(const CrashCase& c, const std::optional<Attachment>& diagram, bool backend_supports_images,
                                 const TemplateSet& templates) {
    const SceneDescriptionDoc scene = encode_scene_description(c);
    const bool attach = diagram.has_value() && backend_supports_images;
    std::string note;
    if (attach) {
        note = "The investigators' scene diagram is attached to this message as an image.";
    } else if (diagram) {
        note = "A scene diagram exists for this case but cannot be shown to you. Base the reconstruction on the structured text alone.";
    } else {
        note = "No scene diagram is available for this case. Base the reconstruction on the structured text alone.";
    }

    PromptBundle b;
    b.phase = Phase::PhaseI;
    b.system_text = templates.phase1_system;
    b.user_text = render_template(templates.phase1_user, {{"scene_description", scene.text}, {"diagram_note", note}});
    if (attach) b.image = diagram;
    b.template_version = templates.version;
    return b;
}

namespace {

std::string render_reconstruction(const ReconstructionDoc& r) {
    if (!trim(r.raw_text).empty()) return r.raw_text;
    std::string out = fmt::format("## A) {}\n{}\n\n## B) {}\n", kSceneLocationHeading, r.scene_location, kVehicleInformationHeading);
    for (const auto& v : r.vehicle_information) out += "- " + v + "\n";
    out += fmt::format("\n## C) {}\n{}\n", kAccidentProcessHeading, r.accident_process);
    return out;
}

}  // namespace

PromptBundle build_phase2_prompt(const ReconstructionDoc& reconstruction, const EdrReportDoc& edr_report, const TemplateSet& templates) {
    const bool reconstruction_empty = trim(reconstruction.raw_text).empty() && trim(reconstruction.scene_location).empty() &&
                                      trim(reconstruction.accident_process).empty() &&
                                      std::all_of(reconstruction.vehicle_information.begin(), reconstruction.vehicle_information.end(),
                                                  [](const std::string& s) { return trim(s).empty(); });
    if (reconstruction_empty) throw EmptyInput("Phase II needs a non-empty crash reconstruction");
    if (trim(edr_report.text).empty()) throw EmptyInput("Phase II needs a non-empty EDR report");

    PromptBundle b;
    b.phase = Phase::PhaseII;
    b.system_text = templates.phase2_system;
    b.user_text = render_template(templates.phase2_user, {{"reconstruction", render_reconstruction(reconstruction)}, {"edr_report", edr_report.text}});
    b.template_version = templates.version;
    return b;
}

// ---- parsing -----------------------------------------------------------------

namespace {

// Returns the section index (0..2) a heading-like line names, if any.
std::optional<int> section_of(std::string_view line) {
    std::string s = trim(line);
    std::size_t i = 0;
    while (i < s.size() && (s[i] == '#' || s[i] == '*' || s[i] == '_' || std::isspace(static_cast<unsigned char>(s[i])))) ++i;
    s = s.substr(i);
    // Enumerator prefixes: "A)", "(A)", "A.", "A:", "1.", "1)".
    static const std::regex enumerator(R"(^\(?([A-Ca-c]|[1-3])[\)\.:]\s*)");
    std::smatch m;
    if (std::regex_search(s, m, enumerator)) s = s.substr(static_cast<std::size_t>(m.length(0)));
    while (!s.empty() && (s.back() == '*' || s.back() == '_' || s.back() == ':' || s.back() == '#' ||
                          std::isspace(static_cast<unsigned char>(s.back())))) {
        s.pop_back();
    }
    i = 0;
    while (i < s.size() && (s[i] == '*' || s[i] == '_')) ++i;
    s = lower(trim(s.substr(i)));
    const std::string_view names[] = {kSceneLocationHeading, kVehicleInformationHeading, kAccidentProcessHeading};
    for (int k = 0; k < 3; ++k) {
        if (s == lower(names[k])) return k;
    }
    return std::nullopt;
}

std::vector<std::string> split_entries(const std::string& body) {
    static const std::regex bullet(R"(^\s*([-*+]|\d+[\.\)])\s+)");
    std::vector<std::string> entries;
    for (auto line : split_lines(body)) {
        std::string l(line);
        std::smatch m;
        if (std::regex_search(l, m, bullet)) {
            entries.push_back(trim(l.substr(static_cast<std::size_t>(m.length(0)))));
        } else if (!trim(l).empty()) {
            if (entries.empty()) entries.emplace_back();
            if (!entries.back().empty()) entries.back() += ' ';
            entries.back() += trim(l);
        }
    }
    return entries;
}

}  // namespace

ReconstructionDoc parse_phase1_output(std::string_view raw) {
    const std::string_view names[] = {kSceneLocationHeading, kVehicleInformationHeading, kAccidentProcessHeading};
    std::optional<std::string> bodies[3];
    int current = -1;
    for (auto line : split_lines(raw)) {
        if (auto k = section_of(line)) {
            current = bodies[*k] ? -1 : *k;  // a repeated heading does not reopen its section
            if (current >= 0) bodies[current] = std::string();
            continue;
        }
        if (current >= 0) {
            *bodies[current] += line;
            *bodies[current] += '\n';
        }
    }
    for (int k = 0; k < 3; ++k) {
        if (!bodies[k]) throw ParseError(fmt::format("missing section '{}'", names[k]));
        if (trim(*bodies[k]).empty()) throw ParseError(fmt::format("empty section '{}'", names[k]));
    }
    ReconstructionDoc doc;
    doc.scene_location = trim(*bodies[0]);
    doc.vehicle_information = split_entries(*bodies[1]);
    doc.accident_process = trim(*bodies[2]);
    doc.raw_text = std::string(raw);
    return doc;
}

namespace {

// Length of the balanced {...} starting at text[start], honouring JSON strings.
std::optional<std::size_t> balanced_object(std::string_view text, std::size_t start) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = start; i < text.size(); ++i) {
        const char ch = text[i];
        if (in_string) {
            if (ch == '\\') ++i;
            else if (ch == '"') in_string = false;
            continue;
        }
        if (ch == '"') in_string = true;
        else if (ch == '{') ++depth;
        else if (ch == '}' && --depth == 0) return i - start + 1;
    }
    return std::nullopt;
}

std::optional<EdrEventNo> read_edr(const json& j, const char* key) {
    const json& v = j.at(key);
    if (v.is_null()) return std::nullopt;
    if (!v.is_number_integer() || v.get<std::int64_t>() <= 0) throw SchemaError(std::string("/") + key, "expected a positive integer or null");
    return EdrEventNo{static_cast<int>(v.get<std::int64_t>())};
}

VehNo read_vehno(const json& j, const char* key) {
    const json& v = j.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() <= 0) throw SchemaError(std::string("/") + key, "expected a positive integer");
    return VehNo{static_cast<int>(v.get<std::int64_t>())};
}

}  // namespace

FirstCrashFinding parse_phase2_output(std::string_view raw) {
    for (std::size_t pos = raw.find('{'); pos != std::string_view::npos; pos = raw.find('{', pos + 1)) {
        const auto len = balanced_object(raw, pos);
        if (!len) continue;
        json j;
        try {
            j = json::parse(raw.substr(pos, *len));
        } catch (const json::parse_error&) {
            continue;
        }
        if (!j.is_object()) continue;
        const bool shaped = j.contains("striking_vehno") && j.contains("struck_vehno") && j.contains("striking_edr") && j.contains("struck_edr");
        if (!shaped) continue;

        FirstCrashFinding f;
        f.striking_vehno = read_vehno(j, "striking_vehno");
        f.struck_vehno = read_vehno(j, "struck_vehno");
        f.striking_edr = read_edr(j, "striking_edr");
        f.struck_edr = read_edr(j, "struck_edr");
        if (f.striking_vehno == f.struck_vehno) throw SchemaError("/struck_vehno", "striking and struck vehicle are the same");
        if (j.contains("rationale")) {
            const json& r = j["rationale"];
            if (r.is_string()) {
                f.rationale.push_back(r.get<std::string>());
            } else if (r.is_array()) {
                for (std::size_t i = 0; i < r.size(); ++i) {
                    if (!r[i].is_string()) throw SchemaError(fmt::format("/rationale/{}", i), "expected a string");
                    f.rationale.push_back(r[i].get<std::string>());
                }
            } else if (!r.is_null()) {
                throw SchemaError("/rationale", "expected an array of strings");
            }
        }
        return f;
    }
    throw ParseError("no JSON object with the finding fields in the reply");
}

// ---- backends ----------------------------------------------------------------

BackendProfile default_mock_profile(std::string name) {
    BackendProfile p;
    p.name = std::move(name);
    p.endpoint = "mock://echo";
    p.model_id = "echo";
    p.supports_images = true;
    p.request_timeout_sec = 5.0;
    p.max_retries = 0;
    p.backoff_initial_sec = 0.0;
    return p;
}

BackendReply ScriptedBackend::complete(const PromptBundle&, const BackendProfile&, const std::string&) {
    const auto i = std::min<std::size_t>(static_cast<std::size_t>(calls_), script_.size() - 1);
    ++calls_;
    return script_.at(i);
}

namespace {

std::string synthesize_reconstruction(const CrashCase& c) {
    std::string out;
    out += fmt::format("## A) {}\n", kSceneLocationHeading);
    if (!c.environments.empty()) {
        const auto& env = c.environments.front();
        out += fmt::format("Trafficway: {}, {} travel lane(s), posted limit {} km/h.\n", env.trafficway_flow, env.travel_lanes,
                           std::llround(env.speed_limit_kmh));
    } else {
        out += "No environment record is available for this case.\n";
    }

    out += fmt::format("\n## B) {}\n", kVehicleInformationHeading);
    for (const auto& v : c.vehicles) {
        std::string planes;
        for (const auto& p : v.damage_planes) planes += (planes.empty() ? "" : ", ") + p.name();
        out += fmt::format("- VEHNO={}: {}; damage planes: {}.\n", v.vehno.value, v.vehicle_class, planes.empty() ? "none" : planes);
    }

    out += fmt::format("\n## C) {}\n", kAccidentProcessHeading);
    out += fmt::format("{} recorded contact(s).\n", c.events.size());
    for (const auto& e : c.events) out += fmt::format("EVENTNO{}: {}.\n", e.eventno.value, e.describe());
    if (!c.events.empty()) {
        const CrashEvent& first = identify_first_event(c);
        try {
            const auto roles = assign_roles(first, c);
            out += fmt::format("First crash event: EVENTNO{}. Striking vehicle VEHNO={}, struck vehicle VEHNO={}.\n", first.eventno.value,
                               roles.striking.value, roles.struck.value);
        } catch (const RoleIndeterminate&) {
            out += fmt::format("First crash event: EVENTNO{}. The roles cannot be told apart from the contact planes.\n", first.eventno.value);
        }
    }
    return out;
}

}  // namespace

EchoBackend::EchoBackend(const CrashCase& c, const InferenceConfig& cfg)
    : scene_text_(encode_scene_description(c).text), edr_text_(encode_edr_report(c).text), phase1_(synthesize_reconstruction(c)) {
    try {
        const FirstCrashFinding f = infer_first_crash(c, cfg);
        phase2_ = "Reviewed the reconstruction and the EDR report.\n\n```json\n" + finding_to_json(f, 2) + "\n```\n";
    } catch (const Error& e) {
        phase2_ = std::string("No determination was possible: ") + e.what() + "\n";
    }
}

BackendReply EchoBackend::complete(const PromptBundle& bundle, const BackendProfile&, const std::string&) {
    const bool complete_prompt = bundle.phase == Phase::PhaseI
                                     ? bundle.user_text.find(scene_text_) != std::string::npos
                                     : bundle.user_text.find(phase1_) != std::string::npos && bundle.user_text.find(edr_text_) != std::string::npos;
    if (!complete_prompt) return {BackendReply::Status::Ok, "The prompt did not include the case documents.", 200};
    return {BackendReply::Status::Ok, bundle.phase == Phase::PhaseI ? phase1_ : phase2_, 200};
}

std::string http_request_body(const PromptBundle& bundle, const BackendProfile& profile) {
    json user{{"role", "user"}, {"text", bundle.user_text}};
    if (bundle.image) user["image"] = json{{"media_type", bundle.image->media_type}, {"data", base64(bundle.image->bytes)}};
    json body;
    body["model"] = profile.model_id;
    body["messages"] = json::array({json{{"role", "system"}, {"text", bundle.system_text}}, user});
    return body.dump();
}

std::unique_ptr<Backend> make_backend(const BackendProfile& profile, const CrashCase& c, const InferenceConfig& cfg) {
    if (profile.endpoint == "mock://echo") return std::make_unique<EchoBackend>(c, cfg);
    if (profile.endpoint == "mock://fail") {
        return std::make_unique<ScriptedBackend>(std::vector<BackendReply>{{BackendReply::Status::Failed, "mock failure", 503}});
    }
    if (profile.endpoint.rfind("http://", 0) == 0 || profile.endpoint.rfind("https://", 0) == 0) return std::make_unique<HttpBackend>();
    throw ConfigError(fmt::format("backend '{}' has unsupported endpoint '{}'", profile.name, profile.endpoint));
}

std::string resolve_credential(const BackendProfile& profile) {
    if (profile.credential_env.empty()) return {};
    const char* value = std::getenv(profile.credential_env.c_str());
    if (value == nullptr || *value == '\0') {
        throw AuthError(fmt::format("backend '{}' needs environment variable {} to be set", profile.name, profile.credential_env));
    }
    return value;
}

DispatchResult dispatch(const PromptBundle& bundle, const BackendProfile& profile, Backend& backend, const DispatchOptions& options) {
    if (bundle.image && !profile.supports_images) {
        throw UnsupportedImage(fmt::format("backend '{}' does not accept images", profile.name));
    }
    const std::string credential = resolve_credential(profile);

    auto sleep = options.sleep ? options.sleep : [](double sec) {
        std::this_thread::sleep_for(std::chrono::duration<double>(sec));
    };
    std::function<double()> jitter = options.jitter;
    if (!jitter) {
        auto engine = std::make_shared<std::mt19937_64>(std::random_device{}());
        jitter = [engine] { return static_cast<double>((*engine)() >> 11) * 0x1.0p-53 * 2.0 - 1.0; };
    }

    DispatchResult result;
    const auto start = std::chrono::steady_clock::now();
    BackendReply last;
    for (int attempt = 0; attempt <= std::max(0, profile.max_retries); ++attempt) {
        try {
            last = backend.complete(bundle, profile, credential);
        } catch (const std::exception& e) {
            last = {BackendReply::Status::Failed, e.what(), 0};
        }
        if (last.status == BackendReply::Status::Ok) {
            result.text = std::move(last.text);
            result.latency_sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            return result;
        }
        if (last.status == BackendReply::Status::Unauthorized) {
            throw AuthError(fmt::format("backend '{}' rejected the credentials (HTTP {})", profile.name, last.http_status));
        }
        if (attempt == profile.max_retries) break;
        const double delay = std::max(0.0, profile.backoff_initial_sec * std::pow(2.0, attempt) * (1.0 + 0.2 * std::clamp(jitter(), -1.0, 1.0)));
        if (options.log) options.log(fmt::format("backend '{}' attempt {} failed ({}); retrying in {:.2f} s", profile.name, attempt + 1, last.text, delay));
        result.backoff_sec.push_back(delay);
        ++result.retries;
        sleep(delay);
    }
    if (last.status == BackendReply::Status::Timeout) {
        throw TimeoutError(fmt::format("backend '{}' timed out after {} attempt(s)", profile.name, result.retries + 1));
    }
    throw TransportError(fmt::format("backend '{}' failed after {} attempt(s): {}", profile.name, result.retries + 1, last.text));
}

// ---- pipeline ----------------------------------------------------------------

AgentRun run_agent_pipeline(const CrashCase& c, const BackendProfile& profile, Backend& backend, const std::optional<Attachment>& diagram,
                            const TemplateSet& templates, const DispatchOptions& options) {
    AgentRun run;
    run.phase1_prompt = build_phase1_prompt(c, diagram, profile.supports_images, templates);
    run.phase1 = dispatch(run.phase1_prompt, profile, backend, options);
    run.reconstruction = parse_phase1_output(run.phase1.text);
    run.phase2_prompt = build_phase2_prompt(run.reconstruction, encode_edr_report(c), templates);
    run.phase2 = dispatch(run.phase2_prompt, profile, backend, options);
    run.finding = parse_phase2_output(run.phase2.text);
    return run;
}

}  // namespace crashforge
