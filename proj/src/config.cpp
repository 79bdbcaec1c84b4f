#include "crashforge/config.hpp"

#include "crashforge/assets.hpp"
#include "crashforge/errors.hpp"
#include "crashforge/ingest.hpp"

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <set>
#include <variant>

namespace crashforge {

namespace {

using Value = std::variant<std::int64_t, double, bool, std::string>;
enum class Kind { Int, Double, Bool, String };

struct Key {
    const char* name;
    Kind kind;
    std::function<void(PipelineConfig&, const Value&)> set;
};

double as_double(const Value& v) { return std::holds_alternative<double>(v) ? std::get<double>(v) : static_cast<double>(std::get<std::int64_t>(v)); }

template <typename F>
Key dbl(const char* name, F f) {
    return {name, Kind::Double, [f](PipelineConfig& c, const Value& v) { f(c) = as_double(v); }};
}

const std::vector<Key>& pipeline_keys() {
    static const std::vector<Key> keys{
        {"parallelism", Kind::Int,
         [](PipelineConfig& c, const Value& v) {
             const auto n = std::get<std::int64_t>(v);
             if (n < 1) throw ConfigError(fmt::format("pipeline.parallelism must be at least 1 (got {})", n));
             c.parallelism = static_cast<unsigned>(n);
         }},
        {"template_version", Kind::String, [](PipelineConfig& c, const Value& v) { c.template_version = std::get<std::string>(v); }},
        {"template_dir", Kind::String, [](PipelineConfig& c, const Value& v) { c.template_dir = std::get<std::string>(v); }},
        {"output_dir", Kind::String, [](PipelineConfig& c, const Value& v) { c.output_dir = std::get<std::string>(v); }},
    };
    return keys;
}

const std::vector<Key>& alignment_keys() {
    static const std::vector<Key> keys{
        dbl("shift_range_sec", [](PipelineConfig& c) -> double& { return c.inference.alignment.shift_range_sec; }),
        dbl("shift_step_sec", [](PipelineConfig& c) -> double& { return c.inference.alignment.shift_step_sec; }),
        dbl("overlap_threshold", [](PipelineConfig& c) -> double& { return c.inference.alignment.overlap_threshold; }),
        {"min_overlap_samples", Kind::Int,
         [](PipelineConfig& c, const Value& v) { c.inference.alignment.min_overlap_samples = static_cast<int>(std::get<std::int64_t>(v)); }},
        dbl("tolerance_speed_kmh", [](PipelineConfig& c) -> double& { return c.inference.alignment.tolerance[Channel::Speed]; }),
        dbl("tolerance_steering_deg", [](PipelineConfig& c) -> double& { return c.inference.alignment.tolerance[Channel::Steering]; }),
        dbl("tolerance_accel_pct", [](PipelineConfig& c) -> double& { return c.inference.alignment.tolerance[Channel::Accel]; }),
        dbl("tolerance_brake", [](PipelineConfig& c) -> double& { return c.inference.alignment.tolerance[Channel::Brake]; }),
    };
    return keys;
}

const std::vector<Key>& inference_keys() {
    static const std::vector<Key> keys{
        dbl("w_dyn", [](PipelineConfig& c) -> double& { return c.inference.w_dyn; }),
        dbl("w_time", [](PipelineConfig& c) -> double& { return c.inference.w_time; }),
        dbl("decel_threshold_kmh", [](PipelineConfig& c) -> double& { return c.inference.dynamics.decel_threshold_kmh; }),
        dbl("steady_band_kmh", [](PipelineConfig& c) -> double& { return c.inference.dynamics.steady_band_kmh; }),
        dbl("early_brake_before_sec", [](PipelineConfig& c) -> double& { return c.inference.dynamics.early_brake_before_sec; }),
        dbl("late_window_start_sec", [](PipelineConfig& c) -> double& { return c.inference.dynamics.late_window_start_sec; }),
    };
    return keys;
}

// Backend keys act on one profile; the PipelineConfig slot is unused.
struct BackendKey {
    const char* name;
    Kind kind;
    std::function<void(BackendProfile&, const Value&)> set;
};

const std::vector<BackendKey>& backend_keys() {
    static const std::vector<BackendKey> keys{
        {"endpoint", Kind::String, [](BackendProfile& b, const Value& v) { b.endpoint = std::get<std::string>(v); }},
        {"model_id", Kind::String, [](BackendProfile& b, const Value& v) { b.model_id = std::get<std::string>(v); }},
        {"credential_env", Kind::String, [](BackendProfile& b, const Value& v) { b.credential_env = std::get<std::string>(v); }},
        {"supports_images", Kind::Bool, [](BackendProfile& b, const Value& v) { b.supports_images = std::get<bool>(v); }},
        {"request_timeout_sec", Kind::Double, [](BackendProfile& b, const Value& v) { b.request_timeout_sec = as_double(v); }},
        {"max_retries", Kind::Int, [](BackendProfile& b, const Value& v) { b.max_retries = static_cast<int>(std::get<std::int64_t>(v)); }},
        {"response_path", Kind::String, [](BackendProfile& b, const Value& v) { b.response_path = std::get<std::string>(v); }},
        {"backoff_initial_sec", Kind::Double, [](BackendProfile& b, const Value& v) { b.backoff_initial_sec = as_double(v); }},
    };
    return keys;
}

const char* kind_name(Kind k) {
    switch (k) {
        case Kind::Int: return "an integer";
        case Kind::Double: return "a number";
        case Kind::Bool: return "a boolean";
        case Kind::String: return "a string";
    }
    return "?";
}

Value from_node(const toml::node& n, Kind kind, const std::string& where) {
    switch (kind) {
        case Kind::Int:
            if (auto v = n.value_exact<std::int64_t>()) return *v;
            break;
        case Kind::Double:
            if (n.is_integer()) return *n.value_exact<std::int64_t>();
            if (auto v = n.value_exact<double>()) return *v;
            break;
        case Kind::Bool:
            if (auto v = n.value_exact<bool>()) return *v;
            break;
        case Kind::String:
            if (auto v = n.value_exact<std::string>()) return *v;
            break;
    }
    throw ConfigError(fmt::format("{} must be {}", where, kind_name(kind)));
}

Value from_text(const std::string& text, Kind kind, const std::string& where) {
    auto bad = [&] { return ConfigError(fmt::format("{}={} is not {}", where, text, kind_name(kind))); };
    switch (kind) {
        case Kind::Int: {
            std::int64_t v = 0;
            auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
            if (ec != std::errc() || p != text.data() + text.size()) throw bad();
            return v;
        }
        case Kind::Double: {
            char* end = nullptr;
            const double v = std::strtod(text.c_str(), &end);
            if (text.empty() || end != text.c_str() + text.size() || !std::isfinite(v)) throw bad();
            return v;
        }
        case Kind::Bool:
            if (text == "true" || text == "1") return true;
            if (text == "false" || text == "0") return false;
            throw bad();
        case Kind::String:
            return text;
    }
    throw bad();
}

const std::vector<Key>* section_keys(std::string_view section) {
    if (section == "pipeline") return &pipeline_keys();
    if (section == "alignment") return &alignment_keys();
    if (section == "inference") return &inference_keys();
    return nullptr;
}

std::string env_token(std::string s) {
    for (char& ch : s) ch = (ch == '-' || ch == '.') ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    return s;
}

}  // namespace

void PipelineConfig::check() const {
    if (parallelism < 1) throw ConfigError("parallelism must be at least 1");
    inference.check();
    std::set<std::string> names;
    for (const auto& b : backends) {
        if (!names.insert(b.name).second) throw ConfigError(fmt::format("backend '{}' is defined twice", b.name));
        if (b.endpoint.empty()) throw ConfigError(fmt::format("backend '{}' has no endpoint", b.name));
        if (b.max_retries < 0) throw ConfigError(fmt::format("backend '{}': max_retries must not be negative", b.name));
        if (b.request_timeout_sec <= 0) throw ConfigError(fmt::format("backend '{}': request_timeout_sec must be positive", b.name));
        if (b.backoff_initial_sec < 0) throw ConfigError(fmt::format("backend '{}': backoff_initial_sec must not be negative", b.name));
    }
    try {
        (void)templates();
    } catch (const TemplateError& e) {
        throw ConfigError(e.what());
    }
}

TemplateSet PipelineConfig::templates() const {
    return template_dir ? TemplateSet::load(*template_dir / template_version) : TemplateSet::embedded(template_version);
}

BackendProfile PipelineConfig::backend(const std::string& name) const {
    for (const auto& b : backends) {
        if (b.name == name) return b;
    }
    if (name.rfind("mock", 0) == 0) return default_mock_profile(name);
    throw ConfigError(fmt::format("no backend named '{}' is configured", name));
}

EnvLookup process_env() {
    return [](const std::string& name) -> std::optional<std::string> {
        const char* v = std::getenv(name.c_str());
        if (v == nullptr) return std::nullopt;
        return std::string(v);
    };
}

PipelineConfig parse_config(std::string_view toml_text, std::string_view source) {
    toml::table root;
    try {
        root = toml::parse(toml_text, source);
    } catch (const toml::parse_error& e) {
        throw ConfigError(fmt::format("{}:{}:{}: {}", source, e.source().begin.line, e.source().begin.column, e.description()));
    }

    PipelineConfig cfg;
    for (const auto& [section_key, section_node] : root) {
        const std::string section(section_key.str());
        const toml::table* table = section_node.as_table();
        if (table == nullptr) throw ConfigError(fmt::format("{}: top-level key '{}' must be a [section]", source, section));

        if (section == "backend") {
            for (const auto& [name_key, profile_node] : *table) {
                const toml::table* pt = profile_node.as_table();
                const std::string name(name_key.str());
                if (pt == nullptr) throw ConfigError(fmt::format("{}: backend.{} must be a table", source, name));
                BackendProfile b;
                b.name = name;
                for (const auto& [k, node] : *pt) {
                    const std::string key(k.str());
                    const auto& keys = backend_keys();
                    auto it = std::find_if(keys.begin(), keys.end(), [&](const BackendKey& bk) { return key == bk.name; });
                    if (it == keys.end()) throw ConfigError(fmt::format("{}: unknown key backend.{}.{}", source, name, key));
                    it->set(b, from_node(node, it->kind, fmt::format("backend.{}.{}", name, key)));
                }
                cfg.backends.push_back(std::move(b));
            }
            continue;
        }

        const auto* keys = section_keys(section);
        if (keys == nullptr) throw ConfigError(fmt::format("{}: unknown section [{}]", source, section));
        for (const auto& [k, node] : *table) {
            const std::string key(k.str());
            auto it = std::find_if(keys->begin(), keys->end(), [&](const Key& sk) { return key == sk.name; });
            if (it == keys->end()) throw ConfigError(fmt::format("{}: unknown key {}.{}", source, section, key));
            it->set(cfg, from_node(node, it->kind, fmt::format("{}.{}", section, key)));
        }
    }
    return cfg;
}

void apply_env_overrides(PipelineConfig& cfg, const EnvLookup& env) {
    for (const char* section : {"pipeline", "alignment", "inference"}) {
        for (const auto& k : *section_keys(section)) {
            const std::string var = "CRASHFORGE_" + env_token(section) + "_" + env_token(k.name);
            if (auto text = env(var)) k.set(cfg, from_text(*text, k.kind, var));
        }
    }
    for (auto& b : cfg.backends) {
        for (const auto& k : backend_keys()) {
            const std::string var = "CRASHFORGE_BACKEND_" + env_token(b.name) + "_" + env_token(k.name);
            if (auto text = env(var)) k.set(b, from_text(*text, k.kind, var));
        }
    }
}

PipelineConfig load_config(const std::optional<std::filesystem::path>& path, const EnvLookup& env) {
    std::optional<std::filesystem::path> source = path;
    if (!source) {
        if (auto from_env = env("CRASHFORGE_CONFIG"); from_env && !from_env->empty()) source = *from_env;
    }
    PipelineConfig cfg;
    if (source) {
        std::string text;
        try {
            text = read_file(*source);
        } catch (const IoError& e) {
            throw ConfigError(fmt::format("cannot read config: {}", e.what()));
        }
        cfg = parse_config(text, source->string());
    }
    apply_env_overrides(cfg, env);
    cfg.check();
    return cfg;
}

}  // namespace crashforge
