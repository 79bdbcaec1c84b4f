#include "doctest.h"
#include "support.hpp"

#include "crashforge/config.hpp"
#include "crashforge/errors.hpp"

#include <map>

using namespace crashforge;
using namespace testsupport;

namespace {

EnvLookup env_of(std::map<std::string, std::string> vars) {
    return [vars = std::move(vars)](const std::string& name) -> std::optional<std::string> {
        const auto it = vars.find(name);
        if (it == vars.end()) return std::nullopt;
        return it->second;
    };
}

constexpr const char* kSample = R"(
[pipeline]
parallelism = 4
output_dir = "out"

[alignment]
shift_range_sec = 3.0
tolerance_speed_kmh = 1

[inference]
w_dyn = 0.6
w_time = 0.4

[backend.model-a]
endpoint = "https://llm.example.com/v1/generate"
model_id = "m-a"
credential_env = "MODEL_A_KEY"
supports_images = true
max_retries = 5
)";

}  // namespace

TEST_SUITE("configuration") {
    TEST_CASE("defaults") {
        const auto cfg = parse_config("");
        CHECK(cfg.parallelism == 1);
        CHECK(cfg.template_version == "v1");
        CHECK(cfg.inference.w_dyn == 0.7);
        CHECK(cfg.backends.empty());
        CHECK_NOTHROW(cfg.check());
    }

    TEST_CASE("sample file") {
        const auto cfg = parse_config(kSample);
        CHECK(cfg.parallelism == 4);
        CHECK(cfg.output_dir == "out");
        CHECK(cfg.inference.alignment.shift_range_sec == 3.0);
        CHECK(cfg.inference.alignment.tolerance_of(Channel::Speed) == 1.0);
        CHECK(cfg.inference.w_time == 0.4);
        REQUIRE(cfg.backends.size() == 1);
        const auto& b = cfg.backends[0];
        CHECK(b.name == "model-a");
        CHECK(b.model_id == "m-a");
        CHECK(b.supports_images);
        CHECK(b.max_retries == 5);
        CHECK(b.request_timeout_sec == 60.0);
        CHECK(cfg.backend("model-a").endpoint == "https://llm.example.com/v1/generate");
    }

    TEST_CASE("the shipped example matches the defaults") {
        const auto cfg = parse_config(read(source_dir() / "assets" / "crashforge.example.toml"));
        const PipelineConfig defaults;
        CHECK(cfg.parallelism == defaults.parallelism);
        CHECK(cfg.inference.alignment.shift_range_sec == defaults.inference.alignment.shift_range_sec);
        CHECK(cfg.inference.alignment.tolerance == defaults.inference.alignment.tolerance);
        CHECK(cfg.inference.alignment.min_overlap_samples == defaults.inference.alignment.min_overlap_samples);
        CHECK(cfg.inference.alignment.overlap_threshold == defaults.inference.alignment.overlap_threshold);
        CHECK(cfg.inference.w_dyn == defaults.inference.w_dyn);
        CHECK(cfg.inference.dynamics.decel_threshold_kmh == defaults.inference.dynamics.decel_threshold_kmh);
        CHECK(cfg.inference.dynamics.late_window_start_sec == defaults.inference.dynamics.late_window_start_sec);
        CHECK(cfg.backends.size() == 1);
        CHECK_NOTHROW(cfg.check());
    }

    TEST_CASE("backend lookup") {
        const auto cfg = parse_config(kSample);
        CHECK(cfg.backend("mock-1").endpoint == "mock://echo");
        CHECK_THROWS_AS((void)cfg.backend("model-b"), ConfigError);
    }

    TEST_CASE("errors name the key") {
        const auto message = [](const char* text) {
            try {
                parse_config(text, "x.toml");
            } catch (const ConfigError& e) {
                return std::string(e.what());
            }
            return std::string("no error");
        };
        CHECK(message("[pipeline]\ncolour = 1\n").find("colour") != std::string::npos);
        CHECK(message("[extras]\n").find("extras") != std::string::npos);
        CHECK(message("[pipeline]\nparallelism = \"two\"\n").find("parallelism") != std::string::npos);
        CHECK(message("[pipeline]\nparallelism = 0\n").find("parallelism") != std::string::npos);
        CHECK(message("[pipeline\n").find("x.toml") != std::string::npos);
    }

    TEST_CASE("invalid values fail check") {
        auto cfg = parse_config("[inference]\nw_dyn = -1\n");
        CHECK_THROWS_AS(cfg.check(), ConfigError);
        cfg = parse_config("[pipeline]\ntemplate_version = \"v9\"\n");
        CHECK_THROWS_AS(cfg.check(), ConfigError);
        // The endpoint may still arrive from the environment, so parsing accepts its absence.
        cfg = parse_config("[backend.a]\nmodel_id = \"m\"\n");
        CHECK_THROWS_AS(cfg.check(), ConfigError);
    }

    TEST_CASE("environment overrides") {
        auto cfg = parse_config(kSample);
        apply_env_overrides(cfg, env_of({{"CRASHFORGE_PIPELINE_PARALLELISM", "2"},
                                         {"CRASHFORGE_INFERENCE_W_DYN", "0.5"},
                                         {"CRASHFORGE_BACKEND_MODEL_A_ENDPOINT", "http://127.0.0.1:8080/x"},
                                         {"CRASHFORGE_BACKEND_MODEL_A_SUPPORTS_IMAGES", "false"}}));
        CHECK(cfg.parallelism == 2);
        CHECK(cfg.inference.w_dyn == 0.5);
        CHECK(cfg.backends[0].endpoint == "http://127.0.0.1:8080/x");
        CHECK_FALSE(cfg.backends[0].supports_images);

        CHECK_THROWS_AS(apply_env_overrides(cfg, env_of({{"CRASHFORGE_PIPELINE_PARALLELISM", "lots"}})), ConfigError);
        CHECK_THROWS_AS(apply_env_overrides(cfg, env_of({{"CRASHFORGE_PIPELINE_PARALLELISM", "0"}})), ConfigError);
    }

    TEST_CASE("load_config") {
        const auto dir = std::filesystem::temp_directory_path() / "crashforge-config-test";
        std::filesystem::create_directories(dir);
        const auto path = dir / "c.toml";
        write_file_atomic(path, kSample);
        CHECK(load_config(path, env_of({})).parallelism == 4);
        CHECK(load_config(std::nullopt, env_of({{"CRASHFORGE_CONFIG", path.string()}})).parallelism == 4);
        CHECK(load_config(std::nullopt, env_of({})).parallelism == 1);
        CHECK_THROWS_AS(load_config(dir / "missing.toml", env_of({})), ConfigError);
    }
}
