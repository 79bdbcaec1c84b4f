#include "doctest.h"
#include "support.hpp"

#include "crashforge/agent.hpp"
#include "crashforge/errors.hpp"
#include "crashforge/fixtures.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cstdlib>
#include <thread>

using namespace crashforge;
using namespace testsupport;

namespace {

const char* kReconstruction =
    "## A) Scene Location Analysis\nTwo-lane road, straight.\n\n"
    "## B) Vehicle Information Identification\n- VEHNO=1: pickup, moving\n- VEHNO=2: car,\n  stopped in lane\n\n"
    "## C) Accident Process Reconstruction\nV1 front struck V2 back first.\n";

DispatchOptions no_sleep(std::vector<double>* slept = nullptr, double jitter = 0.0) {
    DispatchOptions o;
    o.sleep = [slept](double s) {
        if (slept != nullptr) slept->push_back(s);
    };
    o.jitter = [jitter] { return jitter; };
    return o;
}

BackendProfile profile(int retries = 2) {
    BackendProfile p = default_mock_profile("test");
    p.max_retries = retries;
    p.backoff_initial_sec = 1.0;
    return p;
}

}  // namespace

TEST_SUITE("templates") {
    TEST_CASE("placeholders must match the supplied values exactly") {
        CHECK(render_template("a {{x}} b {{ y }}", {{"x", "1"}, {"y", "2"}}) == "a 1 b 2");
        CHECK_THROWS_AS(render_template("a {{x}} {{z}}", {{"x", "1"}}), TemplateError);
        CHECK_THROWS_AS(render_template("a {{x}}", {{"x", "1"}, {"y", "2"}}), TemplateError);
        CHECK_THROWS_AS(render_template("a {{x", {{"x", "1"}}), TemplateError);
        // Values are inserted literally, not re-expanded.
        CHECK(render_template("{{x}}", {{"x", "{{x}}"}}) == "{{x}}");
    }

    TEST_CASE("embedded and on-disk sets agree") {
        const auto embedded = TemplateSet::embedded("v1");
        const auto disk = TemplateSet::load(source_dir() / "assets/templates/v1");
        CHECK(disk.version == "v1");
        CHECK(disk.phase1_user == embedded.phase1_user);
        CHECK(disk.phase2_user == embedded.phase2_user);
        CHECK(disk.phase1_system == embedded.phase1_system);
        CHECK_THROWS_AS(TemplateSet::embedded("v99"), TemplateError);
        CHECK_THROWS_AS(TemplateSet::load(source_dir() / "assets/templates/missing"), TemplateError);
    }

    TEST_CASE("Phase II template carries the five reasoning anchors") {
        const auto t = TemplateSet::embedded();
        for (const char* heading : {"## Primary Understanding", "## EDR Filtering & Correlation", "## Missing Data Handling", "## Critical Timing",
                                    "## EDREVENTNO Interpretation"}) {
            CHECK_MESSAGE(t.phase2_user.find(heading) != std::string::npos, heading);
        }
    }
}

TEST_SUITE("prompts") {
    TEST_CASE("Phase I prompt golden") {
        for (const auto& c : {fixture_figure2(), replay_case_32548()}) {
            const auto b = build_phase1_prompt(c);
            CHECK(b.user_text == read(source_dir() / "goldens" / (c.case_id + ".phase1.prompt.md")));
            CHECK(b.user_text.find(encode_scene_description(c).text) != std::string::npos);
            CHECK(b.template_version == "v1");
            CHECK_FALSE(b.image.has_value());
        }
    }

    TEST_CASE("diagram is attached only when the backend takes images") {
        const Attachment png{"image/png", {0x89, 'P', 'N', 'G'}};
        const auto c = fixture_figure2();
        const auto with = build_phase1_prompt(c, png, true);
        REQUIRE(with.image.has_value());
        CHECK(*with.image == png);
        CHECK(with.user_text.find("attached to this message as an image") != std::string::npos);

        const auto without = build_phase1_prompt(c, png, false);
        CHECK_FALSE(without.image.has_value());
        CHECK(without.user_text.find("cannot be shown") != std::string::npos);
        CHECK(build_phase1_prompt(c).user_text.find("No scene diagram is available") != std::string::npos);
    }

    TEST_CASE("Phase II prompt embeds both documents") {
        const auto c = replay_case_32548();
        const auto rec = parse_phase1_output(kReconstruction);
        const auto report = encode_edr_report(c);
        const auto b = build_phase2_prompt(rec, report);
        CHECK(b.phase == Phase::PhaseII);
        CHECK(b.user_text.find(kReconstruction) != std::string::npos);
        CHECK(b.user_text.find(report.text) != std::string::npos);
    }

    TEST_CASE("Phase II refuses empty inputs") {
        ReconstructionDoc minimal;
        minimal.accident_process = "V1 struck V2.";
        CHECK_THROWS_AS(build_phase2_prompt(minimal, EdrReportDoc{""}), EmptyInput);
        CHECK_THROWS_AS(build_phase2_prompt(ReconstructionDoc{}, EdrReportDoc{"# report"}), EmptyInput);
        CHECK_NOTHROW(build_phase2_prompt(minimal, EdrReportDoc{"# report"}));
    }
}

TEST_SUITE("output parsing") {
    TEST_CASE("Phase I sections") {
        const auto doc = parse_phase1_output(kReconstruction);
        CHECK(doc.scene_location == "Two-lane road, straight.");
        REQUIRE(doc.vehicle_information.size() == 2);
        CHECK(doc.vehicle_information[1] == "VEHNO=2: car, stopped in lane");
        CHECK(doc.accident_process == "V1 front struck V2 back first.");
        CHECK(doc.raw_text == kReconstruction);
    }

    TEST_CASE("Phase I heading variants") {
        const std::string text =
            "Preamble the model added.\n"
            "**1. scene location analysis**\nurban\n"
            "### Vehicle Information Identification:\n1. VEHNO=1\n2. VEHNO=2\n"
            "C) ACCIDENT PROCESS RECONSTRUCTION\nrear-end\n";
        const auto doc = parse_phase1_output(text);
        CHECK(doc.scene_location == "urban");
        CHECK(doc.vehicle_information == std::vector<std::string>{"VEHNO=1", "VEHNO=2"});
        CHECK(doc.accident_process == "rear-end");
    }

    TEST_CASE("Phase I errors name the first missing section") {
        try {
            parse_phase1_output("## C) Accident Process Reconstruction\nx\n");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("Scene Location Analysis") != std::string::npos);
        }
        try {
            parse_phase1_output("## A) Scene Location Analysis\nx\n## B) Vehicle Information Identification\n\n## C) Accident Process Reconstruction\ny\n");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("empty section 'Vehicle Information Identification'") != std::string::npos);
        }
    }

    TEST_CASE("Phase II finding inside prose") {
        const std::string reply =
            "Thinking about {braces} first.\n```json\n{\"note\": \"a } in a string\", \"striking_vehno\": 3, \"struck_vehno\": 2,"
            " \"striking_edr\": 1, \"struck_edr\": 5, \"rationale\": [\"E5 decelerates\"], \"confidence\": \"high\"}\n```\n";
        const auto f = parse_phase2_output(reply);
        CHECK(f.striking_vehno == VehNo{3});
        CHECK(f.struck_vehno == VehNo{2});
        CHECK(f.striking_edr == EdrEventNo{1});
        CHECK(f.struck_edr == EdrEventNo{5});
        CHECK(f.rationale == std::vector<std::string>{"E5 decelerates"});
    }

    TEST_CASE("Phase II null records and errors") {
        const auto f = parse_phase2_output(R"({"striking_vehno": 1, "struck_vehno": 2, "striking_edr": null, "struck_edr": 1})");
        CHECK_FALSE(f.striking_edr.has_value());
        CHECK_THROWS_AS(parse_phase2_output("no structure here"), ParseError);
        CHECK_THROWS_AS(parse_phase2_output(R"({"striking_vehno": 1})"), ParseError);
        CHECK_THROWS_AS(parse_phase2_output(R"({"striking_vehno": 2, "struck_vehno": 2, "striking_edr": 1, "struck_edr": 1})"), SchemaError);
        CHECK_THROWS_AS(parse_phase2_output(R"({"striking_vehno": "V3", "struck_vehno": 2, "striking_edr": 1, "struck_edr": 1})"), SchemaError);
        CHECK_THROWS_AS(parse_phase2_output(R"({"striking_vehno": 3, "struck_vehno": 2, "striking_edr": 0, "struck_edr": 1})"), SchemaError);
    }
}

TEST_SUITE("backends") {
    TEST_CASE("echo mock closes the two-phase loop on the fixtures") {
        for (const auto& c : {fixture_figure2(), replay_case_32548()}) {
            EchoBackend echo(c, {});
            const auto run = run_agent_pipeline(c, default_mock_profile(), echo, std::nullopt, TemplateSet::embedded(), no_sleep());
            CHECK(same_outputs(run.finding, infer_first_crash(c)));
            CHECK(run.reconstruction.vehicle_information.size() == c.vehicles.size());
            CHECK(run.phase2_prompt.user_text.find(run.phase1.text) != std::string::npos);
        }
    }

    TEST_CASE("echo mock notices a prompt without the case documents") {
        const auto c = replay_case_32548();
        EchoBackend echo(c, {});
        PromptBundle bare;
        bare.user_text = "nothing";
        CHECK(echo.complete(bare, default_mock_profile(), "").text.find("did not include") != std::string::npos);
        // A template cannot silently drop a document.
        auto broken = TemplateSet::embedded();
        broken.phase2_user = "{{reconstruction}}";
        CHECK_THROWS_AS(run_agent_pipeline(c, default_mock_profile(), echo, std::nullopt, broken, no_sleep()), TemplateError);
        // A Phase II prompt without the EDR report gets an unparseable reply.
        auto run = run_agent_pipeline(c, default_mock_profile(), echo, std::nullopt, TemplateSet::embedded(), no_sleep());
        PromptBundle phase2 = run.phase2_prompt;
        phase2.user_text = run.reconstruction.raw_text;
        CHECK_THROWS_AS(parse_phase2_output(echo.complete(phase2, default_mock_profile(), "").text), ParseError);
    }

    TEST_CASE("dispatch retries with doubling backoff and jitter") {
        ScriptedBackend backend({{BackendReply::Status::Failed, "503", 503}, {BackendReply::Status::Failed, "503", 503}, {BackendReply::Status::Ok, "done", 200}});
        std::vector<double> slept;
        const auto r = dispatch(PromptBundle{}, profile(2), backend, no_sleep(&slept, 0.5));
        CHECK(r.text == "done");
        CHECK(r.retries == 2);
        REQUIRE(slept.size() == 2);
        CHECK(slept[0] == doctest::Approx(1.1));
        CHECK(slept[1] == doctest::Approx(2.2));
        CHECK(r.backoff_sec == slept);
        CHECK(backend.calls() == 3);
    }

    TEST_CASE("dispatch gives up after the retry budget") {
        ScriptedBackend timeouts({{BackendReply::Status::Timeout, "slow", 0}});
        CHECK_THROWS_AS(dispatch(PromptBundle{}, profile(2), timeouts, no_sleep()), TimeoutError);
        CHECK(timeouts.calls() == 3);
        ScriptedBackend failures({{BackendReply::Status::Failed, "boom", 500}});
        CHECK_THROWS_AS(dispatch(PromptBundle{}, profile(0), failures, no_sleep()), TransportError);
        CHECK(failures.calls() == 1);
    }

    TEST_CASE("authorization failures are not retried") {
        ScriptedBackend backend({{BackendReply::Status::Unauthorized, "no", 401}});
        CHECK_THROWS_AS(dispatch(PromptBundle{}, profile(5), backend, no_sleep()), AuthError);
        CHECK(backend.calls() == 1);
    }

    TEST_CASE("missing credential stops before any call") {
        auto p = profile();
        p.credential_env = "CRASHFORGE_TEST_UNSET_KEY";
        ::unsetenv("CRASHFORGE_TEST_UNSET_KEY");
        FixedBackend backend("x");
        CHECK_THROWS_AS(dispatch(PromptBundle{}, p, backend, no_sleep()), AuthError);
        ::setenv("CRASHFORGE_TEST_UNSET_KEY", "secret", 1);
        CHECK(resolve_credential(p) == "secret");
        ::unsetenv("CRASHFORGE_TEST_UNSET_KEY");
    }

    TEST_CASE("images are refused by text-only backends") {
        auto p = profile();
        p.supports_images = false;
        PromptBundle b;
        b.image = Attachment{"image/png", {1, 2, 3}};
        FixedBackend backend("x");
        CHECK_THROWS_AS(dispatch(b, p, backend, no_sleep()), UnsupportedImage);
    }

    TEST_CASE("request body") {
        PromptBundle b;
        b.system_text = "sys";
        b.user_text = "usr";
        b.image = Attachment{"image/png", {'a', 'b', 'c', 'd'}};
        BackendProfile p;
        p.model_id = "m-1";
        const auto j = nlohmann::json::parse(http_request_body(b, p));
        CHECK(j["model"] == "m-1");
        CHECK(j["messages"][0]["text"] == "sys");
        CHECK(j["messages"][1]["text"] == "usr");
        CHECK(j["messages"][1]["image"]["data"] == "YWJjZA==");
    }

    TEST_CASE("unknown endpoint schemes are configuration errors") {
        BackendProfile p;
        p.endpoint = "ftp://x";
        CHECK_THROWS_AS(make_backend(p, fixture_figure2(), {}), ConfigError);
    }

    TEST_CASE("HTTP backend against a loopback server") {
        httplib::Server server;
        int calls = 0;
        server.Post("/v1/generate", [&](const httplib::Request& req, httplib::Response& res) {
            ++calls;
            if (req.get_header_value("Authorization") != "Bearer k-123") {
                res.status = 401;
                return;
            }
            const auto body = nlohmann::json::parse(req.body);
            res.set_content(nlohmann::json{{"output", {{"text", "echo:" + body["messages"][1]["text"].get<std::string>()}}}}.dump(),
                            "application/json");
        });
        server.Post("/v1/flaky", [&](const httplib::Request&, httplib::Response& res) {
            ++calls;
            res.status = 503;
        });
        const int port = server.bind_to_any_port("127.0.0.1");
        std::thread t([&] { server.listen_after_bind(); });
        server.wait_until_ready();

        BackendProfile p;
        p.name = "loopback";
        p.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/generate";
        p.credential_env = "CRASHFORGE_TEST_LOOPBACK_KEY";
        p.response_path = "/output/text";
        p.request_timeout_sec = 5;
        HttpBackend http;
        PromptBundle b;
        b.user_text = "hello";

        ::setenv("CRASHFORGE_TEST_LOOPBACK_KEY", "k-123", 1);
        CHECK(dispatch(b, p, http, no_sleep()).text == "echo:hello");

        ::setenv("CRASHFORGE_TEST_LOOPBACK_KEY", "wrong", 1);
        calls = 0;
        CHECK_THROWS_AS(dispatch(b, p, http, no_sleep()), AuthError);
        CHECK(calls == 1);

        p.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/flaky";
        calls = 0;
        CHECK_THROWS_AS(dispatch(b, p, http, no_sleep()), TransportError);
        CHECK(calls == 3);

        ::unsetenv("CRASHFORGE_TEST_LOOPBACK_KEY");
        server.stop();
        t.join();
    }
}
