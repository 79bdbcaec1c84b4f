#include "doctest.h"
#include "support.hpp"

#include "crashforge/fixtures.hpp"
#include "crashforge/narrative.hpp"

using namespace crashforge;
using namespace testsupport;

TEST_SUITE("narrative encoder") {
    TEST_CASE("goldens") {
        for (const auto& c : {fixture_figure2(), replay_case_32548()}) {
            CAPTURE(c.case_id);
            CHECK(encode_scene_description(c).text == read(source_dir() / "goldens" / (c.case_id + ".scene.md")));
            CHECK(encode_edr_report(c).text == read(source_dir() / "goldens" / (c.case_id + ".edr.md")));
        }
    }

    TEST_CASE("case 28197 reference values") {
        const auto scene = encode_scene_description(fixture_figure2()).text;
        CHECK(scene.find("Total number of vehicles involved in this Crash: 4") != std::string::npos);
        CHECK(scene.find("## VEHNO=1\n  ### Class of Vehicle: Pickup Truck\n  ### Damage Plane: Front\n") != std::string::npos);
        CHECK(scene.find("EVENTNO1: Contact between Vehicle 1's front and Vehicle 2's back") != std::string::npos);
        CHECK(scene.find("  SPEEDLIMIT: 72 km/h\n") != std::string::npos);

        const auto edr = encode_edr_report(fixture_figure2()).text;
        CHECK(edr.find("    | -5.00 | 9.70 | Peak speed |\n") != std::string::npos);
        CHECK(edr.find("    | -4.80 | 9.50 | |\n") != std::string::npos);
        CHECK(edr.find("This case (CASEID=28197) contains EDR data for 1 vehicle.") != std::string::npos);
        CHECK(edr.find("- For VEHNO=2, EDREVENTNO=1, corresponds to EVENTNO1: V1 Front vs V2 Back") != std::string::npos);
    }

    TEST_CASE("unmapped labels are printed verbatim") {
        const auto edr = encode_edr_report(replay_case_32548()).text;
        CHECK(edr.find("- For VEHNO=2, EDREVENTNO=6, Event not related to this crash") != std::string::npos);
        CHECK(edr.find("contains EDR data for 2 vehicles.") != std::string::npos);
    }

    TEST_CASE("missing environment is stated") {
        auto c = fixture_figure2();
        c.environments.pop_back();
        const auto scene = encode_scene_description(c).text;
        CHECK(scene.find("## Environment for VEHNO=4:\n  No environment record for this vehicle.\n") != std::string::npos);
    }

    TEST_CASE("fixed two-decimal rendering") {
        CHECK(format_fixed2(9.7) == "9.70");
        CHECK(format_fixed2(-0.001) == "0.00");
        CHECK(format_fixed2(-4.8) == "-4.80");
        CHECK(format_fixed2(0.126) == "0.13");
    }

    TEST_CASE("encoding is deterministic") {
        const auto c = replay_case_32548();
        CHECK(encode_edr_report(c).text == encode_edr_report(c).text);
    }
}
