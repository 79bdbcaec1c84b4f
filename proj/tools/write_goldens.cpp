// Regenerates fixtures/*.case.json and goldens/*.md from the in-code
// fixtures. Run only together with a template or schema version bump.

#include "crashforge/agent.hpp"
#include "crashforge/fixtures.hpp"
#include "crashforge/ingest.hpp"
#include "crashforge/narrative.hpp"

#include <iostream>

namespace fs = std::filesystem;
using namespace crashforge;

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: write_goldens <repo-root>\n";
        return 2;
    }
    const fs::path root = argv[1];
    for (const CrashCase& c : {fixture_figure2(), replay_case_32548()}) {
        write_file_atomic(root / "fixtures" / (c.case_id + ".case.json"), emit_case(c));
        write_file_atomic(root / "goldens" / (c.case_id + ".scene.md"), encode_scene_description(c).text);
        write_file_atomic(root / "goldens" / (c.case_id + ".edr.md"), encode_edr_report(c).text);
        write_file_atomic(root / "goldens" / (c.case_id + ".phase1.prompt.md"), build_phase1_prompt(c).user_text);
        std::cout << "wrote " << c.case_id << '\n';
    }
    return 0;
}
