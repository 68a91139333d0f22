// Regenerates the replay scripts shipped in data/demo from the fixture
// responder. Usage: make_demo_script <demo_dir> <out_dir> [--write-inputs]
#include <filesystem>
#include <iostream>
#include <string>

#include "cona/pipeline.hpp"
#include "fixtures.hpp"

namespace fs = std::filesystem;
using namespace cona;

int main(int argc, char** argv) {
    if (argc < 3) {
        std::cerr << "usage: make_demo_script <demo_dir> <out_dir> [--write-inputs]\n";
        return 2;
    }
    const fs::path demo = argv[1];
    const fs::path out = argv[2];
    try {
        fs::create_directories(out);
        if (argc > 3 && std::string(argv[3]) == "--write-inputs") {
            fixtures::write_demo_material(demo / "material.md");
            fixtures::write_demo_audience(demo / "audience.json");
        }
        const auto config = pipeline::load_config(demo / "config.json");
        const fs::path scratch = out / "scratch";

        std::vector<backend::ScriptEntry> run_script;
        backend::CallbackBackend run_backend(fixtures::recording(fixtures::make_responder(), run_script),
                                             config.backend.context_budget_tokens);
        LogicalClock clock;
        pipeline::RunInputs inputs{demo / "material.md", demo / "audience.json", scratch, 1, ""};
        const auto outcome = pipeline::cmd_run(config, inputs, run_backend, clock);
        backend::save_script(out / "run_script.jsonl", run_script);

        std::vector<backend::ScriptEntry> kb_script;
        backend::CallbackBackend kb_backend(fixtures::recording(fixtures::make_responder(), kb_script));
        pipeline::cmd_kbtest(config, demo / "audience.json", scratch, kb_backend);
        backend::save_script(out / "kbtest_script.jsonl", kb_script);

        fixtures::FixtureOptions judge;
        judge.dikw_labels = [](std::size_t k) { return k % 2 ? std::string("DATA") : std::string("INFORMATION, KNOWLEDGE"); };
        std::vector<backend::ScriptEntry> score_script;
        backend::CallbackBackend score_backend(fixtures::recording(fixtures::make_responder(judge), score_script));
        pipeline::cmd_score(config, outcome.run_dir / "transcript.jsonl", scratch, score_backend);
        backend::save_script(out / "score_script.jsonl", score_script);

        fs::remove_all(scratch);
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    return 0;
}
