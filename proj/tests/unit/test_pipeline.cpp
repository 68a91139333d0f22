#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "cona/digest.hpp"
#include "cona/error.hpp"
#include "cona/pipeline.hpp"
#include "fixtures.hpp"

using namespace cona;
using namespace cona::pipeline;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("cona_pipeline_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
        fixtures::write_demo_material(path / "material.md");
        fixtures::write_demo_audience(path / "audience.json");
    }
    ~TempDir() { fs::remove_all(path); }
    RunInputs inputs(const std::string& out) const {
        return {path / "material.md", path / "audience.json", path / out, 1, "salt"};
    }
};

// Same responder, but advertises that it tolerates concurrent calls.
class ConcurrentResponder final : public backend::Backend {
public:
    explicit ConcurrentResponder(backend::CallbackBackend::Handler h) : handler_(std::move(h)) {}
    bool supports_concurrency() const noexcept override { return true; }

protected:
    std::string send(const backend::ChatRequest& r) override { return handler_(r); }

private:
    backend::CallbackBackend::Handler handler_;
};

}  // namespace

TEST_CASE("config defaults and validation") {
    RunConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.guidance.question_budget == 6);
    CHECK(c.rsp.max_rounds == 4);
    CHECK(c.eval.trials == 5);
    CHECK(c.kb.n_test_keywords == 5);

    auto expect_config_error = [](const std::vector<std::string>& overrides) {
        try {
            load_config(std::nullopt, overrides);
            FAIL("expected ConfigError");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::ConfigError);
        }
    };
    expect_config_error({"rsp.max_rounds=5"});
    expect_config_error({"guidance.question_budget=3"});
    expect_config_error({"eval.trials=2"});
    expect_config_error({"guidance.budget=6"});
    expect_config_error({"rsp.loop_types=[\"riddles\"]"});
    expect_config_error({"noequals"});
    CHECK_NOTHROW(load_config(std::nullopt, {"rsp.max_rounds=5", "rsp.adviser_pool_size=5"}));
}

TEST_CASE("overrides and digests") {
    const auto c = load_config(std::nullopt, {"material.text_level=commonsense", "seed=11", "rsp.loop_types=[\"dilemma\"]",
                                              "guidance.probe_cadence=off"});
    CHECK(c.text_level == TextLevel::Commonsense);
    CHECK(c.seed == 11);
    CHECK(c.rsp.loop_types == std::vector<FeedbackLoopType>{FeedbackLoopType::Dilemma});
    CHECK(c.guidance.probe_cadence == guidance::ProbeCadence::Off);
    CHECK(config_from_json(nlohmann::json::parse(to_json(c).dump())).seed == 11);
    CHECK(config_digest(c) == config_digest(config_from_json(nlohmann::json::parse(to_json(c).dump()))));
    CHECK(config_digest(c) != config_digest(RunConfig{}));
    CHECK(config_digest(c).size() == 64);
}

TEST_CASE("end-to-end run produces the artifact set, then replays identically") {
    TempDir d;
    const RunConfig config;
    std::vector<backend::ScriptEntry> script;
    backend::CallbackBackend live(fixtures::recording(fixtures::make_responder(), script));
    LogicalClock c0;
    const auto first = cmd_run(config, d.inputs("live"), live, c0);
    CHECK(fs::exists(first.run_dir / "manifest.json"));
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(first.run_dir)) files += e.is_regular_file() ? 1 : 0;
    CHECK(files == 6);

    std::vector<std::string> phase_names;
    for (const auto& p : first.manifest.phases) phase_names.push_back(p.name);
    CHECK(phase_names == std::vector<std::string>(kRunPhases.begin(), kRunPhases.end() - 1));
    CHECK(first.manifest.config_digest == config_digest(config));

    CHECK(first.record.transcript.qa_pairs().size() == 6);
    // Data-level pairs skip the feedback loop.
    CHECK(first.record.results.size() == 5);
    for (const auto& r : first.record.results) {
        for (const auto& round : r.rounds) CHECK(round.score.has_value());
    }
    CHECK(first.record.scores.dikw.size() == 6);
    CHECK(first.record.scores.loops.size() == 20);

    backend::ScriptedBackend replay1(script), replay2(script);
    LogicalClock c1, c2;
    const auto a = cmd_run(config, d.inputs("a"), replay1, c1);
    const auto b = cmd_run(config, d.inputs("b"), replay2, c2);
    CHECK(replay1.remaining() == 0);
    CHECK(a.manifest == b.manifest);
    CHECK(a.manifest == first.manifest);
    CHECK(sha256_file(a.run_dir / "manifest.json") == sha256_file(b.run_dir / "manifest.json"));
}

TEST_CASE("loop types can be narrowed") {
    TempDir d;
    const auto config = load_config(std::nullopt, {"rsp.loop_types=[\"dilemma\"]"});
    backend::CallbackBackend live(fixtures::make_responder());
    LogicalClock clock;
    const auto out = cmd_run(config, d.inputs("o"), live, clock);
    REQUIRE(out.record.results.size() == 1);
    CHECK(out.record.results[0].loop_type == FeedbackLoopType::Dilemma);
    CHECK(out.record.results[0].rounds[0].adviser_id.rfind("adviser-q6", 0) == 0);
}

TEST_CASE("parallel feedback loops match the sequential result") {
    TempDir d;
    const RunConfig config;
    backend::CallbackBackend seq(fixtures::make_responder());
    ConcurrentResponder par(fixtures::make_responder());
    LogicalClock c1, c2;
    auto in_par = d.inputs("p");
    in_par.jobs = 4;
    const auto a = cmd_run(config, d.inputs("s"), seq, c1);
    const auto b = cmd_run(config, in_par, par, c2);
    CHECK(a.record.results == b.record.results);
}

TEST_CASE("phase failures name the phase and the run") {
    TempDir d;
    backend::ScriptedBackend empty(std::vector<backend::ScriptEntry>{});
    LogicalClock clock;
    try {
        cmd_run(RunConfig{}, d.inputs("x"), empty, clock);
        FAIL("expected PhaseError");
    } catch (const PhaseError& e) {
        CHECK(e.phase() == "keywords");
        CHECK(e.code() == ErrorCode::ScriptExhausted);
        CHECK(e.run_id() == make_run_id(RunConfig{}, d.inputs("x")));
        CHECK(std::string(e.what()).find("keywords") != std::string::npos);
    }
    auto bad = d.inputs("x");
    bad.material = d.path / "nope.md";
    try {
        cmd_run(RunConfig{}, bad, empty, clock);
        FAIL("expected PhaseError");
    } catch (const PhaseError& e) {
        CHECK(e.phase() == "ingest");
    }
}

TEST_CASE("kbtest subcommand") {
    TempDir d;
    backend::CallbackBackend blocked(fixtures::make_responder());
    const auto out = cmd_kbtest(RunConfig{}, d.path / "audience.json", d.path / "kb", blocked);
    CHECK(format_block_rates(out.report) == "step1 100% step2 100% step3 100%");
    CHECK(out.plan.step1_items.size() == 10);
    std::ifstream in(out.report_path);
    const auto doc = nlohmann::json::parse(in);
    CHECK(doc["plan"]["step1_items"].size() == 10);
    CHECK(doc["report"]["verdicts"].size() == 15);

    fixtures::FixtureOptions mixed;
    mixed.kb = fixtures::KbBehaviour::Mixed;
    backend::CallbackBackend m(fixtures::make_responder(mixed));
    const auto partial = cmd_kbtest(RunConfig{}, d.path / "audience.json", d.path / "kb", m);
    CHECK(partial.report.per_step_block_rate[0] == 1.0);
    CHECK(partial.report.per_step_block_rate[1] == 1.0);
    CHECK(partial.report.per_step_block_rate[2] < 1.0);
    CHECK(format_block_rates(partial.report) == "step1 100% step2 100% step3 80%");

    fixtures::FixtureOptions leaky;
    leaky.kb = fixtures::KbBehaviour::Leaky;
    backend::CallbackBackend l(fixtures::make_responder(leaky));
    CHECK(format_block_rates(cmd_kbtest(RunConfig{}, d.path / "audience.json", d.path / "kb", l).report) ==
          "step1 0% step2 0% step3 0%");
}

TEST_CASE("score subcommand") {
    TempDir d;
    backend::CallbackBackend live(fixtures::make_responder());
    LogicalClock clock;
    const auto run = cmd_run(RunConfig{}, d.inputs("r"), live, clock);

    fixtures::FixtureOptions data_only;
    data_only.dikw_labels = [](std::size_t) { return "DATA"; };
    backend::CallbackBackend judge(fixtures::make_responder(data_only));
    const auto out = cmd_score(RunConfig{}, run.run_dir / "transcript.jsonl", d.path / "scored", judge);
    CHECK(out.distribution.total() == 6);
    CHECK(out.distribution.counts.at(DikwLevel::Data) == 6);
    CHECK(fs::exists(out.scores_path));

    std::ofstream(d.path / "empty.jsonl").close();
    try {
        cmd_score(RunConfig{}, d.path / "empty.jsonl", d.path / "scored", judge);
        FAIL("expected InvalidArgument");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidArgument);
    }
}

TEST_CASE("report subcommand") {
    TempDir d;
    fs::create_directories(d.path / "empty");
    const auto none = cmd_report(RunConfig{}, d.path / "empty");
    CHECK(none.text == "no data");
    CHECK_FALSE(none.table);

    eval::ScoresSidecar s1, s2;
    eval::LoopScoreSample a;
    a.loop_type = FeedbackLoopType::Analogy;
    a.text_level = TextLevel::Professional;
    a.round_index = 4;
    a.trial_scores = {0.0, 7.72, 8.07, 8.42, 10.0};
    s1.loops.push_back(a);
    eval::LoopScoreSample dl;
    dl.loop_type = FeedbackLoopType::Dilemma;
    dl.round_index = 1;
    dl.trial_scores = {5, 6, 7};
    s2.loops.push_back(dl);
    fs::create_directories(d.path / "scores" / "run-1");
    fs::create_directories(d.path / "scores" / "run-2");
    std::ofstream o1(d.path / "scores" / "run-1" / "scores.jsonl");
    eval::write_jsonl(o1, "run-1", s1);
    o1.close();
    std::ofstream o2(d.path / "scores" / "run-2" / "scores.jsonl");
    eval::write_jsonl(o2, "run-2", s2);
    o2.close();

    const auto rep = cmd_report(RunConfig{}, d.path / "scores", d.path / "report");
    CHECK(rep.files == 2);
    REQUIRE(rep.table);
    CHECK(rep.table->rows.size() == 2);
    std::istringstream lines(rep.text);
    std::vector<std::string> rows;
    for (std::string line; std::getline(lines, line);) rows.push_back(line);
    REQUIRE(rows.size() == 4);
    CHECK(rows[2].rfind("Analogy", 0) == 0);
    CHECK(rows[2].find("| Professional |") != std::string::npos);
    const std::string cell = "8.07 ± 0.35";
    REQUIRE(rows[2].size() >= cell.size());
    CHECK(rows[2].substr(rows[2].size() - cell.size()) == cell);
    CHECK(rows[3].rfind("Dilemma", 0) == 0);
    CHECK(rows[3].find("| —") != std::string::npos);
    CHECK(fs::exists(d.path / "report" / "report.txt"));
    CHECK(fs::exists(d.path / "report" / "report.json"));
    CHECK_THROWS_AS(cmd_report(RunConfig{}, d.path / "missing"), Error);
}
