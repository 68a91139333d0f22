#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cona/agents.hpp"
#include "cona/backend.hpp"
#include "cona/clock.hpp"
#include "cona/error.hpp"
#include "cona/eval.hpp"
#include "cona/guidance.hpp"
#include "cona/materials.hpp"
#include "cona/rsp.hpp"

namespace cona::pipeline {

struct BackendConfig {
    std::string kind = "scripted";  // "scripted" or "http"
    std::string endpoint;
    std::string model;
    std::string api_key_env = "CONA_API_KEY";
    std::size_t context_budget_tokens = backend::kDefaultContextBudget;
    double generation_temperature = backend::kGenerationTemperature;
    double judge_temperature = backend::kJudgeTemperature;
};

struct GuidanceConfig {
    std::size_t question_budget = guidance::kDefaultQuestionBudget;
    guidance::ProbeCadence probe_cadence = guidance::ProbeCadence::EveryPair;
    std::size_t stagnation_threshold = guidance::kDefaultStagnationThreshold;
};

struct RspConfig {
    std::size_t max_rounds = rsp::kDefaultMaxRounds;
    std::vector<FeedbackLoopType> loop_types{FeedbackLoopType::Analogy, FeedbackLoopType::ProblemSolving,
                                             FeedbackLoopType::Dilemma};
    std::size_t adviser_pool_size = 4;
    rsp::AdviserContext adviser_context = rsp::AdviserContext::PairAndSummary;
};

struct EvalConfig {
    std::size_t trials = eval::kDefaultTrials;
    bool trim_enabled = true;
};

struct KbConfig {
    std::size_t keywords_per_material = 5;
    std::size_t n_test_keywords = agents::kDefaultTestKeywords;
    std::vector<std::string> encouragement_phrases = agents::kDefaultEncouragementPhrases;
};

struct RunConfig {
    BackendConfig backend;
    GuidanceConfig guidance;
    RspConfig rsp;
    EvalConfig eval;
    KbConfig kb;
    TextLevel text_level = TextLevel::Professional;  // "material.text_level"
    std::uint64_t seed = 0;

    // Throws ConfigError on a broken invariant.
    void validate() const;
};

// Every key is optional; unknown keys are rejected so typos do not pass silently.
RunConfig config_from_json(const nlohmann::json& doc);
nlohmann::ordered_json to_json(const RunConfig& config);

// "a.b.c=value": value is parsed as JSON when it can be, else taken as a string.
void apply_override(nlohmann::json& doc, std::string_view assignment);

// Reads the optional config file, applies overrides in order and validates.
RunConfig load_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides = {});

// SHA-256 of the canonical serialization.
std::string config_digest(const RunConfig& config);

// Builds the HTTP backend described by the config, with the configured
// sampling temperatures applied.
std::unique_ptr<backend::Backend> make_http_backend(const BackendConfig& config);

// Rewrites request temperatures (generation vs. judge) before forwarding.
class TemperatureBackend final : public backend::Backend {
public:
    TemperatureBackend(backend::Backend& inner, double generation, double judge);
    bool supports_concurrency() const noexcept override { return inner_.supports_concurrency(); }

protected:
    std::string send(const backend::ChatRequest& request) override;

private:
    backend::Backend& inner_;
    double generation_;
    double judge_;
};

// A failure inside cmd_run, tagged with the phase it came from.
class PhaseError : public std::runtime_error {
public:
    PhaseError(std::string phase, std::string run_id, std::optional<ErrorCode> code, const std::string& cause);
    const std::string& phase() const noexcept { return phase_; }
    const std::string& run_id() const noexcept { return run_id_; }
    std::optional<ErrorCode> code() const noexcept { return code_; }

private:
    std::string phase_;
    std::string run_id_;
    std::optional<ErrorCode> code_;
};

inline const std::vector<std::string> kRunPhases{"ingest", "keywords", "profiles", "guidance", "rsp",
                                                 "eval",   "merge",    "synthesis", "persist"};

struct RunInputs {
    std::filesystem::path material;
    std::filesystem::path audience;
    std::filesystem::path out_dir;
    std::size_t jobs = 1;
    // Mixed into the run id; the CLI passes the script digest (scripted) or a
    // start time (http).
    std::string run_salt;
};

struct RunOutcome {
    materials::RunManifest manifest;
    materials::RunRecord record;
    std::filesystem::path run_dir;
};

// Deterministic id from the configuration and the input file contents.
std::string make_run_id(const RunConfig& config, const RunInputs& inputs);

// Every phase in order; errors come out as PhaseError.
RunOutcome cmd_run(const RunConfig& config, const RunInputs& inputs, backend::Backend& backend, Clock& clock);

struct KbTestOutcome {
    std::string run_id;
    agents::KbTestPlan plan;
    agents::KbReport report;
    std::filesystem::path report_path;
};

// "step1 100% step2 100% step3 80%"
std::string format_block_rates(const agents::KbReport& report);

KbTestOutcome cmd_kbtest(const RunConfig& config, const std::filesystem::path& profile_path,
                         const std::filesystem::path& out_dir, backend::Backend& backend);

struct ScoreOutcome {
    std::string run_id;
    std::vector<eval::QaScore> scores;
    eval::LevelDistribution distribution;
    std::filesystem::path scores_path;
};

// Labels every answer of a persisted transcript. Throws InvalidArgument when
// the transcript has no Q&A pairs.
ScoreOutcome cmd_score(const RunConfig& config, const std::filesystem::path& transcript_path,
                       const std::filesystem::path& out_dir, backend::Backend& judge);

struct ReportOutcome {
    std::size_t files = 0;
    std::vector<eval::LoopScoreSample> samples;
    std::optional<eval::StatsTable> table;  // empty when there is no loop data
    std::string text;                        // rendered table, or "no data"
};

// Aggregates every scores.jsonl below `scores_dir`. With `out_dir` the table
// is also written as report.txt and report.json.
ReportOutcome cmd_report(const RunConfig& config, const std::filesystem::path& scores_dir,
                         const std::optional<std::filesystem::path>& out_dir = std::nullopt);

}  // namespace cona::pipeline
