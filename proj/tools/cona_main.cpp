#include <chrono>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cona/digest.hpp"
#include "cona/pipeline.hpp"

namespace fs = std::filesystem;
using namespace cona;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPipeline = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CommonFlags {
    std::optional<std::string> config;
    std::string out = "out";
    std::optional<std::string> backend;
    std::optional<std::string> script;
    std::optional<std::uint64_t> seed;
    std::size_t jobs = 1;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
    cmd->add_option("--out", f.out, "Output directory")->capture_default_str();
    cmd->add_option("--backend", f.backend, "Backend kind")->check(CLI::IsMember({"http", "scripted"}));
    cmd->add_option("--script", f.script, "Scripted replies file (JSONL)")->check(CLI::ExistingFile);
    cmd->add_option("--seed", f.seed, "Seed for local randomness");
    cmd->add_option("--jobs", f.jobs, "Parallel RSP loops (http backend only)")->check(CLI::PositiveNumber);
    cmd->add_option("--set", f.overrides, "Config override KEY=VALUE (repeatable)");
}

pipeline::RunConfig resolve_config(const CommonFlags& f) {
    auto overrides = f.overrides;
    if (f.backend) overrides.push_back("backend.kind=\"" + *f.backend + "\"");
    if (f.seed) overrides.push_back("seed=" + std::to_string(*f.seed));
    std::optional<fs::path> path;
    if (f.config) path = *f.config;
    try {
        return pipeline::load_config(path, overrides);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
}

struct BackendHandle {
    std::unique_ptr<backend::Backend> owned;
    std::string salt;

    backend::Backend& get() { return *owned; }
};

BackendHandle make_backend(const pipeline::RunConfig& config, const CommonFlags& f) {
    BackendHandle h;
    if (config.backend.kind == "scripted") {
        if (!f.script) throw UsageError("the scripted backend needs --script");
        h.owned = std::make_unique<backend::ScriptedBackend>(backend::load_script(*f.script),
                                                             config.backend.context_budget_tokens);
        h.salt = sha256_file(*f.script);
        return h;
    }
    h.owned = pipeline::make_http_backend(config.backend);
    // Live runs are not reproducible; keep their outputs apart.
    h.salt = format_utc(std::chrono::system_clock::now());
    return h;
}

void print_block(const std::string& text) {
    fmt::print("{}", text);
    if (text.empty() || text.back() != '\n') fmt::print("\n");
}

void report_backend_leftovers(backend::Backend& b) {
    if (auto* s = dynamic_cast<backend::ScriptedBackend*>(&b); s && s->remaining() > 0) {
        spdlog::warn("{} scripted replies were not consumed", s->remaining());
    }
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("cona"));
    spdlog::set_pattern("%^%l%$ %v");

    CLI::App app{"Lecture communication pipeline: guided Q&A, feedback loops, scoring and notes"};
    app.require_subcommand(1);
    app.fallthrough();
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");

    CommonFlags run_f, kb_f, score_f, report_f;
    std::string material, audience, transcript, scores_dir;

    auto* run = app.add_subcommand("run", "Run the whole pipeline on one material");
    add_common(run, run_f);
    run->add_option("--material", material, "Teaching material (text)")->required()->check(CLI::ExistingFile);
    run->add_option("--audience", audience, "Audience profile (JSON)")->required()->check(CLI::ExistingFile);

    auto* kb = app.add_subcommand("kbtest", "Check how well an audience profile's knowledge is blocked");
    add_common(kb, kb_f);
    kb->add_option("--audience", audience, "Audience profile (JSON)")->required()->check(CLI::ExistingFile);

    auto* score = app.add_subcommand("score", "DIKW-label the answers of a saved transcript");
    add_common(score, score_f);
    score->add_option("transcript", transcript, "transcript.jsonl")->required()->check(CLI::ExistingFile);

    auto* report = app.add_subcommand("report", "Aggregate scores into the per-round table");
    add_common(report, report_f);
    report->add_option("scores_dir", scores_dir, "Directory searched for scores.jsonl")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }
    if (quiet) spdlog::set_level(spdlog::level::warn);

    try {
        if (run->parsed()) {
            const auto config = resolve_config(run_f);
            auto backend = make_backend(config, run_f);
            LogicalClock logical;
            SystemClock wall;
            Clock& clock = config.backend.kind == "scripted" ? static_cast<Clock&>(logical) : wall;
            pipeline::RunInputs inputs{material, audience, run_f.out, run_f.jobs, backend.salt};
            const auto outcome = pipeline::cmd_run(config, inputs, backend.get(), clock);
            report_backend_leftovers(backend.get());
            fmt::print("{}\n{}\n", outcome.manifest.run_id, outcome.run_dir.string());
        } else if (kb->parsed()) {
            const auto config = resolve_config(kb_f);
            auto backend = make_backend(config, kb_f);
            const auto outcome = pipeline::cmd_kbtest(config, audience, kb_f.out, backend.get());
            fmt::print("{}\n{}\n", pipeline::format_block_rates(outcome.report), outcome.report_path.string());
        } else if (score->parsed()) {
            const auto config = resolve_config(score_f);
            auto backend = make_backend(config, score_f);
            const auto outcome = pipeline::cmd_score(config, transcript, score_f.out, backend.get());
            print_block(eval::render_distribution(outcome.distribution));
            fmt::print("{}\n", outcome.scores_path.string());
        } else if (report->parsed()) {
            const auto config = resolve_config(report_f);
            std::optional<fs::path> out;
            if (report->count("--out") > 0) out = report_f.out;
            const auto outcome = pipeline::cmd_report(config, scores_dir, out);
            print_block(outcome.text);
        }
    } catch (const UsageError& e) {
        spdlog::error("{}", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitPipeline;
    }
    return kExitOk;
}
