#include "cona/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <iostream>
#include <iterator>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "cona/digest.hpp"
#include "cona/text.hpp"

namespace cona::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

void RunConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); };
    if (backend.kind != "scripted" && backend.kind != "http") fail("backend.kind must be \"scripted\" or \"http\"");
    if (backend.kind == "http" && (backend.endpoint.empty() || backend.model.empty())) {
        fail("backend.endpoint and backend.model are required for the http backend");
    }
    if (backend.context_budget_tokens <= static_cast<std::size_t>(backend::kDefaultMaxReplyTokens)) {
        fail("backend.context_budget_tokens must exceed the reply allowance of " +
             std::to_string(backend::kDefaultMaxReplyTokens));
    }
    for (double t : {backend.generation_temperature, backend.judge_temperature}) {
        if (t < 0.0 || t > 2.0) fail("temperatures must lie in [0, 2]");
    }
    if (guidance.question_budget < 4) fail("guidance.question_budget must be at least 4");
    if (guidance.stagnation_threshold < 1) fail("guidance.stagnation_threshold must be at least 1");
    if (rsp.max_rounds < 1) fail("rsp.max_rounds must be at least 1");
    if (rsp.adviser_pool_size < rsp.max_rounds) fail("rsp.adviser_pool_size must be at least rsp.max_rounds");
    if (eval.trials < 3) fail("eval.trials must be at least 3");
    if (kb.keywords_per_material < 1) fail("kb.keywords_per_material must be at least 1");
    if (kb.n_test_keywords < 1) fail("kb.n_test_keywords must be at least 1");
    if (kb.encouragement_phrases.empty()) fail("kb.encouragement_phrases must not be empty");
    if (text_level == TextLevel::None) fail("material.text_level must be educational, commonsense or professional");
}

namespace {

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
    if (!obj.is_object()) throw Error(ErrorCode::ConfigError, where + " must be an object");
    for (const auto& [key, _] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw Error(ErrorCode::ConfigError, "unknown config key " + (where.empty() ? "" : where + ".") + key);
        }
    }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error(ErrorCode::ConfigError, where + "." + key + " has the wrong type");
    }
}

// Accepts either a string (the enum name) and converts it with `parse`.
template <typename E, typename F>
void read_enum(const json& obj, const char* key, E& out, const std::string& where, F parse) {
    std::string name;
    if (!obj.contains(key)) return;
    read(obj, key, name, where);
    try {
        out = parse(name);
    } catch (const Error& e) {
        throw Error(ErrorCode::ConfigError, where + "." + key + ": " + e.what());
    }
}

}  // namespace

RunConfig config_from_json(const json& doc) {
    RunConfig c;
    if (doc.is_null()) return c;
    check_keys(doc, {"backend", "guidance", "rsp", "eval", "kb", "material", "seed"}, "");
    if (doc.contains("backend")) {
        const auto& b = doc["backend"];
        check_keys(b, {"kind", "endpoint", "model", "api_key_env", "context_budget_tokens", "generation_temperature",
                       "judge_temperature"},
                   "backend");
        read(b, "kind", c.backend.kind, "backend");
        read(b, "endpoint", c.backend.endpoint, "backend");
        read(b, "model", c.backend.model, "backend");
        read(b, "api_key_env", c.backend.api_key_env, "backend");
        read(b, "context_budget_tokens", c.backend.context_budget_tokens, "backend");
        read(b, "generation_temperature", c.backend.generation_temperature, "backend");
        read(b, "judge_temperature", c.backend.judge_temperature, "backend");
    }
    if (doc.contains("guidance")) {
        const auto& g = doc["guidance"];
        check_keys(g, {"question_budget", "probe_cadence", "stagnation_threshold"}, "guidance");
        read(g, "question_budget", c.guidance.question_budget, "guidance");
        read_enum(g, "probe_cadence", c.guidance.probe_cadence, "guidance", guidance::probe_cadence_from_string);
        read(g, "stagnation_threshold", c.guidance.stagnation_threshold, "guidance");
    }
    if (doc.contains("rsp")) {
        const auto& r = doc["rsp"];
        check_keys(r, {"max_rounds", "loop_types", "adviser_pool_size", "adviser_context"}, "rsp");
        read(r, "max_rounds", c.rsp.max_rounds, "rsp");
        read(r, "adviser_pool_size", c.rsp.adviser_pool_size, "rsp");
        read_enum(r, "adviser_context", c.rsp.adviser_context, "rsp", rsp::adviser_context_from_string);
        if (r.contains("loop_types")) {
            std::vector<std::string> names;
            read(r, "loop_types", names, "rsp");
            c.rsp.loop_types.clear();
            for (const auto& n : names) {
                try {
                    auto t = loop_type_from_string(n);
                    if (std::find(c.rsp.loop_types.begin(), c.rsp.loop_types.end(), t) == c.rsp.loop_types.end()) {
                        c.rsp.loop_types.push_back(t);
                    }
                } catch (const Error& e) {
                    throw Error(ErrorCode::ConfigError, std::string("rsp.loop_types: ") + e.what());
                }
            }
        }
    }
    if (doc.contains("eval")) {
        const auto& e = doc["eval"];
        check_keys(e, {"trials", "trim_enabled"}, "eval");
        read(e, "trials", c.eval.trials, "eval");
        read(e, "trim_enabled", c.eval.trim_enabled, "eval");
    }
    if (doc.contains("kb")) {
        const auto& k = doc["kb"];
        check_keys(k, {"keywords_per_material", "n_test_keywords", "encouragement_phrases"}, "kb");
        read(k, "keywords_per_material", c.kb.keywords_per_material, "kb");
        read(k, "n_test_keywords", c.kb.n_test_keywords, "kb");
        read(k, "encouragement_phrases", c.kb.encouragement_phrases, "kb");
    }
    if (doc.contains("material")) {
        const auto& m = doc["material"];
        check_keys(m, {"text_level"}, "material");
        read_enum(m, "text_level", c.text_level, "material", text_level_from_string);
    }
    read(doc, "seed", c.seed, "config");
    return c;
}

ordered_json to_json(const RunConfig& c) {
    ordered_json j;
    j["backend"] = {{"kind", c.backend.kind},
                    {"endpoint", c.backend.endpoint},
                    {"model", c.backend.model},
                    {"api_key_env", c.backend.api_key_env},
                    {"context_budget_tokens", c.backend.context_budget_tokens},
                    {"generation_temperature", c.backend.generation_temperature},
                    {"judge_temperature", c.backend.judge_temperature}};
    j["guidance"] = {{"question_budget", c.guidance.question_budget},
                     {"probe_cadence", std::string(to_string(c.guidance.probe_cadence))},
                     {"stagnation_threshold", c.guidance.stagnation_threshold}};
    ordered_json loops = ordered_json::array();
    for (auto t : c.rsp.loop_types) loops.push_back(std::string(to_string(t)));
    j["rsp"] = {{"max_rounds", c.rsp.max_rounds},
                {"loop_types", loops},
                {"adviser_pool_size", c.rsp.adviser_pool_size},
                {"adviser_context", std::string(to_string(c.rsp.adviser_context))}};
    j["eval"] = {{"trials", c.eval.trials}, {"trim_enabled", c.eval.trim_enabled}};
    j["kb"] = {{"keywords_per_material", c.kb.keywords_per_material},
               {"n_test_keywords", c.kb.n_test_keywords},
               {"encouragement_phrases", c.kb.encouragement_phrases}};
    j["material"] = {{"text_level", std::string(to_string(c.text_level))}};
    j["seed"] = c.seed;
    return j;
}

void apply_override(json& doc, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw Error(ErrorCode::ConfigError, "override must look like key=value: " + std::string(assignment));
    }
    const std::string key(text::trim(assignment.substr(0, eq)));
    const std::string raw(assignment.substr(eq + 1));
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;
    }
    if (doc.is_null()) doc = json::object();
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw Error(ErrorCode::ConfigError, "bad override key " + key);
        if (!node->is_object()) throw Error(ErrorCode::ConfigError, "override " + key + " descends into a non-object");
        if (dot == std::string::npos) {
            (*node)[part] = std::move(value);
            return;
        }
        node = &(*node)[part];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

RunConfig load_config(const std::optional<fs::path>& path, const std::vector<std::string>& overrides) {
    json doc = json::object();
    if (path) {
        std::ifstream in(*path);
        if (!in) throw Error(ErrorCode::ConfigError, "cannot read config " + path->string());
        try {
            doc = json::parse(in);
        } catch (const json::parse_error& e) {
            throw Error(ErrorCode::ConfigError, path->string() + ": " + e.what());
        }
    }
    for (const auto& o : overrides) apply_override(doc, o);
    auto config = config_from_json(doc);
    config.validate();
    return config;
}

std::string config_digest(const RunConfig& config) { return sha256_hex(to_json(config).dump()); }

TemperatureBackend::TemperatureBackend(backend::Backend& inner, double generation, double judge)
    : Backend(inner.context_budget()), inner_(inner), generation_(generation), judge_(judge) {}

std::string TemperatureBackend::send(const backend::ChatRequest& request) {
    auto copy = request;
    copy.temperature = request.temperature == backend::kJudgeTemperature ? judge_ : generation_;
    return inner_.complete(copy);
}

namespace {

class OwningTemperatureBackend final : public backend::Backend {
public:
    OwningTemperatureBackend(std::unique_ptr<backend::Backend> inner, double generation, double judge)
        : Backend(inner->context_budget()), inner_(std::move(inner)), wrapper_(*inner_, generation, judge) {}
    bool supports_concurrency() const noexcept override { return inner_->supports_concurrency(); }

protected:
    std::string send(const backend::ChatRequest& request) override { return wrapper_.complete(request); }

private:
    std::unique_ptr<backend::Backend> inner_;
    TemperatureBackend wrapper_;
};

}  // namespace

std::unique_ptr<backend::Backend> make_http_backend(const BackendConfig& config) {
    backend::HttpOptions opts;
    opts.endpoint = config.endpoint;
    opts.model = config.model;
    opts.api_key_env = config.api_key_env;
    opts.context_budget_tokens = config.context_budget_tokens;
    return std::make_unique<OwningTemperatureBackend>(std::make_unique<backend::HttpBackend>(opts),
                                                      config.generation_temperature, config.judge_temperature);
}

PhaseError::PhaseError(std::string phase, std::string run_id, std::optional<ErrorCode> code, const std::string& cause)
    : std::runtime_error("run " + run_id + " failed in phase " + phase + ": " + cause),
      phase_(std::move(phase)),
      run_id_(std::move(run_id)),
      code_(code) {}

namespace {

std::string read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::UnreadableFile, "cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string file_digest_or_empty(const fs::path& path) {
    std::error_code ec;
    if (path.empty() || !fs::is_regular_file(path, ec)) return {};
    return sha256_file(path);
}

void write_text(const fs::path& path, const std::string& body) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + path.parent_path().string() + ": " + ec.message());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << body;
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

std::string session_text(const guidance::Transcript& t) {
    std::string out;
    for (const auto& turn : t.turns) {
        out += turn.speaker + " (" + std::string(guidance::to_string(turn.phase)) + "): " + turn.text + "\n";
    }
    return out;
}

// Times one phase and tags any failure with its name.
class PhaseRunner {
public:
    PhaseRunner(std::string run_id, Clock& clock) : run_id_(std::move(run_id)), clock_(clock) {}

    template <typename F>
    auto operator()(const std::string& name, F&& fn) {
        const auto start = clock_.now();
        spdlog::info("[{}] phase {} started", run_id_, name);
        try {
            if constexpr (std::is_void_v<std::invoke_result_t<F>>) {
                fn();
                finish(name, start);
            } else {
                auto result = fn();
                finish(name, start);
                return result;
            }
        } catch (const PhaseError&) {
            throw;
        } catch (const Error& e) {
            throw PhaseError(name, run_id_, e.code(), e.what());
        } catch (const std::exception& e) {
            throw PhaseError(name, run_id_, std::nullopt, e.what());
        }
    }

    const std::vector<materials::PhaseTiming>& timings() const { return timings_; }

private:
    void finish(const std::string& name, Clock::time_point start) {
        const auto end = clock_.now();
        const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(end - start).count();
        timings_.push_back({name, format_utc(start), ms});
    }

    std::string run_id_;
    Clock& clock_;
    std::vector<materials::PhaseTiming> timings_;
};

std::vector<rsp::RspResult> run_all_rsp(const RunConfig& config, const guidance::Transcript& transcript,
                                        const agents::AgentProfile& audience, const std::string& topic,
                                        const std::string& summary, std::size_t jobs, backend::Backend& backend) {
    struct Task {
        guidance::QaPair pair;
        FeedbackLoopType loop;
    };
    std::vector<Task> tasks;
    for (const auto& p : transcript.qa_pairs()) {
        auto loop = loop_type_for(p.target);
        if (!loop) continue;
        if (std::find(config.rsp.loop_types.begin(), config.rsp.loop_types.end(), *loop) ==
            config.rsp.loop_types.end()) {
            continue;
        }
        tasks.push_back({p, *loop});
    }

    rsp::RspOptions opts;
    opts.max_rounds = config.rsp.max_rounds;
    opts.adviser_context = config.rsp.adviser_context;
    opts.material_summary = summary;
    if (opts.adviser_context == rsp::AdviserContext::FullSession) opts.session_text = session_text(transcript);

    auto run_one = [&](const Task& t) {
        const std::string q = "q" + std::to_string(t.pair.index + 1);
        agents::AdviserPool pool(config.rsp.adviser_pool_size, topic, "adviser-" + q);
        // Dilemma loops are expert-to-expert; no external audience takes part.
        const auto answerer = t.loop == FeedbackLoopType::Dilemma ? agents::make_expert(topic, "expert-" + q) : audience;
        return rsp::run_rsp(t.pair, t.loop, answerer, pool, opts, backend);
    };

    std::vector<rsp::RspResult> results;
    if (jobs <= 1 || !backend.supports_concurrency()) {
        for (const auto& t : tasks) results.push_back(run_one(t));
        return results;
    }
    for (std::size_t i = 0; i < tasks.size(); i += jobs) {
        std::vector<std::future<rsp::RspResult>> batch;
        for (std::size_t j = i; j < std::min(tasks.size(), i + jobs); ++j) {
            batch.push_back(std::async(std::launch::async, run_one, std::cref(tasks[j])));
        }
        for (auto& f : batch) results.push_back(f.get());
    }
    std::sort(results.begin(), results.end(), [](const auto& a, const auto& b) { return a.qa_ref < b.qa_ref; });
    return results;
}

eval::ScoresSidecar score_run(const RunConfig& config, const guidance::Transcript& transcript,
                              std::vector<rsp::RspResult>& results, TextLevel text_level, backend::Backend& judge) {
    eval::ScoresSidecar sidecar;
    const auto pairs = transcript.qa_pairs();
    for (const auto& p : pairs) {
        const auto labels = eval::label_dikw(p.answer, judge, "eval.dikw.q" + std::to_string(p.index + 1));
        sidecar.dikw.push_back({p.index, labels, eval::score_qa(labels)});
    }
    for (auto& r : results) {
        const auto& question = pairs.at(r.qa_ref).question;
        for (auto& round : r.rounds) {
            eval::LoopRoundRequest req;
            req.qa_ref = r.qa_ref;
            req.round_index = round.round_index;
            req.text_level = text_level;
            req.tag_prefix = "eval.loop.q" + std::to_string(r.qa_ref + 1) + ".r" + std::to_string(round.round_index);
            auto sample = eval::score_loop_round(question, round.answer_draft, r.loop_type, config.eval.trials, judge, req);
            round.score = eval::summarize(sample.trial_scores, config.eval.trim_enabled).mean;
            sidecar.loops.push_back(std::move(sample));
        }
    }
    return sidecar;
}

}  // namespace

std::string make_run_id(const RunConfig& config, const RunInputs& inputs) {
    const std::string seed_material = config_digest(config) + "\n" + file_digest_or_empty(inputs.material) + "\n" +
                                      file_digest_or_empty(inputs.audience) + "\n" + inputs.run_salt;
    return "run-" + sha256_hex(seed_material).substr(0, 16);
}

RunOutcome cmd_run(const RunConfig& config, const RunInputs& inputs, backend::Backend& backend, Clock& clock) {
    config.validate();
    const std::string run_id = make_run_id(config, inputs);
    PhaseRunner phase(run_id, clock);

    const auto material = phase("ingest", [&] { return materials::ingest_material(inputs.material, config.text_level); });
    const auto extraction = phase("keywords", [&] {
        return materials::summarize_and_extract(material, config.kb.keywords_per_material, backend);
    });

    struct Profiles {
        agents::AgentProfile lecturer, audience;
    };
    const auto profiles = phase("profiles", [&] {
        Profiles p{agents::make_lecturer(material.title),
                   agents::with_blocked_keywords(agents::load_audience_profile(inputs.audience), extraction.keywords)};
        p.lecturer.validate();
        p.audience.validate();
        return p;
    });

    const auto transcript = phase("guidance", [&] {
        guidance::GuidanceOptions opts;
        opts.question_budget = config.guidance.question_budget;
        opts.probe_cadence = config.guidance.probe_cadence;
        opts.stagnation_threshold = config.guidance.stagnation_threshold;
        return guidance::run_guidance_session(profiles.lecturer, profiles.audience, material, opts, backend, clock,
                                              run_id);
    });

    auto results = phase("rsp", [&] {
        return run_all_rsp(config, transcript, profiles.audience, material.title, extraction.summary, inputs.jobs,
                           backend);
    });

    const auto scores =
        phase("eval", [&] { return score_run(config, transcript, results, material.text_level, backend); });

    const auto improved = phase("merge", [&] { return rsp::merge_improved_answers(transcript, results); });

    const auto artifacts =
        phase("synthesis", [&] { return materials::synthesize_lecture_notes(material, improved, backend); });

    RunOutcome outcome;
    outcome.record = {run_id, transcript, results, scores, artifacts};
    outcome.run_dir = inputs.out_dir / run_id;
    // The manifest is written as part of persisting, so it records every
    // phase up to synthesis.
    materials::PersistOptions popts{config_digest(config), phase.timings(), config.eval.trim_enabled};
    outcome.manifest = phase("persist", [&] { return materials::persist_run(outcome.record, inputs.out_dir, popts); });
    spdlog::info("[{}] wrote {}", run_id, outcome.run_dir.string());
    return outcome;
}

std::string format_block_rates(const agents::KbReport& report) {
    return fmt::format("step1 {:.0f}% step2 {:.0f}% step3 {:.0f}%", report.per_step_block_rate[0] * 100.0,
                       report.per_step_block_rate[1] * 100.0, report.per_step_block_rate[2] * 100.0);
}

KbTestOutcome cmd_kbtest(const RunConfig& config, const fs::path& profile_path, const fs::path& out_dir,
                         backend::Backend& backend) {
    config.validate();
    const auto profile = agents::load_audience_profile(profile_path);
    KbTestOutcome out;
    out.run_id = "kbtest-" + sha256_hex(config_digest(config) + "\n" + sha256_file(profile_path)).substr(0, 16);
    out.plan = agents::make_kb_test(profile.block, config.kb.n_test_keywords, backend, config.seed,
                                    config.kb.encouragement_phrases);
    const auto responses = agents::administer_kb_test(out.plan, profile, backend);
    out.report = agents::score_kb_test(out.plan, responses, backend);

    ordered_json doc;
    doc["run_id"] = out.run_id;
    doc["config_digest"] = config_digest(config);
    doc["plan"] = agents::to_json(out.plan);
    doc["report"] = agents::to_json(out.report);
    out.report_path = out_dir / out.run_id / "kb_report.json";
    write_text(out.report_path, doc.dump(2) + "\n");
    return out;
}

ScoreOutcome cmd_score(const RunConfig& config, const fs::path& transcript_path, const fs::path& out_dir,
                       backend::Backend& judge) {
    config.validate();
    guidance::Transcript transcript;
    {
        std::istringstream in(read_bytes(transcript_path));
        transcript = guidance::read_jsonl(in);
    }
    const auto pairs = transcript.qa_pairs();
    if (pairs.empty()) throw Error(ErrorCode::InvalidArgument, transcript_path.string() + " holds no Q&A pairs");

    ScoreOutcome out;
    out.run_id = transcript.run_id;
    for (const auto& p : pairs) {
        const auto labels = eval::label_dikw(p.answer, judge, "eval.dikw.q" + std::to_string(p.index + 1));
        out.scores.push_back({p.index, labels, eval::score_qa(labels)});
    }
    out.distribution = eval::dikw_distribution(out.scores);

    std::ostringstream sidecar;
    eval::write_jsonl(sidecar, out.run_id, eval::ScoresSidecar{out.scores, {}}, config.eval.trim_enabled);
    out.scores_path = out_dir / out.run_id / "scores.jsonl";
    write_text(out.scores_path, sidecar.str());
    return out;
}

ReportOutcome cmd_report(const RunConfig& config, const fs::path& scores_dir, const std::optional<fs::path>& out_dir) {
    ReportOutcome out;
    std::vector<fs::path> files;
    std::error_code ec;
    if (fs::is_regular_file(scores_dir, ec)) {
        files.push_back(scores_dir);
    } else if (fs::is_directory(scores_dir, ec)) {
        for (const auto& entry : fs::recursive_directory_iterator(scores_dir)) {
            if (entry.is_regular_file() && entry.path().filename() == "scores.jsonl") files.push_back(entry.path());
        }
    } else {
        throw Error(ErrorCode::InvalidArgument, scores_dir.string() + " does not exist");
    }
    std::sort(files.begin(), files.end());
    out.files = files.size();
    for (const auto& f : files) {
        std::istringstream in(read_bytes(f));
        auto sidecar = eval::read_jsonl(in);
        std::move(sidecar.loops.begin(), sidecar.loops.end(), std::back_inserter(out.samples));
    }
    if (out.samples.empty()) {
        out.text = "no data";
        return out;
    }
    out.table = eval::round_stats_table(out.samples, config.eval.trim_enabled);
    out.text = eval::render_table(*out.table);
    if (out_dir) {
        write_text(*out_dir / "report.txt", out.text + "\n");
        write_text(*out_dir / "report.json", eval::to_json(*out.table).dump(2) + "\n");
    }
    return out;
}

}  // namespace cona::pipeline
