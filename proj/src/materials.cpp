#include "cona/materials.hpp"

#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "cona/agents.hpp"
#include "cona/digest.hpp"
#include "cona/error.hpp"
#include "cona/text.hpp"

namespace cona {

Material make_material(std::string title, std::string body, TextLevel level, std::optional<std::string> source_ref) {
    if (text::trim(body).empty()) throw Error(ErrorCode::EmptyFile, "material body is empty");
    Material m;
    m.title = std::move(title);
    m.word_count = text::word_count(body);
    m.body = std::move(body);
    m.text_level = level;
    m.source_ref = std::move(source_ref);
    return m;
}

}  // namespace cona

namespace cona::materials {

namespace fs = std::filesystem;
using backend::ChatRequest;
using backend::Role;

Material ingest_material(const fs::path& path, TextLevel text_level) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::UnreadableFile, "cannot read material " + path.string());
    std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw Error(ErrorCode::UnreadableFile, "read error on " + path.string());
    if (text::trim(body).empty()) throw Error(ErrorCode::EmptyFile, path.string() + " is empty");

    std::string title;
    std::optional<std::string> source;
    std::istringstream lines(body);
    for (std::string line; std::getline(lines, line);) {
        auto t = text::trim(line);
        if (t.empty()) continue;
        if (t.substr(0, 7) == "Source:") {
            if (!source) source = std::string(text::trim(t.substr(7)));
            continue;
        }
        if (title.empty()) {
            while (!t.empty() && t.front() == '#') t.remove_prefix(1);
            title = std::string(text::trim(t));
        }
    }
    if (title.empty()) title = path.stem().string();

    auto m = make_material(std::move(title), std::move(body), text_level, std::move(source));
    if (auto w = length_warning(m)) spdlog::warn("{}: {}", path.string(), *w);
    return m;
}

std::optional<std::string> length_warning(const Material& material) {
    if (material.word_count >= kMinWords && material.word_count <= kMaxWords) return std::nullopt;
    return "material has " + std::to_string(material.word_count) + " words, outside the recommended " +
           std::to_string(kMinWords) + "-" + std::to_string(kMaxWords) + " range";
}

namespace {

std::string ask(backend::Backend& backend, std::string system, std::string user, std::string tag) {
    ChatRequest req;
    req.messages = {{Role::System, std::move(system)}, {Role::User, std::move(user)}};
    req.temperature = backend::kGenerationTemperature;
    req.tag = std::move(tag);
    return backend.complete(req);
}

}  // namespace

KeywordExtraction summarize_and_extract(const Material& material, std::size_t k, backend::Backend& backend) {
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "keyword count must be at least 1");
    constexpr std::string_view kSystem = "You are an expert editor. Follow the requested output format exactly.";
    KeywordExtraction out;
    out.summary = ask(backend, std::string(kSystem),
                      "Summarize the following presentation in one paragraph.\n\"\"\"\n" + material.body + "\n\"\"\"",
                      "materials.summary");

    const std::string prompt = "Summary of a presentation titled \"" + material.title + "\":\n\"\"\"\n" + out.summary +
                               "\n\"\"\"\nList exactly " + std::to_string(k) +
                               " domain-specific keywords from it that a newcomer to the field would not know. "
                               "Reply with one keyword per line, each line starting with \"- \", and nothing else.";
    auto keywords = text::normalize_keywords(text::parse_bullets(ask(backend, std::string(kSystem), prompt, "materials.keywords")));
    if (keywords.size() < k) {
        keywords = text::normalize_keywords(text::parse_bullets(
            ask(backend, std::string(kSystem), prompt + "\nYour previous reply had too few distinct keywords.",
                "materials.keywords.retry")));
    }
    if (keywords.size() < k) {
        throw Error(ErrorCode::MalformedGeneration, "expected " + std::to_string(k) + " distinct keywords, got " +
                                                        std::to_string(keywords.size()));
    }
    keywords.resize(k);
    out.keywords = std::move(keywords);
    return out;
}

std::vector<std::string> extract_keywords(const Material& material, std::size_t k, backend::Backend& backend) {
    return summarize_and_extract(material, k, backend).keywords;
}

bool has_verbatim_span(std::string_view notes, std::string_view answer, std::size_t min_span) {
    if (answer.empty()) return true;
    if (answer.size() <= min_span) return notes.find(answer) != std::string_view::npos;
    if (notes.size() < min_span) return false;
    std::unordered_set<std::string_view> grams;
    grams.reserve(notes.size());
    for (std::size_t i = 0; i + min_span <= notes.size(); ++i) grams.insert(notes.substr(i, min_span));
    for (std::size_t i = 0; i + min_span <= answer.size(); ++i) {
        if (grams.count(answer.substr(i, min_span))) return true;
    }
    return false;
}

std::vector<FaqEntry> build_faq(const guidance::Transcript& improved) {
    std::vector<FaqEntry> faq;
    for (const auto& p : improved.qa_pairs()) faq.push_back({p.question, p.answer});
    return faq;
}

LectureArtifacts synthesize_lecture_notes(const Material& material, const guidance::Transcript& improved,
                                          backend::Backend& backend) {
    const auto pairs = improved.qa_pairs();
    if (pairs.empty()) throw Error(ErrorCode::InvalidArgument, "notes synthesis needs at least one Q&A pair");

    ChatRequest req;
    req.temperature = backend::kGenerationTemperature;
    req.messages.push_back(
        {Role::System, "You are an expert lecturer writing context-aware lecture notes. Rewrite the presentation below "
                       "into continuous notes for the audience of the Q&A session that follows.\nPresentation \"" +
                           material.title + "\":\n\"\"\"\n" + material.body + "\n\"\"\""});
    for (const auto& p : pairs) {
        req.messages.push_back({Role::User, "Q&A pair " + std::to_string(p.index + 1) + "\nQuestion: " + p.question +
                                                "\nImproved answer:\n" + p.answer});
    }
    req.messages.push_back({Role::User, "Write the lecture notes now. Weave every improved answer above into the "
                                        "material where it fits, keeping each answer's key sentences word for word."});
    req.tag = "materials.notes";

    auto missing = [&](const std::string& notes) {
        std::vector<std::size_t> out;
        for (const auto& p : pairs) {
            if (!has_verbatim_span(notes, p.answer)) out.push_back(p.index);
        }
        return out;
    };

    std::string notes = backend.complete(req);
    auto gaps = missing(notes);
    if (!gaps.empty()) {
        std::string which;
        for (auto i : gaps) which += (which.empty() ? "" : ", ") + std::to_string(i + 1);
        req.messages.push_back({Role::Assistant, notes});
        req.messages.push_back({Role::User, "These notes do not quote the improved answers of pairs " + which +
                                                ". Rewrite them so that each of those answers appears with at least "
                                                "one sentence word for word."});
        req.tag = "materials.notes.retry";
        notes = backend.complete(req);
        gaps = missing(notes);
        if (!gaps.empty()) {
            throw Error(ErrorCode::SpliceCheckFailed,
                        "notes still miss " + std::to_string(gaps.size()) + " improved answer(s) after regeneration");
        }
    }
    return {std::move(notes), build_faq(improved), improved.run_id};
}

std::string render_faq(const std::vector<FaqEntry>& faq) {
    std::string out;
    for (const auto& e : faq) out += "## Q: " + e.question + "\n\nA: " + e.answer + "\n\n";
    return out;
}

std::vector<FaqEntry> parse_faq(std::string_view md) {
    constexpr std::string_view kQ = "## Q: ", kA = "\n\nA: ", kNext = "\n\n## Q: ";
    std::vector<FaqEntry> faq;
    std::size_t pos = 0;
    while (pos < md.size()) {
        if (md.substr(pos, kQ.size()) != kQ) throw Error(ErrorCode::InvalidArgument, "malformed FAQ block");
        pos += kQ.size();
        const auto a = md.find(kA, pos);
        if (a == std::string_view::npos) throw Error(ErrorCode::InvalidArgument, "FAQ question without answer");
        FaqEntry e;
        e.question = std::string(md.substr(pos, a - pos));
        pos = a + kA.size();
        auto next = md.find(kNext, pos);
        if (next == std::string_view::npos) {
            if (md.size() < pos + 2 || md.substr(md.size() - 2) != "\n\n") {
                throw Error(ErrorCode::InvalidArgument, "FAQ must end with a blank line");
            }
            e.answer = std::string(md.substr(pos, md.size() - 2 - pos));
            pos = md.size();
        } else {
            e.answer = std::string(md.substr(pos, next - pos));
            pos = next + 2;
        }
        faq.push_back(std::move(e));
    }
    return faq;
}

nlohmann::ordered_json to_json(const RunManifest& m) {
    nlohmann::ordered_json files = nlohmann::ordered_json::array();
    for (const auto& f : m.files) files.push_back({{"name", f.name}, {"sha256", f.sha256}, {"bytes", f.bytes}});
    nlohmann::ordered_json phases = nlohmann::ordered_json::array();
    for (const auto& p : m.phases) {
        phases.push_back({{"name", p.name}, {"started_utc", p.started_utc}, {"duration_ms", p.duration_ms}});
    }
    nlohmann::ordered_json j;
    j["run_id"] = m.run_id;
    j["config_digest"] = m.config_digest;
    j["files"] = std::move(files);
    j["phases"] = std::move(phases);
    return j;
}

RunManifest manifest_from_json(const nlohmann::json& doc) {
    try {
        RunManifest m;
        m.run_id = doc.at("run_id").get<std::string>();
        m.config_digest = doc.at("config_digest").get<std::string>();
        for (const auto& f : doc.at("files")) {
            m.files.push_back({f.at("name").get<std::string>(), f.at("sha256").get<std::string>(),
                               f.at("bytes").get<std::size_t>()});
        }
        for (const auto& p : doc.at("phases")) {
            m.phases.push_back({p.at("name").get<std::string>(), p.at("started_utc").get<std::string>(),
                                p.at("duration_ms").get<long long>()});
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("manifest: ") + e.what());
    }
}

namespace {

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

RunManifest persist_run(const RunRecord& run, const fs::path& out_dir, const PersistOptions& options) {
    const fs::path dir = out_dir / run.run_id;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());

    std::ostringstream transcript, rsp_out, scores;
    guidance::write_jsonl(transcript, run.transcript);
    rsp::write_jsonl(rsp_out, run.run_id, run.results);
    eval::write_jsonl(scores, run.run_id, run.scores, options.trim);
    const std::vector<std::pair<std::string, std::string>> contents{
        {"transcript.jsonl", transcript.str()}, {"rsp.jsonl", rsp_out.str()}, {"scores.jsonl", scores.str()},
        {"notes.md", run.artifacts.notes},      {"faq.md", render_faq(run.artifacts.faq)}};

    RunManifest manifest;
    manifest.run_id = run.run_id;
    manifest.config_digest = options.config_digest;
    manifest.phases = options.phases;
    for (const auto& [name, body] : contents) {
        write_file(dir / name, body);
        manifest.files.push_back({name, sha256_hex(body), body.size()});
    }
    write_file(dir / "manifest.json", to_json(manifest).dump(2) + "\n");
    return manifest;
}

LoadedRun load_run(const fs::path& run_dir) {
    LoadedRun loaded;
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(run_dir / "manifest.json"));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("manifest.json: ") + e.what());
    }
    loaded.manifest = manifest_from_json(doc);
    for (const auto& f : loaded.manifest.files) {
        if (sha256_file(run_dir / f.name) != f.sha256) {
            throw Error(ErrorCode::IoError, f.name + " does not match its manifest digest");
        }
    }

    auto& rec = loaded.record;
    rec.run_id = loaded.manifest.run_id;
    {
        std::istringstream in(read_file(run_dir / "transcript.jsonl"));
        rec.transcript = guidance::read_jsonl(in);
        if (rec.transcript.turns.empty()) rec.transcript.run_id = rec.run_id;
    }
    {
        std::istringstream in(read_file(run_dir / "rsp.jsonl"));
        rec.results = rsp::read_jsonl(in);
    }
    {
        std::istringstream in(read_file(run_dir / "scores.jsonl"));
        rec.scores = eval::read_jsonl(in);
    }
    rec.artifacts.notes = read_file(run_dir / "notes.md");
    rec.artifacts.faq = parse_faq(read_file(run_dir / "faq.md"));
    rec.artifacts.provenance = rec.run_id;
    return loaded;
}

}  // namespace cona::materials
