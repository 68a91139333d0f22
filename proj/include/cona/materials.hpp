#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cona/backend.hpp"
#include "cona/eval.hpp"
#include "cona/guidance.hpp"
#include "cona/material.hpp"
#include "cona/rsp.hpp"

namespace cona::materials {

inline constexpr std::size_t kMinWords = 600;
inline constexpr std::size_t kMaxWords = 1000;
inline constexpr std::size_t kSpliceSpan = 12;

// Title is the first non-blank line (leading '#' stripped); a line starting
// with "Source:" sets source_ref. Throws EmptyFile / UnreadableFile.
Material ingest_material(const std::filesystem::path& path, TextLevel text_level);

// Advisory message when word_count is outside [600, 1000].
std::optional<std::string> length_warning(const Material& material);

struct KeywordExtraction {
    std::string summary;
    std::vector<std::string> keywords;
};

// Summary call, then k keyword call with one re-ask. Keywords are lower-cased
// and de-duplicated; fewer than k is MalformedGeneration, extras are dropped.
KeywordExtraction summarize_and_extract(const Material& material, std::size_t k, backend::Backend& backend);
std::vector<std::string> extract_keywords(const Material& material, std::size_t k, backend::Backend& backend);

struct FaqEntry {
    std::string question;
    std::string answer;

    bool operator==(const FaqEntry&) const = default;
};

struct LectureArtifacts {
    std::string notes;
    std::vector<FaqEntry> faq;
    std::string provenance;  // run_id

    bool operator==(const LectureArtifacts&) const = default;
};

// True when `notes` contains some `min_span`-byte substring of `answer` (the
// whole answer when it is shorter).
bool has_verbatim_span(std::string_view notes, std::string_view answer, std::size_t min_span = kSpliceSpan);

std::vector<FaqEntry> build_faq(const guidance::Transcript& improved);

// One notes call (regenerated once on a failed splice check). The FAQ is
// assembled from the transcript, not generated.
LectureArtifacts synthesize_lecture_notes(const Material& material, const guidance::Transcript& improved,
                                          backend::Backend& backend);

std::string render_faq(const std::vector<FaqEntry>& faq);
std::vector<FaqEntry> parse_faq(std::string_view markdown);

struct FileEntry {
    std::string name;
    std::string sha256;
    std::size_t bytes = 0;

    bool operator==(const FileEntry&) const = default;
};

struct PhaseTiming {
    std::string name;
    std::string started_utc;
    long long duration_ms = 0;

    bool operator==(const PhaseTiming&) const = default;
};

struct RunManifest {
    std::string run_id;
    std::string config_digest;
    std::vector<FileEntry> files;
    std::vector<PhaseTiming> phases;

    bool operator==(const RunManifest&) const = default;
};

nlohmann::ordered_json to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const nlohmann::json& doc);

inline const std::vector<std::string> kRunFiles{"transcript.jsonl", "rsp.jsonl", "scores.jsonl", "notes.md", "faq.md"};

struct RunRecord {
    std::string run_id;
    guidance::Transcript transcript;
    std::vector<rsp::RspResult> results;
    eval::ScoresSidecar scores;
    LectureArtifacts artifacts;

    bool operator==(const RunRecord&) const = default;
};

struct PersistOptions {
    std::string config_digest;
    std::vector<PhaseTiming> phases;
    bool trim = true;
};

// Writes the run under out_dir/<run_id>/ and returns the manifest (also
// written as manifest.json), which lists every other file with its digest.
RunManifest persist_run(const RunRecord& run, const std::filesystem::path& out_dir, const PersistOptions& options = {});

struct LoadedRun {
    RunRecord record;
    RunManifest manifest;
};

// Reads a run directory back; digests are verified against the manifest.
LoadedRun load_run(const std::filesystem::path& run_dir);

}  // namespace cona::materials
