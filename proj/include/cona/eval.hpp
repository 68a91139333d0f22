#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cona/backend.hpp"
#include "cona/dikw.hpp"

namespace cona::eval {

using LabelSet = std::set<DikwLevel>;

struct QaScore {
    std::size_t qa_ref = 0;
    LabelSet labels;
    int score = 1;  // numeric value of the highest label

    bool operator==(const QaScore&) const = default;
};

struct LoopScoreSample {
    std::size_t qa_ref = 0;
    FeedbackLoopType loop_type = FeedbackLoopType::Analogy;
    TextLevel text_level = TextLevel::None;  // always None for Dilemma
    std::size_t round_index = 1;
    std::vector<double> trial_scores;

    bool operator==(const LoopScoreSample&) const = default;
};

struct RoundStats {
    double mean = 0.0;
    double std = 0.0;  // sample (n-1) deviation; 0 when one value remains
    std::size_t n_effective = 0;

    bool operator==(const RoundStats&) const = default;
};

struct LevelDistribution {
    std::map<DikwLevel, std::size_t> counts;

    std::size_t total() const;
    bool operator==(const LevelDistribution&) const = default;
};

inline constexpr std::size_t kDefaultTrials = 5;
inline constexpr std::string_view kRubricVersion = "loop-rubric-v1";

std::string dikw_rubric_prompt(std::string_view answer_text);

// Comma list of DATA / INFORMATION / KNOWLEDGE / WISDOM; nullopt on anything else.
std::optional<LabelSet> parse_dikw_labels(std::string_view reply);

// Judge call with one re-ask ("<tag>.retry") before JudgeUnparseable.
LabelSet label_dikw(std::string_view answer_text, backend::Backend& judge, const std::string& tag);

// Numeric value of max(labels). Throws EmptyLabels.
int score_qa(const LabelSet& labels);

std::string loop_rubric_prompt(std::string_view question, std::string_view answer_draft, FeedbackLoopType loop);

// First number in [0, 10] found in the reply.
std::optional<double> parse_score(std::string_view reply);

struct LoopRoundRequest {
    std::size_t qa_ref = 0;
    std::size_t round_index = 1;
    TextLevel text_level = TextLevel::None;
    std::string tag_prefix;  // trials are tagged "<prefix>.t1", "<prefix>.t2", ...
};

// Issues `trials` judge calls (trials >= 3) with the 0-10 rubric for the loop type.
LoopScoreSample score_loop_round(std::string_view question, std::string_view answer_draft, FeedbackLoopType loop_type,
                                 std::size_t trials, backend::Backend& judge, const LoopRoundRequest& request);

// With three or more values, drops one minimum and one maximum occurrence and
// summarizes the rest; otherwise summarizes everything.
RoundStats trimmed_mean(std::span<const double> trial_scores);
RoundStats plain_stats(std::span<const double> values);
RoundStats summarize(std::span<const double> trial_scores, bool trim);

struct TableRow {
    FeedbackLoopType loop_type = FeedbackLoopType::Analogy;
    TextLevel text_level = TextLevel::None;
    std::vector<std::optional<RoundStats>> rounds;  // index 0 is R1

    bool operator==(const TableRow&) const = default;
};

struct StatsTable {
    std::size_t max_round = 0;
    std::vector<TableRow> rows;  // ordered by loop type, then text level
};

// Groups samples by (loop type, text level, round). A cell pools the
// (trimmed) trial values of all its samples.
StatsTable round_stats_table(const std::vector<LoopScoreSample>& samples, bool trim = true);

std::string format_cell(const RoundStats& stats);  // "8.07 ± 0.35"
std::optional<std::pair<double, double>> parse_cell(std::string_view cell);

std::string render_table(const StatsTable& table);
nlohmann::json to_json(const StatsTable& table);

LevelDistribution dikw_distribution(const std::vector<QaScore>& scores);
std::string render_distribution(const LevelDistribution& dist);

struct ScoresSidecar {
    std::vector<QaScore> dikw;
    std::vector<LoopScoreSample> loops;

    bool operator==(const ScoresSidecar&) const = default;
};

void write_jsonl(std::ostream& out, const std::string& run_id, const ScoresSidecar& scores, bool trim = true);
ScoresSidecar read_jsonl(std::istream& in, std::string* run_id = nullptr);

}  // namespace cona::eval
