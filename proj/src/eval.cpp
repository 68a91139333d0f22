#include "cona/eval.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <regex>
#include <sstream>
#include <tuple>

#include <fmt/format.h>

#include "cona/error.hpp"
#include "cona/text.hpp"

namespace cona::eval {

using backend::ChatRequest;
using backend::Role;

std::size_t LevelDistribution::total() const {
    std::size_t n = 0;
    for (const auto& [level, count] : counts) n += count;
    return n;
}

std::string dikw_rubric_prompt(std::string_view answer_text) {
    std::string out =
        "Classify the communication levels reached by the answer below.\n"
        "DATA: it states facts, figures or definitions taken from the material.\n"
        "INFORMATION: it relates terms or ideas to something the listener already knows, for example through an "
        "analogy.\n"
        "KNOWLEDGE: it applies the ideas to a concrete problem or scenario from the listener's field.\n"
        "WISDOM: it weighs a morally complex or contested question from several perspectives and reaches a "
        "justified, balanced judgement.\n"
        "Answer:\n\"\"\"\n";
    out += answer_text;
    out += "\n\"\"\"\nReply only with a comma-separated list of every level the answer reaches, drawn from DATA, "
           "INFORMATION, KNOWLEDGE, WISDOM.";
    return out;
}

std::optional<LabelSet> parse_dikw_labels(std::string_view reply) {
    LabelSet labels;
    std::string body(text::trim(reply));
    while (!body.empty() && body.back() == '.') body.pop_back();
    std::stringstream ss(body);
    for (std::string item; std::getline(ss, item, ',');) {
        const auto token = text::to_upper(text::trim(item));
        bool known = false;
        for (auto level : kAllLevels) {
            if (token == judge_token(level)) {
                labels.insert(level);
                known = true;
            }
        }
        if (!known) return std::nullopt;
    }
    if (labels.empty()) return std::nullopt;
    return labels;
}

LabelSet label_dikw(std::string_view answer_text, backend::Backend& judge, const std::string& tag) {
    if (text::trim(answer_text).empty()) throw Error(ErrorCode::InvalidArgument, "cannot label an empty answer");
    ChatRequest req;
    req.messages = {{Role::System, "You are a strict evaluator of teaching dialogues. Follow the reply format exactly."},
                    {Role::User, dikw_rubric_prompt(answer_text)}};
    req.temperature = backend::kJudgeTemperature;
    req.tag = tag;
    if (auto labels = parse_dikw_labels(judge.complete(req))) return *labels;

    req.messages.push_back({Role::User, "Reply again using only the level names, separated by commas."});
    req.tag = tag + ".retry";
    if (auto labels = parse_dikw_labels(judge.complete(req))) return *labels;
    throw Error(ErrorCode::JudgeUnparseable, "DIKW labels for '" + tag + "' could not be parsed after one re-ask");
}

int score_qa(const LabelSet& labels) {
    if (labels.empty()) throw Error(ErrorCode::EmptyLabels, "a Q&A pair needs at least one DIKW label");
    return score_of(*labels.rbegin());
}

std::string loop_rubric_prompt(std::string_view question, std::string_view answer_draft, FeedbackLoopType loop) {
    std::string criterion;
    switch (loop) {
        case FeedbackLoopType::Analogy:
            criterion = "how clearly the answer explains the concept and how well its analogy fits the answerer's "
                        "own background";
            break;
        case FeedbackLoopType::ProblemSolving:
            criterion = "how concrete the proposed steps are and how directly they apply to the answerer's field";
            break;
        case FeedbackLoopType::Dilemma:
            criterion = "how close the answer is to an unbiased response: 10 means it weighs every major perspective "
                        "evenly, 0 means it argues only one side";
            break;
    }
    std::string out = "[" + std::string(kRubricVersion) + "] Rate from 0 to 10 " + criterion + ".\n";
    out += "Question: \"" + std::string(question) + "\"\nAnswer:\n\"\"\"\n" + std::string(answer_draft) + "\n\"\"\"\n";
    out += "Reply with the score as a single number.";
    return out;
}

std::optional<double> parse_score(std::string_view reply) {
    static const std::regex number(R"(-?\d+(?:\.\d+)?)");
    const std::string s(reply);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), number); it != std::sregex_iterator(); ++it) {
        const double v = std::stod(it->str());
        if (v >= 0.0 && v <= 10.0) return v;
    }
    return std::nullopt;
}

LoopScoreSample score_loop_round(std::string_view question, std::string_view answer_draft, FeedbackLoopType loop_type,
                                 std::size_t trials, backend::Backend& judge, const LoopRoundRequest& request) {
    if (trials < 3) throw Error(ErrorCode::InvalidArgument, "loop scoring needs at least 3 trials");
    LoopScoreSample sample;
    sample.qa_ref = request.qa_ref;
    sample.loop_type = loop_type;
    sample.text_level = loop_type == FeedbackLoopType::Dilemma ? TextLevel::None : request.text_level;
    sample.round_index = request.round_index;

    ChatRequest req;
    req.messages = {{Role::System, "You are an impartial grader. Reply with a number from 0 to 10."},
                    {Role::User, loop_rubric_prompt(question, answer_draft, loop_type)}};
    req.temperature = backend::kJudgeTemperature;
    for (std::size_t t = 1; t <= trials; ++t) {
        req.tag = request.tag_prefix + ".t" + std::to_string(t);
        const auto reply = judge.complete(req);
        const auto score = parse_score(reply);
        if (!score) throw Error(ErrorCode::JudgeUnparseable, "no score in [0, 10] in reply to '" + req.tag + "'");
        sample.trial_scores.push_back(*score);
    }
    return sample;
}

RoundStats plain_stats(std::span<const double> values) {
    if (values.empty()) throw Error(ErrorCode::InvalidArgument, "no values to summarize");
    RoundStats s;
    s.n_effective = values.size();
    // Summing identical values can drift by an ulp; keep constant inputs exact.
    if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); })) {
        s.mean = values.front();
        return s;
    }
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return s;
}

namespace {

std::vector<double> trimmed_values(std::span<const double> trial_scores) {
    std::vector<double> sorted(trial_scores.begin(), trial_scores.end());
    std::sort(sorted.begin(), sorted.end());
    if (sorted.size() >= 3) {
        sorted.pop_back();
        sorted.erase(sorted.begin());
    }
    return sorted;
}

}  // namespace

RoundStats trimmed_mean(std::span<const double> trial_scores) {
    return plain_stats(trimmed_values(trial_scores));
}

RoundStats summarize(std::span<const double> trial_scores, bool trim) {
    return trim ? trimmed_mean(trial_scores) : plain_stats(trial_scores);
}

StatsTable round_stats_table(const std::vector<LoopScoreSample>& samples, bool trim) {
    std::map<std::tuple<FeedbackLoopType, TextLevel, std::size_t>, std::vector<double>> pooled;
    StatsTable table;
    for (const auto& s : samples) {
        if (s.round_index < 1) throw Error(ErrorCode::InvalidArgument, "round_index is 1-based");
        if (s.trial_scores.empty()) continue;
        const auto level = s.loop_type == FeedbackLoopType::Dilemma ? TextLevel::None : s.text_level;
        auto kept = trim ? trimmed_values(s.trial_scores) : std::vector<double>(s.trial_scores.begin(), s.trial_scores.end());
        auto& cell = pooled[{s.loop_type, level, s.round_index}];
        cell.insert(cell.end(), kept.begin(), kept.end());
        table.max_round = std::max(table.max_round, s.round_index);
    }
    for (const auto& [key, values] : pooled) {
        const auto& [loop, level, round] = key;
        if (table.rows.empty() || table.rows.back().loop_type != loop || table.rows.back().text_level != level) {
            table.rows.push_back({loop, level, std::vector<std::optional<RoundStats>>(table.max_round)});
        }
        table.rows.back().rounds[round - 1] = plain_stats(values);
    }
    return table;
}

std::string format_cell(const RoundStats& stats) { return fmt::format("{:.2f} ± {:.2f}", stats.mean, stats.std); }

std::optional<std::pair<double, double>> parse_cell(std::string_view cell) {
    static const std::regex re(R"(^\s*(-?\d+(?:\.\d+)?)\s*±\s*(\d+(?:\.\d+)?)\s*$)");
    std::smatch m;
    const std::string s(cell);
    if (!std::regex_match(s, m, re)) return std::nullopt;
    return std::pair{std::stod(m[1].str()), std::stod(m[2].str())};
}

namespace {

std::string pad(const std::string& s, std::size_t width) {
    const auto len = text::utf8_length(s);
    return len >= width ? s : s + std::string(width - len, ' ');
}

}  // namespace

std::string render_table(const StatsTable& table) {
    if (table.rows.empty()) return {};
    std::vector<std::vector<std::string>> grid;
    std::vector<std::string> header{"Feedback Loop", "Text Level"};
    for (std::size_t r = 1; r <= table.max_round; ++r) header.push_back("R" + std::to_string(r));
    grid.push_back(header);
    for (const auto& row : table.rows) {
        std::vector<std::string> line{std::string(display_name(row.loop_type)), std::string(display_name(row.text_level))};
        for (const auto& cell : row.rounds) line.push_back(cell ? format_cell(*cell) : "—");
        grid.push_back(std::move(line));
    }
    std::vector<std::size_t> widths(header.size(), 0);
    for (const auto& line : grid) {
        for (std::size_t c = 0; c < line.size(); ++c) widths[c] = std::max(widths[c], text::utf8_length(line[c]));
    }
    std::string out;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        std::string line;
        for (std::size_t c = 0; c < grid[i].size(); ++c) {
            if (c) line += " | ";
            line += pad(grid[i][c], widths[c]);
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out += line + "\n";
        if (i == 0) {
            std::string rule;
            for (std::size_t c = 0; c < widths.size(); ++c) {
                if (c) rule += "-+-";
                rule += std::string(widths[c], '-');
            }
            out += rule + "\n";
        }
    }
    return out;
}

nlohmann::json to_json(const StatsTable& table) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : table.rows) {
        nlohmann::json cells = nlohmann::json::array();
        for (const auto& c : row.rounds) {
            if (!c) {
                cells.push_back(nullptr);
            } else {
                cells.push_back({{"mean", c->mean}, {"std", c->std}, {"n_effective", c->n_effective},
                                 {"text", format_cell(*c)}});
            }
        }
        rows.push_back({{"loop_type", to_string(row.loop_type)},
                        {"text_level", to_string(row.text_level)},
                        {"rounds", std::move(cells)}});
    }
    return {{"max_round", table.max_round}, {"rows", std::move(rows)}};
}

LevelDistribution dikw_distribution(const std::vector<QaScore>& scores) {
    LevelDistribution d;
    for (auto level : kAllLevels) d.counts[level] = 0;
    for (const auto& s : scores) ++d.counts[dikw_from_score(s.score)];
    return d;
}

std::string render_distribution(const LevelDistribution& dist) {
    std::string out;
    for (auto level : kAllLevels) {
        const auto it = dist.counts.find(level);
        const std::size_t n = it == dist.counts.end() ? 0 : it->second;
        out += fmt::format("{:<12}{} |{} {}\n", to_string(level), score_of(level), std::string(n, '#'), n);
    }
    return out;
}

void write_jsonl(std::ostream& out, const std::string& run_id, const ScoresSidecar& scores, bool trim) {
    for (const auto& s : scores.dikw) {
        nlohmann::ordered_json rec;
        rec["run_id"] = run_id;
        rec["kind"] = "dikw";
        rec["qa_ref"] = s.qa_ref;
        rec["round_index"] = 0;
        std::vector<std::string> labels;
        for (auto l : s.labels) labels.emplace_back(judge_token(l));
        rec["labels"] = labels;
        rec["score"] = s.score;
        out << rec.dump() << '\n';
    }
    for (const auto& s : scores.loops) {
        nlohmann::ordered_json rec;
        rec["run_id"] = run_id;
        rec["kind"] = "loop";
        rec["qa_ref"] = s.qa_ref;
        rec["round_index"] = s.round_index;
        rec["loop_type"] = to_string(s.loop_type);
        rec["text_level"] = to_string(s.text_level);
        rec["trial_scores"] = s.trial_scores;
        if (!s.trial_scores.empty()) {
            const auto st = summarize(s.trial_scores, trim);
            rec["mean"] = st.mean;
            rec["std"] = st.std;
            rec["n_effective"] = st.n_effective;
        }
        out << rec.dump() << '\n';
    }
}

ScoresSidecar read_jsonl(std::istream& in, std::string* run_id) {
    ScoresSidecar sc;
    std::string line;
    while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            if (run_id) *run_id = j.at("run_id").get<std::string>();
            const auto kind = j.at("kind").get<std::string>();
            if (kind == "dikw") {
                QaScore s;
                s.qa_ref = j.at("qa_ref").get<std::size_t>();
                for (const auto& l : j.at("labels")) s.labels.insert(dikw_from_string(l.get<std::string>()));
                s.score = j.at("score").get<int>();
                sc.dikw.push_back(std::move(s));
            } else if (kind == "loop") {
                LoopScoreSample s;
                s.qa_ref = j.at("qa_ref").get<std::size_t>();
                s.round_index = j.at("round_index").get<std::size_t>();
                s.loop_type = loop_type_from_string(j.at("loop_type").get<std::string>());
                s.text_level = text_level_from_string(j.at("text_level").get<std::string>());
                s.trial_scores = j.at("trial_scores").get<std::vector<double>>();
                sc.loops.push_back(std::move(s));
            } else {
                throw Error(ErrorCode::InvalidArgument, "unknown score record kind '" + kind + "'");
            }
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::InvalidArgument, std::string("scores sidecar: ") + e.what());
        }
    }
    return sc;
}

}  // namespace cona::eval
