#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace cona {

// Ordered shallow to deep; the numeric value is the 1..4 communication score.
enum class DikwLevel { Data = 1, Information = 2, Knowledge = 3, Wisdom = 4 };

inline constexpr std::array<DikwLevel, 4> kAllLevels{DikwLevel::Data, DikwLevel::Information,
                                                     DikwLevel::Knowledge, DikwLevel::Wisdom};

constexpr int score_of(DikwLevel level) { return static_cast<int>(level); }

std::string_view to_string(DikwLevel level);     // "Data", ...
std::string_view judge_token(DikwLevel level);   // "DATA", ...
DikwLevel dikw_from_string(std::string_view name);  // accepts either spelling, any case
DikwLevel dikw_from_score(int score);

enum class QuestionCategory { Analogy, ProblemSolving, Dilemma };

// Data-level questions have no category; they are plain recall questions.
std::optional<QuestionCategory> category_for(DikwLevel level);
std::string_view to_string(QuestionCategory category);

enum class FeedbackLoopType { Analogy, ProblemSolving, Dilemma };

std::optional<FeedbackLoopType> loop_type_for(DikwLevel level);
std::string_view to_string(FeedbackLoopType loop);   // "analogy", "problem_solving", "dilemma"
std::string_view display_name(FeedbackLoopType loop);  // "Analogy", "Problem Solving", "Dilemma"
FeedbackLoopType loop_type_from_string(std::string_view name);

enum class TextLevel { Educational, Commonsense, Professional, None };

std::string_view to_string(TextLevel level);  // "educational", ..., "none"
std::string_view display_name(TextLevel level);  // "Educational", ..., "—"
TextLevel text_level_from_string(std::string_view name);

}  // namespace cona
