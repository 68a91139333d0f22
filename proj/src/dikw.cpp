#include "cona/dikw.hpp"

#include <string>

#include "cona/error.hpp"
#include "cona/text.hpp"

namespace cona {

std::string_view to_string(DikwLevel level) {
    switch (level) {
        case DikwLevel::Data: return "Data";
        case DikwLevel::Information: return "Information";
        case DikwLevel::Knowledge: return "Knowledge";
        case DikwLevel::Wisdom: return "Wisdom";
    }
    return "Data";
}

std::string_view judge_token(DikwLevel level) {
    switch (level) {
        case DikwLevel::Data: return "DATA";
        case DikwLevel::Information: return "INFORMATION";
        case DikwLevel::Knowledge: return "KNOWLEDGE";
        case DikwLevel::Wisdom: return "WISDOM";
    }
    return "DATA";
}

DikwLevel dikw_from_string(std::string_view name) {
    const auto upper = text::to_upper(text::trim(name));
    for (auto level : kAllLevels) {
        if (upper == judge_token(level)) return level;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown DIKW level '" + std::string(name) + "'");
}

DikwLevel dikw_from_score(int score) {
    if (score < 1 || score > 4) {
        throw Error(ErrorCode::InvalidArgument, "DIKW score out of range: " + std::to_string(score));
    }
    return static_cast<DikwLevel>(score);
}

std::optional<QuestionCategory> category_for(DikwLevel level) {
    switch (level) {
        case DikwLevel::Data: return std::nullopt;
        case DikwLevel::Information: return QuestionCategory::Analogy;
        case DikwLevel::Knowledge: return QuestionCategory::ProblemSolving;
        case DikwLevel::Wisdom: return QuestionCategory::Dilemma;
    }
    return std::nullopt;
}

std::string_view to_string(QuestionCategory category) {
    switch (category) {
        case QuestionCategory::Analogy: return "analogy";
        case QuestionCategory::ProblemSolving: return "problem_solving";
        case QuestionCategory::Dilemma: return "dilemma";
    }
    return "analogy";
}

std::optional<FeedbackLoopType> loop_type_for(DikwLevel level) {
    switch (level) {
        case DikwLevel::Data: return std::nullopt;
        case DikwLevel::Information: return FeedbackLoopType::Analogy;
        case DikwLevel::Knowledge: return FeedbackLoopType::ProblemSolving;
        case DikwLevel::Wisdom: return FeedbackLoopType::Dilemma;
    }
    return std::nullopt;
}

std::string_view to_string(FeedbackLoopType loop) {
    switch (loop) {
        case FeedbackLoopType::Analogy: return "analogy";
        case FeedbackLoopType::ProblemSolving: return "problem_solving";
        case FeedbackLoopType::Dilemma: return "dilemma";
    }
    return "analogy";
}

std::string_view display_name(FeedbackLoopType loop) {
    switch (loop) {
        case FeedbackLoopType::Analogy: return "Analogy";
        case FeedbackLoopType::ProblemSolving: return "Problem Solving";
        case FeedbackLoopType::Dilemma: return "Dilemma";
    }
    return "Analogy";
}

FeedbackLoopType loop_type_from_string(std::string_view name) {
    const auto lower = text::to_lower(text::trim(name));
    if (lower == "analogy") return FeedbackLoopType::Analogy;
    if (lower == "problem_solving" || lower == "problem solving" || lower == "problemsolving") {
        return FeedbackLoopType::ProblemSolving;
    }
    if (lower == "dilemma") return FeedbackLoopType::Dilemma;
    throw Error(ErrorCode::InvalidArgument, "unknown feedback loop type '" + std::string(name) + "'");
}

std::string_view to_string(TextLevel level) {
    switch (level) {
        case TextLevel::Educational: return "educational";
        case TextLevel::Commonsense: return "commonsense";
        case TextLevel::Professional: return "professional";
        case TextLevel::None: return "none";
    }
    return "none";
}

std::string_view display_name(TextLevel level) {
    switch (level) {
        case TextLevel::Educational: return "Educational";
        case TextLevel::Commonsense: return "Commonsense";
        case TextLevel::Professional: return "Professional";
        case TextLevel::None: return "—";
    }
    return "—";
}

TextLevel text_level_from_string(std::string_view name) {
    const auto lower = text::to_lower(text::trim(name));
    if (lower == "educational") return TextLevel::Educational;
    if (lower == "commonsense") return TextLevel::Commonsense;
    if (lower == "professional") return TextLevel::Professional;
    if (lower == "none" || lower == "-" || lower == "—") return TextLevel::None;
    throw Error(ErrorCode::InvalidArgument, "unknown text level '" + std::string(name) + "'");
}

}  // namespace cona
