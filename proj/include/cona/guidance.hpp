#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cona/agents.hpp"
#include "cona/backend.hpp"
#include "cona/clock.hpp"
#include "cona/dikw.hpp"
#include "cona/material.hpp"

namespace cona::guidance {

enum class Phase { SelfIntro, Question, Answer, FeedbackProbe, FeedbackReply };

std::string_view to_string(Phase phase);
Phase phase_from_string(std::string_view name);

struct DialogueTurn {
    std::size_t turn_index = 0;
    std::string speaker;
    Phase phase = Phase::SelfIntro;
    std::optional<DikwLevel> dikw_target;      // question turns only
    std::optional<std::size_t> countdown_shown;  // question turns only
    std::string text;
    std::string prompt_text;  // what the speaker was asked to produce this turn
    std::string timestamp_utc;

    bool operator==(const DialogueTurn&) const = default;
};

struct QaPair {
    std::size_t index = 0;  // 0-based position among the transcript's pairs
    std::size_t question_turn = 0;
    std::size_t answer_turn = 0;
    DikwLevel target = DikwLevel::Data;
    std::string question;
    std::string answer;

    bool operator==(const QaPair&) const = default;
};

struct Transcript {
    std::string run_id;
    std::vector<DialogueTurn> turns;

    // Each question turn paired with the next answer turn.
    std::vector<QaPair> qa_pairs() const;

    bool operator==(const Transcript&) const = default;
};

// One record per turn with the fields run_id, turn_index, speaker, phase,
// dikw_target, countdown_shown, text, prompt_text, timestamp_utc.
void write_jsonl(std::ostream& out, const Transcript& transcript);
Transcript read_jsonl(std::istream& in);

enum class ProbeCadence { EveryPair, Off };

std::string_view to_string(ProbeCadence cadence);
ProbeCadence probe_cadence_from_string(std::string_view name);

inline constexpr std::size_t kDefaultQuestionBudget = 6;
inline constexpr std::size_t kDefaultStagnationThreshold = 2;

struct GuidanceOptions {
    std::size_t question_budget = kDefaultQuestionBudget;
    ProbeCadence probe_cadence = ProbeCadence::EveryPair;
    std::size_t stagnation_threshold = kDefaultStagnationThreshold;
};

// Questions per level, Data..Wisdom. The budget is split evenly; the
// remainder goes to Information, then Knowledge, then Data (6 -> 1,2,2,1).
std::array<std::size_t, 4> level_schedule(std::size_t budget);

// Tracks the DIKW target across a session. Targets never decrease and the
// last question is always at Wisdom.
class LevelPlanner {
public:
    explicit LevelPlanner(std::size_t budget);

    DikwLevel current() const noexcept { return current_; }
    const std::array<std::size_t, 4>& quotas() const noexcept { return quota_; }

    // Consumes one question at current(). With `hold` the next question stays
    // at the same level when a later level can spare a question.
    void complete_question(bool hold);

private:
    std::array<std::size_t, 4> quota_;
    DikwLevel current_ = DikwLevel::Data;
};

struct GuidanceState {
    std::size_t remaining_questions = 0;
    DikwLevel current_target = DikwLevel::Data;
    std::size_t stagnation_counter = 0;
    bool intro_done = false;
};

// Audience instruction for the next question: role reminder, the literal
// number of questions left and the current level's question category.
std::string next_audience_prompt(const GuidanceState& state, const agents::AgentProfile& audience,
                                 const Transcript& history);

inline constexpr std::string_view kProbeQuestion =
    "Before I go on: was any part of this explanation too complex? Tell me which parts were unclear.";

struct FeedbackExchange {
    DialogueTurn probe;  // lecturer
    DialogueTurn reply;  // audience
};

// The lecturer asks whether `draft_answer` was too complex and the audience
// replies. Returns nothing when probing is off. Turn indices are left at 0.
std::optional<FeedbackExchange> run_feedback_probe(std::string_view draft_answer, const std::string& lecturer_id,
                                                   agents::Conversation& audience, backend::Backend& backend,
                                                   ProbeCadence cadence, const std::string& tag);

// Judge call classifying a feedback reply; true when the audience found the
// explanation too complex.
bool judge_too_complex(std::string_view feedback_reply, backend::Backend& judge, const std::string& tag);

// Fires once the counter reaches `threshold`: returns a re-introduction cue
// naming both agents and resets the counter.
std::optional<std::string> handle_stagnation(GuidanceState& state, const agents::AgentProfile& lecturer,
                                             const agents::AgentProfile& audience,
                                             std::size_t threshold = kDefaultStagnationThreshold);

Transcript run_guidance_session(const agents::AgentProfile& lecturer, const agents::AgentProfile& audience,
                                const Material& material, const GuidanceOptions& options,
                                backend::Backend& backend, Clock& clock, const std::string& run_id);

}  // namespace cona::guidance
