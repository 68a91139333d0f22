#include "cona/guidance.hpp"

#include <istream>
#include <ostream>
#include <regex>

#include <nlohmann/json.hpp>

#include "cona/error.hpp"
#include "cona/text.hpp"

namespace cona::guidance {

using agents::AgentProfile;
using agents::Conversation;

std::string_view to_string(Phase phase) {
    switch (phase) {
        case Phase::SelfIntro: return "self_intro";
        case Phase::Question: return "question";
        case Phase::Answer: return "answer";
        case Phase::FeedbackProbe: return "feedback_probe";
        case Phase::FeedbackReply: return "feedback_reply";
    }
    return "self_intro";
}

Phase phase_from_string(std::string_view name) {
    for (auto p : {Phase::SelfIntro, Phase::Question, Phase::Answer, Phase::FeedbackProbe, Phase::FeedbackReply}) {
        if (to_string(p) == name) return p;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown phase '" + std::string(name) + "'");
}

std::vector<QaPair> Transcript::qa_pairs() const {
    std::vector<QaPair> pairs;
    std::optional<std::size_t> open_question;
    for (std::size_t i = 0; i < turns.size(); ++i) {
        const auto& t = turns[i];
        if (t.phase == Phase::Question) {
            open_question = i;
        } else if (t.phase == Phase::Answer && open_question) {
            const auto& q = turns[*open_question];
            pairs.push_back({pairs.size(), *open_question, i, q.dikw_target.value_or(DikwLevel::Data), q.text, t.text});
            open_question.reset();
        }
    }
    return pairs;
}

void write_jsonl(std::ostream& out, const Transcript& transcript) {
    for (const auto& t : transcript.turns) {
        nlohmann::ordered_json rec;
        rec["run_id"] = transcript.run_id;
        rec["turn_index"] = t.turn_index;
        rec["speaker"] = t.speaker;
        rec["phase"] = to_string(t.phase);
        rec["dikw_target"] = t.dikw_target ? nlohmann::ordered_json(to_string(*t.dikw_target)) : nlohmann::ordered_json(nullptr);
        rec["countdown_shown"] = t.countdown_shown ? nlohmann::ordered_json(*t.countdown_shown) : nlohmann::ordered_json(nullptr);
        rec["text"] = t.text;
        rec["prompt_text"] = t.prompt_text;
        rec["timestamp_utc"] = t.timestamp_utc;
        out << rec.dump() << '\n';
    }
}

Transcript read_jsonl(std::istream& in) {
    Transcript tr;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            auto run_id = j.at("run_id").get<std::string>();
            if (tr.turns.empty()) {
                tr.run_id = run_id;
            } else if (run_id != tr.run_id) {
                throw Error(ErrorCode::InvalidArgument, "mixed run_id values in transcript");
            }
            DialogueTurn t;
            t.turn_index = j.at("turn_index").get<std::size_t>();
            t.speaker = j.at("speaker").get<std::string>();
            t.phase = phase_from_string(j.at("phase").get<std::string>());
            if (!j.at("dikw_target").is_null()) t.dikw_target = dikw_from_string(j["dikw_target"].get<std::string>());
            if (!j.at("countdown_shown").is_null()) t.countdown_shown = j["countdown_shown"].get<std::size_t>();
            t.text = j.at("text").get<std::string>();
            t.prompt_text = j.at("prompt_text").get<std::string>();
            t.timestamp_utc = j.at("timestamp_utc").get<std::string>();
            tr.turns.push_back(std::move(t));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::InvalidArgument, "transcript line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return tr;
}

std::string_view to_string(ProbeCadence cadence) {
    return cadence == ProbeCadence::EveryPair ? "every_pair" : "off";
}

ProbeCadence probe_cadence_from_string(std::string_view name) {
    const auto lower = text::to_lower(text::trim(name));
    if (lower == "every_pair" || lower == "every pair") return ProbeCadence::EveryPair;
    if (lower == "off" || lower == "none") return ProbeCadence::Off;
    throw Error(ErrorCode::InvalidArgument, "unknown probe cadence '" + std::string(name) + "'");
}

std::array<std::size_t, 4> level_schedule(std::size_t budget) {
    std::array<std::size_t, 4> q{};
    q.fill(budget / 4);
    // Data=0, Information=1, Knowledge=2, Wisdom=3
    constexpr std::array<std::size_t, 3> surplus_order{1, 2, 0};
    for (std::size_t i = 0; i < budget % 4; ++i) ++q[surplus_order[i]];
    return q;
}

LevelPlanner::LevelPlanner(std::size_t budget) : quota_(level_schedule(budget)) {
    if (budget < 4) throw Error(ErrorCode::InvalidArgument, "question budget must be at least 4");
}

void LevelPlanner::complete_question(bool hold) {
    auto c = static_cast<std::size_t>(score_of(current_) - 1);
    if (quota_[c] == 0) return;  // session already finished
    --quota_[c];
    if (quota_[c] > 0) return;

    if (hold && c < 3) {
        // Borrow a question from a later level without ever emptying Wisdom.
        std::optional<std::size_t> donor;
        for (std::size_t l = c + 1; l < 3 && !donor; ++l) {
            if (quota_[l] > 1) donor = l;
        }
        if (!donor && quota_[3] > 1) donor = 3;
        for (std::size_t l = c + 1; l < 3 && !donor; ++l) {
            if (quota_[l] == 1) donor = l;
        }
        if (donor) {
            --quota_[*donor];
            ++quota_[c];
            return;
        }
    }
    for (std::size_t l = c + 1; l < 4; ++l) {
        if (quota_[l] > 0) {
            current_ = dikw_from_score(static_cast<int>(l + 1));
            return;
        }
    }
}

namespace {

std::string category_instruction(DikwLevel target) {
    switch (target) {
        case DikwLevel::Data:
            return "Ask a data question: ask the lecturer to clarify one specific fact, figure or term from the "
                   "material that you did not follow.";
        case DikwLevel::Information:
            return "Ask for an analogy: request that the lecturer explain a term or concept from the material "
                   "through an analogy drawn from your own background.";
        case DikwLevel::Knowledge:
            return "Ask a problem-solving question: describe a concrete problem from your own field and ask how "
                   "the ideas in the material could be applied to solve it.";
        case DikwLevel::Wisdom:
            return "Raise an ethical dilemma for debate: present a morally complex situation tied to the material, "
                   "say which side you lean towards, and ask for the lecturer's view.";
    }
    return {};
}

std::string countdown_instruction(const GuidanceState& state, bool first) {
    const auto n = state.remaining_questions;
    if (n == 1) return "This is your final question. Begin it with \"For my final question\".";
    if (n == 2) return "This is your second-to-last question. Begin it with \"As my second-to-last question\".";
    return first ? "Ask your first question." : "Ask your next question.";
}

std::string last_answer_text(const Transcript& history) {
    for (auto it = history.turns.rbegin(); it != history.turns.rend(); ++it) {
        if (it->phase == Phase::Answer) return it->text;
    }
    return {};
}

}  // namespace

std::string next_audience_prompt(const GuidanceState& state, const AgentProfile& audience,
                                 const Transcript& history) {
    if (state.remaining_questions < 1) {
        throw Error(ErrorCode::InvalidArgument, "no questions left in the budget");
    }
    std::string out;
    const auto last = last_answer_text(history);
    if (!last.empty()) out += "Lecturer: \"" + last + "\"\n\n";
    const auto n = state.remaining_questions;
    out += agents::role_affirmation(audience) + ", you are in a question-and-answer session with the lecturer. ";
    out += "You have " + std::to_string(n) + (n == 1 ? " question" : " questions") + " left, including this one. ";
    out += countdown_instruction(state, last.empty()) + "\n";
    out += category_instruction(state.current_target) + "\n";
    out += "Ask exactly one question in your own voice and end it with a question mark.";
    return out;
}

std::optional<FeedbackExchange> run_feedback_probe(std::string_view draft_answer, const std::string& lecturer_id,
                                                   Conversation& audience, backend::Backend& backend,
                                                   ProbeCadence cadence, const std::string& tag) {
    if (cadence == ProbeCadence::Off) return std::nullopt;
    FeedbackExchange ex;
    ex.probe.speaker = lecturer_id;
    ex.probe.phase = Phase::FeedbackProbe;
    ex.probe.text = std::string(draft_answer) + "\n\n" + std::string(kProbeQuestion);

    ex.reply.speaker = audience.profile().agent_id;
    ex.reply.phase = Phase::FeedbackReply;
    ex.reply.prompt_text = "Lecturer: \"" + ex.probe.text + "\"\n\n" + agents::role_affirmation(audience.profile()) +
                           ", tell the lecturer honestly whether this was too complex for you and what was unclear.";
    ex.reply.text = audience.say(ex.reply.prompt_text, tag, backend);
    return ex;
}

bool judge_too_complex(std::string_view feedback_reply, backend::Backend& judge, const std::string& tag) {
    backend::ChatRequest req;
    req.messages = {{backend::Role::System, "You classify audience feedback. Reply with a single verdict token."},
                    {backend::Role::User, "An audience member replied to the question \"was this too complex?\":\n"
                                          "\"\"\"\n" + std::string(feedback_reply) +
                                              "\n\"\"\"\nReply TOO_COMPLEX if they found the explanation too complex "
                                              "or confusing, or CLEAR if they understood it."}};
    req.temperature = backend::kJudgeTemperature;
    req.tag = tag;
    const auto reply = text::to_upper(judge.complete(req));
    static const std::regex complex_re(R"(\bTOO_COMPLEX\b)"), clear_re(R"(\bCLEAR\b)");
    const bool is_complex = std::regex_search(reply, complex_re);
    const bool is_clear = std::regex_search(reply, clear_re);
    if (is_complex == is_clear) {
        throw Error(ErrorCode::JudgeUnparseable, "complexity verdict for '" + tag + "' is not TOO_COMPLEX or CLEAR");
    }
    return is_complex;
}

std::optional<std::string> handle_stagnation(GuidanceState& state, const AgentProfile& lecturer,
                                             const AgentProfile& audience, std::size_t threshold) {
    if (threshold == 0 || state.stagnation_counter < threshold) return std::nullopt;
    state.stagnation_counter = 0;
    std::string cue = "The conversation has stalled on the same point. Before continuing, both of you briefly "
                      "re-introduce your backgrounds to realign.\n";
    cue += "Lecturer background: " + lecturer.block.identity + ". " + lecturer.persona + "\n";
    cue += "Audience background: " + audience.block.identity + ". " + audience.persona + "\n";
    return cue;
}

namespace {

class SessionRecorder {
public:
    SessionRecorder(Transcript& tr, Clock& clock) : tr_(tr), clock_(clock) {}

    DialogueTurn& add(DialogueTurn t) {
        t.turn_index = tr_.turns.size();
        t.timestamp_utc = format_utc(clock_.now());
        tr_.turns.push_back(std::move(t));
        return tr_.turns.back();
    }

private:
    Transcript& tr_;
    Clock& clock_;
};

std::string pair_tag(std::size_t k, std::string_view what) {
    return "guidance.q" + std::to_string(k) + "." + std::string(what);
}

}  // namespace

Transcript run_guidance_session(const AgentProfile& lecturer, const AgentProfile& audience, const Material& material,
                                const GuidanceOptions& options, backend::Backend& backend, Clock& clock,
                                const std::string& run_id) {
    const std::size_t budget = options.question_budget;
    if (budget < 4) throw Error(ErrorCode::InvalidArgument, "question budget must be at least 4");
    if (text::trim(material.body).empty()) throw Error(ErrorCode::InvalidArgument, "material has no body");

    Transcript tr;
    tr.run_id = run_id;
    SessionRecorder rec(tr, clock);
    Conversation lect(lecturer);
    Conversation aud(audience);

    // Self-introduction, lecturer first.
    const std::string material_block = "Presentation \"" + material.title + "\":\n\"\"\"\n" + material.body + "\n\"\"\"\n";
    DialogueTurn intro_l{.speaker = lecturer.agent_id, .phase = Phase::SelfIntro};
    intro_l.prompt_text = material_block + "You have just given this presentation. Introduce yourself to the audience "
                                           "in two or three sentences: who you are and what the talk covered.";
    intro_l.text = lect.say(intro_l.prompt_text, "guidance.intro.lecturer", backend);
    const std::string lecturer_intro = rec.add(std::move(intro_l)).text;

    DialogueTurn intro_a{.speaker = audience.agent_id, .phase = Phase::SelfIntro};
    intro_a.prompt_text = material_block + "The lecturer introduced themself: \"" + lecturer_intro + "\"\n" +
                          agents::role_affirmation(audience) +
                          ", introduce yourself to the lecturer: share your background and what you hope to understand.";
    intro_a.text = aud.say(intro_a.prompt_text, "guidance.intro.audience", backend);
    std::string pending_for_lecturer = "The audience member introduced themself: \"" + rec.add(std::move(intro_a)).text + "\"\n\n";

    GuidanceState state{budget, DikwLevel::Data, 0, true};
    LevelPlanner planner(budget);
    std::optional<DikwLevel> last_flagged_target;
    std::string reintro;

    for (std::size_t k = 1; k <= budget; ++k) {
        state.current_target = planner.current();

        DialogueTurn q{.speaker = audience.agent_id, .phase = Phase::Question};
        q.dikw_target = state.current_target;
        q.countdown_shown = state.remaining_questions;
        q.prompt_text = reintro + next_audience_prompt(state, audience, tr);
        q.text = aud.say(q.prompt_text, pair_tag(k, "question"), backend);
        if (q.text.find('?') == std::string::npos) {
            throw Error(ErrorCode::MalformedTurn, "audience reply for question " + std::to_string(k) + " asks nothing");
        }
        const std::string question = rec.add(std::move(q)).text;

        std::string answer_prompt = pending_for_lecturer + reintro + "Audience question: \"" + question + "\"\n" +
                                    agents::role_affirmation(lecturer) +
                                    ", answer it for this audience member, using their background where it helps.";
        pending_for_lecturer.clear();
        reintro.clear();

        bool too_complex = false;
        DialogueTurn a{.speaker = lecturer.agent_id, .phase = Phase::Answer};
        if (options.probe_cadence == ProbeCadence::EveryPair) {
            const std::string draft_prompt = answer_prompt + " Give a first explanation; you will check afterwards whether it was clear.";
            const std::string draft = lect.say(draft_prompt, pair_tag(k, "draft"), backend);
            auto ex = run_feedback_probe(draft, lecturer.agent_id, aud, backend, options.probe_cadence,
                                         pair_tag(k, "feedback"));
            ex->probe.prompt_text = draft_prompt;
            rec.add(std::move(ex->probe));
            const std::string reply = rec.add(std::move(ex->reply)).text;
            too_complex = judge_too_complex(reply, backend, pair_tag(k, "complexity"));

            a.prompt_text = "The audience member replied: \"" + reply + "\"\n";
            a.prompt_text += too_complex ? "They found it too complex. Simplify, avoid jargon and lean on their own background. "
                                         : "They followed it. ";
            a.prompt_text += "Now give your final answer to their question.";
        } else {
            a.prompt_text = answer_prompt;
        }
        a.text = lect.say(a.prompt_text, pair_tag(k, "answer"), backend);
        rec.add(std::move(a));

        --state.remaining_questions;

        if (too_complex && last_flagged_target == state.current_target) {
            ++state.stagnation_counter;
        } else {
            state.stagnation_counter = too_complex ? 1 : 0;
        }
        last_flagged_target = too_complex ? std::optional(state.current_target) : std::nullopt;
        if (auto cue = handle_stagnation(state, lecturer, audience, options.stagnation_threshold)) {
            reintro = *cue + "\n";
            last_flagged_target.reset();
        }
        planner.complete_question(too_complex);
    }
    return tr;
}

}  // namespace cona::guidance
